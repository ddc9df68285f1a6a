#ifndef ZOZOOM_TENSOR_HPP
#define ZOZOOM_TENSOR_HPP

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace zozoom {

/// Image-like shape. Storage is row-major with height outermost and
/// channels innermost: index = (y * width + x) * channels + c.
struct Shape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
  bool operator==(const Shape &) const = default;
  std::string to_string() const;
};

/// Dense real tensor; the carrier for images, perturbations and the
/// reduced optimization variable.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor filled(Shape shape, double value);

  const Shape &shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }
  const std::vector<double> &data() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double &operator[](std::size_t i) { return data_[i]; }

  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * shape_.width + x) * shape_.channels + c];
  }
  double &at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * shape_.width + x) * shape_.channels + c];
  }

  bool operator==(const Tensor &) const = default;

private:
  Shape shape_;
  std::vector<double> data_;
};

struct DistortionReport {
  double l2_total = 0.0;
  double l2_squared_per_pixel = 0.0;
};

void validate_shape(const Shape &shape);

/// (sum_i |x_i - x0_i|^p)^(1/p), p >= 1.
double lp_distortion(const Tensor &x, const Tensor &x0, double p);

/// Euclidean norm of x - x0 and its squared value divided by the dimension.
DistortionReport per_pixel_l2(const Tensor &x, const Tensor &x0);

Tensor clip_unit_box(const Tensor &x);

double squared_l2(std::span<const double> a, std::span<const double> b);

// TZR1 file format: {"format":"TZR1","shape":[h,w,c],"data":[...]}
nlohmann::json tensor_to_json(const Tensor &t);
Tensor tensor_from_json(const nlohmann::json &j);
void save_tensor(const Tensor &t, const std::filesystem::path &path);
Tensor load_tensor(const std::filesystem::path &path);

nlohmann::json shape_to_json(const Shape &s);
Shape shape_from_json(const nlohmann::json &j);

} // namespace zozoom

#endif // ZOZOOM_TENSOR_HPP
