#include "zozoom/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "zozoom/io.hpp"

namespace zozoom {

std::string Shape::to_string() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" +
         std::to_string(channels);
}

void validate_shape(const Shape &shape) {
  if (shape.height == 0 || shape.width == 0 || shape.channels == 0) {
    throw std::invalid_argument("tensor dimensions must be >= 1, got " +
                                shape.to_string());
  }
}

Tensor::Tensor(Shape shape) : shape_(shape) {
  validate_shape(shape_);
  data_.assign(shape_.size(), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_.size()) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " + shape_.to_string());
  }
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(shape);
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

namespace {

void require_same_shape(const Tensor &a, const Tensor &b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("shape mismatch: " + a.shape().to_string() +
                                " vs " + b.shape().to_string());
  }
}

} // namespace

double lp_distortion(const Tensor &x, const Tensor &x0, double p) {
  require_same_shape(x, x0);
  if (!(p >= 1.0)) {
    throw std::invalid_argument("lp_distortion requires p >= 1");
  }
  if (p == 2.0) {
    return std::sqrt(squared_l2(x.values(), x0.values()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += std::pow(std::abs(x[i] - x0[i]), p);
  }
  return std::pow(acc, 1.0 / p);
}

DistortionReport per_pixel_l2(const Tensor &x, const Tensor &x0) {
  require_same_shape(x, x0);
  const double sq = squared_l2(x.values(), x0.values());
  return {std::sqrt(sq), sq / static_cast<double>(x.size())};
}

Tensor clip_unit_box(const Tensor &x) {
  Tensor out = x;
  for (double &v : out.values()) {
    v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

double squared_l2(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

nlohmann::json shape_to_json(const Shape &s) {
  return nlohmann::json::array({s.height, s.width, s.channels});
}

Shape shape_from_json(const nlohmann::json &j) {
  if (!j.is_array() || j.size() != 3) {
    throw std::invalid_argument("shape must be an array [h, w, c]");
  }
  for (const auto &v : j) {
    if (!v.is_number_integer() || v.get<long long>() < 1) {
      throw std::invalid_argument("shape entries must be integers >= 1");
    }
  }
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(),
          j[2].get<std::size_t>()};
}

nlohmann::json tensor_to_json(const Tensor &t) {
  return {{"format", "TZR1"},
          {"layout", "hwc"},
          {"shape", shape_to_json(t.shape())},
          {"data", t.data()}};
}

Tensor tensor_from_json(const nlohmann::json &j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
    throw std::invalid_argument("TZR1 tensor needs \"shape\" and \"data\"");
  }
  if (j.contains("format") && j["format"] != "TZR1") {
    throw std::invalid_argument("unexpected tensor format " +
                                j["format"].dump());
  }
  if (j.contains("layout") && j["layout"] != "hwc") {
    throw std::invalid_argument("unsupported tensor layout " + j["layout"].dump() +
                                " (expected \"hwc\")");
  }
  const Shape shape = shape_from_json(j["shape"]);
  auto data = j["data"].get<std::vector<double>>();
  return Tensor(shape, std::move(data));
}

void save_tensor(const Tensor &t, const std::filesystem::path &path) {
  write_json_file(path, tensor_to_json(t));
}

Tensor load_tensor(const std::filesystem::path &path) {
  return tensor_from_json(read_json_file(path));
}

} // namespace zozoom
