#ifndef ZOZOOM_DECODER_HPP
#define ZOZOOM_DECODER_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "zozoom/model.hpp"
#include "zozoom/tensor.hpp"

namespace zozoom {

/// Linear autoencoder x -> E x -> D E x. The encoder is kept for
/// persistence and evaluation only; attacks use the decoder half.
struct LinearAutoencoder {
  Shape full_shape;
  Shape reduced_shape;         // (1, 1, d')
  std::vector<double> encoder; // d' x d, row-major
  std::vector<double> decoder; // d x d', row-major
  double training_mse = 0.0;

  std::size_t full_dim() const { return full_shape.size(); }
  std::size_t reduced_dim() const { return reduced_shape.size(); }

  Tensor encode(const Tensor &x) const;
  Tensor decode(const Tensor &code) const;
  Tensor reconstruct(const Tensor &x) const { return decode(encode(x)); }
};

enum class AeInit { uniform, identity };

struct AeTrainResult {
  LinearAutoencoder model;
  std::vector<double> mse_history; // entry 0 is before the first update
};

/// Full-batch gradient descent on mean_n ||D E x_n - x_n||^2. A step that
/// would increase the loss is rejected and the learning rate halved, so the
/// history is non-increasing. Data must be disjoint from attacked images.
AeTrainResult train_linear_ae(std::span<const Tensor> data,
                              std::size_t d_prime, std::size_t epochs,
                              double lr, std::uint64_t seed,
                              AeInit init = AeInit::uniform);

/// n samples x = B z + noise, with B a fixed random d x k Gaussian basis
/// and z standard normal: data lying near a planted k-dimensional subspace.
std::vector<Tensor> planted_subspace_data(std::uint64_t seed, Shape shape,
                                          std::size_t k, std::size_t n,
                                          double noise = 0.0);

double reconstruction_mse(const LinearAutoencoder &ae,
                          std::span<const Tensor> data);

enum class DecoderMode { identity, bilinear, conv, linear_ae };

std::string to_string(DecoderMode mode);

/// D: R^{d'} -> R^d, the map from the optimization variable to the
/// full-dimension perturbation.
class Decoder {
public:
  static Decoder identity(Shape shape);
  static Decoder bilinear(Shape reduced, Shape full);
  static Decoder conv(Network network);
  static Decoder linear_ae(LinearAutoencoder ae);

  Tensor decode(const Tensor &delta_prime) const;

  DecoderMode mode() const { return mode_; }
  const Shape &reduced_shape() const { return reduced_; }
  const Shape &full_shape() const { return full_; }
  double reduction_ratio() const {
    return static_cast<double>(reduced_.size()) /
           static_cast<double>(full_.size());
  }

  const Network *network() const { return network_.get(); }
  const LinearAutoencoder *autoencoder() const { return ae_.get(); }

private:
  Decoder(DecoderMode mode, Shape reduced, Shape full)
      : mode_(mode), reduced_(reduced), full_(full) {}

  DecoderMode mode_;
  Shape reduced_;
  Shape full_;
  std::shared_ptr<const Network> network_;
  std::shared_ptr<const LinearAutoencoder> ae_;
};

/// Runs a conv decoder network; throws if its output is not `full`.
Tensor decode_conv(const Network &network, const Shape &full,
                   const Tensor &delta_prime);

// MDL1 containers with "role":"decoder".
nlohmann::json decoder_to_json(const Decoder &decoder);
Decoder decoder_from_json(const nlohmann::json &j);
Decoder load_decoder(const std::filesystem::path &path);
void save_decoder(const Decoder &decoder, const std::filesystem::path &path);

/// Parses identity | bilin | bilin:HxW | conv:<path> | linear-ae:<path>.
/// `bilin` without a size uses `default_reduced`.
Decoder decoder_from_flag(const std::string &flag, Shape full,
                          std::optional<Shape> default_reduced);

} // namespace zozoom

#endif // ZOZOOM_DECODER_HPP
