#ifndef ZOZOOM_MODEL_HPP
#define ZOZOOM_MODEL_HPP

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "zozoom/tensor.hpp"

namespace zozoom {

// Floor applied to probabilities so that log() stays finite.
inline constexpr double kProbabilityFloor = 1e-30;

struct DenseLayer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weight; // rows x cols, row-major
  std::vector<double> bias;   // rows
};

/// 2-D convolution, stride 1, "same" zero padding.
struct Conv2dLayer {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::vector<double> kernel; // [out][in][kh][kw]
  std::vector<double> bias;   // [out]
};

struct MaxPoolLayer {};
struct FlattenLayer {};
struct ReluLayer {};
struct SoftmaxLayer {};
struct BilinearResizeLayer {
  std::size_t height = 0;
  std::size_t width = 0;
};
struct ReplicateUpsampleLayer {
  std::size_t factor = 2;
};

using Layer = std::variant<DenseLayer, Conv2dLayer, MaxPoolLayer, FlattenLayer,
                           ReluLayer, SoftmaxLayer, BilinearResizeLayer,
                           ReplicateUpsampleLayer>;

std::string layer_kind(const Layer &layer);

/// Feed-forward layer chain with shapes checked at construction.
class Network {
public:
  Network(Shape input_shape, std::vector<Layer> layers);

  Tensor forward(const Tensor &x) const;

  const Shape &input_shape() const { return input_shape_; }
  const Shape &output_shape() const { return output_shape_; }
  const std::vector<Layer> &layers() const { return layers_; }

private:
  Shape input_shape_;
  Shape output_shape_;
  std::vector<Layer> layers_;
};

/// Softmax with max-logit subtraction; outputs floored at kProbabilityFloor.
std::vector<double> softmax(std::span<const double> logits);

struct ModelInfo {
  Shape input_shape;
  std::size_t num_classes = 0;
};

/// The opaque classifier F: [0,1]^d -> probability simplex in R^K.
/// Every call to query() is one model evaluation and bumps the counter;
/// query() is safe to call concurrently.
class BlackBoxModel {
public:
  BlackBoxModel(Network network, std::size_t num_classes);
  BlackBoxModel(BlackBoxModel &&other) noexcept;
  BlackBoxModel &operator=(BlackBoxModel &&other) noexcept;
  BlackBoxModel(const BlackBoxModel &) = delete;
  BlackBoxModel &operator=(const BlackBoxModel &) = delete;

  std::vector<double> query(const Tensor &x) const;

  std::uint64_t query_count() const {
    return queries_.load(std::memory_order_relaxed);
  }

  /// Same weights, independent counter starting at zero.
  BlackBoxModel share() const;

  const ModelInfo &info() const { return info_; }
  const Network &network() const { return *network_; }

private:
  std::shared_ptr<const Network> network_;
  ModelInfo info_;
  mutable std::atomic<std::uint64_t> queries_{0};
};

/// Weights of a model of the form [flatten] -> dense -> softmax, i.e.
/// softmax(W x + b). Only such models admit analytic gradients.
struct LinearSoftmaxView {
  const DenseLayer *dense = nullptr;
};
std::optional<LinearSoftmaxView> linear_softmax_view(const Network &net);

// MDL1 model files.
nlohmann::json layer_to_json(const Layer &layer);
Layer layer_from_json(const nlohmann::json &j, std::size_t index);
nlohmann::json network_to_json(const Network &net);
Network network_from_json(const nlohmann::json &j);

nlohmann::json model_to_json(const BlackBoxModel &model);
BlackBoxModel model_from_json(const nlohmann::json &j);
BlackBoxModel load_model(const std::filesystem::path &path);
void save_model(const BlackBoxModel &model, const std::filesystem::path &path);

enum class SyntheticKind { linear_softmax, mlp, smooth_linear };
SyntheticKind synthetic_kind_from_string(const std::string &s);

/// Random classifier with every weight and bias uniform in [-a, a],
/// a = 1/sqrt(fan_in). The MLP variant has one ReLU hidden layer. The
/// smooth_linear variant replaces each class row by a zero-mean
/// low-frequency cosine template scaled to the same range, so input
/// sensitivity is spatially correlated as for natural-image classifiers.
BlackBoxModel gen_synthetic_model(std::uint64_t seed, Shape input_shape,
                                  std::size_t num_classes, SyntheticKind kind,
                                  std::size_t hidden = 32);

/// Deterministic smooth image in [0.15, 0.85]: a few low-frequency cosine
/// patterns per channel.
Tensor gen_smooth_image(std::uint64_t seed, Shape shape);

} // namespace zozoom

#endif // ZOZOOM_MODEL_HPP
