#include "zozoom/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "zozoom/io.hpp"
#include "zozoom/kernels.hpp"
#include "zozoom/resize.hpp"

namespace zozoom {

namespace {

template <class... Ts> struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void layer_error(std::size_t index, const std::string &what) {
  throw std::invalid_argument("layer " + std::to_string(index) + ": " + what);
}

Shape infer_shape(const Layer &layer, const Shape &in, std::size_t index) {
  return std::visit(
      overloaded{
          [&](const DenseLayer &l) -> Shape {
            if (l.weight.size() != l.rows * l.cols || l.bias.size() != l.rows) {
              layer_error(index, "dense weight/bias sizes do not match " +
                                     std::to_string(l.rows) + "x" +
                                     std::to_string(l.cols));
            }
            if (l.cols != in.size()) {
              layer_error(index, "dense expects input length " +
                                     std::to_string(l.cols) + ", got " +
                                     std::to_string(in.size()));
            }
            return {1, 1, l.rows};
          },
          [&](const Conv2dLayer &l) -> Shape {
            if (l.kernel.size() !=
                    l.out_channels * l.in_channels * l.kernel_h * l.kernel_w ||
                l.bias.size() != l.out_channels || l.out_channels == 0) {
              layer_error(index, "conv2d kernel/bias sizes inconsistent");
            }
            if (l.kernel_h % 2 == 0 || l.kernel_w % 2 == 0) {
              layer_error(index, "conv2d same padding needs odd kernel sizes");
            }
            if (l.in_channels != in.channels) {
              layer_error(index, "conv2d expects " +
                                     std::to_string(l.in_channels) +
                                     " input channels, got " +
                                     std::to_string(in.channels));
            }
            return {in.height, in.width, l.out_channels};
          },
          [&](const MaxPoolLayer &) -> Shape {
            if (in.height < 2 || in.width < 2) {
              layer_error(index, "maxpool2x2 needs spatial size >= 2");
            }
            return {in.height / 2, in.width / 2, in.channels};
          },
          [&](const FlattenLayer &) -> Shape { return {1, 1, in.size()}; },
          [&](const ReluLayer &) -> Shape { return in; },
          [&](const SoftmaxLayer &) -> Shape { return in; },
          [&](const BilinearResizeLayer &l) -> Shape {
            if (l.height == 0 || l.width == 0) {
              layer_error(index, "bilinear_resize target must be >= 1");
            }
            return {l.height, l.width, in.channels};
          },
          [&](const ReplicateUpsampleLayer &l) -> Shape {
            if (l.factor == 0) {
              layer_error(index, "replicate_upsample factor must be >= 1");
            }
            return {in.height * l.factor, in.width * l.factor, in.channels};
          },
      },
      layer);
}

Tensor apply_layer(const Layer &layer, const Tensor &x) {
  return std::visit(
      overloaded{
          [&](const DenseLayer &l) {
            Tensor out(Shape{1, 1, l.rows});
            kernels::dense(x.values(), l.weight, l.bias, l.rows, l.cols,
                           out.values());
            return out;
          },
          [&](const Conv2dLayer &l) {
            Tensor out(Shape{x.shape().height, x.shape().width, l.out_channels});
            kernels::conv2d_same(x,
                                 {l.out_channels, l.in_channels, l.kernel_h,
                                  l.kernel_w, l.kernel, l.bias},
                                 out);
            return out;
          },
          [&](const MaxPoolLayer &) { return maxpool2x2(x); },
          [&](const FlattenLayer &) {
            return Tensor(Shape{1, 1, x.size()}, x.data());
          },
          [&](const ReluLayer &) {
            Tensor out = x;
            for (double &v : out.values()) {
              v = std::max(v, 0.0);
            }
            return out;
          },
          [&](const SoftmaxLayer &) {
            return Tensor(x.shape(), softmax(x.values()));
          },
          [&](const BilinearResizeLayer &l) {
            return bilinear_resize(x, l.height, l.width);
          },
          [&](const ReplicateUpsampleLayer &l) {
            return replicate_upsample(x, l.factor);
          },
      },
      layer);
}

std::size_t get_count(const nlohmann::json &j, const char *key,
                      std::size_t index) {
  if (!j.contains(key) || !j[key].is_number_integer() ||
      j[key].get<long long>() < 1) {
    layer_error(index, std::string("missing or invalid \"") + key + "\"");
  }
  return j[key].get<std::size_t>();
}

} // namespace

std::string layer_kind(const Layer &layer) {
  return std::visit(overloaded{
                        [](const DenseLayer &) { return "dense"; },
                        [](const Conv2dLayer &) { return "conv2d"; },
                        [](const MaxPoolLayer &) { return "maxpool2x2"; },
                        [](const FlattenLayer &) { return "flatten"; },
                        [](const ReluLayer &) { return "relu"; },
                        [](const SoftmaxLayer &) { return "softmax"; },
                        [](const BilinearResizeLayer &) {
                          return "bilinear_resize";
                        },
                        [](const ReplicateUpsampleLayer &) {
                          return "replicate_upsample";
                        },
                    },
                    layer);
}

Network::Network(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(input_shape), layers_(std::move(layers)) {
  validate_shape(input_shape_);
  Shape s = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    s = infer_shape(layers_[i], s, i);
  }
  output_shape_ = s;
}

Tensor Network::forward(const Tensor &x) const {
  if (x.shape() != input_shape_) {
    throw std::invalid_argument("network input shape " +
                                x.shape().to_string() + " != expected " +
                                input_shape_.to_string());
  }
  Tensor cur = x;
  for (const auto &layer : layers_) {
    cur = apply_layer(layer, cur);
  }
  return cur;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) {
    return out;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (double &v : out) {
    v = std::max(v / sum, kProbabilityFloor);
  }
  return out;
}

BlackBoxModel::BlackBoxModel(Network network, std::size_t num_classes)
    : network_(std::make_shared<const Network>(std::move(network))),
      info_{network_->input_shape(), num_classes} {
  if (num_classes < 2) {
    throw std::invalid_argument("a classifier needs at least 2 classes");
  }
  if (network_->output_shape().size() != num_classes) {
    throw std::invalid_argument(
        "network produces " + std::to_string(network_->output_shape().size()) +
        " outputs but num_classes is " + std::to_string(num_classes));
  }
  const auto &layers = network_->layers();
  if (layers.empty() || !std::holds_alternative<SoftmaxLayer>(layers.back())) {
    throw std::invalid_argument("classifier must end with a softmax layer");
  }
}

BlackBoxModel::BlackBoxModel(BlackBoxModel &&other) noexcept
    : network_(std::move(other.network_)), info_(other.info_),
      queries_(other.queries_.load()) {}

BlackBoxModel &BlackBoxModel::operator=(BlackBoxModel &&other) noexcept {
  network_ = std::move(other.network_);
  info_ = other.info_;
  queries_.store(other.queries_.load());
  return *this;
}

std::vector<double> BlackBoxModel::query(const Tensor &x) const {
  if (x.shape() != info_.input_shape) {
    throw std::invalid_argument("query shape " + x.shape().to_string() +
                                " != model input " +
                                info_.input_shape.to_string());
  }
  for (double v : x.values()) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("query input contains non-finite values");
    }
  }
  queries_.fetch_add(1, std::memory_order_relaxed);
  return network_->forward(x).data();
}

BlackBoxModel BlackBoxModel::share() const {
  BlackBoxModel copy(*network_, info_.num_classes);
  copy.network_ = network_;
  return copy;
}

std::optional<LinearSoftmaxView> linear_softmax_view(const Network &net) {
  const auto &layers = net.layers();
  std::size_t i = 0;
  if (i < layers.size() && std::holds_alternative<FlattenLayer>(layers[i])) {
    ++i;
  }
  if (layers.size() != i + 2 || !std::holds_alternative<DenseLayer>(layers[i]) ||
      !std::holds_alternative<SoftmaxLayer>(layers[i + 1])) {
    return std::nullopt;
  }
  return LinearSoftmaxView{&std::get<DenseLayer>(layers[i])};
}

nlohmann::json layer_to_json(const Layer &layer) {
  using nlohmann::json;
  json j = {{"kind", layer_kind(layer)}};
  std::visit(
      overloaded{
          [&](const DenseLayer &l) {
            json w = json::array();
            for (std::size_t r = 0; r < l.rows; ++r) {
              w.push_back(std::vector<double>(
                  l.weight.begin() + static_cast<std::ptrdiff_t>(r * l.cols),
                  l.weight.begin() + static_cast<std::ptrdiff_t>((r + 1) * l.cols)));
            }
            j["weight"] = std::move(w);
            j["bias"] = l.bias;
          },
          [&](const Conv2dLayer &l) {
            json k = json::array();
            std::size_t idx = 0;
            for (std::size_t o = 0; o < l.out_channels; ++o) {
              json per_out = json::array();
              for (std::size_t i = 0; i < l.in_channels; ++i) {
                json plane = json::array();
                for (std::size_t y = 0; y < l.kernel_h; ++y) {
                  json row = json::array();
                  for (std::size_t x = 0; x < l.kernel_w; ++x) {
                    row.push_back(l.kernel[idx++]);
                  }
                  plane.push_back(std::move(row));
                }
                per_out.push_back(std::move(plane));
              }
              k.push_back(std::move(per_out));
            }
            j["kernel"] = std::move(k);
            j["bias"] = l.bias;
            j["stride"] = 1;
            j["padding"] = "same";
          },
          [&](const BilinearResizeLayer &l) {
            j["height"] = l.height;
            j["width"] = l.width;
          },
          [&](const ReplicateUpsampleLayer &l) { j["factor"] = l.factor; },
          [](const auto &) {},
      },
      layer);
  return j;
}

Layer layer_from_json(const nlohmann::json &j, std::size_t index) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    layer_error(index, "layer needs a string \"kind\"");
  }
  const auto kind = j["kind"].get<std::string>();
  try {
    if (kind == "dense") {
      DenseLayer l;
      const auto &w = j.at("weight");
      l.rows = w.size();
      l.cols = l.rows ? w[0].size() : 0;
      for (const auto &row : w) {
        if (row.size() != l.cols) {
          layer_error(index, "dense weight rows have unequal length");
        }
        for (const auto &v : row) {
          l.weight.push_back(v.get<double>());
        }
      }
      l.bias = j.at("bias").get<std::vector<double>>();
      return l;
    }
    if (kind == "conv2d") {
      if (j.value("stride", 1) != 1) {
        layer_error(index, "only stride 1 convolutions are supported");
      }
      if (j.value("padding", std::string("same")) != "same") {
        layer_error(index, "only \"same\" padding is supported");
      }
      Conv2dLayer l;
      const auto &k = j.at("kernel");
      l.out_channels = k.size();
      l.in_channels = l.out_channels ? k[0].size() : 0;
      l.kernel_h = l.in_channels ? k[0][0].size() : 0;
      l.kernel_w = l.kernel_h ? k[0][0][0].size() : 0;
      for (const auto &per_out : k) {
        if (per_out.size() != l.in_channels) {
          layer_error(index, "ragged conv2d kernel");
        }
        for (const auto &plane : per_out) {
          if (plane.size() != l.kernel_h) {
            layer_error(index, "ragged conv2d kernel");
          }
          for (const auto &row : plane) {
            if (row.size() != l.kernel_w) {
              layer_error(index, "ragged conv2d kernel");
            }
            for (const auto &v : row) {
              l.kernel.push_back(v.get<double>());
            }
          }
        }
      }
      l.bias = j.at("bias").get<std::vector<double>>();
      return l;
    }
    if (kind == "maxpool2x2") {
      return MaxPoolLayer{};
    }
    if (kind == "flatten") {
      return FlattenLayer{};
    }
    if (kind == "relu") {
      return ReluLayer{};
    }
    if (kind == "softmax") {
      return SoftmaxLayer{};
    }
    if (kind == "bilinear_resize") {
      return BilinearResizeLayer{get_count(j, "height", index),
                                 get_count(j, "width", index)};
    }
    if (kind == "replicate_upsample") {
      return ReplicateUpsampleLayer{get_count(j, "factor", index)};
    }
  } catch (const nlohmann::json::exception &e) {
    layer_error(index, std::string("malformed ") + kind + " layer: " + e.what());
  }
  layer_error(index, "unknown layer kind \"" + kind + "\"");
}

nlohmann::json network_to_json(const Network &net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto &l : net.layers()) {
    layers.push_back(layer_to_json(l));
  }
  return {{"input_shape", shape_to_json(net.input_shape())},
          {"layers", std::move(layers)}};
}

Network network_from_json(const nlohmann::json &j) {
  if (!j.contains("input_shape") || !j.contains("layers") ||
      !j["layers"].is_array()) {
    throw std::invalid_argument("MDL1 needs \"input_shape\" and \"layers\"");
  }
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < j["layers"].size(); ++i) {
    layers.push_back(layer_from_json(j["layers"][i], i));
  }
  return Network(shape_from_json(j["input_shape"]), std::move(layers));
}

nlohmann::json model_to_json(const BlackBoxModel &model) {
  nlohmann::json j = {{"format", "MDL1"}, {"role", "classifier"}};
  j.update(network_to_json(model.network()));
  j["num_classes"] = model.info().num_classes;
  return j;
}

BlackBoxModel model_from_json(const nlohmann::json &j) {
  if (!j.is_object() || j.value("format", std::string()) != "MDL1") {
    throw std::invalid_argument("not an MDL1 model (\"format\" must be MDL1)");
  }
  if (j.value("role", std::string("classifier")) != "classifier") {
    throw std::invalid_argument("MDL1 file is not a classifier");
  }
  if (!j.contains("num_classes") || !j["num_classes"].is_number_integer()) {
    throw std::invalid_argument("MDL1 classifier needs integer \"num_classes\"");
  }
  return BlackBoxModel(network_from_json(j), j["num_classes"].get<std::size_t>());
}

BlackBoxModel load_model(const std::filesystem::path &path) {
  return model_from_json(read_json_file(path));
}

void save_model(const BlackBoxModel &model, const std::filesystem::path &path) {
  write_json_file(path, model_to_json(model));
}

SyntheticKind synthetic_kind_from_string(const std::string &s) {
  if (s == "linear_softmax" || s == "linear") {
    return SyntheticKind::linear_softmax;
  }
  if (s == "mlp") {
    return SyntheticKind::mlp;
  }
  if (s == "smooth_linear" || s == "smooth") {
    return SyntheticKind::smooth_linear;
  }
  throw std::invalid_argument("unknown synthetic model kind \"" + s + "\"");
}

namespace {

// Zero-mean sum of six cosines with at most 3 cycles per axis, scaled to
// max |v| = 1.
std::vector<double> low_frequency_field(std::mt19937_64 &rng, Shape shape) {
  std::uniform_real_distribution<double> amp(0.2, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<int> freq(0, 3);
  constexpr int kWaves = 6;
  std::vector<double> out(shape.size(), 0.0);
  for (int k = 0; k < kWaves; ++k) {
    const double a = amp(rng);
    const double p = phase(rng);
    const double fy = freq(rng);
    const double fx = freq(rng);
    const double fc = freq(rng);
    for (std::size_t y = 0; y < shape.height; ++y) {
      for (std::size_t x = 0; x < shape.width; ++x) {
        for (std::size_t c = 0; c < shape.channels; ++c) {
          out[(y * shape.width + x) * shape.channels + c] +=
              a * std::cos(2.0 * std::numbers::pi *
                               (fy * static_cast<double>(y) / shape.height +
                                fx * static_cast<double>(x) / shape.width +
                                fc * static_cast<double>(c) / shape.channels) +
                           p);
        }
      }
    }
  }
  double mean = 0.0;
  for (double v : out) {
    mean += v;
  }
  mean /= static_cast<double>(out.size());
  double peak = 0.0;
  for (double &v : out) {
    v -= mean;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 0.0) {
    for (double &v : out) {
      v /= peak;
    }
  }
  return out;
}

DenseLayer random_dense(std::mt19937_64 &rng, std::size_t rows,
                        std::size_t cols) {
  const double a = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> dist(-a, a);
  DenseLayer l{rows, cols, std::vector<double>(rows * cols),
               std::vector<double>(rows)};
  for (double &w : l.weight) {
    w = dist(rng);
  }
  for (double &b : l.bias) {
    b = dist(rng);
  }
  return l;
}

} // namespace

BlackBoxModel gen_synthetic_model(std::uint64_t seed, Shape input_shape,
                                  std::size_t num_classes, SyntheticKind kind,
                                  std::size_t hidden) {
  if (num_classes < 2) {
    throw std::invalid_argument("num_classes must be >= 2");
  }
  validate_shape(input_shape);
  std::mt19937_64 rng(seed);
  const std::size_t d = input_shape.size();
  std::vector<Layer> layers{FlattenLayer{}};
  if (kind == SyntheticKind::linear_softmax) {
    layers.emplace_back(random_dense(rng, num_classes, d));
  } else if (kind == SyntheticKind::smooth_linear) {
    DenseLayer l = random_dense(rng, num_classes, d);
    const double a = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t k = 0; k < num_classes; ++k) {
      const auto field = low_frequency_field(rng, input_shape);
      for (std::size_t i = 0; i < d; ++i) {
        l.weight[k * d + i] = a * field[i];
      }
    }
    layers.emplace_back(std::move(l));
  } else {
    layers.emplace_back(random_dense(rng, hidden, d));
    layers.emplace_back(ReluLayer{});
    layers.emplace_back(random_dense(rng, num_classes, hidden));
  }
  layers.emplace_back(SoftmaxLayer{});
  return BlackBoxModel(Network(input_shape, std::move(layers)), num_classes);
}

Tensor gen_smooth_image(std::uint64_t seed, Shape shape) {
  validate_shape(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(0.2, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<int> freq(0, 2);
  constexpr int kWaves = 3;
  Tensor out(shape);
  for (std::size_t c = 0; c < shape.channels; ++c) {
    double a[kWaves], p[kWaves], fy[kWaves], fx[kWaves], norm = 0.0;
    for (int k = 0; k < kWaves; ++k) {
      a[k] = amp(rng);
      p[k] = phase(rng);
      fy[k] = freq(rng);
      fx[k] = freq(rng);
      norm += a[k];
    }
    for (std::size_t y = 0; y < shape.height; ++y) {
      for (std::size_t x = 0; x < shape.width; ++x) {
        double v = 0.0;
        for (int k = 0; k < kWaves; ++k) {
          v += a[k] * std::cos(2.0 * std::numbers::pi *
                                   (fy[k] * static_cast<double>(y) / shape.height +
                                    fx[k] * static_cast<double>(x) / shape.width) +
                               p[k]);
        }
        out.at(y, x, c) = 0.5 + 0.35 * v / norm;
      }
    }
  }
  return out;
}

} // namespace zozoom
