#include "zozoom/decoder.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>

#include "zozoom/io.hpp"
#include "zozoom/resize.hpp"

namespace zozoom {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const std::vector<double> &v,
                                      std::size_t rows, std::size_t cols) {
  return {v.data(), static_cast<Eigen::Index>(rows),
          static_cast<Eigen::Index>(cols)};
}

nlohmann::json matrix_to_json(const std::vector<double> &v, std::size_t rows,
                              std::size_t cols) {
  nlohmann::json m = nlohmann::json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    m.push_back(std::vector<double>(
        v.begin() + static_cast<std::ptrdiff_t>(r * cols),
        v.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)));
  }
  return m;
}

std::vector<double> matrix_from_json(const nlohmann::json &m, std::size_t rows,
                                     std::size_t cols, const char *name) {
  if (!m.is_array() || m.size() != rows) {
    throw std::invalid_argument(std::string("linear_ae ") + name +
                                " must have " + std::to_string(rows) + " rows");
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto &row : m) {
    if (!row.is_array() || row.size() != cols) {
      throw std::invalid_argument(std::string("linear_ae ") + name +
                                  " rows must have " + std::to_string(cols) +
                                  " entries");
    }
    for (const auto &v : row) {
      out.push_back(v.get<double>());
    }
  }
  return out;
}

RowMatrix stack_columns(std::span<const Tensor> data) {
  const std::size_t d = data.front().size();
  RowMatrix x(static_cast<Eigen::Index>(d),
              static_cast<Eigen::Index>(data.size()));
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (data[n].shape() != data.front().shape()) {
      throw std::invalid_argument("training tensors must share one shape");
    }
    for (std::size_t i = 0; i < d; ++i) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) = data[n][i];
    }
  }
  return x;
}

double mean_loss(const RowMatrix &enc, const RowMatrix &dec,
                 const RowMatrix &x) {
  return (dec * (enc * x) - x).squaredNorm() / static_cast<double>(x.cols());
}

} // namespace

Tensor LinearAutoencoder::encode(const Tensor &x) const {
  if (x.shape() != full_shape) {
    throw std::invalid_argument("encoder input must be " + full_shape.to_string());
  }
  Tensor out(reduced_shape);
  Eigen::Map<Eigen::VectorXd>(out.values().data(),
                              static_cast<Eigen::Index>(reduced_dim())) =
      as_matrix(encoder, reduced_dim(), full_dim()) *
      Eigen::Map<const Eigen::VectorXd>(x.values().data(),
                                        static_cast<Eigen::Index>(full_dim()));
  return out;
}

Tensor LinearAutoencoder::decode(const Tensor &code) const {
  if (code.size() != reduced_dim()) {
    throw std::invalid_argument("decoder input must have length " +
                                std::to_string(reduced_dim()));
  }
  Tensor out(full_shape);
  Eigen::Map<Eigen::VectorXd>(out.values().data(),
                              static_cast<Eigen::Index>(full_dim())) =
      as_matrix(decoder, full_dim(), reduced_dim()) *
      Eigen::Map<const Eigen::VectorXd>(code.values().data(),
                                        static_cast<Eigen::Index>(reduced_dim()));
  return out;
}

std::vector<Tensor> planted_subspace_data(std::uint64_t seed, Shape shape,
                                          std::size_t k, std::size_t n,
                                          double noise) {
  validate_shape(shape);
  const std::size_t d = shape.size();
  if (k == 0 || k > d) {
    throw std::invalid_argument("planted dimension must be in [1, d]");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> basis(d * k);
  for (double &v : basis) {
    v = normal(rng) / std::sqrt(static_cast<double>(d));
  }
  std::vector<Tensor> out;
  out.reserve(n);
  std::vector<double> z(k);
  for (std::size_t s = 0; s < n; ++s) {
    for (double &v : z) {
      v = normal(rng);
    }
    Tensor x(shape);
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        acc += basis[i * k + j] * z[j];
      }
      x[i] = acc + (noise > 0.0 ? noise * normal(rng) : 0.0);
    }
    out.push_back(std::move(x));
  }
  return out;
}

double reconstruction_mse(const LinearAutoencoder &ae,
                          std::span<const Tensor> data) {
  if (data.empty()) {
    return 0.0;
  }
  double acc = 0.0;
  for (const auto &x : data) {
    acc += squared_l2(ae.reconstruct(x).values(), x.values());
  }
  return acc / static_cast<double>(data.size());
}

AeTrainResult train_linear_ae(std::span<const Tensor> data,
                              std::size_t d_prime, std::size_t epochs,
                              double lr, std::uint64_t seed, AeInit init) {
  if (data.empty()) {
    throw std::invalid_argument("train_linear_ae: empty dataset");
  }
  const std::size_t d = data.front().size();
  if (d_prime == 0 || d_prime > d) {
    throw std::invalid_argument("train_linear_ae: need 1 <= d' <= d (d' = " +
                                std::to_string(d_prime) + ", d = " +
                                std::to_string(d) + ")");
  }
  if (!(lr > 0.0)) {
    throw std::invalid_argument("train_linear_ae: learning rate must be > 0");
  }
  const RowMatrix x = stack_columns(data);
  const auto dp = static_cast<Eigen::Index>(d_prime);
  const auto dd = static_cast<Eigen::Index>(d);

  RowMatrix enc(dp, dd);
  RowMatrix dec(dd, dp);
  if (init == AeInit::identity) {
    enc.setIdentity();
    dec.setIdentity();
  } else {
    std::mt19937_64 rng(seed);
    const double a = 1.0 / std::sqrt(static_cast<double>(d));
    std::uniform_real_distribution<double> dist(-a, a);
    for (Eigen::Index i = 0; i < enc.size(); ++i) {
      enc.data()[i] = dist(rng);
    }
    for (Eigen::Index i = 0; i < dec.size(); ++i) {
      dec.data()[i] = dist(rng);
    }
  }

  const double inv_n = 1.0 / static_cast<double>(x.cols());
  double loss = mean_loss(enc, dec, x);
  std::vector<double> history{loss};
  history.reserve(epochs + 1);
  double step = lr;
  for (std::size_t e = 0; e < epochs; ++e) {
    const RowMatrix code = enc * x;
    const RowMatrix resid = dec * code - x;
    const RowMatrix grad_dec = 2.0 * inv_n * resid * code.transpose();
    const RowMatrix grad_enc = 2.0 * inv_n * dec.transpose() * resid * x.transpose();
    // Backtrack until the full-batch loss does not increase.
    for (int tries = 0; tries < 60; ++tries) {
      RowMatrix enc_next = enc - step * grad_enc;
      RowMatrix dec_next = dec - step * grad_dec;
      const double next = mean_loss(enc_next, dec_next, x);
      if (std::isfinite(next) && next <= loss) {
        enc = std::move(enc_next);
        dec = std::move(dec_next);
        loss = next;
        step = std::min(step * 1.25, lr);
        break;
      }
      step *= 0.5;
    }
    history.push_back(loss);
  }

  LinearAutoencoder ae;
  ae.full_shape = data.front().shape();
  ae.reduced_shape = Shape{1, 1, d_prime};
  ae.encoder.assign(enc.data(), enc.data() + enc.size());
  ae.decoder.assign(dec.data(), dec.data() + dec.size());
  ae.training_mse = loss;
  return {std::move(ae), std::move(history)};
}

std::string to_string(DecoderMode mode) {
  switch (mode) {
  case DecoderMode::identity:
    return "identity";
  case DecoderMode::bilinear:
    return "bilin";
  case DecoderMode::conv:
    return "conv";
  case DecoderMode::linear_ae:
    return "linear_ae";
  }
  return "unknown";
}

Decoder Decoder::identity(Shape shape) {
  validate_shape(shape);
  return Decoder(DecoderMode::identity, shape, shape);
}

Decoder Decoder::bilinear(Shape reduced, Shape full) {
  validate_shape(reduced);
  validate_shape(full);
  if (reduced.channels != full.channels) {
    throw std::invalid_argument("bilinear decoder needs equal channel counts (" +
                                reduced.to_string() + " -> " + full.to_string() +
                                ")");
  }
  if (reduced.size() > full.size()) {
    throw std::invalid_argument("reduced dimension exceeds full dimension");
  }
  return Decoder(DecoderMode::bilinear, reduced, full);
}

Decoder Decoder::conv(Network network) {
  const Shape reduced = network.input_shape();
  const Shape full = network.output_shape();
  if (reduced.size() > full.size()) {
    throw std::invalid_argument("reduced dimension exceeds full dimension");
  }
  Decoder dec(DecoderMode::conv, reduced, full);
  dec.network_ = std::make_shared<const Network>(std::move(network));
  return dec;
}

Decoder Decoder::linear_ae(LinearAutoencoder ae) {
  if (ae.encoder.size() != ae.reduced_dim() * ae.full_dim() ||
      ae.decoder.size() != ae.full_dim() * ae.reduced_dim()) {
    throw std::invalid_argument("linear autoencoder weights missing or mis-sized");
  }
  Decoder dec(DecoderMode::linear_ae, ae.reduced_shape, ae.full_shape);
  dec.ae_ = std::make_shared<const LinearAutoencoder>(std::move(ae));
  return dec;
}

Tensor decode_conv(const Network &network, const Shape &full,
                   const Tensor &delta_prime) {
  if (network.output_shape() != full) {
    throw std::invalid_argument("conv decoder produces " +
                                network.output_shape().to_string() +
                                ", expected " + full.to_string());
  }
  return network.forward(delta_prime);
}

Tensor Decoder::decode(const Tensor &delta_prime) const {
  if (delta_prime.shape() != reduced_) {
    throw std::invalid_argument("decoder input shape " +
                                delta_prime.shape().to_string() +
                                " != reduced shape " + reduced_.to_string());
  }
  switch (mode_) {
  case DecoderMode::identity:
    return delta_prime;
  case DecoderMode::bilinear:
    return bilinear_resize(delta_prime, full_.height, full_.width);
  case DecoderMode::conv:
    if (!network_) {
      throw std::logic_error("conv decoder has no weights");
    }
    return decode_conv(*network_, full_, delta_prime);
  case DecoderMode::linear_ae:
    if (!ae_) {
      throw std::logic_error("linear_ae decoder has no weights");
    }
    return ae_->decode(delta_prime);
  }
  throw std::logic_error("unhandled decoder mode");
}

nlohmann::json decoder_to_json(const Decoder &decoder) {
  nlohmann::json j = {{"format", "MDL1"},
                      {"role", "decoder"},
                      {"mode", to_string(decoder.mode())},
                      {"input_shape", shape_to_json(decoder.reduced_shape())},
                      {"output_shape", shape_to_json(decoder.full_shape())}};
  if (const auto *net = decoder.network()) {
    j["layers"] = network_to_json(*net)["layers"];
  }
  if (const auto *ae = decoder.autoencoder()) {
    j["encoder"] = matrix_to_json(ae->encoder, ae->reduced_dim(), ae->full_dim());
    j["decoder"] = matrix_to_json(ae->decoder, ae->full_dim(), ae->reduced_dim());
    j["training_mse"] = ae->training_mse;
  }
  return j;
}

Decoder decoder_from_json(const nlohmann::json &j) {
  if (!j.is_object() || j.value("format", std::string()) != "MDL1" ||
      j.value("role", std::string()) != "decoder") {
    throw std::invalid_argument("not an MDL1 decoder (need \"role\":\"decoder\")");
  }
  const auto mode = j.value("mode", std::string());
  const Shape in = shape_from_json(j.at("input_shape"));
  if (mode == "conv") {
    Decoder dec = Decoder::conv(network_from_json(j));
    if (j.contains("output_shape") &&
        shape_from_json(j["output_shape"]) != dec.full_shape()) {
      throw std::invalid_argument("conv decoder layers produce " +
                                  dec.full_shape().to_string() +
                                  " but output_shape says " +
                                  shape_from_json(j["output_shape"]).to_string());
    }
    return dec;
  }
  const Shape out = shape_from_json(j.at("output_shape"));
  if (mode == "identity") {
    if (in != out) {
      throw std::invalid_argument("identity decoder needs equal shapes");
    }
    return Decoder::identity(in);
  }
  if (mode == "bilin") {
    return Decoder::bilinear(in, out);
  }
  if (mode == "linear_ae") {
    if (!j.contains("encoder") || !j.contains("decoder")) {
      throw std::invalid_argument("linear_ae decoder needs encoder and decoder weights");
    }
    LinearAutoencoder ae;
    ae.full_shape = out;
    ae.reduced_shape = in;
    ae.encoder = matrix_from_json(j["encoder"], in.size(), out.size(), "encoder");
    ae.decoder = matrix_from_json(j["decoder"], out.size(), in.size(), "decoder");
    ae.training_mse = j.value("training_mse", 0.0);
    return Decoder::linear_ae(std::move(ae));
  }
  throw std::invalid_argument("unknown decoder mode \"" + mode + "\"");
}

Decoder load_decoder(const std::filesystem::path &path) {
  return decoder_from_json(read_json_file(path));
}

void save_decoder(const Decoder &decoder, const std::filesystem::path &path) {
  write_json_file(path, decoder_to_json(decoder));
}

Decoder decoder_from_flag(const std::string &flag, Shape full,
                          std::optional<Shape> default_reduced) {
  const auto colon = flag.find(':');
  const std::string head = flag.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : flag.substr(colon + 1);
  auto check_full = [&](Decoder dec) {
    if (dec.full_shape() != full) {
      throw std::invalid_argument("decoder output " + dec.full_shape().to_string() +
                                  " does not match image shape " + full.to_string());
    }
    return dec;
  };
  if (head == "identity") {
    return Decoder::identity(full);
  }
  if (head == "bilin") {
    if (arg.empty()) {
      if (!default_reduced) {
        throw std::invalid_argument("bilin decoder needs a reduced shape (bilin:HxW)");
      }
      return Decoder::bilinear(*default_reduced, full);
    }
    const auto x = arg.find('x');
    if (x == std::string::npos) {
      throw std::invalid_argument("bilin size must look like HxW, got " + arg);
    }
    const Shape reduced{std::stoul(arg.substr(0, x)), std::stoul(arg.substr(x + 1)),
                        full.channels};
    return Decoder::bilinear(reduced, full);
  }
  if (head == "conv" || head == "linear-ae") {
    if (arg.empty()) {
      throw std::invalid_argument(head + " decoder needs a path (" + head + ":<path>)");
    }
    Decoder dec = load_decoder(arg);
    const auto expected = head == "conv" ? DecoderMode::conv : DecoderMode::linear_ae;
    if (dec.mode() != expected) {
      throw std::invalid_argument(arg + " holds a " + to_string(dec.mode()) +
                                  " decoder, expected " + to_string(expected));
    }
    return check_full(std::move(dec));
  }
  throw std::invalid_argument("unknown decoder spec \"" + flag + "\"");
}

} // namespace zozoom
