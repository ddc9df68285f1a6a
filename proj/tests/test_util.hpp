#ifndef ZOZOOM_TEST_UTIL_HPP
#define ZOZOOM_TEST_UTIL_HPP

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zozoom/model.hpp"
#include "zozoom/tensor.hpp"

namespace testutil {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string &tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("zozoom_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<double> uniform_vector(std::mt19937_64 &rng, std::size_t n,
                                          double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double &x : v) {
    x = dist(rng);
  }
  return v;
}

inline zozoom::Tensor random_tensor(std::mt19937_64 &rng, zozoom::Shape shape,
                                    double lo = 0.0, double hi = 1.0) {
  return zozoom::Tensor(shape, uniform_vector(rng, shape.size(), lo, hi));
}

/// softmax(W x + b) over a flattened input.
inline zozoom::BlackBoxModel linear_softmax(zozoom::Shape shape, std::size_t k,
                                            std::vector<double> w,
                                            std::vector<double> b) {
  using namespace zozoom;
  DenseLayer dense{k, shape.size(), std::move(w), std::move(b)};
  return BlackBoxModel(Network(shape, {FlattenLayer{}, dense, SoftmaxLayer{}}), k);
}

/// Direct "same"-padded convolution at one output element.
inline double oracle_conv_at(const zozoom::Tensor &in,
                             const zozoom::Conv2dLayer &l, std::size_t y,
                             std::size_t x, std::size_t o) {
  const auto &s = in.shape();
  double acc = l.bias[o];
  const long ph = static_cast<long>(l.kernel_h / 2);
  const long pw = static_cast<long>(l.kernel_w / 2);
  for (std::size_t i = 0; i < l.in_channels; ++i) {
    for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
        const long sy = static_cast<long>(y) + static_cast<long>(ky) - ph;
        const long sx = static_cast<long>(x) + static_cast<long>(kx) - pw;
        if (sy < 0 || sx < 0 || sy >= static_cast<long>(s.height) ||
            sx >= static_cast<long>(s.width)) {
          continue;
        }
        const double w =
            l.kernel[((o * l.in_channels + i) * l.kernel_h + ky) * l.kernel_w + kx];
        acc += w * in.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), i);
      }
    }
  }
  return acc;
}

/// Half-pixel-center bilinear resize written as a dense tent-kernel sum:
/// out(i, j) = sum_{a, b} max(0, 1 - |sy_i - a|) max(0, 1 - |sx_j - b|) x(a, b),
/// with s = clamp((i + 0.5) * in / out - 0.5, 0, in - 1).
inline zozoom::Tensor oracle_bilinear(const zozoom::Tensor &x, std::size_t oh,
                                      std::size_t ow) {
  const auto &s = x.shape();
  auto weights = [](std::size_t in, std::size_t out) {
    std::vector<std::vector<double>> w(out, std::vector<double>(in, 0.0));
    for (std::size_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * static_cast<double>(in) /
                       static_cast<double>(out) - 0.5;
      src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
      for (std::size_t a = 0; a < in; ++a) {
        w[i][a] = std::max(0.0, 1.0 - std::abs(src - static_cast<double>(a)));
      }
    }
    return w;
  };
  const auto wy = weights(s.height, oh);
  const auto wx = weights(s.width, ow);
  zozoom::Tensor out(zozoom::Shape{oh, ow, s.channels});
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t c = 0; c < s.channels; ++c) {
        double acc = 0.0;
        for (std::size_t a = 0; a < s.height; ++a) {
          for (std::size_t b = 0; b < s.width; ++b) {
            acc += wy[i][a] * wx[j][b] * x.at(a, b, c);
          }
        }
        out.at(i, j, c) = acc;
      }
    }
  }
  return out;
}

inline double max_abs_diff(const zozoom::Tensor &a, const zozoom::Tensor &b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

/// Closed-form optimum of mean ||D E x - x||^2 over rank-k linear maps:
/// projection onto the top-k eigenvectors of (1/n) sum x x^T.
struct PcaOracle {
  Eigen::MatrixXd basis; // d x k, orthonormal columns
  double mse = 0.0;      // sum of the discarded eigenvalues

  zozoom::Tensor project(const zozoom::Tensor &x) const {
    const Eigen::Map<const Eigen::VectorXd> v(x.data().data(),
                                              static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd p = basis * (basis.transpose() * v);
    return zozoom::Tensor(x.shape(), std::vector<double>(p.data(), p.data() + p.size()));
  }
};

inline PcaOracle pca_oracle(const std::vector<zozoom::Tensor> &data, std::size_t k) {
  const auto d = static_cast<Eigen::Index>(data.front().size());
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
  for (const auto &x : data) {
    const Eigen::Map<const Eigen::VectorXd> v(x.data().data(), d);
    second += v * v.transpose();
  }
  second /= static_cast<double>(data.size());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(second);
  // Eigenvalues ascend.
  PcaOracle out;
  const auto kk = static_cast<Eigen::Index>(k);
  out.basis = eig.eigenvectors().rightCols(kk);
  for (Eigen::Index i = 0; i < d - kk; ++i) {
    out.mse += std::max(0.0, eig.eigenvalues()(i));
  }
  return out;
}

inline std::string read_file(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace testutil

#endif // ZOZOOM_TEST_UTIL_HPP
