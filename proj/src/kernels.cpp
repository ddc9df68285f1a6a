#include "zozoom/kernels.hpp"

#include <cstdint>

namespace zozoom::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

inline double conv_at(const Tensor &in, const ConvWeights &w, std::size_t o,
                      std::size_t y, std::size_t x) {
  const Shape &s = in.shape();
  const auto ph = static_cast<std::ptrdiff_t>(w.kernel_h / 2);
  const auto pw = static_cast<std::ptrdiff_t>(w.kernel_w / 2);
  double acc = w.bias[o];
  for (std::size_t i = 0; i < w.in_channels; ++i) {
    const double *k =
        w.kernel.data() + ((o * w.in_channels + i) * w.kernel_h) * w.kernel_w;
    for (std::size_t ky = 0; ky < w.kernel_h; ++ky) {
      const auto sy = static_cast<std::ptrdiff_t>(y + ky) - ph;
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(s.height)) {
        continue;
      }
      for (std::size_t kx = 0; kx < w.kernel_w; ++kx) {
        const auto sx = static_cast<std::ptrdiff_t>(x + kx) - pw;
        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(s.width)) {
          continue;
        }
        acc += k[ky * w.kernel_w + kx] *
               in.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx),
                     i);
      }
    }
  }
  return acc;
}

inline double dense_row(std::span<const double> in,
                        std::span<const double> weight,
                        std::span<const double> bias, std::size_t r,
                        std::size_t cols) {
  const double *row = weight.data() + r * cols;
  double acc = bias[r];
  for (std::size_t c = 0; c < cols; ++c) {
    acc += row[c] * in[c];
  }
  return acc;
}

} // namespace

void conv2d_same(const Tensor &in, const ConvWeights &w, Tensor &out) {
  const Shape &s = in.shape();
  const std::int64_t pixels = static_cast<std::int64_t>(s.height * s.width);
  const std::size_t work =
      s.height * s.width * w.out_channels * w.in_channels * w.kernel_h *
      w.kernel_w;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (std::int64_t p = 0; p < pixels; ++p) {
    const auto y = static_cast<std::size_t>(p) / s.width;
    const auto x = static_cast<std::size_t>(p) % s.width;
    for (std::size_t o = 0; o < w.out_channels; ++o) {
      out.at(y, x, o) = conv_at(in, w, o, y, x);
    }
  }
}

void dense(std::span<const double> in, std::span<const double> weight,
           std::span<const double> bias, std::size_t rows, std::size_t cols,
           std::span<double> out) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (std::int64_t r = 0; r < n; ++r) {
    out[static_cast<std::size_t>(r)] =
        dense_row(in, weight, bias, static_cast<std::size_t>(r), cols);
  }
}

namespace serial {

void conv2d_same(const Tensor &in, const ConvWeights &w, Tensor &out) {
  const Shape &s = in.shape();
  for (std::size_t y = 0; y < s.height; ++y) {
    for (std::size_t x = 0; x < s.width; ++x) {
      for (std::size_t o = 0; o < w.out_channels; ++o) {
        out.at(y, x, o) = conv_at(in, w, o, y, x);
      }
    }
  }
}

void dense(std::span<const double> in, std::span<const double> weight,
           std::span<const double> bias, std::size_t rows, std::size_t cols,
           std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = dense_row(in, weight, bias, r, cols);
  }
}

} // namespace serial

} // namespace zozoom::kernels
