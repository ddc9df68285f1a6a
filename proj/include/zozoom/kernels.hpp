#ifndef ZOZOOM_KERNELS_HPP
#define ZOZOOM_KERNELS_HPP

#include <cstddef>
#include <span>

#include "zozoom/tensor.hpp"

// Data-parallel inner loops of the forward pass. The OpenMP versions in
// zozoom::kernels are bit-identical to the serial references in
// zozoom::kernels::serial: each output element is accumulated by exactly one
// thread in the same order as the serial loop.
namespace zozoom::kernels {

struct ConvWeights {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::span<const double> kernel; // [out][in][kh][kw]
  std::span<const double> bias;   // [out]
};

/// Stride-1 convolution with "same" zero padding. `out` must already have
/// shape (in.height, in.width, w.out_channels).
void conv2d_same(const Tensor &in, const ConvWeights &w, Tensor &out);

/// out = weight * in + bias, weight row-major rows x cols.
void dense(std::span<const double> in, std::span<const double> weight,
           std::span<const double> bias, std::size_t rows, std::size_t cols,
           std::span<double> out);

namespace serial {
void conv2d_same(const Tensor &in, const ConvWeights &w, Tensor &out);
void dense(std::span<const double> in, std::span<const double> weight,
           std::span<const double> bias, std::size_t rows, std::size_t cols,
           std::span<double> out);
} // namespace serial

} // namespace zozoom::kernels

#endif // ZOZOOM_KERNELS_HPP
