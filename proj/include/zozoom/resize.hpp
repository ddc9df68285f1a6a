#ifndef ZOZOOM_RESIZE_HPP
#define ZOZOOM_RESIZE_HPP

#include <cstddef>

#include "zozoom/tensor.hpp"

namespace zozoom {

/// Channel-wise bilinear resize with half-pixel-center sampling:
/// src = (dst + 0.5) * in / out - 0.5, clamped to the valid range.
/// Reproduces constant images exactly and never leaves [min, max] of the
/// input channel.
Tensor bilinear_resize(const Tensor &x, std::size_t out_h, std::size_t out_w);

/// Nearest-neighbour upsampling by an integer factor: every input pixel
/// becomes a factor x factor block.
Tensor replicate_upsample(const Tensor &x, std::size_t factor);

/// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.
Tensor maxpool2x2(const Tensor &x);

} // namespace zozoom

#endif // ZOZOOM_RESIZE_HPP
