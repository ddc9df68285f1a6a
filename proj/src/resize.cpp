#include "zozoom/resize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace zozoom {

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> sample_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double max_src = static_cast<double>(in - 1);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, max_src);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

} // namespace

Tensor bilinear_resize(const Tensor &x, std::size_t out_h, std::size_t out_w) {
  const Shape &s = x.shape();
  Tensor out(Shape{out_h, out_w, s.channels});
  if (out_h == s.height && out_w == s.width) {
    return Tensor(out.shape(), x.data());
  }
  const auto ty = sample_taps(s.height, out_h);
  const auto tx = sample_taps(s.width, out_w);
  const std::size_t ch = s.channels;
  const std::size_t row = out_w * ch;
  // Horizontal pass over every input row, then vertical blend of two rows.
  std::vector<double> rows(s.height * row);
  const double *src = x.data().data();
  for (std::size_t y = 0; y < s.height; ++y) {
    const double *in_row = src + y * s.width * ch;
    double *dst = rows.data() + y * row;
    for (std::size_t xo = 0; xo < out_w; ++xo) {
      const Tap &b = tx[xo];
      for (std::size_t c = 0; c < ch; ++c) {
        const double l = in_row[b.lo * ch + c];
        dst[xo * ch + c] = l + b.frac * (in_row[b.hi * ch + c] - l);
      }
    }
  }
  double *dst = out.values().data();
  for (std::size_t y = 0; y < out_h; ++y) {
    const Tap &a = ty[y];
    const double *top = rows.data() + a.lo * row;
    const double *bottom = rows.data() + a.hi * row;
    for (std::size_t i = 0; i < row; ++i) {
      dst[y * row + i] = top[i] + a.frac * (bottom[i] - top[i]);
    }
  }
  return out;
}

Tensor replicate_upsample(const Tensor &x, std::size_t factor) {
  if (factor == 0) {
    throw std::invalid_argument("replicate_upsample factor must be >= 1");
  }
  const Shape &s = x.shape();
  Tensor out(Shape{s.height * factor, s.width * factor, s.channels});
  for (std::size_t y = 0; y < out.shape().height; ++y) {
    for (std::size_t xo = 0; xo < out.shape().width; ++xo) {
      for (std::size_t c = 0; c < s.channels; ++c) {
        out.at(y, xo, c) = x.at(y / factor, xo / factor, c);
      }
    }
  }
  return out;
}

Tensor maxpool2x2(const Tensor &x) {
  const Shape &s = x.shape();
  if (s.height < 2 || s.width < 2) {
    throw std::invalid_argument("maxpool2x2 needs spatial size >= 2, got " +
                                s.to_string());
  }
  Tensor out(Shape{s.height / 2, s.width / 2, s.channels});
  for (std::size_t y = 0; y < out.shape().height; ++y) {
    for (std::size_t xo = 0; xo < out.shape().width; ++xo) {
      for (std::size_t c = 0; c < s.channels; ++c) {
        out.at(y, xo, c) =
            std::max({x.at(2 * y, 2 * xo, c), x.at(2 * y, 2 * xo + 1, c),
                      x.at(2 * y + 1, 2 * xo, c), x.at(2 * y + 1, 2 * xo + 1, c)});
      }
    }
  }
  return out;
}

} // namespace zozoom
