#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace zoomrl {

// Axis-aligned pixel box, inclusive on both ends: area = (x2-x1+1)*(y2-y1+1).
// Zero-area boxes are unrepresentable.
struct BBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  BBox() = default;
  BBox(int x1_, int y1_, int x2_, int y2_) : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {
    if (x1 > x2 || y1 > y2) throw std::invalid_argument("BBox: inverted corners");
  }

  std::int64_t width() const { return static_cast<std::int64_t>(x2) - x1 + 1; }
  std::int64_t height() const { return static_cast<std::int64_t>(y2) - y1 + 1; }
  std::int64_t area() const { return width() * height(); }

  bool contains_point(int px, int py) const {
    return px >= x1 && px <= x2 && py >= y1 && py <= y2;
  }
  bool contains_box(const BBox& b) const {
    return b.x1 >= x1 && b.x2 <= x2 && b.y1 >= y1 && b.y2 <= y2;
  }
  bool in_frame(int w, int h) const { return x1 >= 0 && y1 >= 0 && x2 < w && y2 < h; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline std::int64_t intersection_area(const BBox& a, const BBox& b) {
  const int ix1 = std::max(a.x1, b.x1);
  const int iy1 = std::max(a.y1, b.y1);
  const int ix2 = std::min(a.x2, b.x2);
  const int iy2 = std::min(a.y2, b.y2);
  if (ix1 > ix2 || iy1 > iy2) return 0;
  return (static_cast<std::int64_t>(ix2) - ix1 + 1) * (static_cast<std::int64_t>(iy2) - iy1 + 1);
}

// Intersection over union with inclusive pixel areas. Symmetric, 0 iff
// disjoint, 1 iff identical. Total on valid boxes.
inline double iou(const BBox& a, const BBox& b) {
  const std::int64_t inter = intersection_area(a, b);
  if (inter == 0) return 0.0;
  const std::int64_t uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Inclusive box area divided by frame area.
inline double area_ratio(const BBox& b, int frame_w, int frame_h) {
  if (frame_w <= 0 || frame_h <= 0) throw std::invalid_argument("area_ratio: empty frame");
  if (!b.in_frame(frame_w, frame_h)) throw std::invalid_argument("area_ratio: box outside frame");
  return static_cast<double>(b.area()) /
         (static_cast<double>(frame_w) * static_cast<double>(frame_h));
}

// Row-major binary raster packed into 64-bit words. Tail bits of the last
// word in each row are kept zero so that whole-mask word operations
// (popcounts, unions) need no edge handling.
class BitMask {
 public:
  BitMask() = default;
  BitMask(int width, int height, bool fill = false)
      : width_(width), height_(height), words_per_row_((width + 63) / 64) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("BitMask: empty frame");
    words_.assign(static_cast<std::size_t>(words_per_row_) * height, 0);
    if (fill) fill_box(BBox(0, 0, width - 1, height - 1), true);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return words_.empty(); }
  bool same_frame(const BitMask& o) const { return width_ == o.width_ && height_ == o.height_; }

  bool get(int x, int y) const {
    check_point(x, y);
    return (words_[word_index(x, y)] >> (x & 63)) & 1u;
  }

  void set(int x, int y, bool v) {
    check_point(x, y);
    const std::uint64_t bit = 1ULL << (x & 63);
    if (v)
      words_[word_index(x, y)] |= bit;
    else
      words_[word_index(x, y)] &= ~bit;
  }

  std::int64_t popcount() const {
    std::int64_t n = 0;
    for (std::uint64_t w : words_) n += std::popcount(w);
    return n;
  }

  // Set mask bits inside box b.
  std::int64_t count_in_box(const BBox& b) const {
    check_box(b);
    std::int64_t n = 0;
    for (int y = b.y1; y <= b.y2; ++y) {
      const std::uint64_t* row = row_ptr(y);
      n += count_row_range(row, b.x1, b.x2);
    }
    return n;
  }

  void fill_box(const BBox& b, bool v) {
    check_box(b);
    for (int y = b.y1; y <= b.y2; ++y) apply_row_range(row_ptr_mut(y), b.x1, b.x2, v);
  }

  // In-place XOR of all bits inside b.
  void flip_box(const BBox& b) {
    check_box(b);
    for (int y = b.y1; y <= b.y2; ++y) {
      std::uint64_t* row = row_ptr_mut(y);
      for_each_span(b.x1, b.x2, [&](int w, std::uint64_t m) { row[w] ^= m; });
    }
  }

  // Replace this mask's bits inside b with src's bits (frames must match).
  void copy_box_from(const BitMask& src, const BBox& b) {
    if (!same_frame(src)) throw std::invalid_argument("copy_box_from: frame mismatch");
    check_box(b);
    for (int y = b.y1; y <= b.y2; ++y) {
      std::uint64_t* dst = row_ptr_mut(y);
      const std::uint64_t* s = src.row_ptr(y);
      for_each_span(b.x1, b.x2, [&](int w, std::uint64_t m) { dst[w] = (dst[w] & ~m) | (s[w] & m); });
    }
  }

  const std::vector<std::uint64_t>& words() const { return words_; }
  std::vector<std::uint64_t>& mutable_words() { return words_; }

  friend bool operator==(const BitMask&, const BitMask&) = default;

  // Uncompressed row-major run-length counts, alternating zero-runs and
  // one-runs and starting with a zero-run (which may be 0).
  std::vector<std::int64_t> to_runs() const {
    std::vector<std::int64_t> runs;
    std::int64_t run = 0;
    bool cur = false;  // first run counts zeros
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const bool v = get(x, y);
        if (v == cur) {
          ++run;
        } else {
          runs.push_back(run);
          cur = v;
          run = 1;
        }
      }
    }
    runs.push_back(run);
    return runs;
  }

  static BitMask from_runs(int width, int height, const std::vector<std::int64_t>& runs) {
    BitMask m(width, height);
    std::int64_t pos = 0;
    bool cur = false;
    const std::int64_t total = static_cast<std::int64_t>(width) * height;
    for (std::int64_t run : runs) {
      if (run < 0 || pos + run > total) throw std::invalid_argument("BitMask: bad run-length data");
      if (cur) {
        for (std::int64_t i = pos; i < pos + run; ++i)
          m.set(static_cast<int>(i % width), static_cast<int>(i / width), true);
      }
      pos += run;
      cur = !cur;
    }
    if (pos != total) throw std::invalid_argument("BitMask: run-length data does not cover frame");
    return m;
  }

 private:
  void check_point(int x, int y) const {
    if (x < 0 || y < 0 || x >= width_ || y >= height_)
      throw std::invalid_argument("BitMask: point outside frame");
  }
  void check_box(const BBox& b) const {
    if (!b.in_frame(width_, height_)) throw std::invalid_argument("BitMask: box outside frame");
  }
  std::size_t word_index(int x, int y) const {
    return static_cast<std::size_t>(y) * words_per_row_ + (x >> 6);
  }
  const std::uint64_t* row_ptr(int y) const {
    return words_.data() + static_cast<std::size_t>(y) * words_per_row_;
  }
  std::uint64_t* row_ptr_mut(int y) {
    return words_.data() + static_cast<std::size_t>(y) * words_per_row_;
  }

  // Calls fn(word_in_row, bitmask) for every word overlapping [x1, x2].
  template <typename Fn>
  void for_each_span(int x1, int x2, Fn&& fn) const {
    const int w1 = x1 >> 6;
    const int w2 = x2 >> 6;
    for (int w = w1; w <= w2; ++w) {
      std::uint64_t m = ~0ULL;
      if (w == w1) m &= ~0ULL << (x1 & 63);
      if (w == w2) {
        const int hi = x2 & 63;
        m &= hi == 63 ? ~0ULL : (1ULL << (hi + 1)) - 1;
      }
      fn(w, m);
    }
  }

  std::int64_t count_row_range(const std::uint64_t* row, int x1, int x2) const {
    std::int64_t n = 0;
    for_each_span(x1, x2, [&](int w, std::uint64_t m) { n += std::popcount(row[w] & m); });
    return n;
  }

  void apply_row_range(std::uint64_t* row, int x1, int x2, bool v) const {
    for_each_span(x1, x2, [&](int w, std::uint64_t m) {
      if (v)
        row[w] |= m;
      else
        row[w] &= ~m;
    });
  }

  int width_ = 0;
  int height_ = 0;
  int words_per_row_ = 0;
  std::vector<std::uint64_t> words_;
};

namespace detail {
inline void check_same_frame(const BitMask& a, const BitMask& b, const char* what) {
  if (!a.same_frame(b)) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}
}  // namespace detail

// |a AND b| / |a OR b|. Two empty masks agree perfectly: 1.0.
inline double mask_iou(const BitMask& a, const BitMask& b) {
  detail::check_same_frame(a, b, "mask_iou");
  std::int64_t inter = 0, uni = 0;
  const auto& wa = a.words();
  const auto& wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) {
    inter += std::popcount(wa[i] & wb[i]);
    uni += std::popcount(wa[i] | wb[i]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// 2|a AND b| / (|a| + |b|); both-empty -> 1.0.
inline double mask_dice(const BitMask& a, const BitMask& b) {
  detail::check_same_frame(a, b, "mask_dice");
  std::int64_t inter = 0, total = 0;
  const auto& wa = a.words();
  const auto& wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) {
    inter += std::popcount(wa[i] & wb[i]);
    total += std::popcount(wa[i]) + std::popcount(wb[i]);
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

inline BitMask mask_xor(const BitMask& a, const BitMask& b) {
  detail::check_same_frame(a, b, "mask_xor");
  BitMask out = a;
  auto& w = out.mutable_words();
  const auto& wb = b.words();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] ^= wb[i];
  return out;
}

// Fraction of pixels inside b that are set in m.
inline double mask_density_in_box(const BBox& b, const BitMask& m) {
  if (!b.in_frame(m.width(), m.height()))
    throw std::invalid_argument("mask_density_in_box: box outside mask frame");
  return static_cast<double>(m.count_in_box(b)) / static_cast<double>(b.area());
}

// Chebyshev dilation by `band` pixels (square structuring element).
inline BitMask dilate(const BitMask& m, int band) {
  if (band <= 0) return m;
  const int w = m.width(), h = m.height();
  // horizontal pass: OR of shifts within +-band
  BitMask hz(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!m.get(x, y)) continue;
      const int lo = std::max(0, x - band), hi = std::min(w - 1, x + band);
      hz.fill_box(BBox(lo, y, hi, y), true);
    }
  // vertical pass: OR of rows within +-band
  BitMask out(w, h);
  const int wpr = (w + 63) / 64;
  auto& dst = out.mutable_words();
  const auto& src = hz.words();
  for (int y = 0; y < h; ++y) {
    const int lo = std::max(0, y - band), hi = std::min(h - 1, y + band);
    for (int sy = lo; sy <= hi; ++sy)
      for (int k = 0; k < wpr; ++k)
        dst[static_cast<std::size_t>(y) * wpr + k] |= src[static_cast<std::size_t>(sy) * wpr + k];
  }
  return out;
}

// Chebyshev erosion; pixels outside the frame count as unset, so the mask
// shrinks at the border.
inline BitMask erode(const BitMask& m, int band) {
  if (band <= 0) return m;
  const int w = m.width(), h = m.height();
  BitMask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!m.get(x, y)) continue;
      if (x - band < 0 || x + band >= w || y - band < 0 || y + band >= h) continue;
      const BBox nb(x - band, y - band, x + band, y + band);
      if (m.count_in_box(nb) == nb.area()) out.set(x, y, true);
    }
  return out;
}

// Crop + resize mapping between a full-image source region and a target
// raster of target_w x target_h pixels.
struct CropTransform {
  BBox source;
  int target_w = 0;
  int target_h = 0;
  double scale_x = 0.0;
  double scale_y = 0.0;

  CropTransform() = default;
  CropTransform(const BBox& source_, int target_w_, int target_h_)
      : source(source_), target_w(target_w_), target_h(target_h_) {
    if (target_w <= 0 || target_h <= 0) throw std::invalid_argument("CropTransform: empty target");
    scale_x = static_cast<double>(target_w) / static_cast<double>(source.width());
    scale_y = static_cast<double>(target_h) / static_cast<double>(source.height());
  }

  friend bool operator==(const CropTransform&, const CropTransform&) = default;
};

namespace detail {
// nearest integer, half away from zero
inline int round_half_away(double v) { return static_cast<int>(std::llround(v)); }
inline int clamp_int(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }
}  // namespace detail

// Full-image box -> crop-local coordinates, clamped into the target frame.
// The near corner maps its coordinate, the far corner maps its trailing
// edge (x2 + 1), which keeps pixel extents consistent under resampling.
inline BBox remap_to_crop(const CropTransform& t, const BBox& b_full) {
  const int x1 = detail::clamp_int(detail::round_half_away((b_full.x1 - t.source.x1) * t.scale_x),
                                   0, t.target_w - 1);
  const int y1 = detail::clamp_int(detail::round_half_away((b_full.y1 - t.source.y1) * t.scale_y),
                                   0, t.target_h - 1);
  const int x2 = detail::clamp_int(
      detail::round_half_away((b_full.x2 - t.source.x1 + 1) * t.scale_x) - 1, x1, t.target_w - 1);
  const int y2 = detail::clamp_int(
      detail::round_half_away((b_full.y2 - t.source.y1 + 1) * t.scale_y) - 1, y1, t.target_h - 1);
  return BBox(x1, y1, x2, y2);
}

// Crop-local box -> full-image coordinates: divide by scale, offset by the
// source origin, round half away from zero, clamp into the source box.
// Round-trip error is at most 0.5 + 2/scale pixels per axis (the 2/scale
// term only bites when a box collapses under downsampling); the round trip
// is exact whenever the crop does not downsample.
inline BBox remap_to_full(const CropTransform& t, const BBox& b_local) {
  const int x1 = detail::clamp_int(t.source.x1 + detail::round_half_away(b_local.x1 / t.scale_x),
                                   t.source.x1, t.source.x2);
  const int y1 = detail::clamp_int(t.source.y1 + detail::round_half_away(b_local.y1 / t.scale_y),
                                   t.source.y1, t.source.y2);
  const int x2 = detail::clamp_int(
      t.source.x1 + detail::round_half_away((b_local.x2 + 1) / t.scale_x) - 1, x1, t.source.x2);
  const int y2 = detail::clamp_int(
      t.source.y1 + detail::round_half_away((b_local.y2 + 1) / t.scale_y) - 1, y1, t.source.y2);
  return BBox(x1, y1, x2, y2);
}

}  // namespace zoomrl
