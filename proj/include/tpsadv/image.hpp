#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace tpsadv {

using Rgb = std::array<double, 3>;

/// Axis-aligned pixel box with half-open bounds [left, right) x [top, bottom).
struct BoxMask {
  int left = 0;
  int top = 0;
  int right = 0;
  int bottom = 0;

  int width() const { return right - left; }
  int height() const { return bottom - top; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool empty() const { return right <= left || bottom <= top; }
  bool contains(int x, int y) const { return x >= left && x < right && y >= top && y < bottom; }
  bool contains(const BoxMask& other) const {
    return other.left >= left && other.top >= top && other.right <= right &&
           other.bottom <= bottom;
  }
  bool operator==(const BoxMask&) const = default;
};

/// Intersection area in pixels (0 when disjoint).
long intersection_area(const BoxMask& a, const BoxMask& b);

/// Row-major interleaved RGB raster of doubles.
///
/// The same container carries images (values in [0,1]) and image-shaped
/// arrays such as gradients or noise fields, which may hold any finite value.
/// Operations that produce images clamp their output; the container itself
/// does not.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  double& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c) const { return data_[index(x, y, c)]; }
  Rgb pixel(int x, int y) const;
  void set_pixel(int x, int y, const Rgb& v);

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }
  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }
  BoxMask bounds() const { return {0, 0, width_, height_}; }

  /// Copy of the pixels inside `box`; the box must lie within the image.
  Image crop(const BoxMask& box) const;
  /// Overwrite the pixels inside `box` (which must match `src` dims).
  void paste(const Image& src, const BoxMask& box);

  void clamp01();
  void fill(double v);
  Image& operator+=(const Image& other);
  Image& operator*=(double s);

  bool operator==(const Image& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

Image clamped(Image img);
double mean_abs_difference(const Image& a, const Image& b);
double max_abs_difference(const Image& a, const Image& b);
double dot(const Image& a, const Image& b);
bool all_finite(const Image& img);
bool within_unit_range(const Image& img);

}  // namespace tpsadv
