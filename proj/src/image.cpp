#include "tpsadv/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tpsadv {

long intersection_area(const BoxMask& a, const BoxMask& b) {
  const int w = std::min(a.right, b.right) - std::max(a.left, b.left);
  const int h = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  if (w <= 0 || h <= 0) return 0;
  return static_cast<long>(w) * h;
}

Image::Image(int width, int height, double fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("image dimensions must be positive, got " +
                                std::to_string(width) + "x" + std::to_string(height));
  }
  data_.assign(static_cast<std::size_t>(width) * height * kChannels, fill);
}

Rgb Image::pixel(int x, int y) const {
  const std::size_t i = index(x, y, 0);
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void Image::set_pixel(int x, int y, const Rgb& v) {
  const std::size_t i = index(x, y, 0);
  data_[i] = v[0];
  data_[i + 1] = v[1];
  data_[i + 2] = v[2];
}

Image Image::crop(const BoxMask& box) const {
  if (box.empty() || !bounds().contains(box)) {
    throw std::invalid_argument("crop box outside image bounds");
  }
  Image out(box.width(), box.height());
  for (int y = 0; y < box.height(); ++y) {
    const auto src = data_.begin() + index(box.left, box.top + y, 0);
    std::copy(src, src + static_cast<long>(box.width()) * kChannels,
              out.data_.begin() + out.index(0, y, 0));
  }
  return out;
}

void Image::paste(const Image& src, const BoxMask& box) {
  if (!bounds().contains(box) || src.width() != box.width() || src.height() != box.height()) {
    throw std::invalid_argument("paste: source dims do not match destination box");
  }
  for (int y = 0; y < box.height(); ++y) {
    const auto from = src.data_.begin() + src.index(0, y, 0);
    std::copy(from, from + static_cast<long>(box.width()) * kChannels,
              data_.begin() + index(box.left, box.top + y, 0));
  }
}

void Image::clamp01() {
  for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
}

void Image::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Image& Image::operator+=(const Image& other) {
  if (!same_shape(other)) throw std::invalid_argument("image shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Image& Image::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Image clamped(Image img) {
  img.clamp01();
  return img;
}

double mean_abs_difference(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("image shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a.data()[i] - b.data()[i]);
  return a.size() == 0 ? 0.0 : acc / static_cast<double>(a.size());
}

double max_abs_difference(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("image shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double dot(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("image shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
  return acc;
}

bool all_finite(const Image& img) {
  return std::all_of(img.data().begin(), img.data().end(),
                     [](double v) { return std::isfinite(v); });
}

bool within_unit_range(const Image& img) {
  return std::all_of(img.data().begin(), img.data().end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

}  // namespace tpsadv
