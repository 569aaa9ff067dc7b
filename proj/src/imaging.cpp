#include "tpsadv/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tpsadv {
namespace {

struct Taps {
  int x0, y0, x1, y1;
  double fx, fy;
};

// Bilinear taps for p, or false when p lies outside the sampling domain.
bool bilinear_taps(int w, int h, const Point2& p, Taps& t) {
  if (!(p.x >= 0.0 && p.y >= 0.0 && p.x <= w - 1 && p.y <= h - 1)) return false;
  t.x0 = static_cast<int>(std::floor(p.x));
  t.y0 = static_cast<int>(std::floor(p.y));
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.fx = p.x - t.x0;
  t.fy = p.y - t.y0;
  return true;
}

double uniform_in(const Range& r, Rng& rng) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

}  // namespace

Rgb bilinear_sample(const Image& img, const Point2& p, double fill) {
  Taps t{};
  if (!bilinear_taps(img.width(), img.height(), p, t)) return {fill, fill, fill};
  Rgb out{};
  for (int c = 0; c < Image::kChannels; ++c) {
    const double top = (1.0 - t.fx) * img.at(t.x0, t.y0, c) + t.fx * img.at(t.x1, t.y0, c);
    const double bottom = (1.0 - t.fx) * img.at(t.x0, t.y1, c) + t.fx * img.at(t.x1, t.y1, c);
    out[c] = (1.0 - t.fy) * top + t.fy * bottom;
  }
  return out;
}

Image resample(const Image& src, const SampleMap& map, double fill) {
  Image out(map.width, map.height);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      out.set_pixel(x, y, bilinear_sample(src, map.source[static_cast<std::size_t>(y) * map.width + x], fill));
    }
  }
  return out;
}

Image resample_adjoint(const Image& grad_out, const SampleMap& map, int src_width,
                       int src_height) {
  Image grad(src_width, src_height);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      Taps t{};
      if (!bilinear_taps(src_width, src_height,
                         map.source[static_cast<std::size_t>(y) * map.width + x], t)) {
        continue;
      }
      const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
      const double w10 = t.fx * (1.0 - t.fy);
      const double w01 = (1.0 - t.fx) * t.fy;
      const double w11 = t.fx * t.fy;
      for (int c = 0; c < Image::kChannels; ++c) {
        const double g = grad_out.at(x, y, c);
        grad.at(t.x0, t.y0, c) += w00 * g;
        grad.at(t.x1, t.y0, c) += w10 * g;
        grad.at(t.x0, t.y1, c) += w01 * g;
        grad.at(t.x1, t.y1, c) += w11 * g;
      }
    }
  }
  return grad;
}

SampleMap tps_sample_map(const TpsTransform& t, int out_width, int out_height) {
  if (out_width <= 0 || out_height <= 0) {
    throw std::invalid_argument("tps warp: output dims must be positive");
  }
  SampleMap map{out_width, out_height, {}};
  map.source.reserve(static_cast<std::size_t>(out_width) * out_height);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const Point2 q{static_cast<double>(x), static_cast<double>(y)};
      map.source.push_back(q + tps_displace(t, q));
    }
  }
  return map;
}

Image warp_tps(const Image& img, const TpsTransform& t, int out_width, int out_height,
               double fill) {
  Image out = resample(img, tps_sample_map(t, out_width, out_height), fill);
  out.clamp01();
  return out;
}

TransformConfig TransformConfig::identity() {
  TransformConfig cfg;
  cfg.scale = {1.0, 1.0};
  cfg.translate_x = {0.0, 0.0};
  cfg.translate_y = {0.0, 0.0};
  cfg.rotate = {0.0, 0.0};
  cfg.brightness = {0.0, 0.0};
  cfg.contrast = {1.0, 1.0};
  cfg.noise_amp = {0.0, 0.0};
  cfg.blur_probability = 0.0;
  cfg.mu = 0.0;
  cfg.env_brightness = {0.0, 0.0};
  return cfg;
}

void TransformConfig::validate() const {
  for (const Range& r : {scale, translate_x, translate_y, rotate, brightness, contrast, noise_amp,
                         env_brightness}) {
    if (!r.valid() || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
      throw std::invalid_argument("transform config: empty or non-finite range");
    }
  }
  if (scale.lo <= 0.0) throw std::invalid_argument("transform config: scale must be positive");
  if (noise_amp.lo < 0.0) throw std::invalid_argument("transform config: noise_amp must be >= 0");
  if (mu < 0.0) throw std::invalid_argument("transform config: mu must be >= 0");
  if (blur_probability < 0.0 || blur_probability > 1.0) {
    throw std::invalid_argument("transform config: blur_probability must be in [0,1]");
  }
  if (blur_size < 1 || blur_size % 2 == 0) {
    throw std::invalid_argument("transform config: blur_size must be odd and positive");
  }
}

TransformSample sample_transform(const TransformConfig& cfg, Rng& rng) {
  TransformSample s;
  s.scale = uniform_in(cfg.scale, rng);
  s.translate_x = uniform_in(cfg.translate_x, rng);
  s.translate_y = uniform_in(cfg.translate_y, rng);
  s.rotate = uniform_in(cfg.rotate, rng);
  s.brightness = uniform_in(cfg.brightness, rng);
  s.contrast = uniform_in(cfg.contrast, rng);
  s.noise_amp = uniform_in(cfg.noise_amp, rng);
  s.blur = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.blur_probability;
  s.noise_seed = rng();
  return s;
}

TransformSample sample_transform(const TransformConfig& cfg, std::uint64_t index) {
  Rng rng = make_rng(cfg.seed, {index});
  return sample_transform(cfg, rng);
}

double sample_env_brightness(const TransformConfig& cfg, Rng& rng) {
  return uniform_in(cfg.env_brightness, rng);
}

Image gaussian_noise(int width, int height, double mu, Rng& rng) {
  if (mu < 0.0) throw std::invalid_argument("gaussian_noise: mu must be >= 0");
  Image out(width, height);
  if (mu == 0.0) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out.data()) v = mu * normal(rng);
  return out;
}

Image uniform_noise(int width, int height, double amp, std::uint64_t seed) {
  Image out(width, height);
  if (amp == 0.0) return out;
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-amp, amp);
  for (double& v : out.data()) v = dist(rng);
  return out;
}

SampleMap geometric_map(int width, int height, const TransformSample& s) {
  SampleMap map{width, height, {}};
  map.source.reserve(static_cast<std::size_t>(width) * height);
  const double cx = 0.5 * (width - 1);
  const double cy = 0.5 * (height - 1);
  const double cs = std::cos(s.rotate);
  const double sn = std::sin(s.rotate);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      // Inverse of p_out = c + scale * R * (p_in - c) + t.
      const double dx = x - cx - s.translate_x;
      const double dy = y - cy - s.translate_y;
      map.source.push_back({cx + (cs * dx + sn * dy) / s.scale, cy + (-sn * dx + cs * dy) / s.scale});
    }
  }
  return map;
}

Image box_blur(const Image& img, int size) {
  const int r = size / 2;
  const int w = img.width();
  const int h = img.height();
  const double inv = 1.0 / size;
  Image horiz(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) acc += img.at(std::clamp(x + k, 0, w - 1), y, c);
        horiz.at(x, y, c) = acc * inv;
      }
    }
  }
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) acc += horiz.at(x, std::clamp(y + k, 0, h - 1), c);
        out.at(x, y, c) = acc * inv;
      }
    }
  }
  return out;
}

Image box_blur_adjoint(const Image& grad_out, int size) {
  const int r = size / 2;
  const int w = grad_out.width();
  const int h = grad_out.height();
  const double inv = 1.0 / size;
  Image vert(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        const double g = grad_out.at(x, y, c) * inv;
        for (int k = -r; k <= r; ++k) vert.at(x, std::clamp(y + k, 0, h - 1), c) += g;
      }
    }
  }
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        const double g = vert.at(x, y, c) * inv;
        for (int k = -r; k <= r; ++k) out.at(std::clamp(x + k, 0, w - 1), y, c) += g;
      }
    }
  }
  return out;
}

namespace {

// Everything in apply_conventional except the final clamp.
Image conventional_unclamped(const Image& img, const TransformSample& s, double fill,
                             int blur_size) {
  Image out = s.geometric_identity()
                  ? img
                  : resample(img, geometric_map(img.width(), img.height(), s), fill);
  if (s.contrast != 1.0) {
    for (double& v : out.data()) v = (v - 0.5) * s.contrast + 0.5;
  }
  if (s.brightness != 0.0) {
    for (double& v : out.data()) v += s.brightness;
  }
  if (s.noise_amp != 0.0) out += uniform_noise(out.width(), out.height(), s.noise_amp, s.noise_seed);
  if (s.blur) out = box_blur(out, blur_size);
  return out;
}

}  // namespace

Image apply_conventional(const Image& img, const TransformSample& s, double fill, int blur_size) {
  Image out = conventional_unclamped(img, s, fill, blur_size);
  out.clamp01();
  return out;
}

Image apply_conventional_vjp(const Image& img, const TransformSample& s, const Image& grad_out,
                             double fill, int blur_size) {
  const Image pre = conventional_unclamped(img, s, fill, blur_size);
  Image g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = pre.data()[i];
    if (v < 0.0 || v > 1.0) g.data()[i] = 0.0;
  }
  if (s.blur) g = box_blur_adjoint(g, blur_size);
  if (s.contrast != 1.0) g *= s.contrast;
  if (!s.geometric_identity()) {
    g = resample_adjoint(g, geometric_map(img.width(), img.height(), s), img.width(), img.height());
  }
  return g;
}

Image adjust_brightness(const Image& img, double delta) {
  Image out = img;
  if (delta != 0.0) {
    for (double& v : out.data()) v += delta;
  }
  out.clamp01();
  return out;
}

Image resize_bilinear(const Image& img, int out_width, int out_height) {
  SampleMap map{out_width, out_height, {}};
  map.source.reserve(static_cast<std::size_t>(out_width) * out_height);
  const double sx = static_cast<double>(img.width()) / out_width;
  const double sy = static_cast<double>(img.height()) / out_height;
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      map.source.push_back({std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0),
                            std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0)});
    }
  }
  return clamped(resample(img, map));
}

}  // namespace tpsadv
