#pragma once

#include <cstdint>
#include <vector>

#include "tpsadv/geometry.hpp"
#include "tpsadv/image.hpp"
#include "tpsadv/rng.hpp"

namespace tpsadv {

/// Backward-warping table: for each output pixel (row-major), the source
/// location it samples from.
struct SampleMap {
  int width = 0;
  int height = 0;
  std::vector<Point2> source;
};

/// Bilinear interpolation; locations outside [0,w-1] x [0,h-1] return `fill`.
Rgb bilinear_sample(const Image& img, const Point2& p, double fill = 0.0);

/// Output pixel q takes bilinear_sample(src, map.source[q]). No clamping.
Image resample(const Image& src, const SampleMap& map, double fill = 0.0);

/// Adjoint of resample with respect to the source pixels (the fill term is constant).
Image resample_adjoint(const Image& grad_out, const SampleMap& map, int src_width,
                       int src_height);

/// Map q -> q + tps_displace(t, q) over an out_width x out_height grid.
SampleMap tps_sample_map(const TpsTransform& t, int out_width, int out_height);

/// Backward TPS warp: `t` must be fitted from output-frame points (source)
/// to input-frame points (target). Output is clamped to [0,1].
Image warp_tps(const Image& img, const TpsTransform& t, int out_width, int out_height,
               double fill = 0.0);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool valid() const { return lo <= hi; }
};

/// One draw of the conventional physical transformation family.
struct TransformSample {
  double scale = 1.0;
  double translate_x = 0.0;  // pixels
  double translate_y = 0.0;  // pixels
  double rotate = 0.0;       // radians, about the region centre
  double brightness = 0.0;
  double contrast = 1.0;
  /// Per-pixel noise is uniform in [-noise_amp, noise_amp].
  double noise_amp = 0.0;
  bool blur = false;
  std::uint64_t noise_seed = 0;

  static TransformSample identity() { return {}; }
  bool geometric_identity() const {
    return scale == 1.0 && translate_x == 0.0 && translate_y == 0.0 && rotate == 0.0;
  }
};

struct TransformConfig {
  Range scale{0.5, 2.0};
  Range translate_x{-2.0, 2.0};
  Range translate_y{-2.0, 2.0};
  Range rotate{-0.17453292519943295, 0.17453292519943295};  // +-10 degrees
  Range brightness{-0.1, 0.1};
  Range contrast{0.8, 1.2};
  Range noise_amp{0.0, 0.1};
  double blur_probability = 0.5;
  int blur_size = 5;
  /// Amplitude of the additive Gaussian smoothing noise on the patch.
  double mu = 0.03;
  Range env_brightness{-0.1, 0.1};
  double fill = 0.0;
  std::uint64_t seed = 0;

  /// Every range collapsed to its identity value, mu = 0, no blur.
  static TransformConfig identity();
  void validate() const;
};

TransformSample sample_transform(const TransformConfig& cfg, Rng& rng);
/// Draw number `index` of the stream seeded by cfg.seed.
TransformSample sample_transform(const TransformConfig& cfg, std::uint64_t index);

double sample_env_brightness(const TransformConfig& cfg, Rng& rng);

/// Image-shaped field of mu * v, v ~ N(0,1) i.i.d.
Image gaussian_noise(int width, int height, double mu, Rng& rng);

/// Per-pixel uniform noise in [-amp, amp] drawn from a stream seeded by `seed`.
Image uniform_noise(int width, int height, double amp, std::uint64_t seed);

/// Geometric part of a transform sample as a sampling table about the image centre.
SampleMap geometric_map(int width, int height, const TransformSample& s);

/// size x size mean filter, stride 1, edge-replicated borders.
Image box_blur(const Image& img, int size);
Image box_blur_adjoint(const Image& grad_out, int size);

/// Geometric -> contrast (pivot 0.5) -> brightness -> uniform noise -> blur -> clamp.
Image apply_conventional(const Image& img, const TransformSample& s, double fill = 0.0,
                         int blur_size = 5);

/// Vector-Jacobian product of apply_conventional evaluated at `img`.
Image apply_conventional_vjp(const Image& img, const TransformSample& s, const Image& grad_out,
                             double fill = 0.0, int blur_size = 5);

/// Adds `delta` to every value and clamps.
Image adjust_brightness(const Image& img, double delta);

/// Bilinear resize to the given dims (pixel-centre aligned).
Image resize_bilinear(const Image& img, int out_width, int out_height);

}  // namespace tpsadv
