#pragma once

#include <functional>

#include "tpsadv/attack.hpp"

namespace tpsadv::detail {

// Intermediates of one forward composition needed by the backward pass.
struct RenderTrace {
  Image patch_plus_noise;  // before the clamp
  Image warped;            // cloth-box sized, before colour mapping
  Image region_in;         // person region before the conventional transform
  Image before_env;
  Image output;
  double env_brightness = 0.0;
};

RenderTrace render_forward(const Frame& frame, const Image& patch, const Image& noise,
                           const TransformSample& sample, const SampleMap& warp,
                           const ColorModel& color, double env_brightness, double fill,
                           int blur_size);

// Gradient w.r.t. the patch given the gradient w.r.t. the composed output.
Image render_backward(const Frame& frame, const RenderTrace& tr, const Image& grad_output,
                      const TransformSample& sample, const SampleMap& warp,
                      const ColorModel& color, double fill, int blur_size);

// Two-point Gaussian-smoothing estimates of the detector terms (no TV).
std::vector<Image> smoothed_gradients(const EotEvaluator& eval, const Image& patch,
                                      std::uint64_t seed, const std::vector<std::size_t>& detectors,
                                      const SmoothingConfig& cfg);

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace tpsadv::detail
