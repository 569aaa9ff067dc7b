#include <atomic>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "compose_internal.hpp"
#include "tpsadv/attack.hpp"

namespace tpsadv {

void Frame::validate() const {
  if (image.empty()) throw std::invalid_argument("frame: empty image");
  if (person_box.empty() || !image.bounds().contains(person_box)) {
    throw std::invalid_argument("frame: person box outside the image");
  }
  if (cloth_box.empty() || !person_box.contains(cloth_box)) {
    throw std::invalid_argument("frame: cloth box must lie inside the person box");
  }
  if (control_box && (control_box->empty() || !image.bounds().contains(*control_box))) {
    throw std::invalid_argument("frame: control box outside the image");
  }
}

Image compose_plain(const Frame& frame, const Patch& patch) {
  frame.validate();
  if (patch.width() != frame.cloth_box.width() || patch.height() != frame.cloth_box.height()) {
    throw std::invalid_argument("compose_plain: patch dims do not match the cloth box");
  }
  Image out = frame.image;
  out.paste(patch.data, frame.cloth_box);
  return out;
}

namespace detail {

RenderTrace render_forward(const Frame& frame, const Image& patch, const Image& noise,
                           const TransformSample& sample, const SampleMap& warp,
                           const ColorModel& color, double env_brightness, double fill,
                           int blur_size) {
  RenderTrace tr;
  tr.patch_plus_noise = patch;
  if (!noise.empty()) {
    if (!noise.same_shape(patch)) throw std::invalid_argument("compose: noise dims differ from patch");
    tr.patch_plus_noise += noise;
  }
  tr.warped = resample(clamped(tr.patch_plus_noise), warp, fill);
  tr.warped.clamp01();

  Image composed = frame.image;
  composed.paste(apply_color(color, tr.warped), frame.cloth_box);

  tr.region_in = composed.crop(frame.person_box);
  composed.paste(apply_conventional(tr.region_in, sample, fill, blur_size), frame.person_box);

  tr.env_brightness = env_brightness;
  tr.before_env = std::move(composed);
  tr.output = env_brightness == 0.0 ? tr.before_env : adjust_brightness(tr.before_env, env_brightness);
  return tr;
}

Image render_backward(const Frame& frame, const RenderTrace& tr, const Image& grad_output,
                      const TransformSample& sample, const SampleMap& warp,
                      const ColorModel& color, double fill, int blur_size) {
  Image g = grad_output;
  if (tr.env_brightness != 0.0) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = tr.before_env.data()[i] + tr.env_brightness;
      if (v < 0.0 || v > 1.0) g.data()[i] = 0.0;
    }
  }
  const Image g_region =
      apply_conventional_vjp(tr.region_in, sample, g.crop(frame.person_box), fill, blur_size);
  const BoxMask cloth_in_person{frame.cloth_box.left - frame.person_box.left,
                                frame.cloth_box.top - frame.person_box.top,
                                frame.cloth_box.right - frame.person_box.left,
                                frame.cloth_box.bottom - frame.person_box.top};
  const Image g_warped = apply_color_vjp(color, tr.warped, g_region.crop(cloth_in_person));
  Image g_patch = resample_adjoint(g_warped, warp, tr.patch_plus_noise.width(),
                                   tr.patch_plus_noise.height());
  for (std::size_t i = 0; i < g_patch.size(); ++i) {
    const double v = tr.patch_plus_noise.data()[i];
    if (v < 0.0 || v > 1.0) g_patch.data()[i] = 0.0;
  }
  return g_patch;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

Image compose_robust(const Frame& frame, const Patch& patch, const TransformSample& sample,
                     const TpsTransform& tps, const Image& noise, const ColorModel& color,
                     double env_brightness, double fill, int blur_size) {
  frame.validate();
  const BoxMask& cloth = frame.cloth_box;
  if (tps.num_points() == 0 && (patch.width() != cloth.width() || patch.height() != cloth.height())) {
    throw std::invalid_argument("compose_robust: patch dims do not match the cloth box");
  }
  const SampleMap warp = tps_sample_map(tps, cloth.width(), cloth.height());
  return detail::render_forward(frame, patch.data, noise, sample, warp, color, env_brightness, fill,
                                blur_size)
      .output;
}

Image compose_unpatched(const Frame& frame, const TransformSample& sample, double env_brightness,
                        double fill, int blur_size) {
  frame.validate();
  Image out = frame.image;
  out.paste(apply_conventional(out.crop(frame.person_box), sample, fill, blur_size),
            frame.person_box);
  return env_brightness == 0.0 ? out : adjust_brightness(out, env_brightness);
}

}  // namespace tpsadv
