#include <cmath>
#include <stdexcept>

#include "compose_internal.hpp"
#include "tpsadv/attack.hpp"
#include "tpsadv/rng.hpp"

namespace tpsadv {

void AttackProblem::validate() const {
  if (frames.empty()) throw std::invalid_argument("attack problem: need at least one frame");
  if (detectors.empty()) throw std::invalid_argument("attack problem: need at least one detector");
  for (const auto& d : detectors) {
    if (!d) throw std::invalid_argument("attack problem: null detector");
  }
  for (const auto& f : frames) f.validate();
  if (!(lambda >= 0.0)) throw std::invalid_argument("attack problem: lambda must be >= 0");
  if (!(gamma >= 0.0)) throw std::invalid_argument("attack problem: gamma must be >= 0");
  if (eot_samples < 1) throw std::invalid_argument("attack problem: eot_samples must be >= 1");
  loss_cfg.validate();
  transform_cfg.validate();
}

EotDraw draw_eot(const AttackProblem& problem, std::size_t frame_index, int sample_index,
                 std::uint64_t seed, int patch_width, int patch_height) {
  Rng rng = make_rng(seed, {frame_index, static_cast<std::uint64_t>(sample_index)});
  EotDraw draw;
  draw.sample = sample_transform(problem.transform_cfg, rng);
  const auto& pool = problem.frames.at(frame_index).cloth_tps;
  if (pool.size() > 1) {
    draw.tps_index = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
  }
  draw.noise = gaussian_noise(patch_width, patch_height, problem.transform_cfg.mu, rng);
  draw.env_brightness = sample_env_brightness(problem.transform_cfg, rng);
  return draw;
}

EotEvaluator::EotEvaluator(const AttackProblem& problem, int patch_width, int patch_height,
                           int threads)
    : problem_(problem), patch_width_(patch_width), patch_height_(patch_height), threads_(threads) {
  problem_.validate();
  maps_.resize(problem_.frames.size());
  detail::parallel_for(problem_.frames.size(), threads_, [&](std::size_t i) {
    const Frame& f = problem_.frames[i];
    const int cw = f.cloth_box.width();
    const int ch = f.cloth_box.height();
    if (f.cloth_tps.empty()) {
      if (cw != patch_width_ || ch != patch_height_) {
        throw std::invalid_argument("frame without TPS must have cloth box dims equal to the patch");
      }
      maps_[i].push_back(tps_sample_map(TpsTransform::identity(), cw, ch));
    } else {
      for (const auto& t : f.cloth_tps) maps_[i].push_back(tps_sample_map(t, cw, ch));
    }
  });
}

const SampleMap& EotEvaluator::warp_map(std::size_t frame_index, std::size_t tps_index) const {
  const auto& pool = maps_.at(frame_index);
  return pool.size() == 1 ? pool.front() : pool.at(tps_index);
}

Image EotEvaluator::render(std::size_t frame_index, const Image& patch, const EotDraw& draw) const {
  const Frame& frame = problem_.frames.at(frame_index);
  return detail::render_forward(frame, patch, draw.noise, draw.sample,
                                warp_map(frame_index, draw.tps_index), problem_.color_model,
                                draw.env_brightness, problem_.transform_cfg.fill,
                                problem_.transform_cfg.blur_size)
      .output;
}

EotEvaluator::Result EotEvaluator::evaluate(const Image& patch, std::uint64_t seed,
                                            const std::vector<std::size_t>& detectors,
                                            bool want_grad) const {
  if (patch.width() != patch_width_ || patch.height() != patch_height_) {
    throw std::invalid_argument("evaluator: patch dims changed");
  }
  for (const std::size_t d : detectors) {
    if (d >= problem_.detectors.size()) throw std::out_of_range("detector index out of range");
    if (want_grad && !problem_.detectors[d]->has_gradient()) {
      throw std::logic_error("detector '" + problem_.detectors[d]->name() +
                             "' has no analytic gradient; use the smoothed backend");
    }
  }
  const std::size_t nf = problem_.frames.size();
  const std::size_t nd = detectors.size();
  const auto& cfg = problem_.transform_cfg;

  // Per-frame partial sums, reduced in frame order below.
  std::vector<std::vector<double>> frame_loss(nf, std::vector<double>(nd, 0.0));
  std::vector<std::vector<Image>> frame_grad(nf);

  detail::parallel_for(nf, threads_, [&](std::size_t i) {
    const Frame& frame = problem_.frames[i];
    if (want_grad) frame_grad[i].assign(nd, Image(patch_width_, patch_height_));
    for (int k = 0; k < problem_.eot_samples; ++k) {
      const EotDraw draw = draw_eot(problem_, i, k, seed, patch_width_, patch_height_);
      const SampleMap& warp = warp_map(i, draw.tps_index);
      const detail::RenderTrace tr =
          detail::render_forward(frame, patch, draw.noise, draw.sample, warp, problem_.color_model,
                                 draw.env_brightness, cfg.fill, cfg.blur_size);
      for (std::size_t d = 0; d < nd; ++d) {
        const Detector& det = *problem_.detectors[detectors[d]];
        const auto dets = det.detect(tr.output);
        const AttackLossValue lv = attack_loss_detail(dets, frame.person_box, problem_.loss_cfg);
        frame_loss[i][d] += lv.value;
        if (want_grad && lv.active) {
          const Image g_out = det.grad_person_prob(tr.output, *lv.active);
          frame_grad[i][d] += detail::render_backward(frame, tr, g_out, draw.sample, warp,
                                                      problem_.color_model, cfg.fill,
                                                      cfg.blur_size);
        }
      }
    }
  });

  const double norm = 1.0 / (static_cast<double>(nf) * problem_.eot_samples);
  Result res;
  res.loss.assign(nd, 0.0);
  if (want_grad) res.grad.assign(nd, Image(patch_width_, patch_height_));
  for (std::size_t i = 0; i < nf; ++i) {
    for (std::size_t d = 0; d < nd; ++d) {
      res.loss[d] += frame_loss[i][d];
      if (want_grad) res.grad[d] += frame_grad[i][d];
    }
  }
  for (std::size_t d = 0; d < nd; ++d) {
    res.loss[d] *= norm;
    if (want_grad) res.grad[d] *= norm;
  }
  return res;
}

double eot_objective(const AttackProblem& problem, const Patch& patch, std::size_t detector_index,
                     std::uint64_t seed) {
  const EotEvaluator eval(problem, patch.width(), patch.height());
  const double loss = eval.evaluate(patch.data, seed, {detector_index}, false).loss.at(0);
  return loss + problem.lambda * tv_norm(patch.data);
}

void project_gradient_to_box(const Image& patch, Image& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double p = patch.data()[i];
    const double g = grad.data()[i];
    if ((p <= 0.0 && g > 0.0) || (p >= 1.0 && g < 0.0)) grad.data()[i] = 0.0;
  }
}

namespace detail {

// Two-point Gaussian-smoothing estimates of the detector terms, one per
// requested detector, sharing the same directions.
std::vector<Image> smoothed_gradients(const EotEvaluator& eval, const Image& patch,
                                      std::uint64_t seed, const std::vector<std::size_t>& detectors,
                                      const SmoothingConfig& cfg) {
  if (!(cfg.sigma > 0.0) || cfg.samples < 1) {
    throw std::invalid_argument("smoothing: sigma must be > 0 and samples >= 1");
  }
  std::vector<Image> grads(detectors.size(), Image(patch.width(), patch.height()));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < cfg.samples; ++k) {
    Rng rng = make_rng(seed, {0x5e5e5e5eULL, static_cast<std::uint64_t>(k)});
    Image u(patch.width(), patch.height());
    for (double& x : u.data()) x = normal(rng);
    Image plus = patch;
    Image minus = patch;
    for (std::size_t i = 0; i < u.size(); ++i) {
      plus.data()[i] += cfg.sigma * u.data()[i];
      minus.data()[i] -= cfg.sigma * u.data()[i];
    }
    const auto fp = eval.evaluate(plus, seed, detectors, false).loss;
    const auto fm = eval.evaluate(minus, seed, detectors, false).loss;
    for (std::size_t d = 0; d < detectors.size(); ++d) {
      const double diff = fp[d] - fm[d];
      if (diff == 0.0) continue;
      for (std::size_t i = 0; i < u.size(); ++i) grads[d].data()[i] += diff * u.data()[i];
    }
  }
  const double norm = 1.0 / (2.0 * cfg.sigma * cfg.samples);
  for (auto& g : grads) g *= norm;
  return grads;
}

}  // namespace detail

Image grad_patch(const AttackProblem& problem, const Patch& patch, std::size_t detector_index,
                 std::uint64_t seed, GradBackend backend, const SmoothingConfig& smoothing) {
  const EotEvaluator eval(problem, patch.width(), patch.height());
  Image g = backend == GradBackend::Analytic
                ? eval.evaluate(patch.data, seed, {detector_index}, true).grad.at(0)
                : detail::smoothed_gradients(eval, patch.data, seed, {detector_index}, smoothing).at(0);
  if (problem.lambda != 0.0) {
    const Image tv = tv_norm_grad(patch.data);
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += problem.lambda * tv.data()[i];
  }
  project_gradient_to_box(patch.data, g);
  return g;
}

}  // namespace tpsadv
