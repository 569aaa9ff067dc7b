#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tpsadv/attack.hpp"
#include "tpsadv/harness.hpp"
#include "tpsadv/rng.hpp"

namespace testsupport {

using namespace tpsadv;

/// Same probability on every anchor, zero gradient.
class ConstantDetector final : public Detector {
 public:
  ConstantDetector(std::vector<BoxMask> anchors, double p) : anchors_(std::move(anchors)), p_(p) {}
  std::vector<Detection> detect(const Image&) const override {
    std::vector<Detection> out;
    for (const auto& a : anchors_) out.push_back({a, p_});
    return out;
  }
  bool has_gradient() const override { return true; }
  Image grad_person_prob(const Image& img, std::size_t) const override {
    return Image(img.width(), img.height());
  }
  std::string name() const override { return "constant"; }

 private:
  std::vector<BoxMask> anchors_;
  double p_;
};

/// No detections at all.
class EmptyDetector final : public Detector {
 public:
  std::vector<Detection> detect(const Image&) const override { return {}; }
  std::string name() const override { return "empty"; }
};

inline Image random_image(int w, int h, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(w, h);
  for (double& v : img.data()) v = u(rng);
  return img;
}

/// Random smooth-ish TPS on an 8x8 cloth: 4x4 grid, displacements up to `amp` px.
inline TpsTransform random_cloth_tps(int w, int h, double amp, Rng& rng) {
  const ControlPointSet src = make_grid(4, 4, 0.0, 0.0, w - 1.0, h - 1.0);
  ControlPointSet dst = src;
  std::uniform_real_distribution<double> u(-amp, amp);
  for (auto& p : dst.points) p = p + Point2{u(rng), u(rng)};
  return fit_tps(src, dst);
}

/// 24x24 frames, 16x16 person, 8x8 cloth, random content and a random TPS pool.
inline std::vector<Frame> toy_frames(int n, std::uint64_t seed, int pool = 1) {
  Rng rng = make_rng(seed, {77});
  std::vector<Frame> frames;
  for (int i = 0; i < n; ++i) {
    Frame f;
    f.image = random_image(24, 24, rng);
    f.person_box = {4, 4, 20, 20};
    f.cloth_box = {8, 8, 16, 16};
    for (int k = 0; k < pool; ++k) f.cloth_tps.push_back(random_cloth_tps(8, 8, 1.0, rng));
    frames.push_back(std::move(f));
  }
  return frames;
}

inline std::vector<BoxMask> toy_anchors() { return anchor_grid(24, 24, 16, 16, 4, {1.0}); }

/// Linear detector whose probabilities sit comfortably above the loss floor.
inline DetectorPtr toy_linear_detector(std::uint64_t seed) {
  return std::make_shared<LinearDetector>(LinearDetector::from_seed(toy_anchors(), seed, 0.05, 0.8));
}

inline DetectorPtr toy_template_detector(std::uint64_t seed) {
  Rng rng = make_rng(seed, {91});
  Image templ = random_image(8, 8, rng, -1.0, 1.0);
  return std::make_shared<MeanTemplateDetector>(toy_anchors(), std::move(templ), 4.0, 0.0);
}

/// Moderate transforms that exercise every stage (blur always on).
inline TransformConfig toy_transforms(std::uint64_t seed) {
  TransformConfig c;
  c.scale = {0.9, 1.1};
  c.rotate = {-0.1, 0.1};
  c.brightness = {-0.05, 0.05};
  c.contrast = {0.9, 1.1};
  c.noise_amp = {0.0, 0.02};
  c.blur_probability = 1.0;
  c.blur_size = 3;
  c.mu = 0.02;
  c.env_brightness = {-0.05, 0.05};
  c.seed = seed;
  return c;
}

inline AttackProblem toy_problem(std::uint64_t seed, std::vector<DetectorPtr> dets, int n_frames = 3) {
  AttackProblem p;
  p.frames = toy_frames(n_frames, seed);
  p.detectors = std::move(dets);
  p.transform_cfg = toy_transforms(seed);
  p.lambda = 1e-3;
  p.eot_samples = 2;
  return p;
}

inline Patch toy_patch(std::uint64_t seed) {
  Rng rng = make_rng(seed, {5});
  return Patch(random_image(8, 8, rng, 0.2, 0.8));
}

/// Central differences of eot_objective over every patch entry.
inline Image finite_difference_grad(const AttackProblem& p, const Patch& patch, std::size_t det,
                                    std::uint64_t seed, double h) {
  Image g(patch.width(), patch.height());
  for (std::size_t i = 0; i < g.size(); ++i) {
    Patch plus = patch;
    Patch minus = patch;
    plus.data.data()[i] += h;
    minus.data.data()[i] -= h;
    g.data()[i] = (eot_objective(p, plus, det, seed) - eot_objective(p, minus, det, seed)) / (2.0 * h);
  }
  return g;
}

inline double cosine(const Image& a, const Image& b) {
  return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b));
}

/// Simplex projection oracle: bisection on the KKT threshold theta with
/// sum_i max(v_i - theta, 0) = 1.
inline std::vector<double> simplex_oracle(const std::vector<double>& v) {
  double lo = *std::min_element(v.begin(), v.end()) - 1.0;
  double hi = *std::max_element(v.begin(), v.end());
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double s = 0.0;
    for (const double x : v) s += std::max(x - mid, 0.0);
    (s > 1.0 ? lo : hi) = mid;
  }
  const double theta = 0.5 * (lo + hi);
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::max(v[i] - theta, 0.0);
  return w;
}

/// Brute-force matching oracle: for each source point in order, scan every
/// target point and take the closest unused one within eps (lowest index on ties).
inline std::vector<std::pair<std::size_t, std::size_t>> brute_force_matches(
    const ControlPointSet& src, const ControlPointSet& dst, const PerspectiveTransform& h, double eps) {
  std::vector<bool> used(dst.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Point2 q = apply_perspective(h, src.points[i]);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = dst.size();
    for (std::size_t j = 0; j < dst.size(); ++j) {
      if (used[j]) continue;
      const double d = std::hypot(q.x - dst.points[j].x, q.y - dst.points[j].y);
      if (d <= eps && d < best) {
        best = d;
        best_j = j;
      }
    }
    if (best_j < dst.size()) {
      used[best_j] = true;
      out.emplace_back(i, best_j);
    }
  }
  return out;
}

inline double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testsupport
