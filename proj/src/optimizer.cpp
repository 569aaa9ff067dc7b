#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "compose_internal.hpp"
#include "tpsadv/attack.hpp"
#include "tpsadv/rng.hpp"

namespace tpsadv {

std::vector<double> project_simplex(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("project_simplex: empty vector");
  for (const double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("project_simplex: non-finite input");
  }
  if (v.size() == 1) return {1.0};
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::max(v[i] - theta, 0.0);
  return w;
}

EnsembleWeights EnsembleWeights::uniform(std::size_t n) {
  if (n == 0) throw std::invalid_argument("ensemble weights: n must be >= 1");
  return {std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

void OptimizerState::reset() {
  m = Image();
  v = Image();
  step = 0;
  lr = -1.0;
  recent.clear();
  best_smoothed = 0.0;
  has_best = false;
  since_best = 0;
}

namespace {

void check_state(const OptimizerState& st) {
  const AdamConfig& a = st.adam;
  if (!(a.learning_rate > 0.0) || !(a.beta1 >= 0.0 && a.beta1 < 1.0) ||
      !(a.beta2 >= 0.0 && a.beta2 < 1.0) || !(a.epsilon > 0.0) || a.smoothing_window < 1 ||
      a.decay_patience < 1 || !(a.decay_factor > 0.0 && a.decay_factor <= 1.0)) {
    throw std::invalid_argument("optimizer: invalid Adam configuration");
  }
  if (!(st.ascent_step > 0.0)) throw std::invalid_argument("optimizer: ascent step must be > 0");
}

void adam_update(OptimizerState& st, Image& patch, const Image& grad) {
  if (!st.m.same_shape(patch)) {
    st.m = Image(patch.width(), patch.height());
    st.v = Image(patch.width(), patch.height());
  }
  if (st.lr < 0.0) st.lr = st.adam.learning_rate;
  const AdamConfig& a = st.adam;
  const double t = static_cast<double>(st.step + 1);
  const double bc1 = 1.0 - std::pow(a.beta1, t);
  const double bc2 = 1.0 - std::pow(a.beta2, t);
  for (std::size_t i = 0; i < patch.size(); ++i) {
    const double g = grad.data()[i];
    double& m = st.m.data()[i];
    double& v = st.v.data()[i];
    m = a.beta1 * m + (1.0 - a.beta1) * g;
    v = a.beta2 * v + (1.0 - a.beta2) * g * g;
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    patch.data()[i] -= st.lr * mhat / (std::sqrt(vhat) + a.epsilon);
  }
  patch.clamp01();
}

// Plateau schedule on the moving average of the objective.
void update_schedule(OptimizerState& st, double objective) {
  const AdamConfig& a = st.adam;
  st.recent.push_back(objective);
  while (static_cast<int>(st.recent.size()) > a.smoothing_window) st.recent.pop_front();
  if (static_cast<int>(st.recent.size()) < a.smoothing_window) return;
  const double smoothed =
      std::accumulate(st.recent.begin(), st.recent.end(), 0.0) / static_cast<double>(st.recent.size());
  if (!st.has_best || smoothed < st.best_smoothed) {
    st.best_smoothed = smoothed;
    st.has_best = true;
    st.since_best = 0;
    return;
  }
  if (++st.since_best >= a.decay_patience) {
    st.lr *= a.decay_factor;
    st.since_best = 0;
  }
}

// One alternating step. With `ascend` false the weights are left untouched
// (single-detector mode passes w = {1}).
StepRecord run_step(const AttackProblem& problem, const EotEvaluator& eval,
                    const std::vector<std::size_t>& detectors, std::vector<double>& w, bool ascend,
                    OptimizerState& st, Image& patch) {
  const std::uint64_t seed = substream_seed(st.seed, {static_cast<std::uint64_t>(st.step)});
  std::vector<double> losses;
  std::vector<Image> grads;
  if (st.backend == GradBackend::Analytic) {
    auto r = eval.evaluate(patch, seed, detectors, true);
    losses = std::move(r.loss);
    grads = std::move(r.grad);
  } else {
    losses = eval.evaluate(patch, seed, detectors, false).loss;
    grads = detail::smoothed_gradients(eval, patch, seed, detectors, st.smoothing);
  }
  const double tv = tv_norm(patch);

  if (ascend) {
    // Proximal form of w + rho*(phi - gamma*(w - 1/N)); stable for any gamma.
    const double n = static_cast<double>(w.size());
    const double rho = st.ascent_step;
    const double denom = 1.0 + rho * problem.gamma;
    std::vector<double> z(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double phi = losses[i] + problem.lambda * tv;
      z[i] = (w[i] + rho * phi + rho * problem.gamma / n) / denom;
    }
    w = project_simplex(z);
  }

  Image g(patch.width(), patch.height());
  double weighted = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    weighted += w[i] * losses[i];
    if (w[i] == 0.0) continue;
    for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] += w[i] * grads[i].data()[k];
  }
  if (problem.lambda != 0.0) {
    const Image tvg = tv_norm_grad(patch);
    for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] += problem.lambda * tvg.data()[k];
  }
  project_gradient_to_box(patch, g);
  adam_update(st, patch, g);

  StepRecord rec;
  rec.step = st.step;
  rec.detector_loss = losses;
  rec.tv = tv;
  rec.objective = weighted + problem.lambda * tv;
  if (ascend) rec.weights = w;
  update_schedule(st, rec.objective);
  rec.learning_rate = st.lr;
  ++st.step;
  return rec;
}

}  // namespace

SingleResult optimize_single(const AttackProblem& problem, std::size_t detector_index, int steps,
                             OptimizerState& state, const Patch& init,
                             const StepCallback& callback) {
  check_state(state);
  if (steps < 0) throw std::invalid_argument("optimize_single: steps must be >= 0");
  if (detector_index >= problem.detectors.size()) {
    throw std::out_of_range("optimize_single: detector index out of range");
  }
  if (state.backend == GradBackend::Analytic && !problem.detectors[detector_index]->has_gradient()) {
    throw std::logic_error("detector '" + problem.detectors[detector_index]->name() +
                           "' has no analytic gradient; use the smoothed backend");
  }
  const EotEvaluator eval(problem, init.width(), init.height(), state.threads);
  SingleResult res;
  Image patch = init.data;
  std::vector<double> w{1.0};
  for (int s = 0; s < steps; ++s) {
    res.trace.push_back(run_step(problem, eval, {detector_index}, w, false, state, patch));
    if (callback) callback(state.step, Patch(patch));
  }
  res.patch = Patch(std::move(patch));
  return res;
}

MinmaxResult optimize_minmax(const AttackProblem& problem, int steps, OptimizerState& state,
                             const Patch& init, const StepCallback& callback) {
  check_state(state);
  if (steps < 0) throw std::invalid_argument("optimize_minmax: steps must be >= 0");
  if (state.backend == GradBackend::Analytic) {
    for (const auto& d : problem.detectors) {
      if (d && !d->has_gradient()) {
        throw std::logic_error("detector '" + d->name() +
                               "' has no analytic gradient; use the smoothed backend");
      }
    }
  }
  const EotEvaluator eval(problem, init.width(), init.height(), state.threads);
  std::vector<std::size_t> all(problem.detectors.size());
  std::iota(all.begin(), all.end(), 0);
  MinmaxResult res;
  res.weights = EnsembleWeights::uniform(all.size());
  Image patch = init.data;
  for (int s = 0; s < steps; ++s) {
    res.trace.push_back(run_step(problem, eval, all, res.weights.w, true, state, patch));
    if (callback) callback(state.step, Patch(patch));
  }
  res.patch = Patch(std::move(patch));
  return res;
}

}  // namespace tpsadv
