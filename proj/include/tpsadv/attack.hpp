#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "tpsadv/color.hpp"
#include "tpsadv/detector.hpp"
#include "tpsadv/geometry.hpp"
#include "tpsadv/image.hpp"
#include "tpsadv/imaging.hpp"

namespace tpsadv {

/// One training or test frame.
struct Frame {
  Image image;
  BoxMask person_box;
  BoxMask cloth_box;
  /// Pool of cloth deformations, each fitted from cloth-local frame
  /// coordinates (source) to patch coordinates (target). Empty = identity.
  std::vector<TpsTransform> cloth_tps;
  /// Patch (anchor-frame cloth) coordinates -> frame pixel coordinates.
  std::optional<PerspectiveTransform> align;
  /// Second, unpatched person used by the evaluation harness.
  std::optional<BoxMask> control_box;

  /// Throws std::invalid_argument unless cloth ⊆ person ⊆ image.
  void validate() const;
};

/// The universal perturbation; values live in [0,1].
struct Patch {
  Image data;

  Patch() = default;
  explicit Patch(Image img) : data(clamped(std::move(img))) {}
  int width() const { return data.width(); }
  int height() const { return data.height(); }
};

/// Cloth pixels replaced by the patch; everything else untouched.
Image compose_plain(const Frame& frame, const Patch& patch);

/// Full physical composition:
///   env( A + t( B - C + color( M_c * tps(patch + noise) ) ) )
/// `noise` has the patch dims. `tps` maps cloth-local coordinates to patch
/// coordinates; pass TpsTransform::identity() for no deformation.
Image compose_robust(const Frame& frame, const Patch& patch, const TransformSample& sample,
                     const TpsTransform& tps, const Image& noise, const ColorModel& color,
                     double env_brightness, double fill = 0.0, int blur_size = 5);

/// compose_robust without a patch: the frame's own cloth is kept and only
/// the conventional and environmental transforms are applied.
Image compose_unpatched(const Frame& frame, const TransformSample& sample, double env_brightness,
                        double fill = 0.0, int blur_size = 5);

struct AttackProblem {
  std::vector<Frame> frames;
  std::vector<DetectorPtr> detectors;
  AttackLossConfig loss_cfg;
  TransformConfig transform_cfg;
  ColorModel color_model = ColorModel::identity();
  double lambda = 3.0;  // total-variation weight
  double gamma = 1.0;   // min-max regularizer
  int eot_samples = 1;  // transform draws per frame per evaluation

  void validate() const;
};

/// Random ingredients of one composed training image.
struct EotDraw {
  TransformSample sample;
  std::size_t tps_index = 0;  // into Frame::cloth_tps (ignored when empty)
  Image noise;
  double env_brightness = 0.0;
};

/// Draw for (frame, sample) of the evaluation seeded by `seed`; independent of
/// the detector and of the order in which frames are processed.
EotDraw draw_eot(const AttackProblem& problem, std::size_t frame_index, int sample_index,
                 std::uint64_t seed, int patch_width, int patch_height);

/// Monte-Carlo EoT evaluation with warp tables cached per frame.
class EotEvaluator {
 public:
  EotEvaluator(const AttackProblem& problem, int patch_width, int patch_height, int threads = 1);

  struct Result {
    /// Per requested detector: mean attack loss over frames x samples (no TV term).
    std::vector<double> loss;
    /// Per requested detector: gradient of `loss` w.r.t. the patch (empty unless requested).
    std::vector<Image> grad;
  };

  Result evaluate(const Image& patch, std::uint64_t seed, const std::vector<std::size_t>& detectors,
                  bool want_grad) const;

  /// The composed image for one draw (same path as evaluate).
  Image render(std::size_t frame_index, const Image& patch, const EotDraw& draw) const;

  const AttackProblem& problem() const { return problem_; }

 private:
  const SampleMap& warp_map(std::size_t frame_index, std::size_t tps_index) const;

  const AttackProblem& problem_;
  int patch_width_;
  int patch_height_;
  int threads_;
  std::vector<std::vector<SampleMap>> maps_;
};

/// (1/(M*S)) sum_i sum_k f(x'_ik) + lambda * tv(patch) for one detector.
double eot_objective(const AttackProblem& problem, const Patch& patch, std::size_t detector_index,
                     std::uint64_t seed);

enum class GradBackend { Analytic, Smoothed };

struct SmoothingConfig {
  double sigma = 0.01;
  int samples = 20;  // K directions per estimate
};

/// Zero the components where the patch sits on a bound and descent would push outward.
void project_gradient_to_box(const Image& patch, Image& grad);

/// Gradient of eot_objective. Analytic: exact chain rule through the
/// composition (requires detector gradients). Smoothed: two-point Gaussian
/// estimate of the detector term plus the exact TV gradient.
Image grad_patch(const AttackProblem& problem, const Patch& patch, std::size_t detector_index,
                 std::uint64_t seed, GradBackend backend = GradBackend::Analytic,
                 const SmoothingConfig& smoothing = {});

/// Euclidean projection onto {w : sum w = 1, w >= 0}.
std::vector<double> project_simplex(const std::vector<double>& v);

struct EnsembleWeights {
  std::vector<double> w;
  static EnsembleWeights uniform(std::size_t n);
};

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Learning rate is multiplied by decay_factor after `decay_patience`
  /// steps without a new best smoothed loss (moving average over `smoothing_window`).
  int decay_patience = 200;
  int smoothing_window = 50;
  double decay_factor = 0.5;
};

struct OptimizerState {
  AdamConfig adam;
  std::uint64_t seed = 0;
  GradBackend backend = GradBackend::Analytic;
  SmoothingConfig smoothing;
  double ascent_step = 0.01;  // rho, step size for the domain weights
  int threads = 1;

  // Mutable optimizer state.
  Image m;
  Image v;
  long step = 0;
  double lr = -1.0;  // < 0 until first use, then adam.learning_rate
  std::deque<double> recent;
  double best_smoothed = 0.0;
  bool has_best = false;
  int since_best = 0;

  void reset();
};

struct StepRecord {
  long step = 0;
  std::vector<double> detector_loss;  // attack-loss term per detector
  double tv = 0.0;
  double objective = 0.0;
  std::vector<double> weights;  // domain weights after the step (min-max only)
  double learning_rate = 0.0;
};

struct SingleResult {
  Patch patch;
  std::vector<StepRecord> trace;
};

struct MinmaxResult {
  Patch patch;
  EnsembleWeights weights;
  std::vector<StepRecord> trace;
};

/// Optional hook invoked after every step with the current patch.
using StepCallback = std::function<void(long step, const Patch& patch)>;

SingleResult optimize_single(const AttackProblem& problem, std::size_t detector_index, int steps,
                             OptimizerState& state, const Patch& init,
                             const StepCallback& callback = {});

MinmaxResult optimize_minmax(const AttackProblem& problem, int steps, OptimizerState& state,
                             const Patch& init, const StepCallback& callback = {});

}  // namespace tpsadv
