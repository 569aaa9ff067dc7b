#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tpsadv/attack.hpp"

namespace tpsadv {

enum class DeformationMode { None, Affine, Tps };

std::string to_string(DeformationMode mode);
DeformationMode parse_deformation_mode(const std::string& s);

/// Synthetic scene: a textured person walking across a static background,
/// wearing a checkerboard shirt that deforms from frame to frame.
struct SceneSpec {
  int width = 64;
  int height = 64;
  int person_width = 40;
  int person_height = 56;
  /// Top-left corner of the person box; frame i sits at
  /// start + (end - start) * (i + phase) / n_frames, rounded.
  Point2 start{6.0, 2.0};
  Point2 end{18.0, 6.0};
  double phase = 0.0;
  /// Cloth box as fractions of the person box.
  double cloth_left = 0.1;
  double cloth_top = 1.0 / 7.0;
  double cloth_right = 0.9;
  double cloth_bottom = 5.0 / 7.0;
  int checker_cell = 4;  // pixels
  /// Random grain on the rest of the body (blocks of texture_cell pixels).
  double texture_amp = 0.25;
  int texture_cell = 4;
  std::uint64_t appearance_seed = 0;
  DeformationMode mode = DeformationMode::Tps;
  GridDims grid{8, 16};
  double magnitude = 4.0;  // per-node displacement std, pixels
  double smoothing = 1.0;  // Gaussian low-pass over the grid, in nodes
  /// Share of the displacement variance common to every frame (the shirt's
  /// own folds, fixed by shirt_seed); the rest is redrawn per frame from seed.
  double persistence = 0.8;
  std::uint64_t shirt_seed = 0;
  /// Deformations stored per frame; the first one shapes the frame itself.
  int pool_size = 1;
  std::uint64_t background_seed = 0;
  std::uint64_t seed = 0;
  bool include_control_person = false;
  Point2 control_position{0.0, 0.0};  // top-left of the control person

  void validate() const;
  BoxMask cloth_in_person() const;
};

struct Scene {
  std::vector<Frame> frames;
  /// Ground truth for frames[i].cloth_tps[0]: cloth-local frame points and the
  /// rest (patch) points they came from.
  std::vector<ControlPointSet> frame_points;
  std::vector<ControlPointSet> rest_points;
};

/// Undeformed person (person-box sized).
Image person_appearance(const SceneSpec& spec);
/// Undeformed checkerboard cloth; also the natural initial patch.
Image rest_cloth(const SceneSpec& spec);
/// Smooth random background for the whole frame.
Image scene_background(const SceneSpec& spec);

/// Smoothed node displacements (row-major, spec.grid nodes), i.i.d. normal
/// with std spec.magnitude per node before and after smoothing.
std::vector<Point2> random_displacements(const SceneSpec& spec, Rng& rng);

/// Displacements of deformation `pool_index` of frame `frame`: the shared fold
/// field plus the per-frame part, reduced to its affine part in affine mode and
/// zero in none mode.
std::vector<Point2> frame_displacements(const SceneSpec& spec, int frame, int pool_index);

Scene generate_scene(const SceneSpec& spec, int n_frames);

struct ReferenceDetectorConfig {
  int template_width = 20;
  int template_height = 28;
  double cloth_mean = 0.0;  // template mean over the cloth area
  double cloth_amp = 0.8;   // amplitude of the signed cell pattern there
  int cell = 2;             // cell size of that pattern, template pixels
  int high_pass = 3;       // body part keeps appearance minus its high_pass box mean
  double body_gain = 5.0;
  int stride = 1;
  double p_unpatched = 0.99;   // calibrated score of the rest person
  double logit_gap = 20.0;     // rest person vs. the best shirt for an aligned template
  std::uint64_t seed = 0;
};

Image reference_template(const SceneSpec& spec, const ReferenceDetectorConfig& cfg);
MeanTemplateDetector reference_detector(const SceneSpec& spec, const ReferenceDetectorConfig& cfg);

/// Physical transforms used by the harness (milder than TransformConfig's defaults).
TransformConfig harness_transforms();

constexpr double kOperatingThreshold = 0.7;

struct FrameOutcome {
  bool adv_detected = false;
  bool control_detected = true;  // true when the frame has no control person
  double adv_score = 0.0;        // best overlapping probability (-inf if none)
  std::optional<double> control_score;
};

struct EvalReport {
  double asr = 0.0;
  double threshold = kOperatingThreshold;
  std::vector<FrameOutcome> outcomes;
};

struct EvalSettings {
  TransformConfig transforms = harness_transforms();
  ColorModel color = ColorModel::identity();
  std::uint64_t seed = 0;
  int threads = 1;
};

/// One transform draw per frame. Without a patch the frames are scored as
/// captured (own cloth). Success: the adversarial person is not detected and
/// the control person, if any, is.
EvalReport evaluate_asr(const std::vector<Frame>& frames, const std::optional<Patch>& patch,
                        const Detector& detector, double threshold, const EvalSettings& settings);

struct SweepRow {
  double threshold = 0.0;
  double normal_accuracy = 0.0;  // unpatched person detected, same draws
  double asr = 0.0;
  bool operating_point = false;
};

std::vector<double> default_thresholds();

std::vector<SweepRow> threshold_sweep(const std::vector<Frame>& frames,
                                      const std::optional<Patch>& patch, const Detector& detector,
                                      const std::vector<double>& thresholds,
                                      const EvalSettings& settings);

struct TrainSettings {
  int steps = 2000;
  double lambda = 1e-5;
  AdamConfig adam;
  GradBackend backend = GradBackend::Analytic;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Single-detector attack on `frames` starting from the rest cloth.
SingleResult train_patch(const std::vector<Frame>& frames, const DetectorPtr& detector,
                         const Patch& init, const TransformConfig& transforms,
                         const TrainSettings& settings, const StepCallback& callback = {});

/// Training budget used by run_ablation (600 steps per cell).
TrainSettings ablation_train_settings();

struct AblationConfig {
  SceneSpec scene;  // mode is overridden per cell
  ReferenceDetectorConfig detector;
  TransformConfig transforms = harness_transforms();
  int train_frames = 20;
  int test_frames = 20;
  TrainSettings train = ablation_train_settings();
  int curve_every = 50;
  double threshold = kOperatingThreshold;
  std::uint64_t seed = 0;
};

struct CurvePoint {
  DeformationMode train = DeformationMode::Tps;
  DeformationMode test = DeformationMode::Tps;
  long step = 0;
  double asr = 0.0;
};

struct AblationCell {
  DeformationMode train = DeformationMode::Tps;
  DeformationMode test = DeformationMode::Tps;
  EvalReport report;
};

struct AblationResult {
  std::vector<AblationCell> grid;       // train x test, affine before tps
  std::vector<AblationCell> unpatched;  // per test mode
  std::vector<CurvePoint> curves;

  double asr(DeformationMode train, DeformationMode test) const;
};

AblationResult run_ablation(const AblationConfig& cfg);

struct EfficacyResult {
  EvalReport unpatched;  // held-out frames with their own cloth
  EvalReport patched;    // held-out frames wearing the trained patch
  SingleResult training;
};

/// Trains on cfg.scene (its own mode) for cfg.train.steps and evaluates on
/// held-out frames of the same shirt, seeded like run_ablation.
EfficacyResult run_efficacy(const AblationConfig& cfg);

std::string ablation_grid_csv(const AblationResult& r);
std::string ablation_curves_csv(const AblationResult& r);

}  // namespace tpsadv
