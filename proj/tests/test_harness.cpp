#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "tpsadv/io.hpp"

using namespace tpsadv;
using namespace testsupport;

namespace {

/// Probability equals the mean intensity of each anchor box.
class BrightnessDetector final : public Detector {
 public:
  explicit BrightnessDetector(std::vector<BoxMask> anchors) : anchors_(std::move(anchors)) {}
  std::vector<Detection> detect(const Image& img) const override {
    std::vector<Detection> out;
    for (const auto& a : anchors_) {
      const Image c = img.crop(a);
      out.push_back({a, std::accumulate(c.data().begin(), c.data().end(), 0.0) / static_cast<double>(c.size())});
    }
    return out;
  }
  std::string name() const override { return "brightness"; }

 private:
  std::vector<BoxMask> anchors_;
};

Frame flat_frame(double person, bool control) {
  Frame f;
  f.image = Image(40, 20, 0.0);
  f.person_box = {2, 2, 14, 18};
  f.cloth_box = {4, 4, 12, 12};
  f.image.paste(Image(12, 16, person), f.person_box);
  if (control) {
    f.control_box = BoxMask{24, 2, 36, 18};
    f.image.paste(Image(12, 16, 0.9), *f.control_box);
  }
  return f;
}

EvalSettings exact_settings() {
  EvalSettings s;
  s.transforms = TransformConfig::identity();
  return s;
}

}  // namespace

TEST_CASE("deformation mode names") {
  for (const auto m : {DeformationMode::None, DeformationMode::Affine, DeformationMode::Tps}) {
    CHECK(parse_deformation_mode(to_string(m)) == m);
  }
  CHECK_THROWS(parse_deformation_mode("bogus"));
}

TEST_CASE("scene spec validation") {
  SceneSpec s;
  CHECK_NOTHROW(s.validate());
  const BoxMask c = s.cloth_in_person();
  CHECK(c.width() == 32);
  CHECK(c.height() == 32);
  s.magnitude = -1.0;
  CHECK_THROWS(s.validate());
  SceneSpec off;
  off.cloth_right = 1.2;
  CHECK_THROWS(off.validate());
  SceneSpec big;
  big.end = {40.0, 6.0};
  CHECK_THROWS(big.validate());
}

TEST_CASE("generated scenes") {
  SceneSpec spec;
  spec.include_control_person = false;
  const Scene a = generate_scene(spec, 5);
  const Scene b = generate_scene(spec, 5);
  REQUIRE(a.frames.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.frames[i].image == b.frames[i].image);
    CHECK_NOTHROW(a.frames[i].validate());
    CHECK(within_unit_range(a.frames[i].image));
    CHECK(a.frames[i].cloth_box.width() == 32);
    CHECK(a.frames[i].cloth_tps.size() == 1);
  }
  CHECK(a.frames[0].person_box.left == 6);
  CHECK(a.frames[4].person_box.left > a.frames[0].person_box.left);
  CHECK_THROWS(generate_scene(spec, 0));

  SceneSpec other = spec;
  other.seed = 9;
  CHECK(!(generate_scene(other, 2).frames[0].image == a.frames[0].image));
}

TEST_CASE("generator closes the loop with the tps fit") {
  for (const auto mode : {DeformationMode::Tps, DeformationMode::Affine}) {
    SceneSpec spec;
    spec.mode = mode;
    spec.pool_size = 3;
    const Scene s = generate_scene(spec, 4);
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      const TpsTransform refit = fit_tps(s.frame_points[i], s.rest_points[i]);
      for (std::size_t k = 0; k < s.frame_points[i].size(); ++k) {
        const Point2 p = s.frame_points[i].points[k];
        const Point2 want = s.rest_points[i].points[k] - p;
        const Point2 got = tps_displace(refit, p);
        const Point2 stored = tps_displace(s.frames[i].cloth_tps[0], p);
        CHECK(std::abs(got.x - want.x) < 1e-6);
        CHECK(std::abs(got.y - want.y) < 1e-6);
        CHECK(std::abs(stored.x - want.x) < 1e-6);
        CHECK(std::abs(stored.y - want.y) < 1e-6);
      }
      CHECK(s.frames[i].cloth_tps.size() == 3);
    }
  }
}

TEST_CASE("zero magnitude gives identity deformations") {
  SceneSpec spec;
  spec.magnitude = 0.0;
  const Scene s = generate_scene(spec, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < s.frame_points[i].size(); ++k) {
      CHECK(s.frame_points[i].points[k] == s.rest_points[i].points[k]);
      const Point2 d = tps_displace(s.frames[i].cloth_tps[0], s.frame_points[i].points[k]);
      CHECK(std::abs(d.x) < 1e-9);
      CHECK(std::abs(d.y) < 1e-9);
    }
    const Image cloth = s.frames[i].image.crop(s.frames[i].cloth_box);
    CHECK(max_abs_difference(cloth, rest_cloth(spec)) < 1e-9);
  }
}

TEST_CASE("affine mode keeps only the affine part") {
  SceneSpec spec;
  spec.mode = DeformationMode::Affine;
  const Scene s = generate_scene(spec, 2);
  const TpsTransform& t = s.frames[1].cloth_tps[0];
  CHECK(t.theta_x.head(static_cast<Eigen::Index>(t.num_points())).cwiseAbs().maxCoeff() < 1e-8);
  spec.mode = DeformationMode::None;
  for (const auto& d : frame_displacements(spec, 0, 0)) CHECK(d == Point2{0, 0});
}

TEST_CASE("asr trivial cases") {
  const EmptyDetector empty;
  const std::vector<Frame> with_control = {flat_frame(0.2, true), flat_frame(0.3, true)};
  CHECK(evaluate_asr(with_control, std::nullopt, empty, 0.7, exact_settings()).asr == 0.0);

  const ConstantDetector always({{0, 0, 40, 20}, {2, 2, 14, 18}}, 1.0);
  CHECK(evaluate_asr(with_control, std::nullopt, always, 0.7, exact_settings()).asr == 0.0);

  // One dark person (missed) and one bright person (detected).
  const BrightnessDetector bright({{2, 2, 14, 18}, {24, 2, 36, 18}});
  const std::vector<Frame> two = {flat_frame(0.1, true), flat_frame(0.95, true)};
  const EvalReport r = evaluate_asr(two, std::nullopt, bright, 0.7, exact_settings());
  CHECK(r.asr == 0.5);
  REQUIRE(r.outcomes.size() == 2);
  CHECK(!r.outcomes[0].adv_detected);
  CHECK(r.outcomes[0].control_detected);
  CHECK(r.outcomes[1].adv_detected);

  // Without a control person condition (b) is skipped.
  const std::vector<Frame> alone = {flat_frame(0.1, false)};
  const EvalReport s = evaluate_asr(alone, std::nullopt, bright, 0.7, exact_settings());
  CHECK(s.asr == 1.0);
  CHECK(!s.outcomes[0].control_score.has_value());

  // A dark patch hides the person.
  const Patch dark(Image(8, 8, 0.0));
  const std::vector<Frame> lit = {flat_frame(0.75, false)};
  CHECK(evaluate_asr(lit, std::nullopt, bright, 0.7, exact_settings()).asr == 0.0);
  CHECK(evaluate_asr(lit, dark, bright, 0.7, exact_settings()).asr == 1.0);
}

TEST_CASE("threshold sweep edges and monotonicity") {
  const BrightnessDetector bright({{2, 2, 14, 18}, {24, 2, 36, 18}});
  const std::vector<Frame> frames = {flat_frame(0.2, true), flat_frame(0.5, true), flat_frame(0.8, true)};
  const auto rows = threshold_sweep(frames, std::nullopt, bright, {0.0, 0.3, 0.6, 0.7, 1.0 + 1e-9}, exact_settings());
  CHECK(rows.front().normal_accuracy == 1.0);
  CHECK(rows.back().normal_accuracy == 0.0);
  CHECK(rows.back().asr == 0.0);  // control person is missed too
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].normal_accuracy <= rows[i - 1].normal_accuracy);
  int marked = 0;
  for (const auto& r : rows) marked += r.operating_point ? 1 : 0;
  CHECK(marked == 1);
  CHECK(rows[3].operating_point);
  const auto grid = default_thresholds();
  REQUIRE(grid.size() == 9);
  CHECK(grid.front() == doctest::Approx(0.1));
  CHECK(grid.back() == doctest::Approx(0.9));
  CHECK_THROWS(threshold_sweep(frames, std::nullopt, bright, {}, exact_settings()));
}

TEST_CASE("evaluation is deterministic given the seed") {
  SceneSpec spec;
  const Scene s = generate_scene(spec, 4);
  const MeanTemplateDetector det = reference_detector(spec, {});
  EvalSettings a;
  a.seed = 5;
  EvalSettings b = a;
  b.threads = 2;
  const auto ra = evaluate_asr(s.frames, Patch(rest_cloth(spec)), det, 0.7, a);
  const auto rb = evaluate_asr(s.frames, Patch(rest_cloth(spec)), det, 0.7, b);
  CHECK(report_to_json(ra, {}) == report_to_json(rb, {}));
  CHECK(ra.asr >= 0.0);
  CHECK(ra.asr <= 1.0);
}

TEST_CASE("reference detector calibration") {
  SceneSpec spec;
  spec.magnitude = 0.0;
  const ReferenceDetectorConfig cfg;
  const MeanTemplateDetector det = reference_detector(spec, cfg);
  const Scene s = generate_scene(spec, 1);
  double best = 0.0;
  for (const auto& d : det.detect(s.frames[0].image)) {
    if (d.box == s.frames[0].person_box) best = d.person_prob;
  }
  CHECK(best == doctest::Approx(cfg.p_unpatched).epsilon(1e-6));
  CHECK(det.templ().width() == cfg.template_width);
}

TEST_CASE("ablation csv layout") {
  AblationConfig cfg;
  cfg.train_frames = 2;
  cfg.test_frames = 2;
  cfg.train.steps = 4;
  cfg.curve_every = 2;
  const AblationResult r = run_ablation(cfg);
  CHECK(r.grid.size() == 4);
  CHECK(r.unpatched.size() == 2);
  const std::string grid = ablation_grid_csv(r);
  CHECK(grid.rfind("train,test,asr,frames\nnone,affine,", 0) == 0);
  const std::string curves = ablation_curves_csv(r);
  CHECK(curves.rfind("train,test,step,asr\n", 0) == 0);
  // steps 0, 2, 4 for each of the four cells
  CHECK(std::count(curves.begin(), curves.end(), '\n') == 1 + 4 * 3);
  CHECK_THROWS(r.asr(DeformationMode::None, DeformationMode::Tps));
}

TEST_CASE("zero-step training leaves the rest cloth") {
  AblationConfig cfg;
  cfg.train.steps = 0;
  const EfficacyResult r = run_efficacy(cfg);
  CHECK(r.training.trace.empty());
  CHECK(r.unpatched.asr < 0.1);
  CHECK(r.patched.asr < 0.1);
}

TEST_CASE("frame directory round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "tpsadv_frames_test";
  std::filesystem::remove_all(dir);
  SceneSpec spec;
  spec.pool_size = 2;
  spec.include_control_person = false;
  const Scene s = generate_scene(spec, 3);
  write_frame_dir(s.frames, harness_transforms(), dir, false);
  const FrameSet back = read_frame_dir(dir);
  REQUIRE(back.frames.size() == 3);
  REQUIRE(back.transforms.has_value());
  CHECK(back.transforms->mu == harness_transforms().mu);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.frames[i].person_box == s.frames[i].person_box);
    CHECK(back.frames[i].cloth_box == s.frames[i].cloth_box);
    CHECK(max_abs_difference(back.frames[i].image, s.frames[i].image) < 1e-7);
    REQUIRE(back.frames[i].cloth_tps.size() == 2);
    for (const auto& p : s.frame_points[i].points) {
      const Point2 a = tps_displace(back.frames[i].cloth_tps[0], p);
      const Point2 b = tps_displace(s.frames[i].cloth_tps[0], p);
      CHECK(std::abs(a.x - b.x) < 1e-8);
      CHECK(std::abs(a.y - b.y) < 1e-8);
    }
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_frame_dir(dir), IoError);
}
