#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tpsadv/harness.hpp"
#include "tpsadv/io.hpp"

namespace fs = std::filesystem;
using namespace tpsadv;

namespace {

GradBackend parse_backend(const std::string& s) {
  if (s == "analytic") return GradBackend::Analytic;
  if (s == "smoothed") return GradBackend::Smoothed;
  throw CLI::ValidationError("--grad", "expected analytic or smoothed");
}

void write_patch(const Patch& p, const fs::path& out) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_image(p.data, out);
}

struct GenerateOpts {
  std::string spec;
  int frames = 20;
  std::string out;
  bool png = true;
};

int cmd_generate(const GenerateOpts& o) {
  SceneSpec spec = o.spec.empty() ? SceneSpec{} : read_scene_spec(o.spec);
  const Scene scene = generate_scene(spec, o.frames);
  const fs::path dir = o.out;
  write_frame_dir(scene.frames, harness_transforms(), dir, o.png);
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    char name[48];
    std::snprintf(name, sizeof name, "truth_%04zu", i);
    write_control_points(scene.frame_points[i], dir / (std::string(name) + ".frame.json"));
    write_control_points(scene.rest_points[i], dir / (std::string(name) + ".rest.json"));
  }
  const MeanTemplateDetector det = reference_detector(spec, ReferenceDetectorConfig{});
  write_mean_template_spec(det, dir / "detector.json", dir / "template.pf32");
  write_image(rest_cloth(spec), dir / "rest_cloth.pf32");
  write_text(scene_spec_to_json(spec) + "\n", dir / "scene.json");
  std::cout << "wrote " << scene.frames.size() << " frames to " << dir.string() << "\n";
  return 0;
}

int cmd_fit_color(const std::string& pairs, const std::string& out) {
  const ColorModel m = fit_color(read_palette_csv(pairs));
  write_color_model(m, out);
  std::cout << "train rmse " << m.train_rmse << "\n";
  return 0;
}

struct AttackOpts {
  std::string frames;
  std::vector<std::string> detectors;
  std::string color;
  std::string transforms;
  std::string init;
  double lambda = 1e-5;
  double gamma = 1.0;
  int steps = 2000;
  std::string mode = "single";
  std::string grad = "analytic";
  int samples = 20;
  double lr = 1e-2;
  std::uint64_t seed = 0;
  std::string out = "patch.pf32";
  std::string trace;
  bool deterministic = false;
  int threads = 1;
};

int cmd_attack(const AttackOpts& o) {
  FrameSet fs_in = read_frame_dir(o.frames);
  AttackProblem problem;
  problem.frames = std::move(fs_in.frames);
  for (const auto& d : o.detectors) problem.detectors.push_back(read_detector(d));
  if (!o.color.empty()) problem.color_model = read_color_model(o.color);
  if (!o.transforms.empty()) {
    problem.transform_cfg = transform_config_from_json(read_text(o.transforms));
  } else if (fs_in.transforms) {
    problem.transform_cfg = *fs_in.transforms;
  }
  problem.transform_cfg.seed = o.seed;
  problem.lambda = o.lambda;
  problem.gamma = o.gamma;

  // Default start: the anchor frame's own cloth.
  const Frame& anchor = problem.frames.front();
  Patch init(o.init.empty() ? anchor.image.crop(anchor.cloth_box) : read_image(o.init));

  OptimizerState st;
  st.seed = o.seed;
  st.backend = parse_backend(o.grad);
  st.smoothing.samples = o.samples;
  st.adam.learning_rate = o.lr;
  // Frame results are always reduced in frame order, so any thread count is reproducible.
  st.threads = o.threads;

  Patch patch;
  std::vector<StepRecord> trace;
  if (o.mode == "single") {
    if (problem.detectors.size() != 1) {
      throw CLI::ValidationError("--mode single", "needs exactly one --detector");
    }
    auto r = optimize_single(problem, 0, o.steps, st, init);
    patch = std::move(r.patch);
    trace = std::move(r.trace);
  } else if (o.mode == "minmax") {
    auto r = optimize_minmax(problem, o.steps, st, init);
    patch = std::move(r.patch);
    trace = std::move(r.trace);
    std::cout << "weights";
    for (const double w : r.weights.w) std::cout << ' ' << w;
    std::cout << "\n";
  } else {
    throw CLI::ValidationError("--mode", "expected single or minmax");
  }
  write_patch(patch, o.out);
  if (!o.trace.empty()) write_text(trace_csv(trace, problem.detectors.size()), o.trace);
  if (!trace.empty()) std::cout << "final objective " << trace.back().objective << "\n";
  return 0;
}

struct EvaluateOpts {
  std::string frames;
  std::string patch;
  std::string detector;
  std::string color;
  double threshold = kOperatingThreshold;
  bool sweep = false;
  std::uint64_t seed = 0;
  std::string report;
  int threads = 1;
};

int cmd_evaluate(const EvaluateOpts& o) {
  const FrameSet in = read_frame_dir(o.frames);
  const DetectorPtr det = read_detector(o.detector);
  EvalSettings s;
  if (in.transforms) s.transforms = *in.transforms;
  if (!o.color.empty()) s.color = read_color_model(o.color);
  s.seed = o.seed;
  s.threads = o.threads;
  std::optional<Patch> patch;
  if (!o.patch.empty()) patch = Patch(read_image(o.patch));
  const EvalReport rep = evaluate_asr(in.frames, patch, *det, o.threshold, s);
  std::vector<SweepRow> rows;
  if (o.sweep) rows = threshold_sweep(in.frames, patch, *det, default_thresholds(), s);
  std::cout << "asr " << rep.asr << " at threshold " << rep.threshold << "\n";
  for (const auto& r : rows) {
    std::cout << "  t=" << r.threshold << " normal_acc=" << r.normal_accuracy << " asr=" << r.asr
              << (r.operating_point ? "  <- operating point" : "") << "\n";
  }
  if (!o.report.empty()) write_text(report_to_json(rep, rows) + "\n", o.report);
  return 0;
}

struct AblationOpts {
  std::string spec;
  std::string out = "ablation";
  int steps = 600;
  int train_frames = 20;
  int test_frames = 20;
  int curve_every = 50;
  std::uint64_t seed = 0;
  int threads = 1;
};

int cmd_ablation(const AblationOpts& o) {
  AblationConfig cfg;
  if (!o.spec.empty()) cfg.scene = read_scene_spec(o.spec);
  cfg.train.steps = o.steps;
  cfg.train.threads = o.threads;
  cfg.train_frames = o.train_frames;
  cfg.test_frames = o.test_frames;
  cfg.curve_every = o.curve_every;
  cfg.seed = o.seed;
  const AblationResult r = run_ablation(cfg);
  fs::create_directories(o.out);
  write_text(ablation_grid_csv(r), fs::path(o.out) / "grid.csv");
  write_text(ablation_curves_csv(r), fs::path(o.out) / "curves.csv");
  std::cout << ablation_grid_csv(r);
  return 0;
}

int cmd_match(const std::string& src, const std::string& dst, const std::string& align,
              double eps, const std::string& out) {
  const PerspectiveTransform h = align.empty() ? PerspectiveTransform::identity() : read_perspective(align);
  const MatchResult m = match_points(read_control_points(src), read_control_points(dst), h, MatchConfig{eps});
  std::cout << "matched " << m.source.size() << " pairs\n";
  if (!out.empty()) {
    write_control_points(m.source, out + ".source.json");
    write_control_points(m.target, out + ".target.json");
  }
  return 0;
}

int cmd_detect(const std::string& detector, const std::string& image, const std::string& out) {
  const DetectorPtr det = read_detector(detector);
  const std::string json = detections_to_json(det->detect(read_image(image)));
  if (out.empty()) {
    std::cout << json << "\n";
  } else {
    write_text(json + "\n", out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformation-robust adversarial patches for deformable surfaces"};
  app.require_subcommand(1);

  GenerateOpts gen;
  auto* g = app.add_subcommand("generate", "Render a synthetic scene into a frame directory");
  g->add_option("--spec", gen.spec, "Scene spec JSON (defaults if omitted)")->check(CLI::ExistingFile);
  g->add_option("--frames", gen.frames, "Number of frames")->check(CLI::PositiveNumber);
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_flag("!--no-png", gen.png, "Skip PNG previews");

  std::string pairs, color_out;
  auto* fc = app.add_subcommand("fit-color", "Fit the quadratic colour model to a palette CSV");
  fc->add_option("--pairs", pairs, "Palette CSV")->required()->check(CLI::ExistingFile);
  fc->add_option("--out", color_out, "Model JSON")->required();

  AttackOpts at;
  auto* a = app.add_subcommand("attack", "Optimize a universal patch");
  a->add_option("--frames", at.frames, "Frame directory")->required()->check(CLI::ExistingDirectory);
  a->add_option("--detector", at.detectors, "Detector spec (repeatable)")->required()->check(CLI::ExistingFile);
  a->add_option("--color", at.color, "Colour model JSON")->check(CLI::ExistingFile);
  a->add_option("--transforms", at.transforms, "Transform config JSON")->check(CLI::ExistingFile);
  a->add_option("--init", at.init, "Initial patch image")->check(CLI::ExistingFile);
  a->add_option("--lambda", at.lambda, "TV weight");
  a->add_option("--gamma", at.gamma, "Min-max regularizer");
  a->add_option("--steps", at.steps, "Optimizer steps")->check(CLI::NonNegativeNumber);
  a->add_option("--mode", at.mode, "single|minmax")->check(CLI::IsMember({"single", "minmax"}));
  a->add_option("--grad", at.grad, "analytic|smoothed")->check(CLI::IsMember({"analytic", "smoothed"}));
  a->add_option("--samples", at.samples, "Directions per smoothed estimate")->check(CLI::PositiveNumber);
  a->add_option("--lr", at.lr, "Adam learning rate");
  a->add_option("--seed", at.seed, "Seed for all sampling");
  a->add_option("--out", at.out, "Patch output (.pf32 or .png)");
  a->add_option("--trace", at.trace, "Trace CSV");
  a->add_flag("--deterministic", at.deterministic, "Reduce in frame order (always the case)");
  a->add_option("--threads", at.threads, "Worker threads")->check(CLI::PositiveNumber);

  EvaluateOpts ev;
  auto* e = app.add_subcommand("evaluate", "Attack success rate of a patch");
  e->add_option("--frames", ev.frames, "Frame directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--patch", ev.patch, "Patch image (omit for the unpatched baseline)")->check(CLI::ExistingFile);
  e->add_option("--detector", ev.detector, "Detector spec")->required()->check(CLI::ExistingFile);
  e->add_option("--color", ev.color, "Colour model JSON")->check(CLI::ExistingFile);
  e->add_option("--threshold", ev.threshold, "Detection threshold");
  e->add_flag("--sweep", ev.sweep, "Also sweep thresholds 0.1..0.9");
  e->add_option("--seed", ev.seed, "Seed for the transform draws");
  e->add_option("--report", ev.report, "Report JSON");
  e->add_option("--threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber);

  AblationOpts ab;
  auto* b = app.add_subcommand("ablation", "TPS vs affine training/testing grid");
  b->add_option("--spec", ab.spec, "Scene spec JSON")->check(CLI::ExistingFile);
  b->add_option("--out", ab.out, "Output directory for grid.csv and curves.csv");
  b->add_option("--steps", ab.steps, "Training steps per cell")->check(CLI::NonNegativeNumber);
  b->add_option("--train-frames", ab.train_frames)->check(CLI::PositiveNumber);
  b->add_option("--test-frames", ab.test_frames)->check(CLI::PositiveNumber);
  b->add_option("--curve-every", ab.curve_every)->check(CLI::PositiveNumber);
  b->add_option("--seed", ab.seed, "Seed");
  b->add_option("--threads", ab.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string msrc, mdst, malign, mout;
  double meps = 0.5;
  auto* m = app.add_subcommand("match", "Match two control-point sets");
  m->add_option("--source", msrc)->required()->check(CLI::ExistingFile);
  m->add_option("--target", mdst)->required()->check(CLI::ExistingFile);
  m->add_option("--align", malign, "Perspective JSON (9 numbers)")->check(CLI::ExistingFile);
  m->add_option("--epsilon", meps, "Match radius in pixels");
  m->add_option("--out", mout, "Output prefix");

  std::string ddet, dimg, dout;
  auto* d = app.add_subcommand("detect", "Run a detector on one image");
  d->add_option("--detector", ddet)->required()->check(CLI::ExistingFile);
  d->add_option("--image", dimg)->required()->check(CLI::ExistingFile);
  d->add_option("--out", dout, "Detections JSON (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*g) return cmd_generate(gen);
    if (*fc) return cmd_fit_color(pairs, color_out);
    if (*a) return cmd_attack(at);
    if (*e) return cmd_evaluate(ev);
    if (*b) return cmd_ablation(ab);
    if (*m) return cmd_match(msrc, mdst, malign, meps, mout);
    if (*d) return cmd_detect(ddet, dimg, dout);
  } catch (const CLI::Error& err) {
    return app.exit(err);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
