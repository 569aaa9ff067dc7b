// Acceptance checks, one PASS/FAIL line each. Pass criterion names to run a subset.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "tpsadv/image_io.hpp"
#include "tpsadv/io.hpp"

using namespace tpsadv;
using namespace testsupport;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Points in [0,100]^2 at least 0.5 apart.
ControlPointSet random_points(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 100.0);
  ControlPointSet s;
  while (static_cast<int>(s.size()) < n) {
    const Point2 p{u(rng), u(rng)};
    bool ok = true;
    for (const auto& q : s.points) ok = ok && distance(p, q) >= 0.5;
    if (ok) s.points.push_back(p);
  }
  return s;
}

Outcome tps_exactness() {
  Rng rng = make_rng(2024, {1});
  std::uniform_int_distribution<int> nd(4, 128);
  std::uniform_real_distribution<double> d(-10.0, 10.0);
  double worst_disp = 0.0;
  double worst_c = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const ControlPointSet src = random_points(nd(rng), rng);
    ControlPointSet dst = src;
    const bool affine = inst % 2 == 1;
    const double a = 1.0 + 0.1 * d(rng) / 10.0, b = 0.05 * d(rng) / 10.0, c = -0.05 * d(rng) / 10.0,
                 e = 1.0 + 0.1 * d(rng) / 10.0, tx = d(rng), ty = d(rng);
    for (auto& p : dst.points) {
      p = affine ? Point2{a * p.x + b * p.y + tx, c * p.x + e * p.y + ty} : p + Point2{d(rng), d(rng)};
    }
    const TpsTransform t = fit_tps(src, dst);
    for (std::size_t i = 0; i < src.size(); ++i) {
      const Point2 m = src.points[i] + tps_displace(t, src.points[i]);
      worst_disp = std::max({worst_disp, std::abs(m.x - dst.points[i].x), std::abs(m.y - dst.points[i].y)});
    }
    if (affine) {
      const auto n = static_cast<Eigen::Index>(src.size());
      worst_c = std::max({worst_c, t.theta_x.head(n).cwiseAbs().maxCoeff(),
                          t.theta_y.head(n).cwiseAbs().maxCoeff()});
    }
  }
  std::vector<std::pair<ControlPointSet, ControlPointSet>> big;
  for (int inst = 0; inst < 200; ++inst) {
    ControlPointSet src = random_points(128, rng);
    ControlPointSet dst = src;
    for (auto& p : dst.points) p = p + Point2{d(rng), d(rng)};
    big.emplace_back(std::move(src), std::move(dst));
  }
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& [s, t] : big) (void)fit_tps(s, t);
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "max control-point error " << worst_disp << ", affine max|c| " << worst_c << ", 200 fits at n=128 in "
     << secs << " s";
  return {worst_disp < 1e-6 && worst_c < 1e-6 && secs < 1.0, os.str()};
}

Outcome matching() {
  Rng rng = make_rng(2024, {2});
  std::normal_distribution<double> jitter(0.0, 0.3);
  bool ok = true;
  std::ostringstream os;
  for (const int k : {0, 1, 5}) {
    for (int trial = 0; trial < 20; ++trial) {
      const ControlPointSet src = make_grid(8, 16, 0.0, 0.0, 150.0, 70.0);
      PerspectiveTransform h;
      h.h << 1.02, 0.03, 12.0, -0.02, 0.98, 7.5, 1e-4, -5e-5, 1.0;
      ControlPointSet dst;
      for (const auto& p : src.points) {
        const Point2 q = apply_perspective(h, p);
        dst.points.push_back({q.x + jitter(rng), q.y + jitter(rng)});
      }
      for (int del = 0; del < k; ++del) {
        const auto idx = std::uniform_int_distribution<std::size_t>(0, dst.size() - 1)(rng);
        dst.points.erase(dst.points.begin() + static_cast<long>(idx));
      }
      std::shuffle(dst.points.begin(), dst.points.end(), rng);
      const double eps = 2.0;
      const MatchResult m = match_points(src, dst, h, MatchConfig{eps});
      const auto oracle = brute_force_matches(src, dst, h, eps);
      bool same = m.source_indices.size() == oracle.size();
      for (std::size_t i = 0; same && i < oracle.size(); ++i) {
        same = m.source_indices[i] == oracle[i].first && m.target_indices[i] == oracle[i].second &&
               m.target.points[i] == dst.points[oracle[i].second];
      }
      same = same && static_cast<int>(m.source_indices.size()) == 128 - k;
      ok = ok && same;
    }
    os << "k=" << k << (ok ? " ok " : " MISMATCH ");
  }
  return {ok, os.str() + "(20 trials each)"};
}

Outcome color_regression() {
  ColorModel truth;
  truth.coeffs[0] = {0.0, 0.5, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.1};
  truth.coeffs[1] = {0.1, 0.05, 0.7, 0.0, 0.0, 0.1, 0.0, 0.0, 0.08, 0.0};
  truth.coeffs[2] = {0.05, 0.0, 0.02, 0.6, 0.0, 0.0, 0.15, 0.1, 0.0, 0.0};
  Rng rng = make_rng(2024, {3});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ColorPair> pairs;
  for (int i = 0; i < 500; ++i) {
    ColorPair p;
    p.digital = {u(rng), u(rng), u(rng)};
    p.printed = truth.evaluate(p.digital);
    pairs.push_back(p);
  }
  const ColorModel fit = fit_color(pairs);
  double coef_err = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < ColorModel::kTerms; ++k) {
      coef_err = std::max(coef_err, std::abs(fit.coeffs[c][k] - truth.coeffs[c][k]));
    }
  }
  std::vector<ColorPair> id;
  for (int r = 0; r < 10; ++r) {
    for (int g = 0; g < 10; ++g) {
      for (int b = 0; b < 10; ++b) {
        const Rgb v{r / 9.0, g / 9.0, b / 9.0};
        id.push_back({v, v});
      }
    }
  }
  const ColorModel idm = fit_color(id);
  const Image img = random_image(32, 32, rng);
  const double id_err = max_abs_difference(apply_color(idm, img), img);
  std::ostringstream os;
  os << "quadratic coefficient error " << coef_err << ", identity palette max error " << id_err;
  return {coef_err < 1e-6 && id_err < 1e-7, os.str()};
}

Outcome gradient_correctness() {
  double worst_fd = 0.0;
  for (const auto& det : {toy_linear_detector(11), toy_template_detector(12)}) {
    const AttackProblem p = toy_problem(3, {det});
    const Patch patch = toy_patch(3);
    const Image analytic = grad_patch(p, patch, 0, 99);
    const Image fd = finite_difference_grad(p, patch, 0, 99, 1e-6);
    worst_fd = std::max(worst_fd, max_abs_difference(analytic, fd));
  }
  double worst_cos = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    AttackProblem p = toy_problem(seed, {toy_linear_detector(100 + seed)});
    p.lambda = 0.0;
    const Patch patch = toy_patch(seed);
    const Image a = grad_patch(p, patch, 0, seed);
    const Image s = grad_patch(p, patch, 0, seed, GradBackend::Smoothed, SmoothingConfig{0.01, 2000});
    worst_cos = std::min(worst_cos, cosine(a, s));
  }
  std::ostringstream os;
  os << "analytic vs central FD max-abs " << worst_fd << " (8x8 patch), smoothed K=2000 min cosine "
     << worst_cos << " over 10 seeds";
  return {worst_fd < 1e-4 && worst_cos > 0.9, os.str()};
}

Outcome simplex() {
  Rng rng = make_rng(2024, {5});
  std::uniform_int_distribution<int> len(2, 16);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> v(static_cast<std::size_t>(len(rng)));
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-2.0, 1.0)(rng));
    for (double& x : v) x = scale * nd(rng);
    worst = std::max(worst, max_abs(project_simplex(v), simplex_oracle(v)));
  }
  const auto w = project_simplex({0.5, 0.7});
  const double ex = std::max(std::abs(w[0] - 0.4), std::abs(w[1] - 0.6));
  std::ostringstream os;
  os << "max deviation from KKT oracle " << worst << " over 1000 vectors, (0.5,0.7) -> (" << w[0] << ","
     << w[1] << ")";
  return {worst < 1e-10 && ex < 1e-12, os.str()};
}

Outcome minmax_limits() {
  AttackProblem avg = toy_problem(6, {toy_linear_detector(61), toy_template_detector(62),
                                      toy_linear_detector(63)});
  avg.gamma = 1e6;
  OptimizerState st;
  st.seed = 6;
  double dev = 0.0;
  const auto r1 = optimize_minmax(avg, 500, st, toy_patch(6));
  for (const auto& rec : r1.trace) {
    for (const double w : rec.weights) dev = std::max(dev, std::abs(w - 1.0 / 3.0));
  }

  const auto anchors = toy_anchors();
  AttackProblem worst = toy_problem(7, {std::make_shared<ConstantDetector>(anchors, 0.6),
                                        std::make_shared<ConstantDetector>(anchors, 0.9),
                                        std::make_shared<ConstantDetector>(anchors, 0.45)});
  worst.gamma = 0.0;
  OptimizerState st2;
  st2.seed = 7;
  const auto r2 = optimize_minmax(worst, 500, st2, toy_patch(7));
  const auto& w = r2.weights.w;
  std::ostringstream os;
  os << "gamma=1e6 max|w-1/N| " << dev << " over 500 steps; gamma=0 final w = (" << w[0] << ", " << w[1]
     << ", " << w[2] << ")";
  return {dev < 1e-3 && w[1] > 0.99, os.str()};
}

Outcome compose_reduction() {
  Rng rng = make_rng(2024, {8});
  std::uniform_int_distribution<int> dim(16, 64);
  int equal = 0;
  for (int i = 0; i < 50; ++i) {
    const int w = dim(rng), h = dim(rng);
    Frame f;
    f.image = random_image(w, h, rng);
    const int pl = std::uniform_int_distribution<int>(0, w / 4)(rng);
    const int pt = std::uniform_int_distribution<int>(0, h / 4)(rng);
    f.person_box = {pl, pt, w - std::uniform_int_distribution<int>(0, w / 4)(rng),
                    h - std::uniform_int_distribution<int>(0, h / 4)(rng)};
    f.cloth_box = {f.person_box.left + 2, f.person_box.top + 2, f.person_box.right - 2,
                   f.person_box.bottom - 2};
    const Patch patch(random_image(f.cloth_box.width(), f.cloth_box.height(), rng));
    const Image noise(patch.width(), patch.height());
    const Image robust = compose_robust(f, patch, TransformSample::identity(), TpsTransform::identity(),
                                        noise, ColorModel::identity(), 0.0);
    if (robust == compose_plain(f, patch)) ++equal;
  }
  return {equal == 50, std::to_string(equal) + "/50 frames bit-identical"};
}

Outcome efficacy() {
  AblationConfig cfg;
  cfg.train.steps = 2000;
  const auto t0 = std::chrono::steady_clock::now();
  const EfficacyResult r = run_efficacy(cfg);
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "64x64 frames, 20 train/20 test, 32x32 patch, threshold 0.7, 2000 steps: unpatched ASR "
     << r.unpatched.asr << ", final ASR " << r.patched.asr << ", " << fmt("%.1f", secs) << " s";
  return {r.unpatched.asr < 0.1 && r.patched.asr > 0.7 && secs < 300.0, os.str()};
}

Outcome ablation() {
  bool ok = true;
  std::ostringstream os;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    AblationConfig cfg;
    cfg.seed = seed;
    cfg.curve_every = cfg.train.steps;
    const AblationResult r = run_ablation(cfg);
    const double tps = r.asr(DeformationMode::Tps, DeformationMode::Tps);
    const double aff = r.asr(DeformationMode::Affine, DeformationMode::Tps);
    ok = ok && tps - aff >= 0.1 - 1e-12;
    os << "seed " << seed << ": tps/tps " << tps << " vs affine/tps " << aff << "; ";
  }
  return {ok, os.str() + "required margin 0.10"};
}

Outcome sweep() {
  SceneSpec spec;
  spec.include_control_person = false;
  const Scene scene = generate_scene(spec, 20);
  const MeanTemplateDetector det = reference_detector(spec, ReferenceDetectorConfig{});
  EvalSettings s;
  s.seed = 3;
  bool ok = true;
  std::ostringstream os;
  const std::vector<std::optional<Patch>> patches = {std::nullopt, Patch(rest_cloth(spec)),
                                                     Patch(Image(32, 32, 0.5))};
  for (const auto& patch : patches) {
    const auto rows = threshold_sweep(scene.frames, patch, det, default_thresholds(), s);
    int marked = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i > 0) ok = ok && rows[i].normal_accuracy <= rows[i - 1].normal_accuracy;
      if (rows[i].operating_point) {
        ++marked;
        ok = ok && std::abs(rows[i].threshold - 0.7) < 1e-12;
      }
    }
    ok = ok && marked == 1 && rows.size() == 9;
    os << "acc(0.1)=" << rows.front().normal_accuracy << " acc(0.9)=" << rows.back().normal_accuracy << "; ";
  }
  return {ok, os.str() + "nonincreasing over 0.1..0.9, 0.7 marked"};
}

std::string file_bytes(const std::filesystem::path& p) { return read_text(p); }

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "tpsadv_determinism";
  std::filesystem::create_directories(dir);
  SceneSpec spec;
  const Scene scene = generate_scene(spec, 6);
  auto det = std::make_shared<MeanTemplateDetector>(reference_detector(spec, ReferenceDetectorConfig{}));
  std::vector<std::string> patches, reports;
  for (const int threads : {1, 1, 2}) {
    TrainSettings ts;
    ts.steps = 40;
    ts.seed = 17;
    ts.threads = threads;
    const SingleResult r = train_patch(scene.frames, det, Patch(rest_cloth(spec)), harness_transforms(), ts);
    const auto path = dir / ("patch_" + std::to_string(patches.size()) + ".pf32");
    write_pf32(r.patch.data, path);
    patches.push_back(file_bytes(path));
    EvalSettings es;
    es.seed = 17;
    es.threads = threads;
    const EvalReport rep = evaluate_asr(scene.frames, r.patch, *det, kOperatingThreshold, es);
    reports.push_back(report_to_json(rep, threshold_sweep(scene.frames, r.patch, *det, default_thresholds(), es)) +
                      trace_csv(r.trace, 1));
  }
  std::filesystem::remove_all(dir);
  const bool ok = patches[0] == patches[1] && patches[0] == patches[2] && reports[0] == reports[1] &&
                  reports[0] == reports[2];
  return {ok, ok ? "patch bytes, report and trace identical across reruns and thread counts"
                 : "outputs differ between runs"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"tps_exactness", tps_exactness},
      {"matching", matching},
      {"color_regression", color_regression},
      {"gradient_correctness", gradient_correctness},
      {"simplex_projection", simplex},
      {"minmax_limits", minmax_limits},
      {"compose_reduction", compose_reduction},
      {"attack_efficacy", efficacy},
      {"ablation_direction", ablation},
      {"threshold_sweep", sweep},
      {"determinism", determinism},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  for (const auto& name : only) {
    bool known = false;
    for (const auto& c : criteria) known = known || c.first == name;
    if (!known) {
      std::cerr << "unknown criterion: " << name << "\n";
      return 2;
    }
  }
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
