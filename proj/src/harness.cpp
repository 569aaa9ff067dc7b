#include "tpsadv/harness.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "compose_internal.hpp"

namespace tpsadv {
namespace {

constexpr Rgb kSkin{0.86, 0.66, 0.52};
constexpr Rgb kHair{0.12, 0.09, 0.07};
constexpr Rgb kShirt{0.25, 0.35, 0.65};
constexpr Rgb kTrousers{0.15, 0.15, 0.28};
constexpr Rgb kLegGap{0.55, 0.55, 0.55};
constexpr double kCheckerLight = 0.85;
constexpr double kCheckerDark = 0.15;

BoxMask offset_box(const BoxMask& b, int dx, int dy) {
  return {b.left + dx, b.top + dy, b.right + dx, b.bottom + dy};
}

// Bilinear lookup with coordinates clamped to the image.
Rgb sample_clamped(const Image& img, Point2 p) {
  p.x = std::clamp(p.x, 0.0, static_cast<double>(img.width() - 1));
  p.y = std::clamp(p.y, 0.0, static_cast<double>(img.height() - 1));
  return bilinear_sample(img, p);
}

// Least-squares affine part of a displacement field sampled at `at`.
std::vector<Point2> affine_part(const std::vector<Point2>& at, const std::vector<Point2>& disp) {
  const Eigen::Index n = static_cast<Eigen::Index>(at.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::MatrixXd b(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.row(i) << 1.0, at[i].x, at[i].y;
    b.row(i) << disp[i].x, disp[i].y;
  }
  const Eigen::MatrixXd coef = a.colPivHouseholderQr().solve(b);
  const Eigen::MatrixXd fit = a * coef;
  std::vector<Point2> out(at.size());
  for (Eigen::Index i = 0; i < n; ++i) out[i] = {fit(i, 0), fit(i, 1)};
  return out;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

struct FrameScores {
  double adv = -std::numeric_limits<double>::infinity();
  std::optional<double> control;
  double normal = -std::numeric_limits<double>::infinity();
};

double best_overlap(const std::vector<Detection>& dets, const BoxMask& box) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& d : dets) {
    if (intersection_area(d.box, box) > 0) best = std::max(best, d.person_prob);
  }
  return best;
}

std::vector<FrameScores> score_frames(const std::vector<Frame>& frames,
                                      const std::optional<Patch>& patch, const Detector& detector,
                                      const EvalSettings& settings, bool with_normal) {
  settings.transforms.validate();
  AttackProblem draws;
  draws.frames = frames;
  draws.transform_cfg = settings.transforms;
  const auto& cfg = settings.transforms;
  std::vector<FrameScores> scores(frames.size());
  detail::parallel_for(frames.size(), settings.threads, [&](std::size_t i) {
    const Frame& f = frames[i];
    f.validate();
    const int pw = patch ? patch->width() : f.cloth_box.width();
    const int ph = patch ? patch->height() : f.cloth_box.height();
    const EotDraw draw = draw_eot(draws, i, 0, settings.seed, pw, ph);
    const Image unpatched =
        compose_unpatched(f, draw.sample, draw.env_brightness, cfg.fill, cfg.blur_size);
    Image shown = unpatched;
    if (patch) {
      const TpsTransform& t =
          f.cloth_tps.empty() ? TpsTransform::identity() : f.cloth_tps.at(draw.tps_index);
      if (f.cloth_tps.empty() &&
          (pw != f.cloth_box.width() || ph != f.cloth_box.height())) {
        throw std::invalid_argument("evaluate: patch dims do not match the cloth box");
      }
      const SampleMap warp = tps_sample_map(t, f.cloth_box.width(), f.cloth_box.height());
      shown = detail::render_forward(f, patch->data, draw.noise, draw.sample, warp, settings.color,
                                     draw.env_brightness, cfg.fill, cfg.blur_size)
                  .output;
    }
    const auto dets = detector.detect(shown);
    scores[i].adv = best_overlap(dets, f.person_box);
    if (f.control_box) scores[i].control = best_overlap(dets, *f.control_box);
    if (with_normal) {
      scores[i].normal = patch ? best_overlap(detector.detect(unpatched), f.person_box) : scores[i].adv;
    }
  });
  return scores;
}

EvalReport report_from_scores(const std::vector<FrameScores>& scores, double threshold) {
  EvalReport r;
  r.threshold = threshold;
  std::size_t successes = 0;
  for (const auto& s : scores) {
    FrameOutcome o;
    o.adv_score = s.adv;
    o.adv_detected = s.adv >= threshold;
    o.control_score = s.control;
    o.control_detected = !s.control || *s.control >= threshold;
    if (!o.adv_detected && o.control_detected) ++successes;
    r.outcomes.push_back(o);
  }
  r.asr = scores.empty() ? 0.0 : static_cast<double>(successes) / static_cast<double>(scores.size());
  return r;
}

}  // namespace

std::string to_string(DeformationMode mode) {
  switch (mode) {
    case DeformationMode::None: return "none";
    case DeformationMode::Affine: return "affine";
    case DeformationMode::Tps: return "tps";
  }
  return "?";
}

DeformationMode parse_deformation_mode(const std::string& s) {
  if (s == "none") return DeformationMode::None;
  if (s == "affine") return DeformationMode::Affine;
  if (s == "tps") return DeformationMode::Tps;
  throw std::invalid_argument("unknown deformation mode '" + s + "' (none|affine|tps)");
}

void SceneSpec::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("scene: frame dims must be positive");
  if (person_width <= 0 || person_height <= 0 || person_width > width || person_height > height) {
    throw std::invalid_argument("scene: person box must fit in the frame");
  }
  for (const Point2& p : {start, end}) {
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x + person_width <= width && p.y + person_height <= height)) {
      throw std::invalid_argument("scene: trajectory leaves the frame");
    }
  }
  if (!(cloth_left >= 0.0 && cloth_left < cloth_right && cloth_right <= 1.0 && cloth_top >= 0.0 &&
        cloth_top < cloth_bottom && cloth_bottom <= 1.0)) {
    throw std::invalid_argument("scene: cloth fractions must satisfy 0 <= lo < hi <= 1");
  }
  if (cloth_in_person().empty()) throw std::invalid_argument("scene: empty cloth box");
  if (texture_cell <= 0 || !(texture_amp >= 0.0)) {
    throw std::invalid_argument("scene: texture cell must be positive and amplitude >= 0");
  }
  if (checker_cell <= 0) throw std::invalid_argument("scene: checker cell must be positive");
  if (grid.rows < 2 || grid.cols < 2 || grid.rows * grid.cols < 4) {
    throw std::invalid_argument("scene: control grid needs at least 2 x 2 nodes");
  }
  if (!(magnitude >= 0.0) || !std::isfinite(magnitude)) {
    throw std::invalid_argument("scene: magnitude must be >= 0");
  }
  if (!(persistence >= 0.0 && persistence <= 1.0)) {
    throw std::invalid_argument("scene: persistence must be in [0,1]");
  }
  if (!(smoothing >= 0.0)) throw std::invalid_argument("scene: smoothing must be >= 0");
  if (pool_size < 1) throw std::invalid_argument("scene: pool size must be >= 1");
  if (include_control_person) {
    const BoxMask c{static_cast<int>(std::lround(control_position.x)),
                    static_cast<int>(std::lround(control_position.y)),
                    static_cast<int>(std::lround(control_position.x)) + person_width,
                    static_cast<int>(std::lround(control_position.y)) + person_height};
    if (!BoxMask{0, 0, width, height}.contains(c)) {
      throw std::invalid_argument("scene: control person outside the frame");
    }
  }
}

BoxMask SceneSpec::cloth_in_person() const {
  return {static_cast<int>(std::lround(cloth_left * person_width)),
          static_cast<int>(std::lround(cloth_top * person_height)),
          static_cast<int>(std::lround(cloth_right * person_width)),
          static_cast<int>(std::lround(cloth_bottom * person_height))};
}

Image rest_cloth(const SceneSpec& spec) {
  const BoxMask cp = spec.cloth_in_person();
  Image img(cp.width(), cp.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const bool light = ((x / spec.checker_cell) + (y / spec.checker_cell)) % 2 == 0;
      const double v = light ? kCheckerLight : kCheckerDark;
      img.set_pixel(x, y, {v, v, v});
    }
  }
  return img;
}

Image person_appearance(const SceneSpec& spec) {
  const int w = spec.person_width;
  const int h = spec.person_height;
  const BoxMask cp = spec.cloth_in_person();
  const int tc = spec.texture_cell;
  const int tw = (w + tc - 1) / tc;
  std::vector<double> grain(static_cast<std::size_t>(tw) * ((h + tc - 1) / tc));
  Rng rng = make_rng(spec.appearance_seed, {0xa11ULL});
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (double& g : grain) g = spec.texture_amp * uni(rng);
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Rgb c;
      if (y < cp.top) {
        c = (x >= 0.3 * w && x < 0.7 * w) ? kSkin : kHair;
      } else if (y < cp.bottom) {
        c = kShirt;
      } else {
        c = (x >= 0.45 * w && x < 0.55 * w) ? kLegGap : kTrousers;
      }
      const double g = grain[static_cast<std::size_t>(y / tc) * tw + x / tc];
      for (double& v : c) v = std::clamp(v + g, 0.0, 1.0);
      img.set_pixel(x, y, c);
    }
  }
  img.paste(rest_cloth(spec), cp);
  return img;
}

Image scene_background(const SceneSpec& spec) {
  constexpr int kCell = 8;
  const int cw = std::max(2, spec.width / kCell + 1);
  const int chh = std::max(2, spec.height / kCell + 1);
  Image coarse(cw, chh);
  Rng rng = make_rng(spec.background_seed, {0xb6ULL});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : coarse.data()) v = 0.5 + 0.12 * normal(rng);
  Image bg = resize_bilinear(coarse, spec.width, spec.height);
  bg.clamp01();
  return bg;
}

std::vector<Point2> random_displacements(const SceneSpec& spec, Rng& rng) {
  const int rows = spec.grid.rows;
  const int cols = spec.grid.cols;
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  std::vector<Point2> raw(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& p : raw) {
    p.x = normal(rng);
    p.y = normal(rng);
  }
  if (spec.smoothing == 0.0) {
    for (auto& p : raw) p = {p.x * spec.magnitude, p.y * spec.magnitude};
    return raw;
  }
  const int radius = static_cast<int>(std::ceil(3.0 * spec.smoothing));
  std::vector<double> g(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) {
    g[k + radius] = std::exp(-0.5 * k * k / (spec.smoothing * spec.smoothing));
  }
  std::vector<Point2> out(n);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      Point2 acc;
      double w2 = 0.0;
      for (int dr = -radius; dr <= radius; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= rows) continue;
        for (int dc = -radius; dc <= radius; ++dc) {
          const int cc = c + dc;
          if (cc < 0 || cc >= cols) continue;
          const double w = g[dr + radius] * g[dc + radius];
          const Point2& v = raw[static_cast<std::size_t>(rr) * cols + cc];
          acc.x += w * v.x;
          acc.y += w * v.y;
          w2 += w * w;
        }
      }
      // Unit variance per node before scaling.
      const double s = spec.magnitude / std::sqrt(w2);
      out[static_cast<std::size_t>(r) * cols + c] = {acc.x * s, acc.y * s};
    }
  }
  return out;
}

std::vector<Point2> frame_displacements(const SceneSpec& spec, int frame, int pool_index) {
  const std::size_t n = static_cast<std::size_t>(spec.grid.rows) * spec.grid.cols;
  if (spec.mode == DeformationMode::None) return std::vector<Point2>(n);
  Rng shirt_rng = make_rng(spec.shirt_seed, {0xf01dULL});
  Rng frame_rng = make_rng(spec.seed, {static_cast<std::uint64_t>(frame),
                                       static_cast<std::uint64_t>(pool_index)});
  const std::vector<Point2> shared = random_displacements(spec, shirt_rng);
  const std::vector<Point2> own = random_displacements(spec, frame_rng);
  const double a = std::sqrt(spec.persistence);
  const double b = std::sqrt(1.0 - spec.persistence);
  std::vector<Point2> disp(n);
  for (std::size_t j = 0; j < n; ++j) disp[j] = {a * shared[j].x + b * own[j].x, a * shared[j].y + b * own[j].y};
  if (spec.mode == DeformationMode::Affine) {
    const BoxMask cp = spec.cloth_in_person();
    const ControlPointSet rest =
        make_grid(spec.grid.rows, spec.grid.cols, 0.0, 0.0, cp.width() - 1.0, cp.height() - 1.0);
    disp = affine_part(rest.points, disp);
  }
  return disp;
}

Scene generate_scene(const SceneSpec& spec, int n_frames) {
  spec.validate();
  if (n_frames < 1) throw std::invalid_argument("generate_scene: n_frames must be >= 1");
  const Image bg = scene_background(spec);
  const Image person = person_appearance(spec);
  const Image rest = rest_cloth(spec);
  const BoxMask cp = spec.cloth_in_person();
  const ControlPointSet rest_grid =
      make_grid(spec.grid.rows, spec.grid.cols, 0.0, 0.0, cp.width() - 1.0, cp.height() - 1.0);

  Scene scene;
  for (int i = 0; i < n_frames; ++i) {
    const double t = (i + spec.phase) / n_frames;
    const int px = static_cast<int>(std::lround(spec.start.x + (spec.end.x - spec.start.x) * t));
    const int py = static_cast<int>(std::lround(spec.start.y + (spec.end.y - spec.start.y) * t));
    Frame f;
    f.person_box = {px, py, px + spec.person_width, py + spec.person_height};
    f.cloth_box = offset_box(cp, px, py);

    for (int k = 0; k < spec.pool_size; ++k) {
      const std::vector<Point2> disp = frame_displacements(spec, i, k);
      ControlPointSet framed{{}, rest_grid.grid};
      for (std::size_t j = 0; j < disp.size(); ++j) framed.points.push_back(rest_grid.points[j] + disp[j]);
      f.cloth_tps.push_back(fit_tps(framed, rest_grid));
      if (k == 0) {
        scene.frame_points.push_back(framed);
        scene.rest_points.push_back(rest_grid);
      }
    }

    f.image = bg;
    f.image.paste(person, f.person_box);
    const SampleMap map = tps_sample_map(f.cloth_tps.front(), cp.width(), cp.height());
    Image cloth(cp.width(), cp.height());
    for (int y = 0; y < cloth.height(); ++y) {
      for (int x = 0; x < cloth.width(); ++x) {
        cloth.set_pixel(x, y, sample_clamped(rest, map.source[static_cast<std::size_t>(y) * cp.width() + x]));
      }
    }
    f.image.paste(cloth, f.cloth_box);
    if (spec.include_control_person) {
      const int cx = static_cast<int>(std::lround(spec.control_position.x));
      const int cy = static_cast<int>(std::lround(spec.control_position.y));
      f.control_box = BoxMask{cx, cy, cx + spec.person_width, cy + spec.person_height};
      f.image.paste(person, *f.control_box);
    }
    scene.frames.push_back(std::move(f));
  }
  return scene;
}

Image reference_template(const SceneSpec& spec, const ReferenceDetectorConfig& cfg) {
  spec.validate();
  if (cfg.template_width <= 0 || cfg.template_height <= 0 || cfg.template_width > spec.person_width ||
      cfg.template_height > spec.person_height) {
    throw std::invalid_argument("reference template: dims must be positive and fit the person box");
  }
  Image t = resize_area(person_appearance(spec), cfg.template_width, cfg.template_height);
  const BoxMask cp = spec.cloth_in_person();
  const double sx = static_cast<double>(cfg.template_width) / spec.person_width;
  const double sy = static_cast<double>(cfg.template_height) / spec.person_height;
  const BoxMask ct{static_cast<int>(std::lround(cp.left * sx)), static_cast<int>(std::lround(cp.top * sy)),
                   static_cast<int>(std::lround(cp.right * sx)),
                   static_cast<int>(std::lround(cp.bottom * sy))};
  const long n_cloth = ct.area();
  const long n_body = static_cast<long>(cfg.template_width) * cfg.template_height - n_cloth;
  if (ct.empty() || n_body <= 0) throw std::invalid_argument("reference template: degenerate cloth area");

  // Body: high-passed, zero-mean appearance, shifted so the whole template sums to zero.
  if (cfg.high_pass > 1) {
    const Image low = box_blur(t, cfg.high_pass);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] -= low.data()[i];
  }
  t *= cfg.body_gain;
  Rgb body_mean{0.0, 0.0, 0.0};
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      if (ct.contains(x, y)) continue;
      for (int c = 0; c < 3; ++c) body_mean[c] += t.at(x, y, c) / static_cast<double>(n_body);
    }
  }
  const double offset = -cfg.cloth_mean * static_cast<double>(n_cloth) / static_cast<double>(n_body);
  if (cfg.cell < 1) throw std::invalid_argument("reference template: cell must be >= 1");
  const int cells_x = (ct.width() + cfg.cell - 1) / cfg.cell;
  const int cells_y = (ct.height() + cfg.cell - 1) / cfg.cell;
  std::vector<double> sign(static_cast<std::size_t>(cells_x) * cells_y);
  Rng rng = make_rng(cfg.seed, {0x7e3ULL});
  std::bernoulli_distribution coin(0.5);
  for (double& s : sign) s = coin(rng) ? 1.0 : -1.0;
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      if (ct.contains(x, y)) {
        const int cx = (x - ct.left) / cfg.cell;
        const int cy = (y - ct.top) / cfg.cell;
        const double v = cfg.cloth_mean + cfg.cloth_amp * sign[static_cast<std::size_t>(cy) * cells_x + cx];
        t.set_pixel(x, y, {v, v, v});
      } else {
        for (int c = 0; c < 3; ++c) t.at(x, y, c) += offset - body_mean[c];
      }
    }
  }
  return t;
}

MeanTemplateDetector reference_detector(const SceneSpec& spec, const ReferenceDetectorConfig& cfg) {
  if (!(cfg.p_unpatched > 0.0 && cfg.p_unpatched < 1.0) || !(cfg.logit_gap > 0.0)) {
    throw std::invalid_argument("reference detector: need 0 < p_unpatched < 1 and logit_gap > 0");
  }
  const Image templ = reference_template(spec, cfg);
  const Image person = person_appearance(spec);
  // Best shirt against an aligned template: dark where the template is
  // positive, light where it is negative.
  const BoxMask cp = spec.cloth_in_person();
  const MeanTemplateDetector probe({person.bounds()}, templ, 1.0, 0.0);
  const Image pulled = probe.grad_person_prob(person, 0);
  Image best = person;
  for (int y = cp.top; y < cp.bottom; ++y) {
    for (int x = cp.left; x < cp.right; ++x) {
      for (int c = 0; c < 3; ++c) best.at(x, y, c) = pulled.at(x, y, c) > 0.0 ? 0.0 : 1.0;
    }
  }
  const double e_rest = probe.correlation(person, 0);
  const double e_best = probe.correlation(best, 0);
  if (!(e_rest > e_best)) throw std::invalid_argument("reference detector: cloth does not affect the score");
  const double alpha = cfg.logit_gap / (e_rest - e_best);
  const double beta = e_rest - logit(cfg.p_unpatched) / alpha;
  return MeanTemplateDetector(anchor_grid(spec.width, spec.height, spec.person_width,
                                          spec.person_height, cfg.stride, {1.0}),
                              templ, alpha, beta);
}

TransformConfig harness_transforms() {
  TransformConfig c;
  c.scale = {0.97, 1.03};
  c.translate_x = {-2.0, 2.0};
  c.translate_y = {-2.0, 2.0};
  c.rotate = {-0.03490658503988659, 0.03490658503988659};  // +-2 degrees
  c.brightness = {-0.05, 0.05};
  c.contrast = {0.95, 1.05};
  c.noise_amp = {0.0, 0.05};
  c.blur_probability = 0.0;
  c.mu = 0.03;
  c.env_brightness = {-0.05, 0.05};
  return c;
}

EvalReport evaluate_asr(const std::vector<Frame>& frames, const std::optional<Patch>& patch,
                        const Detector& detector, double threshold, const EvalSettings& settings) {
  return report_from_scores(score_frames(frames, patch, detector, settings, false), threshold);
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 9; ++i) t.push_back(i / 10.0);
  return t;
}

std::vector<SweepRow> threshold_sweep(const std::vector<Frame>& frames,
                                      const std::optional<Patch>& patch, const Detector& detector,
                                      const std::vector<double>& thresholds,
                                      const EvalSettings& settings) {
  if (thresholds.empty()) throw std::invalid_argument("threshold_sweep: no thresholds");
  const auto scores = score_frames(frames, patch, detector, settings, true);
  std::vector<SweepRow> rows;
  for (const double t : thresholds) {
    SweepRow row;
    row.threshold = t;
    row.asr = report_from_scores(scores, t).asr;
    std::size_t hit = 0;
    for (const auto& s : scores) hit += s.normal >= t ? 1 : 0;
    row.normal_accuracy = scores.empty() ? 0.0 : static_cast<double>(hit) / scores.size();
    row.operating_point = std::abs(t - kOperatingThreshold) < 1e-12;
    rows.push_back(row);
  }
  return rows;
}

SingleResult train_patch(const std::vector<Frame>& frames, const DetectorPtr& detector,
                         const Patch& init, const TransformConfig& transforms,
                         const TrainSettings& settings, const StepCallback& callback) {
  AttackProblem problem;
  problem.frames = frames;
  problem.detectors = {detector};
  problem.transform_cfg = transforms;
  problem.lambda = settings.lambda;
  OptimizerState state;
  state.adam = settings.adam;
  state.seed = settings.seed;
  state.backend = settings.backend;
  state.threads = settings.threads;
  return optimize_single(problem, 0, settings.steps, state, init, callback);
}

TrainSettings ablation_train_settings() {
  TrainSettings t;
  t.steps = 600;
  return t;
}

double AblationResult::asr(DeformationMode train, DeformationMode test) const {
  for (const auto& c : grid) {
    if (c.train == train && c.test == test) return c.report.asr;
  }
  throw std::out_of_range("ablation: no such cell");
}

AblationResult run_ablation(const AblationConfig& cfg) {
  const std::vector<DeformationMode> modes{DeformationMode::Affine, DeformationMode::Tps};
  const auto mode_id = [](DeformationMode m) { return static_cast<std::uint64_t>(m); };
  SceneSpec base = cfg.scene;
  base.shirt_seed = substream_seed(cfg.seed, {5});
  const DetectorPtr detector =
      std::make_shared<MeanTemplateDetector>(reference_detector(base, cfg.detector));

  std::vector<std::vector<Frame>> tests;
  for (const auto m : modes) {
    SceneSpec s = base;
    s.mode = m;
    s.seed = substream_seed(cfg.seed, {2, mode_id(m)});
    s.phase = 0.5;
    s.pool_size = 1;
    tests.push_back(generate_scene(s, cfg.test_frames).frames);
  }
  EvalSettings eval;
  eval.transforms = cfg.transforms;
  eval.seed = substream_seed(cfg.seed, {3});
  eval.threads = cfg.train.threads;

  AblationResult result;
  for (std::size_t j = 0; j < modes.size(); ++j) {
    result.unpatched.push_back(
        {DeformationMode::None, modes[j], evaluate_asr(tests[j], std::nullopt, *detector, cfg.threshold, eval)});
  }

  const Patch init(rest_cloth(base));
  for (const auto train_mode : modes) {
    SceneSpec s = base;
    s.mode = train_mode;
    s.seed = substream_seed(cfg.seed, {1, mode_id(train_mode)});
    const Scene train = generate_scene(s, cfg.train_frames);
    TrainSettings ts = cfg.train;
    ts.seed = substream_seed(cfg.seed, {4});
    const auto record = [&](long step, const Patch& p) {
      for (std::size_t j = 0; j < modes.size(); ++j) {
        result.curves.push_back(
            {train_mode, modes[j], step, evaluate_asr(tests[j], p, *detector, cfg.threshold, eval).asr});
      }
    };
    record(0, init);
    const StepCallback cb = [&](long step, const Patch& p) {
      if (cfg.curve_every > 0 && step % cfg.curve_every == 0) record(step, p);
    };
    const SingleResult res = train_patch(train.frames, detector, init, cfg.transforms, ts, cb);
    for (std::size_t j = 0; j < modes.size(); ++j) {
      result.grid.push_back(
          {train_mode, modes[j], evaluate_asr(tests[j], res.patch, *detector, cfg.threshold, eval)});
    }
  }
  return result;
}

EfficacyResult run_efficacy(const AblationConfig& cfg) {
  SceneSpec base = cfg.scene;
  base.shirt_seed = substream_seed(cfg.seed, {5});
  const auto mode_id = static_cast<std::uint64_t>(base.mode);
  const DetectorPtr detector =
      std::make_shared<MeanTemplateDetector>(reference_detector(base, cfg.detector));
  SceneSpec test_spec = base;
  test_spec.seed = substream_seed(cfg.seed, {2, mode_id});
  test_spec.phase = 0.5;
  test_spec.pool_size = 1;
  const auto test = generate_scene(test_spec, cfg.test_frames).frames;
  SceneSpec train_spec = base;
  train_spec.seed = substream_seed(cfg.seed, {1, mode_id});
  const auto train = generate_scene(train_spec, cfg.train_frames).frames;

  EvalSettings eval;
  eval.transforms = cfg.transforms;
  eval.seed = substream_seed(cfg.seed, {3});
  eval.threads = cfg.train.threads;
  TrainSettings ts = cfg.train;
  ts.seed = substream_seed(cfg.seed, {4});

  EfficacyResult r;
  r.unpatched = evaluate_asr(test, std::nullopt, *detector, cfg.threshold, eval);
  r.training = train_patch(train, detector, Patch(rest_cloth(base)), cfg.transforms, ts);
  r.patched = evaluate_asr(test, r.training.patch, *detector, cfg.threshold, eval);
  return r;
}

std::string ablation_grid_csv(const AblationResult& r) {
  std::ostringstream os;
  os << "train,test,asr,frames\n";
  for (const auto* cells : {&r.unpatched, &r.grid}) {
    for (const auto& c : *cells) {
      os << to_string(c.train) << ',' << to_string(c.test) << ',' << c.report.asr << ','
         << c.report.outcomes.size() << '\n';
    }
  }
  return os.str();
}

std::string ablation_curves_csv(const AblationResult& r) {
  std::ostringstream os;
  os << "train,test,step,asr\n";
  for (const auto& p : r.curves) {
    os << to_string(p.train) << ',' << to_string(p.test) << ',' << p.step << ',' << p.asr << '\n';
  }
  return os.str();
}

}  // namespace tpsadv
