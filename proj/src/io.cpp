#include "tpsadv/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "json.hpp"

namespace tpsadv {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(what + ": invalid JSON (" + e.what() + ")");
  }
}

json load(const fs::path& path) { return parse(read_text(path), path.string()); }

template <typename T>
T get(const json& j, const char* key, const std::string& what) {
  if (!j.contains(key)) throw IoError(what + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IoError(what + ": bad value for '" + key + "' (" + e.what() + ")");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw IoError(std::string("bad value for '") + key + "' (" + e.what() + ")");
    }
  }
}

json box_json(const BoxMask& b) { return json::array({b.left, b.top, b.right, b.bottom}); }

BoxMask box_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 4) throw IoError(what + ": box must be [left, top, right, bottom]");
  const auto v = j.get<std::vector<int>>();
  return {v[0], v[1], v[2], v[3]};
}

json cps_json(const ControlPointSet& s) {
  json j;
  j["grid"] = s.grid ? json::array({s.grid->rows, s.grid->cols}) : json(nullptr);
  json pts = json::array();
  for (const auto& p : s.points) pts.push_back(json::array({p.x, p.y}));
  j["points"] = pts;
  return j;
}

ControlPointSet cps_from(const json& j) {
  if (!j.is_object() || !j.contains("points")) throw IoError("control points: expected {grid, points}");
  ControlPointSet s;
  if (j.contains("grid") && !j["grid"].is_null()) {
    const auto g = j["grid"].get<std::vector<int>>();
    if (g.size() != 2) throw IoError("control points: grid must be [rows, cols]");
    s.grid = GridDims{g[0], g[1]};
  }
  for (const auto& p : j["points"]) {
    if (!p.is_array() || p.size() != 2) throw IoError("control points: each point must be [x, y]");
    s.points.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  try {
    validate(s);
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("control points: ") + e.what());
  }
  return s;
}

json perspective_json(const PerspectiveTransform& t) {
  const auto v = t.row_major();
  return json(std::vector<double>(v.begin(), v.end()));
}

PerspectiveTransform perspective_from(const json& j) {
  if (!j.is_array() || j.size() != 9) throw IoError("perspective: expected 9 numbers");
  std::array<double, 9> v{};
  for (std::size_t i = 0; i < 9; ++i) v[i] = j[i].get<double>();
  return PerspectiveTransform::from_row_major(v);
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

void read_range(const json& j, const char* key, Range& r) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2) throw IoError(std::string("transforms: '") + key + "' must be [lo, hi]");
  r = {v[0], v[1]};
}

std::vector<BoxMask> anchors_from(const json& j, const std::string& what) {
  if (j.is_array()) {
    std::vector<BoxMask> out;
    for (const auto& b : j) out.push_back(box_from(b, what));
    return out;
  }
  if (j.is_object()) {
    const auto frame = get<std::vector<int>>(j, "frame", what);
    const auto base = get<std::vector<int>>(j, "base", what);
    if (frame.size() != 2 || base.size() != 2) throw IoError(what + ": frame and base must be [w, h]");
    std::vector<double> scales{1.0};
    read_opt(j, "scales", scales);
    return anchor_grid(frame[0], frame[1], base[0], base[1], get<int>(j, "stride", what), scales);
  }
  throw IoError(what + ": anchors must be a list of boxes or a grid object");
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu", i);
  return buf;
}

}  // namespace

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string control_points_to_json(const ControlPointSet& set) { return cps_json(set).dump(2); }

ControlPointSet control_points_from_json(const std::string& text) {
  return cps_from(parse(text, "control points"));
}

ControlPointSet read_control_points(const fs::path& path) { return cps_from(load(path)); }

void write_control_points(const ControlPointSet& set, const fs::path& path) {
  write_text(control_points_to_json(set) + "\n", path);
}

PerspectiveTransform read_perspective(const fs::path& path) { return perspective_from(load(path)); }

void write_perspective(const PerspectiveTransform& t, const fs::path& path) {
  write_text(perspective_json(t).dump() + "\n", path);
}

void write_color_model(const ColorModel& m, const fs::path& path) {
  json j;
  j["basis"] = std::vector<std::string>(ColorModel::kBasisNames.begin(), ColorModel::kBasisNames.end());
  const char* names[3] = {"r", "g", "b"};
  for (int c = 0; c < 3; ++c) {
    j["coefficients"][names[c]] = std::vector<double>(m.coeffs[c].begin(), m.coeffs[c].end());
  }
  j["train_rmse"] = m.train_rmse;
  write_text(j.dump(2) + "\n", path);
}

ColorModel read_color_model(const fs::path& path) {
  const json j = load(path);
  const std::string what = path.string();
  const auto basis = get<std::vector<std::string>>(j, "basis", what);
  if (basis.size() != ColorModel::kTerms ||
      !std::equal(basis.begin(), basis.end(), ColorModel::kBasisNames.begin())) {
    throw IoError(what + ": basis labels do not match the quadratic basis");
  }
  ColorModel m;
  const char* names[3] = {"r", "g", "b"};
  const json& co = j.at("coefficients");
  for (int c = 0; c < 3; ++c) {
    const auto v = get<std::vector<double>>(co, names[c], what);
    if (v.size() != ColorModel::kTerms) throw IoError(what + ": need 10 coefficients per channel");
    std::copy(v.begin(), v.end(), m.coeffs[c].begin());
  }
  read_opt(j, "train_rmse", m.train_rmse);
  return m;
}

DetectorPtr read_detector(const fs::path& path) {
  const json j = load(path);
  const std::string what = path.string();
  const auto type = get<std::string>(j, "type", what);
  if (!j.contains("anchors")) throw IoError(what + ": missing key 'anchors'");
  auto anchors = anchors_from(j["anchors"], what);
  try {
    if (type == "mean_template") {
      fs::path tp = get<std::string>(j, "template", what);
      if (tp.is_relative()) tp = path.parent_path() / tp;
      return std::make_shared<MeanTemplateDetector>(std::move(anchors), read_image(tp),
                                                    get<double>(j, "alpha", what),
                                                    get<double>(j, "beta", what));
    }
    if (type == "linear") {
      double scale = 0.01;
      double bias = 0.0;
      read_opt(j, "weight_scale", scale);
      read_opt(j, "bias", bias);
      return std::make_shared<LinearDetector>(
          LinearDetector::from_seed(std::move(anchors), get<std::uint64_t>(j, "seed", what), scale, bias));
    }
  } catch (const std::invalid_argument& e) {
    throw IoError(what + ": " + e.what());
  }
  throw IoError(what + ": unknown detector type '" + type + "' (mean_template|linear)");
}

void write_mean_template_spec(const MeanTemplateDetector& d, const fs::path& spec_path,
                              const fs::path& template_path) {
  json j;
  j["type"] = "mean_template";
  json anchors = json::array();
  for (const auto& a : d.anchors()) anchors.push_back(box_json(a));
  j["anchors"] = anchors;
  j["template"] = template_path.lexically_relative(spec_path.parent_path().empty()
                                                       ? fs::path(".")
                                                       : spec_path.parent_path())
                      .generic_string();
  j["alpha"] = d.alpha();
  j["beta"] = d.beta();
  write_pf32(d.templ(), template_path);
  write_text(j.dump(1) + "\n", spec_path);
}

std::string detections_to_json(const std::vector<Detection>& dets) {
  json arr = json::array();
  for (const auto& d : dets) arr.push_back({{"box", box_json(d.box)}, {"person_prob", d.person_prob}});
  return arr.dump(1);
}

SceneSpec scene_spec_from_json(const std::string& text) {
  const json j = parse(text, "scene spec");
  SceneSpec s;
  try {
    read_opt(j, "width", s.width);
    read_opt(j, "height", s.height);
    read_opt(j, "person_width", s.person_width);
    read_opt(j, "person_height", s.person_height);
    if (j.contains("start")) {
      const auto v = j["start"].get<std::vector<double>>();
      if (v.size() != 2) throw IoError("scene spec: start must be [x, y]");
      s.start = {v[0], v[1]};
    }
    if (j.contains("end")) {
      const auto v = j["end"].get<std::vector<double>>();
      if (v.size() != 2) throw IoError("scene spec: end must be [x, y]");
      s.end = {v[0], v[1]};
    }
    read_opt(j, "phase", s.phase);
    if (j.contains("cloth")) {
      const auto v = j["cloth"].get<std::vector<double>>();
      if (v.size() != 4) throw IoError("scene spec: cloth must be [left, top, right, bottom] fractions");
      s.cloth_left = v[0];
      s.cloth_top = v[1];
      s.cloth_right = v[2];
      s.cloth_bottom = v[3];
    }
    read_opt(j, "checker_cell", s.checker_cell);
    read_opt(j, "texture_amp", s.texture_amp);
    read_opt(j, "texture_cell", s.texture_cell);
    read_opt(j, "appearance_seed", s.appearance_seed);
    if (j.contains("mode")) s.mode = parse_deformation_mode(j["mode"].get<std::string>());
    if (j.contains("grid")) {
      const auto g = j["grid"].get<std::vector<int>>();
      if (g.size() != 2) throw IoError("scene spec: grid must be [rows, cols]");
      s.grid = {g[0], g[1]};
    }
    read_opt(j, "magnitude", s.magnitude);
    read_opt(j, "smoothing", s.smoothing);
    read_opt(j, "persistence", s.persistence);
    read_opt(j, "shirt_seed", s.shirt_seed);
    read_opt(j, "pool_size", s.pool_size);
    read_opt(j, "background_seed", s.background_seed);
    read_opt(j, "seed", s.seed);
    read_opt(j, "include_control_person", s.include_control_person);
    if (j.contains("control_position")) {
      const auto v = j["control_position"].get<std::vector<double>>();
      if (v.size() != 2) throw IoError("scene spec: control_position must be [x, y]");
      s.control_position = {v[0], v[1]};
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("scene spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("scene spec: ") + e.what());
  }
  return s;
}

std::string scene_spec_to_json(const SceneSpec& s) {
  json j;
  j["width"] = s.width;
  j["height"] = s.height;
  j["person_width"] = s.person_width;
  j["person_height"] = s.person_height;
  j["start"] = {s.start.x, s.start.y};
  j["end"] = {s.end.x, s.end.y};
  j["phase"] = s.phase;
  j["cloth"] = {s.cloth_left, s.cloth_top, s.cloth_right, s.cloth_bottom};
  j["checker_cell"] = s.checker_cell;
  j["texture_amp"] = s.texture_amp;
  j["texture_cell"] = s.texture_cell;
  j["appearance_seed"] = s.appearance_seed;
  j["mode"] = to_string(s.mode);
  j["grid"] = {s.grid.rows, s.grid.cols};
  j["magnitude"] = s.magnitude;
  j["smoothing"] = s.smoothing;
  j["persistence"] = s.persistence;
  j["shirt_seed"] = s.shirt_seed;
  j["pool_size"] = s.pool_size;
  j["background_seed"] = s.background_seed;
  j["seed"] = s.seed;
  j["include_control_person"] = s.include_control_person;
  j["control_position"] = {s.control_position.x, s.control_position.y};
  return j.dump(2);
}

SceneSpec read_scene_spec(const fs::path& path) { return scene_spec_from_json(read_text(path)); }

std::string transform_config_to_json(const TransformConfig& c) {
  json j;
  j["scale"] = range_json(c.scale);
  j["translate_x"] = range_json(c.translate_x);
  j["translate_y"] = range_json(c.translate_y);
  j["rotate"] = range_json(c.rotate);
  j["brightness"] = range_json(c.brightness);
  j["contrast"] = range_json(c.contrast);
  j["noise_amp"] = range_json(c.noise_amp);
  j["blur_probability"] = c.blur_probability;
  j["blur_size"] = c.blur_size;
  j["mu"] = c.mu;
  j["env_brightness"] = range_json(c.env_brightness);
  j["fill"] = c.fill;
  j["seed"] = c.seed;
  return j.dump(2);
}

TransformConfig transform_config_from_json(const std::string& text) {
  const json j = parse(text, "transforms");
  TransformConfig c;
  try {
    read_range(j, "scale", c.scale);
    read_range(j, "translate_x", c.translate_x);
    read_range(j, "translate_y", c.translate_y);
    read_range(j, "rotate", c.rotate);
    read_range(j, "brightness", c.brightness);
    read_range(j, "contrast", c.contrast);
    read_range(j, "noise_amp", c.noise_amp);
    read_opt(j, "blur_probability", c.blur_probability);
    read_opt(j, "blur_size", c.blur_size);
    read_opt(j, "mu", c.mu);
    read_range(j, "env_brightness", c.env_brightness);
    read_opt(j, "fill", c.fill);
    read_opt(j, "seed", c.seed);
    c.validate();
  } catch (const json::exception& e) {
    throw IoError(std::string("transforms: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("transforms: ") + e.what());
  }
  return c;
}

void write_frame_dir(const std::vector<Frame>& frames, const std::optional<TransformConfig>& transforms,
                     const fs::path& dir, bool png_preview) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    const std::string name = frame_name(i);
    write_pf32(f.image, dir / (name + ".pf32"));
    if (png_preview) write_png(f.image, dir / (name + ".png"));
    json j;
    j["image"] = name + ".pf32";
    j["person_box"] = box_json(f.person_box);
    j["cloth_box"] = box_json(f.cloth_box);
    if (f.control_box) j["control_box"] = box_json(*f.control_box);
    if (f.align) j["align"] = perspective_json(*f.align);
    json pool = json::array();
    for (std::size_t k = 0; k < f.cloth_tps.size(); ++k) {
      const TpsTransform& t = f.cloth_tps[k];
      ControlPointSet target{{}, t.source.grid};
      for (const auto& p : t.source.points) target.points.push_back(p + tps_displace(t, p));
      pool.push_back({{"source", cps_json(t.source)}, {"target", cps_json(target)}});
      if (k == 0) {
        write_control_points(t.source, dir / (name + ".source.json"));
        write_control_points(target, dir / (name + ".target.json"));
      }
    }
    j["tps_pool"] = pool;
    write_text(j.dump(1) + "\n", dir / (name + ".json"));
  }
  if (transforms) write_text(transform_config_to_json(*transforms) + "\n", dir / "transforms.json");
}

FrameSet read_frame_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (n.rfind("frame_", 0) == 0 && e.path().extension() == ".json" &&
        n.find('.') == n.size() - 5) {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError(dir.string() + ": no frame_*.json files");
  FrameSet out;
  for (const auto& p : files) {
    const json j = load(p);
    const std::string what = p.string();
    Frame f;
    f.image = read_image(dir / get<std::string>(j, "image", what));
    f.person_box = box_from(j.at("person_box"), what);
    f.cloth_box = box_from(j.at("cloth_box"), what);
    if (j.contains("control_box") && !j["control_box"].is_null()) {
      f.control_box = box_from(j["control_box"], what);
    }
    if (j.contains("align") && !j["align"].is_null()) f.align = perspective_from(j["align"]);
    if (j.contains("tps_pool")) {
      for (const auto& e : j["tps_pool"]) {
        ControlPointSet src = cps_from(e.at("source"));
        ControlPointSet dst = cps_from(e.at("target"));
        // Uncorresponded sets are matched first (source aligned into the target frame).
        if (e.contains("align")) {
          MatchConfig mc;
          read_opt(e, "epsilon", mc.epsilon);
          const MatchResult m = match_points(src, dst, perspective_from(e["align"]), mc);
          src = m.source;
          dst = m.target;
        }
        try {
          f.cloth_tps.push_back(fit_tps(src, dst));
        } catch (const std::exception& ex) {
          throw IoError(what + ": TPS pool entry: " + ex.what());
        }
      }
    }
    try {
      f.validate();
    } catch (const std::invalid_argument& e) {
      throw IoError(what + ": " + e.what());
    }
    out.frames.push_back(std::move(f));
  }
  if (fs::exists(dir / "transforms.json")) {
    out.transforms = transform_config_from_json(read_text(dir / "transforms.json"));
  }
  return out;
}

std::string report_to_json(const EvalReport& report, const std::vector<SweepRow>& sweep) {
  const auto score = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["threshold"] = report.threshold;
  j["operating_threshold"] = kOperatingThreshold;
  j["asr"] = report.asr;
  json frames = json::array();
  for (const auto& o : report.outcomes) {
    json f;
    f["adv_detected"] = o.adv_detected;
    f["control_detected"] = o.control_detected;
    f["adv_score"] = score(o.adv_score);
    f["control_score"] = o.control_score ? score(*o.control_score) : json(nullptr);
    frames.push_back(f);
  }
  j["frames"] = frames;
  if (!sweep.empty()) {
    json rows = json::array();
    for (const auto& r : sweep) {
      rows.push_back({{"threshold", r.threshold},
                      {"normal_accuracy", r.normal_accuracy},
                      {"asr", r.asr},
                      {"operating_point", r.operating_point}});
    }
    j["sweep"] = rows;
  }
  return j.dump(2);
}

std::string trace_csv(const std::vector<StepRecord>& trace, std::size_t n_detectors) {
  std::ostringstream os;
  os << std::setprecision(17);
  const bool weights = !trace.empty() && !trace.front().weights.empty();
  os << "step";
  for (std::size_t i = 0; i < n_detectors; ++i) os << ",loss_" << i;
  os << ",tv,objective";
  if (weights) {
    for (std::size_t i = 0; i < n_detectors; ++i) os << ",w_" << i;
  }
  os << ",lr\n";
  for (const auto& r : trace) {
    os << r.step;
    for (const double l : r.detector_loss) os << ',' << l;
    os << ',' << r.tv << ',' << r.objective;
    for (const double w : r.weights) os << ',' << w;
    os << ',' << r.learning_rate << '\n';
  }
  return os.str();
}

}  // namespace tpsadv
