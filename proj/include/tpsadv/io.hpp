#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tpsadv/attack.hpp"
#include "tpsadv/harness.hpp"
#include "tpsadv/image_io.hpp"

namespace tpsadv {

// JSON and CSV exchange formats. Relative paths inside a JSON file are
// resolved against the directory holding that file. Malformed input throws IoError.

/// { "grid": [rows, cols] | null, "points": [[x, y], ...] }
std::string control_points_to_json(const ControlPointSet& set);
ControlPointSet control_points_from_json(const std::string& text);
ControlPointSet read_control_points(const std::filesystem::path& path);
void write_control_points(const ControlPointSet& set, const std::filesystem::path& path);

/// Nine numbers, row-major.
PerspectiveTransform read_perspective(const std::filesystem::path& path);
void write_perspective(const PerspectiveTransform& t, const std::filesystem::path& path);

/// { "basis": [...10 labels], "coefficients": { "r": [...], "g": [...], "b": [...] }, "train_rmse": x }
void write_color_model(const ColorModel& m, const std::filesystem::path& path);
ColorModel read_color_model(const std::filesystem::path& path);

/// Detector spec:
///   { "type": "mean_template", "anchors": ..., "template": "file.pf32", "alpha": a, "beta": b }
///   { "type": "linear", "anchors": ..., "seed": s, "weight_scale": w, "bias": b }
/// where anchors is a list of [left, top, right, bottom] or
///   { "frame": [w, h], "base": [w, h], "stride": s, "scales": [...] }.
DetectorPtr read_detector(const std::filesystem::path& path);
/// Writes the detector spec JSON plus its template image.
void write_mean_template_spec(const MeanTemplateDetector& d, const std::filesystem::path& spec_path,
                              const std::filesystem::path& template_path);
std::string detections_to_json(const std::vector<Detection>& dets);

/// Keys mirror the struct fields; missing keys keep their defaults.
SceneSpec scene_spec_from_json(const std::string& text);
std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec read_scene_spec(const std::filesystem::path& path);

/// Ranges as [lo, hi].
std::string transform_config_to_json(const TransformConfig& cfg);
TransformConfig transform_config_from_json(const std::string& text);

/// Frame directory: frame_NNNN.json per frame (image path, boxes, TPS pool as
/// corresponded control-point sets, optional control box and alignment),
/// frame_NNNN.pf32 images, optional PNG previews, and transforms.json.
struct FrameSet {
  std::vector<Frame> frames;
  std::optional<TransformConfig> transforms;
};

void write_frame_dir(const std::vector<Frame>& frames, const std::optional<TransformConfig>& transforms,
                     const std::filesystem::path& dir, bool png_preview);
FrameSet read_frame_dir(const std::filesystem::path& dir);

std::string report_to_json(const EvalReport& report, const std::vector<SweepRow>& sweep);

/// step, loss_0..loss_{N-1}, tv, objective, w_0..w_{N-1} (min-max only), lr
std::string trace_csv(const std::vector<StepRecord>& trace, std::size_t n_detectors);

void write_text(const std::string& text, const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

}  // namespace tpsadv
