#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tpsadv/image.hpp"

namespace tpsadv {

struct Detection {
  BoxMask box;
  double person_prob = 0.0;
};

/// Maps an image to scored person boxes. `detect` must be deterministic for a
/// fixed instance and image; implementations are immutable after construction.
class Detector {
 public:
  virtual ~Detector() = default;

  virtual std::vector<Detection> detect(const Image& img) const = 0;

  /// Whether grad_person_prob is available.
  virtual bool has_gradient() const { return false; }

  /// Gradient of detection `index`'s person probability w.r.t. every pixel of `img`.
  virtual Image grad_person_prob(const Image& img, std::size_t index) const;

  virtual std::string name() const = 0;
};

using DetectorPtr = std::shared_ptr<const Detector>;

double sigmoid(double z);

/// Boxes of size (base_w * s, base_h * s) for each scale s, placed on a
/// stride grid covering the frame (last row/column flush with the border).
std::vector<BoxMask> anchor_grid(int frame_width, int frame_height, int base_width,
                                 int base_height, int stride, const std::vector<double>& scales);

/// Correlation detector: person_prob = sigmoid(alpha * (corr - beta)), where
/// corr is the mean product between the box content, area-resampled to the
/// template dims, and the template.
///
/// The template may hold signed values.
class MeanTemplateDetector final : public Detector {
 public:
  MeanTemplateDetector(std::vector<BoxMask> anchors, Image templ, double alpha, double beta);

  std::vector<Detection> detect(const Image& img) const override;
  bool has_gradient() const override { return true; }
  Image grad_person_prob(const Image& img, std::size_t index) const override;
  std::string name() const override { return "mean_template"; }

  /// Template correlation for a single anchor.
  double correlation(const Image& img, std::size_t index) const;

  const std::vector<BoxMask>& anchors() const { return anchors_; }
  const Image& templ() const { return template_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

 private:
  const Image& effective_template(std::size_t index) const;

  std::vector<BoxMask> anchors_;
  Image template_;
  double alpha_;
  double beta_;
  // Template pulled back through the area resampling, one per distinct anchor size.
  std::vector<Image> pulled_back_;
  std::vector<std::size_t> anchor_to_pulled_;
};

/// Linear-logit detector: person_prob = sigmoid(<weights_j, box_j pixels> + bias).
class LinearDetector final : public Detector {
 public:
  LinearDetector(std::vector<BoxMask> anchors, std::vector<Image> weights, double bias);

  /// Weights i.i.d. N(0, weight_scale^2), deterministic in `seed`.
  static LinearDetector from_seed(std::vector<BoxMask> anchors, std::uint64_t seed,
                                  double weight_scale, double bias);

  std::vector<Detection> detect(const Image& img) const override;
  bool has_gradient() const override { return true; }
  Image grad_person_prob(const Image& img, std::size_t index) const override;
  std::string name() const override { return "linear"; }

  const std::vector<BoxMask>& anchors() const { return anchors_; }
  const std::vector<Image>& weights() const { return weights_; }
  double bias() const { return bias_; }

 private:
  std::vector<BoxMask> anchors_;
  std::vector<Image> weights_;
  double bias_;
};

/// Area-averaging resize (each output pixel is the mean of the input area it covers).
Image resize_area(const Image& img, int out_width, int out_height);
/// Adjoint of resize_area.
Image resize_area_adjoint(const Image& grad_out, int in_width, int in_height);

struct AttackLossConfig {
  double nu = 0.3;   // confidence floor
  double eta = 0.0;  // overlap threshold, pixels of intersection area
  void validate() const;
};

struct AttackLossValue {
  double value = 0.0;
  /// Detection whose own probability attains the loss; empty when the loss is
  /// 0 (no overlapping box) or sits at the floor nu.
  std::optional<std::size_t> active;
};

/// max_j max(p_j, nu) * [ |B_j ∩ person_box| > eta ], or 0 when no box overlaps enough.
AttackLossValue attack_loss_detail(const std::vector<Detection>& dets, const BoxMask& person_box,
                                   const AttackLossConfig& cfg);
double attack_loss(const std::vector<Detection>& dets, const BoxMask& person_box,
                   const AttackLossConfig& cfg);

constexpr double kTvEpsilon = 1e-8;

/// Isotropic total variation with forward differences (zero past the last row/column).
double tv_norm(const Image& patch, double eps = kTvEpsilon);
Image tv_norm_grad(const Image& patch, double eps = kTvEpsilon);

}  // namespace tpsadv
