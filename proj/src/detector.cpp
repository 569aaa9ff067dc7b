#include "tpsadv/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tpsadv/rng.hpp"

namespace tpsadv {
namespace {

// 1-D area-averaging weights: out[j] = sum_i w[j][i] * in[i].
struct AreaTap {
  int src;
  double weight;
};

std::vector<std::vector<AreaTap>> area_weights(int in_len, int out_len) {
  std::vector<std::vector<AreaTap>> taps(out_len);
  const double ratio = static_cast<double>(in_len) / out_len;
  for (int j = 0; j < out_len; ++j) {
    const double lo = j * ratio;
    const double hi = (j + 1) * ratio;
    for (int i = static_cast<int>(std::floor(lo)); i < in_len && i < hi; ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) taps[j].push_back({i, overlap / ratio});
    }
  }
  return taps;
}

double logistic_slope(double p) { return p * (1.0 - p); }

void check_anchors(const std::vector<BoxMask>& anchors, const Image& img) {
  for (const auto& a : anchors) {
    if (!img.bounds().contains(a)) throw std::invalid_argument("detector anchor outside image bounds");
  }
}

// <weights, img restricted to box>
double box_dot(const Image& img, const BoxMask& box, const Image& weights) {
  double acc = 0.0;
  for (int y = 0; y < box.height(); ++y) {
    const double* row = img.data().data() + img.index(box.left, box.top + y, 0);
    const double* w = weights.data().data() + weights.index(0, y, 0);
    for (int k = 0; k < box.width() * Image::kChannels; ++k) acc += row[k] * w[k];
  }
  return acc;
}

Image scatter(const Image& img, const BoxMask& box, const Image& local, double scale) {
  Image grad(img.width(), img.height());
  for (int y = 0; y < box.height(); ++y) {
    for (int x = 0; x < box.width(); ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        grad.at(box.left + x, box.top + y, c) = scale * local.at(x, y, c);
      }
    }
  }
  return grad;
}

}  // namespace

Image Detector::grad_person_prob(const Image&, std::size_t) const {
  throw std::logic_error("detector '" + name() +
                         "' has no analytic gradient; use the smoothed zeroth-order backend");
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<BoxMask> anchor_grid(int frame_width, int frame_height, int base_width,
                                 int base_height, int stride, const std::vector<double>& scales) {
  if (stride <= 0) throw std::invalid_argument("anchor_grid: stride must be positive");
  std::vector<BoxMask> anchors;
  for (const double s : scales) {
    const int w = static_cast<int>(std::lround(base_width * s));
    const int h = static_cast<int>(std::lround(base_height * s));
    if (w <= 0 || h <= 0 || w > frame_width || h > frame_height) {
      throw std::invalid_argument("anchor_grid: anchor does not fit in the frame");
    }
    std::vector<int> xs, ys;
    for (int x = 0; x + w <= frame_width; x += stride) xs.push_back(x);
    if (xs.back() + w < frame_width) xs.push_back(frame_width - w);
    for (int y = 0; y + h <= frame_height; y += stride) ys.push_back(y);
    if (ys.back() + h < frame_height) ys.push_back(frame_height - h);
    for (const int y : ys) {
      for (const int x : xs) anchors.push_back({x, y, x + w, y + h});
    }
  }
  return anchors;
}

Image resize_area(const Image& img, int out_width, int out_height) {
  const auto wx = area_weights(img.width(), out_width);
  const auto wy = area_weights(img.height(), out_height);
  Image horiz(out_width, img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < out_width; ++x) {
      for (const auto& t : wx[x]) {
        for (int c = 0; c < Image::kChannels; ++c) horiz.at(x, y, c) += t.weight * img.at(t.src, y, c);
      }
    }
  }
  Image out(out_width, out_height);
  for (int y = 0; y < out_height; ++y) {
    for (const auto& t : wy[y]) {
      for (int x = 0; x < out_width; ++x) {
        for (int c = 0; c < Image::kChannels; ++c) out.at(x, y, c) += t.weight * horiz.at(x, t.src, c);
      }
    }
  }
  return out;
}

Image resize_area_adjoint(const Image& grad_out, int in_width, int in_height) {
  const auto wx = area_weights(in_width, grad_out.width());
  const auto wy = area_weights(in_height, grad_out.height());
  Image horiz(grad_out.width(), in_height);
  for (int y = 0; y < grad_out.height(); ++y) {
    for (const auto& t : wy[y]) {
      for (int x = 0; x < grad_out.width(); ++x) {
        for (int c = 0; c < Image::kChannels; ++c) horiz.at(x, t.src, c) += t.weight * grad_out.at(x, y, c);
      }
    }
  }
  Image out(in_width, in_height);
  for (int y = 0; y < in_height; ++y) {
    for (int x = 0; x < grad_out.width(); ++x) {
      for (const auto& t : wx[x]) {
        for (int c = 0; c < Image::kChannels; ++c) out.at(t.src, y, c) += t.weight * horiz.at(x, y, c);
      }
    }
  }
  return out;
}

MeanTemplateDetector::MeanTemplateDetector(std::vector<BoxMask> anchors, Image templ, double alpha,
                                           double beta)
    : anchors_(std::move(anchors)), template_(std::move(templ)), alpha_(alpha), beta_(beta) {
  if (template_.empty()) throw std::invalid_argument("mean_template: empty template");
  const double norm = 1.0 / static_cast<double>(template_.size());
  for (const auto& a : anchors_) {
    if (a.width() < template_.width() || a.height() < template_.height()) {
      throw std::invalid_argument("mean_template: template larger than an anchor");
    }
    std::size_t slot = pulled_back_.size();
    for (std::size_t k = 0; k < anchor_to_pulled_.size(); ++k) {
      const BoxMask& other = anchors_[k];
      if (other.width() == a.width() && other.height() == a.height()) {
        slot = anchor_to_pulled_[k];
        break;
      }
    }
    if (slot == pulled_back_.size()) {
      Image pulled = resize_area_adjoint(template_, a.width(), a.height());
      pulled *= norm;
      pulled_back_.push_back(std::move(pulled));
    }
    anchor_to_pulled_.push_back(slot);
  }
}

const Image& MeanTemplateDetector::effective_template(std::size_t index) const {
  return pulled_back_[anchor_to_pulled_[index]];
}

double MeanTemplateDetector::correlation(const Image& img, std::size_t index) const {
  return box_dot(img, anchors_.at(index), effective_template(index));
}

std::vector<Detection> MeanTemplateDetector::detect(const Image& img) const {
  check_anchors(anchors_, img);
  std::vector<Detection> dets;
  dets.reserve(anchors_.size());
  for (std::size_t j = 0; j < anchors_.size(); ++j) {
    dets.push_back({anchors_[j], sigmoid(alpha_ * (correlation(img, j) - beta_))});
  }
  return dets;
}

Image MeanTemplateDetector::grad_person_prob(const Image& img, std::size_t index) const {
  check_anchors(anchors_, img);
  const double p = sigmoid(alpha_ * (correlation(img, index) - beta_));
  return scatter(img, anchors_.at(index), effective_template(index), alpha_ * logistic_slope(p));
}

LinearDetector::LinearDetector(std::vector<BoxMask> anchors, std::vector<Image> weights, double bias)
    : anchors_(std::move(anchors)), weights_(std::move(weights)), bias_(bias) {
  if (anchors_.size() != weights_.size()) {
    throw std::invalid_argument("linear detector: one weight array per anchor required");
  }
  for (std::size_t j = 0; j < anchors_.size(); ++j) {
    if (weights_[j].width() != anchors_[j].width() || weights_[j].height() != anchors_[j].height()) {
      throw std::invalid_argument("linear detector: weight dims do not match anchor dims");
    }
  }
}

LinearDetector LinearDetector::from_seed(std::vector<BoxMask> anchors, std::uint64_t seed,
                                         double weight_scale, double bias) {
  std::vector<Image> weights;
  weights.reserve(anchors.size());
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    Rng rng = make_rng(seed, {j});
    std::normal_distribution<double> normal(0.0, weight_scale);
    Image w(anchors[j].width(), anchors[j].height());
    for (double& v : w.data()) v = normal(rng);
    weights.push_back(std::move(w));
  }
  return LinearDetector(std::move(anchors), std::move(weights), bias);
}

std::vector<Detection> LinearDetector::detect(const Image& img) const {
  check_anchors(anchors_, img);
  std::vector<Detection> dets;
  dets.reserve(anchors_.size());
  for (std::size_t j = 0; j < anchors_.size(); ++j) {
    dets.push_back({anchors_[j], sigmoid(box_dot(img, anchors_[j], weights_[j]) + bias_)});
  }
  return dets;
}

Image LinearDetector::grad_person_prob(const Image& img, std::size_t index) const {
  check_anchors(anchors_, img);
  const BoxMask& box = anchors_.at(index);
  const double p = sigmoid(box_dot(img, box, weights_[index]) + bias_);
  return scatter(img, box, weights_[index], logistic_slope(p));
}

void AttackLossConfig::validate() const {
  if (!(nu >= 0.0 && nu <= 1.0)) throw std::invalid_argument("attack loss: nu must be in [0,1]");
  if (!(eta >= 0.0)) throw std::invalid_argument("attack loss: eta must be >= 0");
}

AttackLossValue attack_loss_detail(const std::vector<Detection>& dets, const BoxMask& person_box,
                                   const AttackLossConfig& cfg) {
  AttackLossValue out;
  bool any = false;
  for (std::size_t j = 0; j < dets.size(); ++j) {
    if (!(static_cast<double>(intersection_area(dets[j].box, person_box)) > cfg.eta)) continue;
    const double p = dets[j].person_prob;
    const double v = std::max(p, cfg.nu);
    if (!any || v > out.value) {
      out.value = v;
      out.active = p > cfg.nu ? std::optional<std::size_t>(j) : std::nullopt;
      any = true;
    }
  }
  return out;
}

double attack_loss(const std::vector<Detection>& dets, const BoxMask& person_box,
                   const AttackLossConfig& cfg) {
  return attack_loss_detail(dets, person_box, cfg).value;
}

double tv_norm(const Image& patch, double eps) {
  const int w = patch.width();
  const int h = patch.height();
  double acc = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        const double v = patch.at(x, y, c);
        const double dv = y + 1 < h ? patch.at(x, y + 1, c) - v : 0.0;
        const double dh = x + 1 < w ? patch.at(x + 1, y, c) - v : 0.0;
        acc += std::sqrt(dv * dv + dh * dh + eps);
      }
    }
  }
  return acc;
}

Image tv_norm_grad(const Image& patch, double eps) {
  const int w = patch.width();
  const int h = patch.height();
  Image g(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        const double v = patch.at(x, y, c);
        const double dv = y + 1 < h ? patch.at(x, y + 1, c) - v : 0.0;
        const double dh = x + 1 < w ? patch.at(x + 1, y, c) - v : 0.0;
        const double s = std::sqrt(dv * dv + dh * dh + eps);
        if (s == 0.0) continue;
        if (y + 1 < h) {
          g.at(x, y + 1, c) += dv / s;
          g.at(x, y, c) -= dv / s;
        }
        if (x + 1 < w) {
          g.at(x + 1, y, c) += dh / s;
          g.at(x, y, c) -= dh / s;
        }
      }
    }
  }
  return g;
}

}  // namespace tpsadv
