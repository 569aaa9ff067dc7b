#pragma once

#include <array>
#include <filesystem>
#include <string_view>
#include <vector>

#include "tpsadv/image.hpp"

namespace tpsadv {

struct ColorPair {
  Rgb digital{};
  Rgb printed{};
};

/// Quadratic polynomial map from digital to printed colour, one 10-term
/// polynomial per output channel over the basis
///   1, r, g, b, r^2, g^2, b^2, rg, rb, gb.
struct ColorModel {
  static constexpr int kTerms = 10;
  static constexpr std::array<std::string_view, kTerms> kBasisNames = {
      "1", "r", "g", "b", "r2", "g2", "b2", "rg", "rb", "gb"};

  std::array<std::array<double, kTerms>, 3> coeffs{};
  /// RMSE of the unclamped prediction over the training pairs (all channels).
  double train_rmse = 0.0;

  static ColorModel identity();
  static std::array<double, kTerms> basis(const Rgb& c);
  /// Unclamped polynomial value.
  Rgb evaluate(const Rgb& c) const;
  /// d output[o] / d input[i] at c.
  std::array<Rgb, 3> jacobian(const Rgb& c) const;
  bool is_identity() const;
};

/// Per-channel least squares over the quadratic basis. Requires >= 10 pairs and
/// a full-rank design matrix (throws FitError naming the deficient terms).
ColorModel fit_color(const std::vector<ColorPair>& pairs);

/// Per-pixel polynomial map, clamped to [0,1].
Image apply_color(const ColorModel& m, const Image& img);

/// Vector-Jacobian product of apply_color at `img`.
Image apply_color_vjp(const ColorModel& m, const Image& img, const Image& grad_out);

double color_rmse(const ColorModel& m, const std::vector<ColorPair>& pairs);

/// CSV rows "r_dig,g_dig,b_dig,r_phys,g_phys,b_phys"; a non-numeric first line is a header.
std::vector<ColorPair> read_palette_csv(const std::filesystem::path& path);
void write_palette_csv(const std::vector<ColorPair>& pairs, const std::filesystem::path& path);

}  // namespace tpsadv
