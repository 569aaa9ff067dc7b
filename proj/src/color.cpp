#include "tpsadv/color.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <Eigen/SVD>

#include "tpsadv/geometry.hpp"
#include "tpsadv/image_io.hpp"

namespace tpsadv {

ColorModel ColorModel::identity() {
  ColorModel m;
  for (int c = 0; c < 3; ++c) m.coeffs[c][1 + c] = 1.0;
  return m;
}

std::array<double, ColorModel::kTerms> ColorModel::basis(const Rgb& c) {
  const double r = c[0], g = c[1], b = c[2];
  return {1.0, r, g, b, r * r, g * g, b * b, r * g, r * b, g * b};
}

Rgb ColorModel::evaluate(const Rgb& c) const {
  const auto phi = basis(c);
  Rgb out{};
  for (int o = 0; o < 3; ++o) {
    double acc = 0.0;
    for (int k = 0; k < kTerms; ++k) acc += coeffs[o][k] * phi[k];
    out[o] = acc;
  }
  return out;
}

std::array<Rgb, 3> ColorModel::jacobian(const Rgb& c) const {
  const double r = c[0], g = c[1], b = c[2];
  std::array<Rgb, 3> j{};
  for (int o = 0; o < 3; ++o) {
    const auto& k = coeffs[o];
    j[o][0] = k[1] + 2.0 * k[4] * r + k[7] * g + k[8] * b;
    j[o][1] = k[2] + 2.0 * k[5] * g + k[7] * r + k[9] * b;
    j[o][2] = k[3] + 2.0 * k[6] * b + k[8] * r + k[9] * g;
  }
  return j;
}

bool ColorModel::is_identity() const {
  const ColorModel id = identity();
  return coeffs == id.coeffs;
}

ColorModel fit_color(const std::vector<ColorPair>& pairs) {
  if (pairs.size() < static_cast<std::size_t>(ColorModel::kTerms)) {
    throw FitError("fit_color: need at least 10 colour pairs, got " + std::to_string(pairs.size()));
  }
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd design(n, ColorModel::kTerms);
  Eigen::MatrixXd target(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto phi = ColorModel::basis(pairs[i].digital);
    for (int k = 0; k < ColorModel::kTerms; ++k) design(i, k) = phi[k];
    for (int c = 0; c < 3; ++c) target(i, c) = pairs[i].printed[c];
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double tol = 1e-10 * sv(0);
  if (sv(ColorModel::kTerms - 1) <= tol) {
    // Name the basis terms carrying the null-space directions.
    std::ostringstream msg;
    msg << "fit_color: design matrix is rank deficient; degenerate directions:";
    for (int k = 0; k < ColorModel::kTerms; ++k) {
      if (sv(k) > tol) continue;
      const Eigen::VectorXd v = svd.matrixV().col(k);
      msg << " [";
      bool first = true;
      for (int t = 0; t < ColorModel::kTerms; ++t) {
        if (std::abs(v(t)) < 1e-6) continue;
        msg << (first ? "" : " ") << ColorModel::kBasisNames[t];
        first = false;
      }
      msg << "]";
    }
    throw FitError(msg.str(), sv(ColorModel::kTerms - 1) / sv(0));
  }
  const Eigen::MatrixXd sol = svd.solve(target);

  ColorModel m;
  for (int o = 0; o < 3; ++o) {
    for (int k = 0; k < ColorModel::kTerms; ++k) m.coeffs[o][k] = sol(k, o);
  }
  m.train_rmse = color_rmse(m, pairs);
  return m;
}

Image apply_color(const ColorModel& m, const Image& img) {
  Image out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      Rgb v = m.evaluate(img.pixel(x, y));
      for (double& c : v) c = std::clamp(c, 0.0, 1.0);
      out.set_pixel(x, y, v);
    }
  }
  return out;
}

Image apply_color_vjp(const ColorModel& m, const Image& img, const Image& grad_out) {
  Image grad(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Rgb in = img.pixel(x, y);
      const Rgb out = m.evaluate(in);
      const auto j = m.jacobian(in);
      Rgb g{};
      for (int o = 0; o < 3; ++o) {
        if (out[o] < 0.0 || out[o] > 1.0) continue;
        const double go = grad_out.at(x, y, o);
        for (int i = 0; i < 3; ++i) g[i] += j[o][i] * go;
      }
      grad.set_pixel(x, y, g);
    }
  }
  return grad;
}

double color_rmse(const ColorModel& m, const std::vector<ColorPair>& pairs) {
  if (pairs.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& p : pairs) {
    const Rgb pred = m.evaluate(p.digital);
    for (int c = 0; c < 3; ++c) acc += (pred[c] - p.printed[c]) * (pred[c] - p.printed[c]);
  }
  return std::sqrt(acc / (3.0 * static_cast<double>(pairs.size())));
}

std::vector<ColorPair> read_palette_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open palette: " + path.string());
  std::vector<ColorPair> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    std::array<double, 6> v{};
    bool ok = true;
    for (double& x : v) ok = ok && static_cast<bool>(row >> x);
    if (!ok) {
      if (line_no == 1 && pairs.empty()) continue;  // header
      throw IoError("palette line " + std::to_string(line_no) + ": expected 6 numbers");
    }
    ColorPair p;
    for (int c = 0; c < 3; ++c) {
      p.digital[c] = v[c];
      p.printed[c] = v[3 + c];
    }
    for (double x : v) {
      if (!(x >= 0.0 && x <= 1.0)) {
        throw IoError("palette line " + std::to_string(line_no) + ": value outside [0,1]");
      }
    }
    pairs.push_back(p);
  }
  return pairs;
}

void write_palette_csv(const std::vector<ColorPair>& pairs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.precision(17);
  out << "r_dig,g_dig,b_dig,r_phys,g_phys,b_phys\n";
  for (const auto& p : pairs) {
    out << p.digital[0] << ',' << p.digital[1] << ',' << p.digital[2] << ',' << p.printed[0] << ','
        << p.printed[1] << ',' << p.printed[2] << '\n';
  }
}

}  // namespace tpsadv
