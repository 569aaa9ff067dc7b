#include "tpsadv/geometry.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/LU>

namespace tpsadv {
namespace {

constexpr double kMinRcond = 1e-12;
constexpr double kDuplicateTol = 1e-9;

bool finite(const Point2& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

// LAPACK-style 1-norm estimate, capped by the pivot ratio: the estimator
// misreports exactly singular matrices whose elimination hits a zero pivot.
template <typename Lu>
double safe_rcond(const Lu& lu) {
  const auto d = lu.matrixLU().diagonal().cwiseAbs();
  const double hi = d.maxCoeff();
  if (!(hi > 0.0)) return 0.0;
  return std::min(lu.rcond(), d.minCoeff() / hi);
}

double cross(const Point2& a, const Point2& b, const Point2& c) {
  const Point2 u = b - a;
  const Point2 v = c - a;
  return u.x * v.y - u.y * v.x;
}

// True when any three of the four points are (numerically) collinear.
bool has_collinear_triple(const std::array<Point2, 4>& pts) {
  double scale = 0.0;
  for (const auto& p : pts) {
    for (const auto& q : pts) scale = std::max(scale, distance(p, q));
  }
  if (scale == 0.0) return true;
  const double tol = 1e-9 * scale * scale;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        if (std::abs(cross(pts[i], pts[j], pts[k])) <= tol) return true;
      }
    }
  }
  return false;
}

}  // namespace

double distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

void validate(const ControlPointSet& set) {
  for (const auto& p : set.points) {
    if (!finite(p)) throw std::invalid_argument("control point is not finite");
  }
  if (set.grid) {
    if (set.grid->rows <= 0 || set.grid->cols <= 0 ||
        static_cast<std::size_t>(set.grid->rows) * set.grid->cols != set.size()) {
      throw std::invalid_argument("grid dims do not match control point count");
    }
  }
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = i + 1; j < set.size(); ++j) {
      if (distance(set.points[i], set.points[j]) <= kDuplicateTol) {
        std::ostringstream msg;
        msg << "duplicate control points at indices " << i << " and " << j;
        throw std::invalid_argument(msg.str());
      }
    }
  }
}

TpsTransform TpsTransform::identity() {
  TpsTransform t;
  t.theta_x = Eigen::VectorXd::Zero(3);
  t.theta_y = Eigen::VectorXd::Zero(3);
  return t;
}

double tps_kernel(double r) {
  if (r < 0.0 || std::isnan(r)) throw std::domain_error("tps_kernel: r must be >= 0");
  if (r == 0.0) return 0.0;
  return r * r * std::log(r);
}

TpsTransform fit_tps(const ControlPointSet& source, const ControlPointSet& target) {
  if (source.size() != target.size()) {
    throw std::invalid_argument("fit_tps: source and target counts differ");
  }
  const auto n = static_cast<Eigen::Index>(source.size());
  if (n < 4) throw std::invalid_argument("fit_tps: need at least 4 control points");
  validate(source);
  for (const auto& p : target.points) {
    if (!finite(p)) throw std::invalid_argument("fit_tps: target point is not finite");
  }

  // Solve in centred, unit-scaled coordinates for conditioning, then map
  // the parameters back to pixel coordinates.
  Point2 centre;
  for (const auto& p : source.points) centre = centre + p;
  centre.x /= static_cast<double>(n);
  centre.y /= static_cast<double>(n);
  double radius = 0.0;
  for (const auto& p : source.points) radius = std::max(radius, distance(p, centre));
  const double s = 1.0 / radius;

  std::vector<Point2> local(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    local[i] = {(source.points[i].x - centre.x) * s, (source.points[i].y - centre.y) * s};
  }

  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 3, n + 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double k = tps_kernel(distance(local[i], local[j]));
      system(i, j) = k;
      system(j, i) = k;
    }
    system(i, n) = system(n, i) = 1.0;
    system(i, n + 1) = system(n + 1, i) = local[i].x;
    system(i, n + 2) = system(n + 2, i) = local[i].y;
  }

  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    rhs(i, 0) = target.points[i].x - source.points[i].x;
    rhs(i, 1) = target.points[i].y - source.points[i].y;
  }

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  const double rcond = safe_rcond(lu);
  if (!(rcond >= kMinRcond)) {
    std::ostringstream msg;
    msg << "fit_tps: system is singular or ill-conditioned (rcond = " << rcond
        << "); control points may be collinear";
    throw FitError(msg.str(), rcond);
  }
  const Eigen::MatrixXd sol = lu.solve(rhs);

  TpsTransform t;
  t.source = source;
  const double s2 = s * s;
  const double log_term = s2 * std::log(s);
  for (int axis = 0; axis < 2; ++axis) {
    Eigen::VectorXd theta(n + 3);
    // sum_i c_i |p_i - p|^2 is constant under the side conditions; it equals
    // sum_i c_i |p_i - centre|^2 and folds into the constant term.
    double quad = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double c = sol(i, axis);
      theta(i) = s2 * c;
      const double dx = source.points[i].x - centre.x;
      const double dy = source.points[i].y - centre.y;
      quad += c * (dx * dx + dy * dy);
    }
    const double a0 = sol(n, axis);
    const double a1 = sol(n + 1, axis);
    const double a2 = sol(n + 2, axis);
    theta(n) = a0 - s * a1 * centre.x - s * a2 * centre.y + log_term * quad;
    theta(n + 1) = s * a1;
    theta(n + 2) = s * a2;
    (axis == 0 ? t.theta_x : t.theta_y) = std::move(theta);
  }
  return t;
}

Point2 tps_displace(const TpsTransform& t, const Point2& p) {
  const auto n = static_cast<Eigen::Index>(t.num_points());
  double dx = t.theta_x(n) + t.theta_x(n + 1) * p.x + t.theta_x(n + 2) * p.y;
  double dy = t.theta_y(n) + t.theta_y(n + 1) * p.x + t.theta_y(n + 2) * p.y;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = tps_kernel(distance(t.source.points[i], p));
    dx += t.theta_x(i) * u;
    dy += t.theta_y(i) * u;
  }
  return {dx, dy};
}

PerspectiveTransform PerspectiveTransform::translation(double dx, double dy) {
  PerspectiveTransform t;
  t.h(0, 2) = dx;
  t.h(1, 2) = dy;
  return t;
}

std::array<double, 9> PerspectiveTransform::row_major() const {
  std::array<double, 9> v{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) v[r * 3 + c] = h(r, c);
  }
  return v;
}

PerspectiveTransform PerspectiveTransform::from_row_major(const std::array<double, 9>& v) {
  PerspectiveTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.h(r, c) = v[r * 3 + c];
  }
  if (t.h(2, 2) == 0.0 || !t.h.allFinite()) {
    throw std::invalid_argument("perspective matrix must be finite with h[2][2] != 0");
  }
  t.h /= t.h(2, 2);
  return t;
}

PerspectiveTransform fit_perspective(const std::array<Point2, 4>& source,
                                     const std::array<Point2, 4>& target) {
  if (has_collinear_triple(source) || has_collinear_triple(target)) {
    throw FitError("fit_perspective: three of the four points are collinear");
  }
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = source[i].x, y = source[i].y;
    const double u = target[i].x, v = target[i].y;
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::PartialPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  const double rcond = safe_rcond(lu);
  if (!(rcond >= kMinRcond)) throw FitError("fit_perspective: degenerate configuration", rcond);
  const Eigen::Matrix<double, 8, 1> sol = lu.solve(b);

  PerspectiveTransform t;
  t.h << sol(0), sol(1), sol(2), sol(3), sol(4), sol(5), sol(6), sol(7), 1.0;
  return t;
}

Point2 apply_perspective(const PerspectiveTransform& t, const Point2& p) {
  const Eigen::Vector3d v = t.h * Eigen::Vector3d(p.x, p.y, 1.0);
  const double mag = std::abs(t.h(2, 0) * p.x) + std::abs(t.h(2, 1) * p.y) + std::abs(t.h(2, 2));
  if (v.z() == 0.0 || std::abs(v.z()) <= 1e-14 * mag) {
    throw ProjectionError("apply_perspective: point maps to infinity");
  }
  return {v.x() / v.z(), v.y() / v.z()};
}

MatchResult match_points(const ControlPointSet& source, const ControlPointSet& target,
                         const PerspectiveTransform& align, const MatchConfig& cfg) {
  if (cfg.epsilon < 0.0) throw std::invalid_argument("match_points: epsilon must be >= 0");
  MatchResult out;
  std::vector<bool> used(target.size(), false);
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Point2 aligned = apply_perspective(align, source.points[i]);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = target.size();
    for (std::size_t j = 0; j < target.size(); ++j) {
      if (used[j]) continue;
      const double d = distance(aligned, target.points[j]);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    if (best_j == target.size() || best > cfg.epsilon) continue;
    used[best_j] = true;
    out.source.points.push_back(source.points[i]);
    out.target.points.push_back(target.points[best_j]);
    out.source_indices.push_back(i);
    out.target_indices.push_back(best_j);
  }
  return out;
}

ControlPointSet make_grid(int rows, int cols, double x0, double y0, double x1, double y1) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("make_grid: rows and cols must be >= 1");
  ControlPointSet set;
  set.grid = GridDims{rows, cols};
  set.points.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    const double y = rows == 1 ? y0 : y0 + (y1 - y0) * r / (rows - 1);
    for (int c = 0; c < cols; ++c) {
      const double x = cols == 1 ? x0 : x0 + (x1 - x0) * c / (cols - 1);
      set.points.push_back({x, y});
    }
  }
  return set;
}

}  // namespace tpsadv
