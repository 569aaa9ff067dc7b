#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace tpsadv {

/// Pixel location: x is the column, y the row, origin at the top-left pixel.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
  bool operator==(const Point2&) const = default;
};

double distance(const Point2& a, const Point2& b);

/// Raised when a transform cannot be fitted (singular system, degenerate layout).
class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& what, double rcond = 0.0)
      : std::runtime_error(what), rcond_(rcond) {}
  /// Reciprocal condition estimate of the system that failed (0 if not computed).
  double rcond() const { return rcond_; }

 private:
  double rcond_;
};

/// Raised by apply_perspective when a point maps to the line at infinity.
class ProjectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridDims {
  int rows = 0;
  int cols = 0;
  bool operator==(const GridDims&) const = default;
};

struct ControlPointSet {
  std::vector<Point2> points;
  /// Present when the points form a row-major checkerboard grid.
  std::optional<GridDims> grid;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Throws std::invalid_argument on non-finite, duplicate or grid-inconsistent input.
void validate(const ControlPointSet& set);

/// Thin-plate-spline displacement field, one parameter vector per axis.
///
/// Each parameter vector has length n + 3 and layout [c_1..c_n, a_0, a_1, a_2]:
///   disp(p) = a_0 + a_1 * x + a_2 * y + sum_i c_i * U(|p_i - p|)
/// where p_i are the source control points.
struct TpsTransform {
  ControlPointSet source;
  Eigen::VectorXd theta_x;
  Eigen::VectorXd theta_y;

  std::size_t num_points() const { return source.size(); }
  /// Transform with no control points and zero displacement everywhere.
  static TpsTransform identity();
};

/// Homography normalized so that h(2,2) == 1.
struct PerspectiveTransform {
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();

  static PerspectiveTransform identity() { return {}; }
  static PerspectiveTransform translation(double dx, double dy);
  std::array<double, 9> row_major() const;
  static PerspectiveTransform from_row_major(const std::array<double, 9>& v);
};

struct MatchConfig {
  double epsilon = 0.5;  // pixels
};

struct MatchResult {
  ControlPointSet source;
  ControlPointSet target;
  std::vector<std::size_t> source_indices;
  std::vector<std::size_t> target_indices;
};

/// Radial basis U(r) = r^2 ln r with U(0) = 0. Throws std::domain_error for r < 0.
double tps_kernel(double r);

/// Fits the TPS mapping source -> target (displacements target - source).
/// Requires n >= 4 points per set, equal counts, no duplicates and a
/// well-conditioned system (reciprocal condition >= 1e-12).
TpsTransform fit_tps(const ControlPointSet& source, const ControlPointSet& target);

/// Displacement at p; the mapped location is p + tps_displace(t, p).
Point2 tps_displace(const TpsTransform& t, const Point2& p);

PerspectiveTransform fit_perspective(const std::array<Point2, 4>& source,
                                     const std::array<Point2, 4>& target);

Point2 apply_perspective(const PerspectiveTransform& t, const Point2& p);

/// Greedy nearest-neighbour matching after aligning source into the target
/// frame. Each target point is consumed at most once; ties go to the lowest
/// target index; source points are visited in order.
MatchResult match_points(const ControlPointSet& source, const ControlPointSet& target,
                         const PerspectiveTransform& align, const MatchConfig& cfg);

/// Regular rows x cols grid spanning [x0, x1] x [y0, y1] (inclusive), row-major.
ControlPointSet make_grid(int rows, int cols, double x0, double y0, double x1, double y1);

}  // namespace tpsadv
