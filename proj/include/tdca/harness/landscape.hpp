#pragma once

// Trajectory analysis: PCA planes through recorded parameter snapshots, loss
// surfaces on those planes, and 2-D update fields on the mixed Gaussian.

#include "tdca/error.hpp"
#include "tdca/gaussian.hpp"
#include "tdca/harness/report.hpp"
#include "tdca/linalg.hpp"
#include "tdca/nn.hpp"
#include "tdca/tdca.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace tdca::harness {

struct TrajectoryLog {
  std::string method;
  std::vector<Vector> snapshots;  // theta_0 .. theta_steps
};

inline TrajectoryLog to_trajectory(std::string method, const std::vector<ParamVector>& snaps) {
  TrajectoryLog t;
  t.method = std::move(method);
  for (const auto& p : snaps) t.snapshots.push_back(p.values);
  return t;
}

struct Plane {
  Vector origin;
  Vector d1;
  Vector d2;
  std::array<double, 2> explained{0.0, 0.0};  // variance fractions of the two directions
};

namespace pca {

inline void orthonormalize(Vector& a, Vector& b) {
  for (int pass = 0; pass < 2; ++pass) {
    a.normalize();
    b -= a.dot(b) * a;
    b.normalize();
  }
}

struct Pca {
  std::vector<Vector> directions;  // descending variance
  std::vector<double> variances;
  double total = 0.0;
};

/// Principal directions of the rows of `x` via the n x n Gram matrix.
inline Pca snapshot_pca(const Matrix& x, std::size_t keep) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  const Matrix gram = centered * centered.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const Eigen::VectorXd vals = es.eigenvalues();
  const Eigen::MatrixXd vecs = es.eigenvectors();
  Pca out;
  out.total = std::max(0.0, vals.sum());
  const Eigen::Index n = vals.size();
  for (std::size_t k = 0; k < keep && static_cast<Eigen::Index>(k) < n; ++k) {
    const Eigen::Index idx = n - 1 - static_cast<Eigen::Index>(k);
    const double lambda = std::max(0.0, vals[idx]);
    out.variances.push_back(lambda);
    Vector d = centered.transpose() * vecs.col(idx);
    const double norm = d.norm();
    if (norm > 0.0) d /= norm;
    out.directions.push_back(d);
  }
  return out;
}

inline Matrix stack(const std::vector<const TrajectoryLog*>& logs) {
  std::size_t rows = 0;
  Eigen::Index dim = -1;
  for (const auto* l : logs) {
    for (const auto& s : l->snapshots) {
      if (dim < 0) dim = s.size();
      detail::require_dims(s.size() == dim, "trajectories do not share one architecture");
      ++rows;
    }
  }
  Matrix x(static_cast<Eigen::Index>(rows), std::max<Eigen::Index>(dim, 0));
  Eigen::Index r = 0;
  for (const auto* l : logs) {
    for (const auto& s : l->snapshots) x.row(r++) = s.transpose();
  }
  return x;
}

}  // namespace pca

/// Plane through the first snapshot of `a` spanned by the top two principal
/// components of both trajectories' snapshots.
inline Plane pca_plane(const TrajectoryLog& a, const TrajectoryLog& b) {
  const Matrix x = pca::stack({&a, &b});
  detail::require_dims(x.rows() >= 3, "pca_plane needs at least three snapshots, got " + std::to_string(x.rows()));
  const auto comps = pca::snapshot_pca(x, 2);
  const double top = comps.variances.empty() ? 0.0 : comps.variances[0];
  if (comps.variances.size() < 2 || top <= 0.0 || comps.variances[1] <= 1e-12 * top) {
    throw DimensionError("degenerate snapshot set: rank < 2, no plane to span");
  }
  Plane p;
  p.origin = a.snapshots.front();
  p.d1 = comps.directions[0];
  p.d2 = comps.directions[1];
  pca::orthonormalize(p.d1, p.d2);
  p.explained = {comps.variances[0] / comps.total, comps.variances[1] / comps.total};
  return p;
}

/// Plane from explicit directions (orthonormalized here).
inline Plane make_plane(Vector origin, Vector d1, Vector d2) {
  detail::require_dims(origin.size() == d1.size() && d1.size() == d2.size(), "plane vectors differ in length");
  Plane p{std::move(origin), std::move(d1), std::move(d2), {0.0, 0.0}};
  pca::orthonormalize(p.d1, p.d2);
  detail::require_value(p.d1.allFinite() && p.d2.allFinite(), "plane directions are degenerate");
  return p;
}

struct ProjectedPoint {
  double u = 0.0;
  double v = 0.0;
  double residual = 0.0;  // distance from the plane
};

inline std::vector<ProjectedPoint> project(const Plane& p, const TrajectoryLog& t) {
  std::vector<ProjectedPoint> out;
  for (const auto& s : t.snapshots) {
    detail::require_dims(s.size() == p.origin.size(), "snapshot does not match the plane's dimension");
    const Vector delta = s - p.origin;
    ProjectedPoint q;
    q.u = delta.dot(p.d1);
    q.v = delta.dot(p.d2);
    q.residual = (delta - q.u * p.d1 - q.v * p.d2).norm();
    out.push_back(q);
  }
  return out;
}

/// Angle in degrees (0..90) between the first principal directions of two
/// trajectories taken separately.
inline double principal_angle_degrees(const TrajectoryLog& a, const TrajectoryLog& b) {
  auto first_pc = [](const TrajectoryLog& t) {
    const Matrix x = pca::stack({&t});
    detail::require_dims(x.rows() >= 2, "trajectory needs at least two snapshots");
    const auto comps = pca::snapshot_pca(x, 1);
    if (comps.variances.empty() || comps.variances[0] <= 0.0) {
      throw DimensionError("trajectory '" + t.method + "' never moves");
    }
    return comps.directions[0];
  };
  const double c = std::clamp(std::abs(first_pc(a).dot(first_pc(b))), 0.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

struct GridSpec {
  double u_min = -1.0;
  double u_max = 1.0;
  double v_min = -1.0;
  double v_max = 1.0;
  std::size_t points = 21;  // per axis

  double u(std::size_t i) const { return axis(u_min, u_max, i); }
  double v(std::size_t j) const { return axis(v_min, v_max, j); }

 private:
  double axis(double lo, double hi, std::size_t i) const {
    if (points == 1) return 0.5 * (lo + hi);
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
};

/// Bounding box of projected trajectories widened by `margin` of its extent.
inline GridSpec grid_around(const std::vector<std::vector<ProjectedPoint>>& paths, std::size_t points, double margin) {
  GridSpec g;
  g.points = points;
  double umin = 0.0, umax = 0.0, vmin = 0.0, vmax = 0.0;
  for (const auto& path : paths) {
    for (const auto& q : path) {
      umin = std::min(umin, q.u);
      umax = std::max(umax, q.u);
      vmin = std::min(vmin, q.v);
      vmax = std::max(vmax, q.v);
    }
  }
  const double du = std::max(umax - umin, 1e-6) * margin;
  const double dv = std::max(vmax - vmin, 1e-6) * margin;
  g.u_min = umin - du;
  g.u_max = umax + du;
  g.v_min = vmin - dv;
  g.v_max = vmax + dv;
  return g;
}

struct LandscapeGrid {
  Plane plane;
  GridSpec spec;
  Matrix loss;      // points x points, row = u index
  Matrix accuracy;
};

inline LandscapeGrid landscape_eval(const std::vector<LayerSpec>& specs, const Matrix& inputs, const Matrix& targets,
                                    std::span<const std::uint8_t> labels, const Plane& plane, const GridSpec& grid) {
  detail::require_dims(static_cast<std::size_t>(plane.origin.size()) == parameter_count(specs),
                       "plane dimension does not match the architecture");
  detail::require_value(grid.points >= 1, "landscape grid needs at least one point per axis");
  LandscapeGrid out{plane, grid, Matrix(grid.points, grid.points), Matrix(grid.points, grid.points)};
  ParamVector p = ParamVector::zeros(specs);
  Mlp mlp(specs);
  for (std::size_t i = 0; i < grid.points; ++i) {
    for (std::size_t j = 0; j < grid.points; ++j) {
      p.values = plane.origin + grid.u(i) * plane.d1 + grid.v(j) * plane.d2;
      mlp.unflatten(p);
      const ForwardCache cache = forward(mlp, inputs);
      out.loss(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cross_entropy(cache.output(), targets);
      out.accuracy(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          accuracy_of_outputs(cache.output(), labels);
    }
  }
  return out;
}

inline Table landscape_table(const LandscapeGrid& g) {
  Table t({"u", "v", "loss", "accuracy"});
  for (std::size_t i = 0; i < g.spec.points; ++i) {
    for (std::size_t j = 0; j < g.spec.points; ++j) {
      t.add_row({fmt(g.spec.u(i)), fmt(g.spec.v(j)),
                 fmt(g.loss(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))),
                 fmt(g.accuracy(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))});
    }
  }
  return t;
}

inline Table projection_table(const std::vector<std::pair<std::string, std::vector<ProjectedPoint>>>& paths) {
  Table t({"method", "step", "u", "v", "residual"});
  for (const auto& [m, path] : paths) {
    for (std::size_t s = 0; s < path.size(); ++s) {
      t.add_row({m, std::to_string(s), fmt(path[s].u), fmt(path[s].v), fmt(path[s].residual)});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Update fields on the mixed Gaussian

using FieldRule = std::function<Point2(const Point2&)>;

inline FieldRule bp_rule(const MixedGaussian& f) {
  return [f](const Point2& x) -> Point2 { return -gaussian_grad(f, x); };
}

inline FieldRule tdca_rule(const TdcaNetwork& tdca, const MixedGaussian& f) {
  detail::require_dims(tdca.state_dim() == 3 && tdca.credit_dim() == 2,
                       "field needs a credit network evolved on the gaussian task (3 -> 2)");
  return [tdca, f](const Point2& x) -> Point2 {
    const CreditVector c = generate_credits(tdca, build_gaussian_state(f, x));
    return {c.values[0], c.values[1]};
  };
}

struct FieldSpec {
  double lo = -6.0;
  double hi = 6.0;
  std::size_t points = 11;

  std::vector<Point2> grid() const {
    std::vector<Point2> out;
    for (std::size_t i = 0; i < points; ++i) {
      for (std::size_t j = 0; j < points; ++j) {
        const double step = points > 1 ? (hi - lo) / static_cast<double>(points - 1) : 0.0;
        out.emplace_back(lo + step * static_cast<double>(i), lo + step * static_cast<double>(j));
      }
    }
    return out;
  }
};

inline Table field_table(const FieldRule& rule, const FieldSpec& spec) {
  Table t({"x", "y", "dx", "dy"});
  for (const auto& p : spec.grid()) {
    const Point2 d = rule(p);
    t.add_row({fmt(p.x()), fmt(p.y()), fmt(d.x()), fmt(d.y())});
  }
  return t;
}

struct FlowResult {
  Point2 start;
  Point2 end;
  int basin = -1;  // component index whose center is within tolerance, else -1
};

/// x <- x + scale * rule(x), `steps` times.
inline FlowResult flow(const FieldRule& rule, const MixedGaussian& f, const Point2& start, std::size_t steps,
                       double scale, double tolerance) {
  Point2 x = start;
  for (std::size_t s = 0; s < steps; ++s) {
    x += scale * rule(x);
    if (!x.allFinite()) break;
  }
  FlowResult r{start, x, -1};
  for (std::size_t c = 0; c < f.components.size(); ++c) {
    if ((x - f.components[c].center).norm() <= tolerance) {
      r.basin = static_cast<int>(c);
      break;
    }
  }
  return r;
}

inline std::vector<FlowResult> flow_grid(const FieldRule& rule, const MixedGaussian& f, const FieldSpec& spec,
                                         std::size_t steps, double scale, double tolerance) {
  std::vector<FlowResult> out;
  for (const auto& p : spec.grid()) out.push_back(flow(rule, f, p, steps, scale, tolerance));
  return out;
}

inline Table flow_table(const std::vector<std::pair<std::string, std::vector<FlowResult>>>& flows) {
  Table t({"method", "start_x", "start_y", "end_x", "end_y", "basin"});
  for (const auto& [m, rs] : flows) {
    for (const auto& r : rs) {
      t.add_row({m, fmt(r.start.x()), fmt(r.start.y()), fmt(r.end.x()), fmt(r.end.y()), std::to_string(r.basin)});
    }
  }
  return t;
}

}  // namespace tdca::harness
