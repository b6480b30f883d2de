#pragma once

// Sparse credit diffusion. A layer's neurons sit on a line or a 2-D grid; a
// handful of anchor neurons receive group credits and every neuron takes a
// Gaussian-weighted, normalized mix of the anchors' credits.

#include "tdca/error.hpp"
#include "tdca/linalg.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace tdca {

/// Kernel bandwidths at or below this value use nearest-anchor assignment.
inline constexpr double kSharpSigma = 1e-6;

struct NeighborStructure {
  enum class Kind { Line, Grid };

  Kind kind = Kind::Line;
  std::size_t height = 1;  // Grid rows; 1 for Line
  std::size_t width = 1;   // Grid cols; Line length

  static NeighborStructure line(std::size_t length) { return {Kind::Line, 1, length}; }
  static NeighborStructure grid(std::size_t h, std::size_t w) { return {Kind::Grid, h, w}; }

  std::size_t size() const { return height * width; }

  /// Position of neuron i: (0, i) on a line, (row, col) row-major on a grid.
  std::pair<double, double> coordinate(std::size_t i) const {
    return {static_cast<double>(i / width), static_cast<double>(i % width)};
  }

  bool operator==(const NeighborStructure&) const = default;
};

struct DiffusionKernel {
  double sigma = 1.0;
};

struct GroupAssignment {
  std::vector<std::size_t> anchors;     // neuron index of each credit's anchor
  std::vector<std::size_t> membership;  // nearest anchor (index into anchors) per neuron
  double group_size = 1.0;              // nominal i = neurons / credits
  std::size_t lattice_rows = 1;         // anchor lattice shape (1 x k on a line)
  std::size_t lattice_cols = 1;

  std::size_t credit_count() const { return anchors.size(); }
  std::size_t neuron_count() const { return membership.size(); }
};

namespace detail {

inline double squared_distance(const NeighborStructure& s, std::size_t a, std::size_t b) {
  const auto [ra, ca] = s.coordinate(a);
  const auto [rb, cb] = s.coordinate(b);
  return (ra - rb) * (ra - rb) + (ca - cb) * (ca - cb);
}

/// k evenly spaced cells out of n, at the centers of k equal strides.
inline std::vector<std::size_t> centered_positions(std::size_t n, std::size_t k) {
  std::vector<std::size_t> out(k);
  for (std::size_t a = 0; a < k; ++a) out[a] = ((2 * a + 1) * n) / (2 * k);
  return out;
}

/// Factor k = rows*cols with rows <= h, cols <= w, as close to square as
/// possible. Returns {0,0} if no factorization fits.
inline std::pair<std::size_t, std::size_t> near_square_lattice(std::size_t k, std::size_t h,
                                                               std::size_t w) {
  std::pair<std::size_t, std::size_t> best{0, 0};
  std::size_t best_gap = std::numeric_limits<std::size_t>::max();
  for (std::size_t r = 1; r <= k; ++r) {
    if (k % r != 0) continue;
    const std::size_t c = k / r;
    if (r > h || c > w) continue;
    const std::size_t gap = r > c ? r - c : c - r;
    if (gap < best_gap) {
      best_gap = gap;
      best = {r, c};
    }
  }
  return best;
}

}  // namespace detail

/// Evenly spaced anchors; every neuron joins its nearest anchor, ties going to
/// the lower anchor index.
inline GroupAssignment assign_groups(std::size_t neuron_count, std::size_t credit_count,
                                     const NeighborStructure& structure) {
  detail::require_value(credit_count >= 1, "assign_groups: need at least one credit");
  detail::require_value(credit_count <= neuron_count,
                        "assign_groups: " + std::to_string(credit_count) + " credits exceed " +
                            std::to_string(neuron_count) + " neurons");
  detail::require_dims(structure.size() == neuron_count,
                       "assign_groups: structure holds " + std::to_string(structure.size()) +
                           " neurons, layer has " + std::to_string(neuron_count));

  GroupAssignment g;
  g.group_size = static_cast<double>(neuron_count) / static_cast<double>(credit_count);
  if (structure.kind == NeighborStructure::Kind::Line) {
    g.anchors = detail::centered_positions(neuron_count, credit_count);
    g.lattice_cols = credit_count;
  } else {
    const auto [rows, cols] =
        detail::near_square_lattice(credit_count, structure.height, structure.width);
    if (rows == 0) {
      throw ValueError("assign_groups: " + std::to_string(credit_count) +
                       " credits do not form a lattice inside a " +
                       std::to_string(structure.height) + "x" + std::to_string(structure.width) +
                       " grid");
    }
    g.lattice_rows = rows;
    g.lattice_cols = cols;
    const auto rpos = detail::centered_positions(structure.height, rows);
    const auto cpos = detail::centered_positions(structure.width, cols);
    for (std::size_t r : rpos) {
      for (std::size_t c : cpos) g.anchors.push_back(r * structure.width + c);
    }
  }

  g.membership.resize(neuron_count);
  for (std::size_t i = 0; i < neuron_count; ++i) {
    std::size_t best = 0;
    double best_d = detail::squared_distance(structure, i, g.anchors[0]);
    for (std::size_t a = 1; a < g.anchors.size(); ++a) {
      const double d = detail::squared_distance(structure, i, g.anchors[a]);
      if (d < best_d) {
        best_d = d;
        best = a;
      }
    }
    g.membership[i] = best;
  }
  return g;
}

/// Half the anchor stride (mean over the lattice axes on a grid).
inline double default_sigma(const GroupAssignment& g, const NeighborStructure& s) {
  if (s.kind == NeighborStructure::Kind::Line) return 0.5 * g.group_size;
  const double sr = static_cast<double>(s.height) / static_cast<double>(g.lattice_rows);
  const double sc = static_cast<double>(s.width) / static_cast<double>(g.lattice_cols);
  return 0.25 * (sr + sc);
}

/// Normalized anchor weights for one neuron. Distances are shifted by the
/// nearest anchor's before exponentiating so far neurons do not underflow.
inline std::vector<double> diffusion_weights(std::size_t neuron, const GroupAssignment& g,
                                             const NeighborStructure& s,
                                             const DiffusionKernel& kernel) {
  detail::require_value(kernel.sigma > 0.0, "diffusion kernel sigma must be positive");
  std::vector<double> w(g.anchors.size(), 0.0);
  if (kernel.sigma <= kSharpSigma) {
    w[g.membership[neuron]] = 1.0;
    return w;
  }
  std::vector<double> d2(g.anchors.size());
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < g.anchors.size(); ++a) {
    d2[a] = detail::squared_distance(s, neuron, g.anchors[a]);
    dmin = std::min(dmin, d2[a]);
  }
  const double inv = 1.0 / (2.0 * kernel.sigma * kernel.sigma);
  double total = 0.0;
  for (std::size_t a = 0; a < w.size(); ++a) {
    w[a] = std::exp(-(d2[a] - dmin) * inv);
    total += w[a];
  }
  for (double& x : w) x /= total;
  return w;
}

/// Dense (neurons x anchors) weight matrix; rows sum to one.
inline Matrix diffusion_matrix(const GroupAssignment& g, const NeighborStructure& s,
                               const DiffusionKernel& kernel) {
  Matrix m(static_cast<Eigen::Index>(g.neuron_count()), static_cast<Eigen::Index>(g.credit_count()));
  for (std::size_t i = 0; i < g.neuron_count(); ++i) {
    const auto w = diffusion_weights(i, g, s, kernel);
    for (std::size_t a = 0; a < w.size(); ++a) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = w[a];
  }
  return m;
}

/// Per-neuron credits from group credits.
inline Vector diffuse(const Vector& group_credits, const GroupAssignment& g,
                      const NeighborStructure& s, const DiffusionKernel& kernel) {
  detail::require_dims(static_cast<std::size_t>(group_credits.size()) == g.credit_count(),
                       "diffuse: " + std::to_string(group_credits.size()) + " credits for " +
                           std::to_string(g.credit_count()) + " anchors");
  detail::require_value(kernel.sigma > 0.0, "diffusion kernel sigma must be positive");
  Vector out(static_cast<Eigen::Index>(g.neuron_count()));
  if (kernel.sigma <= kSharpSigma) {
    for (std::size_t i = 0; i < g.neuron_count(); ++i) {
      out[static_cast<Eigen::Index>(i)] = group_credits[static_cast<Eigen::Index>(g.membership[i])];
    }
    return out;
  }
  for (std::size_t i = 0; i < g.neuron_count(); ++i) {
    const auto w = diffusion_weights(i, g, s, kernel);
    double acc = 0.0;
    for (std::size_t a = 0; a < w.size(); ++a) acc += w[a] * group_credits[static_cast<Eigen::Index>(a)];
    out[static_cast<Eigen::Index>(i)] = acc;
  }
  return out;
}

}  // namespace tdca
