#pragma once

// Two-dimensional mixture of negative Gaussian bumps: one broad, deep bump
// holding the global minimum and a narrower, shallower one that creates a
// local minimum and a basin that traps plain gradient descent.

#include "tdca/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace tdca {

using Point2 = Eigen::Vector2d;

struct MixedGaussian {
  struct Component {
    Point2 center;
    double amplitude = 1.0;
    double width = 1.0;
  };

  std::vector<Component> components;

  /// Big bump at the origin (A=2, w=1) plus a small one at (2.2, 2.2)
  /// (A=0.8, w=0.6).
  static MixedGaussian standard() {
    MixedGaussian f;
    f.components.push_back({Point2(0.0, 0.0), 2.0, 1.0});
    f.components.push_back({Point2(2.2, 2.2), 0.8, 0.6});
    f.validate();
    return f;
  }

  void validate() const {
    detail::require_value(components.size() >= 2, "mixed gaussian needs at least two components");
    std::size_t top = 0;
    for (std::size_t c = 0; c < components.size(); ++c) {
      detail::require_value(components[c].amplitude > 0.0 && components[c].width > 0.0,
                            "gaussian component " + std::to_string(c) +
                                " needs positive amplitude and width");
      if (components[c].amplitude > components[top].amplitude) top = c;
    }
    for (std::size_t c = 0; c < components.size(); ++c) {
      detail::require_value(c == top || components[c].amplitude < components[top].amplitude,
                            "mixed gaussian needs a single strictly largest component");
    }
  }

  /// Index of the component whose center holds the global minimum.
  std::size_t dominant() const {
    std::size_t top = 0;
    for (std::size_t c = 1; c < components.size(); ++c) {
      if (components[c].amplitude > components[top].amplitude) top = c;
    }
    return top;
  }
};

/// f(x) = -sum_c A_c exp(-|x - mu_c|^2 / (2 w_c^2))
inline double gaussian_value(const MixedGaussian& f, const Point2& x) {
  double v = 0.0;
  for (const auto& c : f.components) {
    const double d2 = (x - c.center).squaredNorm();
    v -= c.amplitude * std::exp(-d2 / (2.0 * c.width * c.width));
  }
  return v;
}

inline Point2 gaussian_grad(const MixedGaussian& f, const Point2& x) {
  Point2 g = Point2::Zero();
  for (const auto& c : f.components) {
    const Point2 d = x - c.center;
    const double w2 = c.width * c.width;
    g += (c.amplitude / w2) * std::exp(-d.squaredNorm() / (2.0 * w2)) * d;
  }
  return g;
}

/// Plain gradient descent x <- x - lr * grad f(x); returns every visited point
/// including the start.
inline std::vector<Point2> gradient_descent(const MixedGaussian& f, Point2 start, double lr,
                                            std::size_t steps) {
  std::vector<Point2> path{start};
  path.reserve(steps + 1);
  for (std::size_t s = 0; s < steps; ++s) {
    start -= lr * gaussian_grad(f, start);
    path.push_back(start);
  }
  return path;
}

}  // namespace tdca
