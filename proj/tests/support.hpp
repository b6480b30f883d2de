#pragma once

// Oracles shared by the unit tests and the acceptance binary.

#include "tdca/nn.hpp"
#include "tdca/pgpe.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace tdca::testkit {

/// Central differences of the mean cross-entropy, one parameter at a time.
inline ParamVector fd_gradient(const Mlp& mlp, const Batch& batch, double h = 1e-5) {
  ParamVector theta = mlp.flatten();
  ParamVector g = ParamVector::zeros(mlp.layers());
  Mlp probe = mlp;
  for (Eigen::Index i = 0; i < theta.values.size(); ++i) {
    const double keep = theta.values[i];
    theta.values[i] = keep + h;
    probe.unflatten(theta);
    const double up = cross_entropy(forward(probe, batch.inputs).output(), batch.targets);
    theta.values[i] = keep - h;
    probe.unflatten(theta);
    const double down = cross_entropy(forward(probe, batch.inputs).output(), batch.targets);
    theta.values[i] = keep;
    g.values[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(const Vector& a, const Vector& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / d);
  }
  return worst;
}

/// Smooth random network (tanh / sigmoid / identity hidden, softmax head) with
/// at most `max_params` parameters, plus a random batch with one-hot targets.
struct RandomCase {
  Mlp mlp;
  Batch batch;
};

inline RandomCase random_case(std::uint64_t seed, std::size_t max_params = 2000) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> width(2, 12);
  std::uniform_int_distribution<std::size_t> depth(1, 3);
  std::uniform_int_distribution<int> act(0, 2);
  std::vector<LayerSpec> specs;
  while (true) {
    specs.clear();
    std::size_t in = width(rng);
    const std::size_t layers = depth(rng);
    for (std::size_t l = 0; l + 1 < layers; ++l) {
      const std::size_t out = width(rng);
      const Activation a = std::array{Activation::Tanh, Activation::Sigmoid, Activation::Identity}[act(rng)];
      specs.push_back({in, out, a});
      in = out;
    }
    specs.push_back({in, std::uniform_int_distribution<std::size_t>(2, 10)(rng), Activation::Softmax});
    if (parameter_count(specs) <= max_params) break;
  }
  Mlp mlp = init_mlp(specs, seed ^ 0x9e37u);
  const std::size_t rows = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(specs.front().in_dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  Matrix y = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(specs.back().out_dim));
  std::uniform_int_distribution<Eigen::Index> cls(0, y.cols() - 1);
  for (Eigen::Index r = 0; r < y.rows(); ++r) y(r, cls(rng)) = 1.0;
  return {std::move(mlp), Batch::make(std::move(x), std::move(y))};
}

/// Cosine between the PGPE center-gradient estimate for F(s) = a.s and a,
/// with a, the center and sigma drawn from `seed`.
inline double linear_fitness_cosine(std::uint64_t seed, std::size_t dim, std::size_t population) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> spread(0.5, 2.0);
  Vector a(static_cast<Eigen::Index>(dim)), c(static_cast<Eigen::Index>(dim));
  for (std::size_t j = 0; j < dim; ++j) {
    a[static_cast<Eigen::Index>(j)] = normal(rng);
    c[static_cast<Eigen::Index>(j)] = normal(rng);
  }
  pgpe::State s;
  s.center = c;
  s.sigma = Vector::Constant(static_cast<Eigen::Index>(dim), spread(rng));
  s.population_size = population;
  auto pairs = pgpe::sample_population(s, seed + 1);
  for (auto& p : pairs) {
    p.fitness_plus = a.dot(p.plus);
    p.fitness_minus = a.dot(p.minus);
  }
  const Vector g = pgpe::estimate_gradient(pairs, s.sigma).center;
  return g.dot(a) / (g.norm() * a.norm());
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tdca_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace tdca::testkit
