#pragma once

// Policy Gradients with Parameter-based Exploration: a Gaussian search
// distribution N(center, diag(sigma^2)) whose center and per-dimension sigma
// follow a sampled estimate of the expected-fitness gradient. Sampling is
// mirrored (center ± sigma·eps) and fitness is z-scored before estimation.

#include "tdca/error.hpp"
#include "tdca/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace tdca::pgpe {

inline constexpr double kSigmaMin = 1e-4;
inline constexpr double kSigmaMax = 10.0;

struct Config {
  std::size_t population_size = 64;
  double lr_center = 0.5;
  double lr_sigma = 0.1;
  double initial_sigma = 0.1;
  std::size_t generations = 100;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct State {
  Vector center;
  Vector sigma;
  double lr_center = 0.5;
  double lr_sigma = 0.1;
  std::size_t population_size = 64;
  std::size_t generation = 0;

  std::size_t dim() const { return static_cast<std::size_t>(center.size()); }

  void validate() const {
    detail::require_dims(center.size() == sigma.size(), "pgpe: center/sigma length mismatch");
    detail::require_value(population_size >= 2 && population_size % 2 == 0,
                          "pgpe: population size must be even and positive, got " +
                              std::to_string(population_size));
    detail::require_value((sigma.array() > 0.0).all() && sigma.allFinite(),
                          "pgpe: sigma must be positive and finite in every dimension");
    detail::require_value(lr_center > 0.0 && lr_sigma >= 0.0,
                          "pgpe: lr_center must be positive and lr_sigma non-negative");
  }

  static State make(Vector center, const Config& cfg) {
    State s;
    s.sigma = Vector::Constant(center.size(), cfg.initial_sigma);
    s.center = std::move(center);
    s.lr_center = cfg.lr_center;
    s.lr_sigma = cfg.lr_sigma;
    s.population_size = cfg.population_size;
    s.validate();
    return s;
  }
};

struct SamplePair {
  Vector epsilon;
  Vector plus;   // center + sigma ⊙ eps
  Vector minus;  // center - sigma ⊙ eps
  double fitness_plus = 0.0;
  double fitness_minus = 0.0;
};

struct FitnessReport {
  std::vector<double> raw;
  std::vector<double> shaped;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
};

struct Gradient {
  Vector center;
  Vector sigma;
};

/// N/2 mirrored pairs with eps ~ N(0, I), deterministic in rng_seed.
inline std::vector<SamplePair> sample_population(const State& state, std::uint64_t rng_seed) {
  state.validate();
  Rng rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t pairs = state.population_size / 2;
  std::vector<SamplePair> out(pairs);
  for (auto& p : out) {
    p.epsilon.resize(state.center.size());
    for (Eigen::Index j = 0; j < p.epsilon.size(); ++j) p.epsilon[j] = normal(rng);
    const Vector offset = state.sigma.cwiseProduct(p.epsilon);
    p.plus = state.center + offset;
    p.minus = state.center - offset;
  }
  return out;
}

/// z-score with population std; a constant list maps to zeros.
inline std::vector<double> shape_fitness(std::span<const double> raw) {
  detail::require_value(!raw.empty(), "shape_fitness: empty fitness list");
  for (double v : raw) detail::require_value(std::isfinite(v), "shape_fitness: non-finite fitness");
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  std::vector<double> out(raw.size(), 0.0);
  if (*lo == *hi) return out;
  const double n = static_cast<double>(raw.size());
  const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / n;
  double var = 0.0;
  for (double v : raw) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (sd == 0.0) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - mean) / sd;
  return out;
}

/// Mirrored PGPE estimator.
///   center_j = mean_p eps_pj (F+ - F-) / 2 / sigma_j
///   sigma_j  = mean_p (eps_pj^2 - 1) ((F+ + F-)/2 - baseline) / sigma_j
inline Gradient estimate_gradient(std::span<const SamplePair> pairs, const Vector& sigma,
                                  double baseline = 0.0) {
  detail::require_value(!pairs.empty(), "estimate_gradient: need at least one pair");
  Gradient g{Vector::Zero(sigma.size()), Vector::Zero(sigma.size())};
  for (const auto& p : pairs) {
    detail::require_dims(p.epsilon.size() == sigma.size(), "estimate_gradient: dimension mismatch");
    if (!std::isfinite(p.fitness_plus) || !std::isfinite(p.fitness_minus)) {
      throw ValueError("estimate_gradient: non-finite fitness");
    }
    const double diff = 0.5 * (p.fitness_plus - p.fitness_minus);
    const double avg = 0.5 * (p.fitness_plus + p.fitness_minus) - baseline;
    g.center += diff * p.epsilon;
    g.sigma += avg * (p.epsilon.array().square() - 1.0).matrix();
  }
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  g.center = (g.center * inv_n).cwiseQuotient(sigma);
  g.sigma = (g.sigma * inv_n).cwiseQuotient(sigma);
  return g;
}

/// Natural-gradient ascent: the estimator returns the plain gradient of the
/// smoothed fitness, which grows like 1/sigma once fitness is z-scored, so both
/// updates are preconditioned by sigma^2 (the inverse Fisher information of
/// the Gaussian, halved for sigma). sigma is clamped to [1e-4, 10].
inline State step(const State& state, const Gradient& grad) {
  detail::require_dims(grad.center.size() == state.center.size() &&
                           grad.sigma.size() == state.sigma.size(),
                       "pgpe step: gradient dimension mismatch");
  State next = state;
  const Vector var = state.sigma.array().square();
  next.center += state.lr_center * var.cwiseProduct(grad.center);
  next.sigma = (state.sigma + (0.5 * state.lr_sigma) * var.cwiseProduct(grad.sigma))
                   .cwiseMax(kSigmaMin)
                   .cwiseMin(kSigmaMax);
  next.generation += 1;
  return next;
}

/// Per-evaluation context. Candidates of one generation share generation_seed
/// (common random numbers); candidate_seed is unique per (generation, index).
struct EvalContext {
  std::size_t generation = 0;
  std::size_t candidate_index = 0;
  std::uint64_t generation_seed = 0;
  std::uint64_t candidate_seed = 0;
};

using Objective = std::function<double(const Vector& candidate, const EvalContext& ctx)>;

struct GenerationLog {
  std::size_t generation = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  double sigma_mean = 0.0;
};

struct Result {
  Vector best_center;  // distribution center after the last generation
  State final_state;
  std::vector<GenerationLog> history;
};

/// Optional per-generation hook (progress output); never affects results.
using GenerationCallback = std::function<void(const GenerationLog&)>;

namespace internal {

/// Evaluate every candidate, spreading indices over `threads` workers. Results
/// land in index order so the outcome does not depend on scheduling.
inline std::vector<double> evaluate_all(const Objective& objective,
                                        const std::vector<const Vector*>& candidates,
                                        const std::vector<EvalContext>& contexts,
                                        std::size_t threads) {
  std::vector<double> fitness(candidates.size());
  std::vector<std::string> errors(candidates.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < candidates.size(); i += stride) {
      try {
        fitness[i] = objective(*candidates[i], contexts[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, candidates.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!errors[i].empty()) {
      throw Error("objective failed for candidate " + std::to_string(i) + " in generation " +
                  std::to_string(contexts[i].generation) + ": " + errors[i]);
    }
    if (!std::isfinite(fitness[i])) {
      std::ostringstream os;
      os << "objective returned non-finite fitness " << fitness[i] << " for candidate " << i
         << " in generation " << contexts[i].generation;
      throw ValueError(os.str());
    }
  }
  return fitness;
}

}  // namespace internal

/// sample -> evaluate -> shape -> estimate -> step, for cfg.generations rounds.
inline Result evolve(const Objective& objective, Vector initial_center, const Config& cfg,
                     const GenerationCallback& on_generation = {}) {
  State state = State::make(std::move(initial_center), cfg);
  Result result;
  result.history.reserve(cfg.generations);

  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    const std::uint64_t sample_seed = derive_seed(cfg.seed, gen, 0x5a3b1e);
    const std::uint64_t generation_seed = derive_seed(cfg.seed, gen, 0x6e4e);
    auto pairs = sample_population(state, sample_seed);

    std::vector<const Vector*> candidates;
    std::vector<EvalContext> contexts;
    candidates.reserve(2 * pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      candidates.push_back(&pairs[p].plus);
      candidates.push_back(&pairs[p].minus);
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      contexts.push_back({gen, i, generation_seed, derive_seed(cfg.seed, gen, i + 1)});
    }
    const auto raw = internal::evaluate_all(objective, candidates, contexts, cfg.threads);
    const auto shaped = shape_fitness(raw);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      pairs[p].fitness_plus = shaped[2 * p];
      pairs[p].fitness_minus = shaped[2 * p + 1];
    }
    const double shaped_mean =
        std::accumulate(shaped.begin(), shaped.end(), 0.0) / static_cast<double>(shaped.size());
    const Gradient grad = estimate_gradient(pairs, state.sigma, shaped_mean);
    state = step(state, grad);

    GenerationLog log;
    log.generation = gen;
    log.best_fitness = *std::max_element(raw.begin(), raw.end());
    log.mean_fitness = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
    log.sigma_mean = state.sigma.mean();
    result.history.push_back(log);
    if (on_generation) on_generation(log);
  }
  result.best_center = state.center;
  result.final_state = std::move(state);
  return result;
}

}  // namespace tdca::pgpe
