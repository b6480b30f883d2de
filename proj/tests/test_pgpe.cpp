#include "support.hpp"
#include "tdca/pgpe.hpp"

#include <gtest/gtest.h>

using namespace tdca;
using namespace tdca::pgpe;

namespace {

State state_of(Vector center, double sigma, std::size_t n = 8) {
  Config cfg;
  cfg.initial_sigma = sigma;
  cfg.population_size = n;
  return State::make(std::move(center), cfg);
}

}  // namespace

TEST(Sampling, ZeroSigmaRejected) {
  State s = state_of(Vector::Zero(3), 0.1);
  s.sigma[1] = 0.0;
  EXPECT_THROW(sample_population(s, 1), ValueError);
}

TEST(Sampling, OddPopulationRejected) {
  Config cfg;
  cfg.population_size = 7;
  EXPECT_THROW(State::make(Vector::Zero(2), cfg), ValueError);
}

TEST(Sampling, MirroredPairsAverageToCenter) {
  const State s = state_of(Vector::LinSpaced(5, -1.0, 3.0), 0.7, 16);
  const auto pairs = sample_population(s, 99);
  ASSERT_EQ(pairs.size(), 8u);
  for (const auto& p : pairs) EXPECT_EQ(p.plus + p.minus, 2.0 * s.center);
}

TEST(Sampling, DeterministicInSeed) {
  const State s = state_of(Vector::Zero(4), 0.3);
  const auto a = sample_population(s, 5), b = sample_population(s, 5), c = sample_population(s, 6);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].epsilon, b[i].epsilon);
  EXPECT_NE(a[0].epsilon, c[0].epsilon);
}

TEST(Shaping, ClosedForms) {
  EXPECT_EQ(shape_fitness(std::vector<double>{1, 1, 1}), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(shape_fitness(std::vector<double>{0, 2}), (std::vector<double>{-1, 1}));
  const auto z = shape_fitness(std::vector<double>{3.5, -1, 8, 0.25, 2});
  double mean = 0.0;
  for (double v : z) mean += v;
  EXPECT_NEAR(mean / 5.0, 0.0, 1e-12);
}

TEST(Shaping, NonFiniteRejected) {
  EXPECT_THROW(shape_fitness(std::vector<double>{1, std::nan("")}), ValueError);
  EXPECT_THROW(shape_fitness(std::vector<double>{}), ValueError);
}

TEST(Gradient, ConstantFitnessGivesExactZeroCenter) {
  const State s = state_of(Vector::Zero(6), 0.4, 32);
  auto pairs = sample_population(s, 3);
  for (auto& p : pairs) p.fitness_plus = p.fitness_minus = 2.5;
  EXPECT_EQ(estimate_gradient(pairs, s.sigma).center, Vector::Zero(6));
}

TEST(Gradient, EvenSymmetricFitnessGivesExactZeroCenter) {
  const State s = state_of(Vector::Zero(6), 0.4, 32);
  auto pairs = sample_population(s, 3);
  for (auto& p : pairs) {
    p.fitness_plus = -p.plus.squaredNorm();
    p.fitness_minus = -p.minus.squaredNorm();
  }
  EXPECT_EQ(estimate_gradient(pairs, s.sigma).center, Vector::Zero(6));
}

TEST(Gradient, SinglePairByHand) {
  SamplePair p;
  p.epsilon = Vector::Ones(1);
  p.fitness_plus = 1.0;
  p.fitness_minus = 0.0;
  const Gradient g = estimate_gradient(std::vector<SamplePair>{p}, Vector::Ones(1));
  EXPECT_DOUBLE_EQ(g.center[0], 0.5);
}

TEST(Gradient, LinearFitnessCosine) {
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) total += testkit::linear_fitness_cosine(seed, 8, 512);
  EXPECT_GT(total / 20.0, 0.9);
}

TEST(Step, ZeroGradientOnlyCountsGeneration) {
  const State s = state_of(Vector::LinSpaced(3, 0, 2), 0.2);
  const State t = step(s, {Vector::Zero(3), Vector::Zero(3)});
  EXPECT_EQ(t.center, s.center);
  EXPECT_EQ(t.sigma, s.sigma);
  EXPECT_EQ(t.generation, s.generation + 1);
}

TEST(Step, UnitSigmaCenterArithmetic) {
  State s = state_of(Vector::Zero(2), 1.0);
  s.lr_center = 1.0;
  Vector g(2);
  g << 1, 0;
  const State t = step(s, {g, Vector::Zero(2)});
  EXPECT_EQ(t.center, g);
}

TEST(Step, SigmaClampedBelow) {
  State s = state_of(Vector::Zero(2), 0.01);
  s.lr_sigma = 1.0;
  const State t = step(s, {Vector::Zero(2), Vector::Constant(2, -1e9)});
  EXPECT_EQ(t.sigma, Vector::Constant(2, kSigmaMin));
}

TEST(Evolve, QuadraticOptimum) {
  Config cfg;
  cfg.generations = 200;
  cfg.population_size = 64;
  Vector target(2);
  target << 3, -2;
  const auto r = evolve([&](const Vector& s, const EvalContext&) { return -(s - target).squaredNorm(); },
                        Vector::Zero(2), cfg);
  EXPECT_LT((r.best_center - target).norm(), 0.1);
  EXPECT_EQ(r.history.size(), 200u);
}

TEST(Evolve, ConstantObjectiveLeavesCenter) {
  Config cfg;
  cfg.generations = 15;
  const Vector start = Vector::LinSpaced(4, -1, 1);
  const auto r = evolve([](const Vector&, const EvalContext&) { return 1.0; }, start, cfg);
  EXPECT_EQ(r.best_center, start);
  EXPECT_EQ(r.history.size(), 15u);
}

TEST(Evolve, ThreadCountDoesNotChangeResult) {
  Config cfg;
  cfg.generations = 10;
  auto f = [](const Vector& s, const EvalContext& ctx) {
    return -s.squaredNorm() + 1e-3 * static_cast<double>(ctx.generation_seed % 7);
  };
  const auto a = evolve(f, Vector::Ones(5), cfg);
  cfg.threads = 3;
  const auto b = evolve(f, Vector::Ones(5), cfg);
  EXPECT_EQ(a.best_center, b.best_center);
  EXPECT_EQ(a.final_state.sigma, b.final_state.sigma);
}

TEST(Evolve, ObjectiveErrorsPropagate) {
  Config cfg;
  cfg.generations = 2;
  EXPECT_THROW(evolve([](const Vector&, const EvalContext&) -> double { throw ValueError("boom"); },
                      Vector::Zero(2), cfg),
               Error);
  EXPECT_THROW(evolve([](const Vector&, const EvalContext&) { return std::nan(""); }, Vector::Zero(2), cfg),
               ValueError);
}
