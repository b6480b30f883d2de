#pragma once

// Experiment drivers: evolution, BP-vs-TDCA comparison, transfer matrix and
// diffusion sweep. Every function is deterministic in its config and seeds.

#include "tdca/gaussian.hpp"
#include "tdca/harness/config.hpp"
#include "tdca/harness/data.hpp"
#include "tdca/harness/report.hpp"
#include "tdca/io.hpp"
#include "tdca/nn.hpp"
#include "tdca/pgpe.hpp"
#include "tdca/tdca.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace tdca::harness {

struct SeedMetrics {
  std::uint64_t seed = 0;
  double initial_train_accuracy = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double train_loss = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& v) {
  detail::require_value(!v.empty(), "mean_std of an empty list");
  MeanStd r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

template <class F>
MeanStd summarize(const std::vector<SeedMetrics>& runs, F field) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(field(r));
  return mean_std(v);
}

inline std::shared_ptr<const ClassificationProblem> make_problem(const PreparedData& d, const BottomUpArch& arch) {
  return std::make_shared<const ClassificationProblem>(d.train, arch);
}

/// Full-batch gradient descent with a fixed step size.
inline SeedMetrics run_bp(const ClassificationProblem& problem, const Dataset& test, std::uint64_t seed,
                          std::size_t steps, double lr, std::vector<ParamVector>* snapshots = nullptr) {
  detail::require_value(steps >= 1, "BP run needs at least one step");
  Mlp mlp = init_mlp(problem.specs(), seed);
  const Batch batch = Batch::make(problem.inputs(), problem.targets());
  SeedMetrics m;
  m.seed = seed;
  m.initial_train_accuracy = accuracy(mlp, problem.train());
  if (snapshots) snapshots->push_back(mlp.flatten());
  for (std::size_t s = 0; s < steps; ++s) {
    apply_update_inplace(mlp, backprop_grads(mlp, batch), -lr);
    if (snapshots) snapshots->push_back(mlp.flatten());
  }
  const ForwardCache cache = forward(mlp, problem.inputs());
  m.train_accuracy = accuracy_of_outputs(cache.output(), problem.train().labels);
  m.train_loss = cross_entropy(cache.output(), problem.targets());
  m.test_accuracy = test.empty() ? 0.0 : accuracy(mlp, test);
  return m;
}

inline SeedMetrics run_tdca(const TdcaNetwork& tdca, const ClassificationProblem& problem, const Dataset& test,
                            std::uint64_t seed, std::size_t steps, std::vector<ParamVector>* snapshots = nullptr) {
  InnerLoopOptions opts;
  opts.record_snapshots = snapshots != nullptr;
  auto res = inner_loop(tdca, seed, problem, steps, opts);
  if (snapshots) *snapshots = std::move(res.trace.snapshots);
  SeedMetrics m;
  m.seed = seed;
  m.initial_train_accuracy = res.trace.initial.accuracy;
  m.train_accuracy = res.trace.final().accuracy;
  m.train_loss = res.trace.final().loss;
  m.test_accuracy = test.empty() ? 0.0 : accuracy(res.mlp, test);
  return m;
}

// ---------------------------------------------------------------------------
// Evolution

inline ClassificationTask classification_task(const std::vector<PreparedData>& data, const BottomUpArch& arch,
                                              std::size_t steps, double loss_weight) {
  ClassificationTask task;
  for (const auto& d : data) task.problems.push_back(make_problem(d, arch));
  task.steps = steps;
  task.loss_weight = loss_weight;
  return task;
}

inline GaussianTask gaussian_task(const ExperimentConfig& cfg) {
  GaussianTask t;
  t.trap_start = cfg.gaussian.trap;
  t.random_starts = cfg.gaussian.random_starts;
  t.domain = cfg.gaussian.domain;
  t.steps = cfg.gaussian.steps;
  return t;
}

inline Table history_table(const pgpe::Result& r) {
  Table t({"generation", "best_fitness", "mean_fitness", "sigma_mean"});
  for (const auto& g : r.history) {
    t.add_row({std::to_string(g.generation), fmt(g.best_fitness, 8), fmt(g.mean_fitness, 8), fmt(g.sigma_mean, 8)});
  }
  return t;
}

inline EvolvedTdca evolve_for(const ExperimentConfig& cfg, const std::vector<PreparedData>& data,
                              const pgpe::GenerationCallback& cb = {}) {
  if (cfg.task == TaskKind::Gaussian) return evolve_tdca(gaussian_task(cfg), cfg.tdca, cfg.pgpe, cb);
  return evolve_tdca(classification_task(data, cfg.arch, cfg.steps, cfg.loss_weight), cfg.tdca, cfg.pgpe, cb);
}

// ---------------------------------------------------------------------------
// Comparison

struct CompareResult {
  DatasetId dataset = DatasetId::MNIST;
  std::vector<SeedMetrics> bp;
  std::vector<SeedMetrics> tdca;  // empty when no credit network was given
};

inline std::vector<CompareResult> run_compare(const ExperimentConfig& cfg, const std::vector<PreparedData>& data,
                                              const TdcaNetwork* tdca) {
  std::vector<CompareResult> out;
  for (const auto& d : data) {
    const auto problem = make_problem(d, cfg.arch);
    if (tdca) require_compatible(*tdca, 2 * kClassCount + 1, problem->specs());
    CompareResult r;
    r.dataset = d.id;
    for (auto seed : cfg.seeds) r.bp.push_back(run_bp(*problem, d.test, seed, cfg.steps, cfg.bp_lr));
    if (tdca) {
      for (auto seed : cfg.seeds) r.tdca.push_back(run_tdca(*tdca, *problem, d.test, seed, cfg.steps));
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline Table compare_table(const std::vector<CompareResult>& results) {
  Table t({"dataset", "method", "seed", "initial_train_accuracy", "train_accuracy", "test_accuracy", "train_loss"});
  auto rows = [&](const std::string& ds, const std::string& method, const std::vector<SeedMetrics>& runs) {
    if (runs.empty()) return;
    for (const auto& m : runs) {
      t.add_row({ds, method, std::to_string(m.seed), fmt(m.initial_train_accuracy), fmt(m.train_accuracy),
                 fmt(m.test_accuracy), fmt(m.train_loss)});
    }
    const auto a0 = summarize(runs, [](const SeedMetrics& m) { return m.initial_train_accuracy; });
    const auto a = summarize(runs, [](const SeedMetrics& m) { return m.train_accuracy; });
    const auto b = summarize(runs, [](const SeedMetrics& m) { return m.test_accuracy; });
    const auto c = summarize(runs, [](const SeedMetrics& m) { return m.train_loss; });
    t.add_row({ds, method, "mean", fmt(a0.mean), fmt(a.mean), fmt(b.mean), fmt(c.mean)});
    t.add_row({ds, method, "std", fmt(a0.std), fmt(a.std), fmt(b.std), fmt(c.std)});
  };
  for (const auto& r : results) {
    const std::string ds(to_string(r.dataset));
    rows(ds, "bp", r.bp);
    rows(ds, "tdca", r.tdca);
  }
  return t;
}

struct GaussianCompare {
  std::vector<Point2> bp_path;
  std::vector<Point2> tdca_path;
  double bp_final = 0.0;
  double tdca_final = 0.0;
};

inline GaussianCompare run_gaussian_compare(const ExperimentConfig& cfg, const TdcaNetwork* tdca) {
  const MixedGaussian f = MixedGaussian::standard();
  GaussianCompare g;
  g.bp_path = gradient_descent(f, cfg.gaussian.trap, cfg.gaussian.bp_lr, cfg.gaussian.bp_steps);
  g.bp_final = gaussian_value(f, g.bp_path.back());
  if (tdca) {
    g.tdca_path = gaussian_inner_loop(*tdca, f, cfg.gaussian.trap, cfg.gaussian.steps);
    g.tdca_final = gaussian_value(f, g.tdca_path.back());
  }
  return g;
}

inline Table gaussian_summary_table(const GaussianCompare& g) {
  const MixedGaussian f = MixedGaussian::standard();
  Table t({"method", "steps", "final_x", "final_y", "final_value"});
  auto row = [&](const std::string& m, const std::vector<Point2>& p) {
    if (p.empty()) return;
    t.add_row({m, std::to_string(p.size() - 1), fmt(p.back().x()), fmt(p.back().y()), fmt(gaussian_value(f, p.back()))});
  };
  row("bp", g.bp_path);
  row("tdca", g.tdca_path);
  return t;
}

inline Table gaussian_path_table(const GaussianCompare& g) {
  const MixedGaussian f = MixedGaussian::standard();
  Table t({"method", "step", "x", "y", "value"});
  auto rows = [&](const std::string& m, const std::vector<Point2>& p) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      t.add_row({m, std::to_string(i), fmt(p[i].x()), fmt(p[i].y()), fmt(gaussian_value(f, p[i]))});
    }
  };
  rows("bp", g.bp_path);
  rows("tdca", g.tdca_path);
  return t;
}

// ---------------------------------------------------------------------------
// Transfer

struct TransferCell {
  std::string source;
  DatasetId target = DatasetId::MNIST;
  MeanStd train;
  MeanStd test;
  MeanStd untrained;  // accuracy of the freshly initialized net
  MeanStd bp_train;   // same-config BP baseline
  MeanStd bp_test;
};

inline std::vector<TransferCell> run_transfer(const ExperimentConfig& cfg,
                                              const std::vector<std::pair<std::string, TdcaNetwork>>& sources,
                                              const std::vector<PreparedData>& targets) {
  std::vector<TransferCell> cells;
  for (const auto& d : targets) {
    const auto problem = make_problem(d, cfg.arch);
    std::vector<SeedMetrics> bp;
    for (auto seed : cfg.seeds) bp.push_back(run_bp(*problem, d.test, seed, cfg.steps, cfg.bp_lr));
    for (const auto& [label, tdca] : sources) {
      require_compatible(tdca, 2 * kClassCount + 1, problem->specs());
      std::vector<SeedMetrics> runs;
      for (auto seed : cfg.seeds) runs.push_back(run_tdca(tdca, *problem, d.test, seed, cfg.steps));
      TransferCell c;
      c.source = label;
      c.target = d.id;
      c.train = summarize(runs, [](const SeedMetrics& m) { return m.train_accuracy; });
      c.test = summarize(runs, [](const SeedMetrics& m) { return m.test_accuracy; });
      c.untrained = summarize(runs, [](const SeedMetrics& m) { return m.initial_train_accuracy; });
      c.bp_train = summarize(bp, [](const SeedMetrics& m) { return m.train_accuracy; });
      c.bp_test = summarize(bp, [](const SeedMetrics& m) { return m.test_accuracy; });
      cells.push_back(c);
    }
  }
  return cells;
}

inline Table transfer_table(const std::vector<TransferCell>& cells) {
  Table t({"evolved_on", "applied_to", "train_accuracy", "train_std", "test_accuracy", "test_std",
           "untrained_accuracy", "bp_train_accuracy", "bp_test_accuracy"});
  for (const auto& c : cells) {
    t.add_row({c.source, std::string(to_string(c.target)), fmt(c.train.mean), fmt(c.train.std), fmt(c.test.mean),
               fmt(c.test.std), fmt(c.untrained.mean), fmt(c.bp_train.mean), fmt(c.bp_test.mean)});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Diffusion sweep

struct SweepResult {
  SweepSetting setting;
  std::size_t credit_dim = 0;
  TdcaNetwork tdca;
  pgpe::Result evolution;
  MeanStd train;
  MeanStd test;
};

using SweepProgress = std::function<void(const std::string& label, const pgpe::GenerationLog&)>;

inline std::vector<SweepResult> run_diffusion_sweep(const ExperimentConfig& cfg, const PreparedData& data,
                                                    const SweepProgress& progress = {}) {
  detail::require_value(!cfg.sweep.empty(), "diffusion sweep needs at least one setting");
  std::vector<SweepResult> out;
  for (const auto& s : cfg.sweep) {
    ExperimentConfig c = cfg;
    c.arch.hidden = {s.hidden};
    c.tdca.granularity = s.granularity;
    const auto specs = resolve_arch(input_dim(data.id), kClassCount, c.arch);
    const std::size_t dim = credit_dimension(s.granularity, specs);  // validates the setting
    pgpe::GenerationCallback cb;
    if (progress) cb = [&](const pgpe::GenerationLog& g) { progress(s.label, g); };
    auto evolved = evolve_for(c, {data}, cb);
    const auto problem = make_problem(data, c.arch);
    std::vector<SeedMetrics> runs;
    for (auto seed : cfg.seeds) runs.push_back(run_tdca(evolved.tdca, *problem, data.test, seed, cfg.steps));
    SweepResult r{s, dim, evolved.tdca, evolved.evolution,
                  summarize(runs, [](const SeedMetrics& m) { return m.train_accuracy; }),
                  summarize(runs, [](const SeedMetrics& m) { return m.test_accuracy; })};
    out.push_back(std::move(r));
  }
  return out;
}

inline Table sweep_table(const std::vector<SweepResult>& results) {
  Table t({"setting", "hidden", "credit_dim", "credit_parameters", "train_accuracy", "test_accuracy",
           "final_mean_fitness"});
  for (const auto& r : results) {
    const double fit = r.evolution.history.empty() ? 0.0 : r.evolution.history.back().mean_fitness;
    t.add_row({r.setting.label, std::to_string(r.setting.hidden), std::to_string(r.credit_dim),
               std::to_string(r.tdca.net.parameter_count()), fmt(r.train.mean), fmt(r.test.mean), fmt(fit)});
  }
  return t;
}

}  // namespace tdca::harness
