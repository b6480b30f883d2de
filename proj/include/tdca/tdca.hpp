#pragma once

// Top-down credit assignment. A small credit network T(S(f), y; beta) reads an
// aggregate observation of the bottom-up network and emits bounded credits at
// a chosen granularity; credits become parameter updates without any loss
// differentiation. beta itself is evolved with PGPE over whole inner loops.

#include "tdca/dataset.hpp"
#include "tdca/diffusion.hpp"
#include "tdca/error.hpp"
#include "tdca/gaussian.hpp"
#include "tdca/linalg.hpp"
#include "tdca/nn.hpp"
#include "tdca/pgpe.hpp"

#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tdca {

// ---------------------------------------------------------------------------
// Granularity and credit layout

struct GroupSpec {
  NeighborStructure structure = NeighborStructure::line(100);
  std::size_t credits = 10;
  double sigma = 0.0;            // <= 0 selects default_sigma()
  bool include_outputs = false;  // diffuse output-layer credits too
};

struct Granularity {
  enum class Kind { PerParameter, PerNeuron, PerGroup };

  Kind kind = Kind::PerNeuron;
  std::optional<GroupSpec> group;  // PerGroup only

  static Granularity per_parameter() { return {Kind::PerParameter, std::nullopt}; }
  static Granularity per_neuron() { return {Kind::PerNeuron, std::nullopt}; }
  static Granularity per_group(GroupSpec g) { return {Kind::PerGroup, std::move(g)}; }
};

/// How a neuron's credit c_j becomes updates of its incoming weights.
///   MeanActivity: dw_ij = c_j * mean_b a_bi, db_j = c_j (default)
///   Broadcast:    dw_ij = c_j,               db_j = c_j
///   LocalError:   output layer dw_kj = c_k * mean_b a_bj (y_bk - p_bk),
///                 db_k = c_k * mean_b (y_bk - p_bk); other layers MeanActivity
///                 with c_j divided by the fan-in k = in_dim + 1, so a hidden
///                 unit's pre-activation moves O(c) per step whatever its width
enum class ExpansionRule { MeanActivity, Broadcast, LocalError };

inline std::string_view to_string(ExpansionRule r) {
  switch (r) {
    case ExpansionRule::MeanActivity: return "mean_activity";
    case ExpansionRule::Broadcast: return "broadcast";
    case ExpansionRule::LocalError: return "local_error";
  }
  return "?";
}

inline ExpansionRule expansion_rule_from_string(std::string_view s) {
  if (s == "mean_activity") return ExpansionRule::MeanActivity;
  if (s == "broadcast") return ExpansionRule::Broadcast;
  if (s == "local_error") return ExpansionRule::LocalError;
  throw ValueError("unknown expansion rule '" + std::string(s) + "'");
}

/// Per-layer resolution of a granularity against a concrete architecture.
struct LayerCredits {
  std::size_t offset = 0;   // position in the credit vector
  std::size_t count = 0;    // credits consumed by this layer
  bool diffused = false;
  GroupAssignment assignment;
  NeighborStructure structure;
  DiffusionKernel kernel;
};

struct CreditLayout {
  Granularity::Kind kind = Granularity::Kind::PerNeuron;
  std::size_t dimension = 0;
  std::vector<LayerCredits> layers;  // empty for PerParameter
};

inline CreditLayout resolve_credit_layout(const Granularity& g, std::span<const LayerSpec> arch) {
  validate_specs(arch);
  CreditLayout out;
  out.kind = g.kind;
  if (g.kind == Granularity::Kind::PerParameter) {
    out.dimension = parameter_count(arch);
    return out;
  }
  if (g.kind == Granularity::Kind::PerGroup) {
    detail::require_value(g.group.has_value(), "per-group granularity needs a group spec");
  }
  std::size_t offset = 0;
  for (std::size_t t = 0; t < arch.size(); ++t) {
    LayerCredits lc;
    lc.offset = offset;
    const std::size_t width = arch[t].out_dim;
    const bool is_output = t + 1 == arch.size();
    if (g.kind == Granularity::Kind::PerGroup && (!is_output || g.group->include_outputs)) {
      const GroupSpec& gs = *g.group;
      lc.diffused = true;
      lc.structure = is_output ? NeighborStructure::line(width) : gs.structure;
      const std::size_t credits = is_output ? std::min(gs.credits, width) : gs.credits;
      if (lc.structure.size() != width) {
        throw DimensionError("group structure holds " + std::to_string(lc.structure.size()) +
                             " neurons but layer " + std::to_string(t) + " has " +
                             std::to_string(width));
      }
      lc.assignment = assign_groups(width, credits, lc.structure);
      lc.kernel.sigma = gs.sigma > 0.0 ? gs.sigma : default_sigma(lc.assignment, lc.structure);
      lc.count = credits;
    } else {
      lc.count = width;
    }
    offset += lc.count;
    out.layers.push_back(std::move(lc));
  }
  out.dimension = offset;
  return out;
}

inline std::size_t credit_dimension(const Granularity& g, std::span<const LayerSpec> arch) {
  return resolve_credit_layout(g, arch).dimension;
}

// ---------------------------------------------------------------------------
// Credit network

struct StateVector {
  Vector values;
  std::string descriptor;
};

struct CreditVector {
  Vector values;
};

struct TdcaNetwork {
  Mlp net;
  Granularity granularity;
  double credit_scale = 0.1;
  ExpansionRule rule = ExpansionRule::MeanActivity;

  std::size_t state_dim() const { return net.input_dim(); }
  std::size_t credit_dim() const { return net.output_dim(); }
  Vector parameters() const { return net.flatten().values; }

  void set_parameters(const Vector& beta) {
    detail::require_dims(static_cast<std::size_t>(beta.size()) == net.parameter_count(),
                         "credit network has " + std::to_string(net.parameter_count()) +
                             " parameters, got " + std::to_string(beta.size()));
    ParamVector p = ParamVector::zeros(net.layers());
    p.values = beta;
    net.unflatten(p);
  }
};

struct TdcaConfig {
  std::size_t hidden = 32;
  double credit_scale = 0.1;
  Granularity granularity = Granularity::per_neuron();
  ExpansionRule rule = ExpansionRule::MeanActivity;
};

/// state_dim -> hidden Tanh -> credit_dim Tanh, all parameters zero.
inline TdcaNetwork make_tdca(std::size_t state_dim, std::size_t credit_dim, const TdcaConfig& cfg) {
  detail::require_value(cfg.credit_scale > 0.0, "credit scale must be positive");
  std::vector<LayerSpec> specs{{state_dim, cfg.hidden, Activation::Tanh},
                               {cfg.hidden, credit_dim, Activation::Tanh}};
  return TdcaNetwork{Mlp(std::move(specs)), cfg.granularity, cfg.credit_scale, cfg.rule};
}

/// (mean output row, mean (output - target) row, mean cross-entropy).
inline StateVector build_state(const Matrix& outputs, const Matrix& targets) {
  detail::require_dims(outputs.rows() == targets.rows() && outputs.cols() == targets.cols(),
                       "build_state: outputs and targets differ in shape");
  detail::require_dims(outputs.rows() >= 1, "build_state: empty batch");
  const Eigen::Index c = outputs.cols();
  StateVector s;
  s.values.resize(2 * c + 1);
  s.values.head(c) = outputs.colwise().mean().transpose();
  s.values.segment(c, c) = (outputs - targets).colwise().mean().transpose();
  s.values[2 * c] = cross_entropy(outputs, targets);
  s.descriptor = "mean_output[" + std::to_string(c) + "] mean_error[" + std::to_string(c) +
                 "] mean_loss[1]";
  return s;
}

/// (x, y, f(x, y)) for the two-dimensional task.
inline StateVector build_gaussian_state(const MixedGaussian& f, const Point2& point) {
  StateVector s;
  s.values.resize(3);
  s.values << point.x(), point.y(), gaussian_value(f, point);
  s.descriptor = "point[2] value[1]";
  return s;
}

inline CreditVector generate_credits(const TdcaNetwork& tdca, const StateVector& state) {
  detail::require_dims(static_cast<std::size_t>(state.values.size()) == tdca.state_dim(),
                       "state has " + std::to_string(state.values.size()) +
                           " values, credit network expects " + std::to_string(tdca.state_dim()));
  detail::require_value(tdca.net.layers().back().activation == Activation::Tanh,
                        "credit network must end in tanh");
  const ForwardCache cache = forward(tdca.net, Matrix(state.values.transpose()));
  return CreditVector{tdca.credit_scale * cache.output().row(0).transpose()};
}

/// Per-neuron credits of layer t (group credits diffused when applicable).
inline Vector layer_neuron_credits(const CreditVector& credits, const LayerCredits& lc) {
  const Vector slice = credits.values.segment(static_cast<Eigen::Index>(lc.offset),
                                              static_cast<Eigen::Index>(lc.count));
  if (!lc.diffused) return slice;
  return diffuse(slice, lc.assignment, lc.structure, lc.kernel);
}

/// Multiplier on the mean-activity expansion of a layer under `rule`.
inline double mean_activity_gain(ExpansionRule rule, const LayerSpec& layer, bool is_output) {
  if (rule == ExpansionRule::LocalError && !is_output) {
    return 1.0 / static_cast<double>(layer.in_dim + 1);
  }
  return 1.0;
}

namespace detail {

inline void expand_mean_activity(const Vector& c, const Eigen::RowVectorXd& mean_pre,
                                 Eigen::Map<Matrix> dw, Eigen::Map<Vector> db) {
  dw.noalias() = c * mean_pre;
  db = c;
}

inline void expand_local_error(const Vector& c, const Matrix& pre, const Matrix& out,
                               const Matrix& targets, Eigen::Map<Matrix> dw,
                               Eigen::Map<Vector> db) {
  const double inv_b = 1.0 / static_cast<double>(pre.rows());
  const Matrix err = targets - out;
  dw.noalias() = (err.transpose() * pre) * inv_b;
  dw = c.asDiagonal() * dw;
  db = c.cwiseProduct(err.colwise().mean().transpose());
}

}  // namespace detail

/// Turn credits into a parameter update. `targets` is required for the
/// LocalError rule.
inline ParamVector credits_to_update(const CreditVector& credits, const Mlp& mlp,
                                     const ForwardCache& cache, const CreditLayout& layout,
                                     ExpansionRule rule = ExpansionRule::MeanActivity,
                                     const Matrix* targets = nullptr) {
  detail::require_dims(static_cast<std::size_t>(credits.values.size()) == layout.dimension,
                       "credit vector has " + std::to_string(credits.values.size()) +
                           " entries, granularity needs " + std::to_string(layout.dimension));
  if (layout.kind == Granularity::Kind::PerParameter) {
    ParamVector p = ParamVector::zeros(mlp.layers());
    detail::require_dims(p.size() == layout.dimension, "per-parameter credits/layout mismatch");
    p.values = credits.values;
    return p;
  }
  detail::require_dims(cache.activations.size() == mlp.layer_count() + 1,
                       "credits_to_update needs a forward cache of this network");
  detail::require_dims(layout.layers.size() == mlp.layer_count(),
                       "credit layout resolved for a different architecture");
  if (rule == ExpansionRule::LocalError) {
    detail::require_value(targets != nullptr, "local_error expansion needs the batch targets");
  }

  ParamVector delta = ParamVector::zeros(mlp.layers());
  for (std::size_t t = 0; t < mlp.layer_count(); ++t) {
    const Vector c = layer_neuron_credits(credits, layout.layers[t]);
    const Matrix& pre = cache.presynaptic(t);
    const bool is_output = t + 1 == mlp.layer_count();
    if (rule == ExpansionRule::Broadcast) {
      delta.weights(t) = c.replicate(1, pre.cols());
      delta.biases(t) = c;
    } else if (rule == ExpansionRule::LocalError && is_output) {
      detail::expand_local_error(c, pre, cache.output(), *targets, delta.weights(t), delta.biases(t));
    } else {
      const double gain = mean_activity_gain(rule, mlp.layers()[t], is_output);
      detail::expand_mean_activity(gain * c, pre.colwise().mean(), delta.weights(t), delta.biases(t));
    }
  }
  return delta;
}

inline ParamVector credits_to_update(const CreditVector& credits, const Mlp& mlp,
                                     const ForwardCache& cache, const Granularity& g,
                                     ExpansionRule rule = ExpansionRule::MeanActivity,
                                     const Matrix* targets = nullptr) {
  return credits_to_update(credits, mlp, cache, resolve_credit_layout(g, mlp.layers()), rule,
                           targets);
}

// ---------------------------------------------------------------------------
// Inner loops

struct StepMetrics {
  double accuracy = 0.0;
  double loss = 0.0;
};

struct InnerLoopTrace {
  StepMetrics initial;
  std::vector<StepMetrics> steps;       // after each update
  std::vector<ParamVector> snapshots;   // theta_0..theta_steps when recorded

  std::size_t step_count() const { return steps.size(); }
  const StepMetrics& final() const { return steps.empty() ? initial : steps.back(); }
};

struct InnerLoopOptions {
  bool record_snapshots = false;
  // Maintain the first layer's pre-activations incrementally. Exact in
  // arithmetic because every first-layer update is rank one along the mean
  // input; rounding differs from a full recompute at the 1e-12 level.
  bool incremental_first_layer = true;
};

struct BottomUpArch {
  std::vector<std::size_t> hidden{100};
  Activation hidden_activation = Activation::Tanh;
};

inline std::vector<LayerSpec> resolve_arch(std::size_t input_dim, std::size_t classes,
                                           const BottomUpArch& arch) {
  std::vector<LayerSpec> specs;
  std::size_t in = input_dim;
  for (std::size_t h : arch.hidden) {
    specs.push_back({in, h, arch.hidden_activation});
    in = h;
  }
  specs.push_back({in, classes, Activation::Softmax});
  validate_specs(specs);
  return specs;
}

/// Fixed training data of one classification inner loop plus the quantities
/// the incremental first layer needs.
class ClassificationProblem {
 public:
  ClassificationProblem(Dataset train, BottomUpArch arch)
      : train_(std::move(train)), arch_(std::move(arch)) {
    detail::require_value(!train_.empty(), "classification problem needs training data");
    specs_ = resolve_arch(train_.dim(), kClassCount, arch_);
    targets_ = one_hot(train_.labels);
    mean_input_ = train_.inputs.colwise().mean();
    // pre-activation shift per unit credit: x_b . mean_x + 1 (bias)
    shift_ = (train_.inputs * mean_input_.transpose()).array() + 1.0;
  }

  const Dataset& train() const { return train_; }
  const Matrix& inputs() const { return train_.inputs; }
  const Matrix& targets() const { return targets_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  const BottomUpArch& arch() const { return arch_; }
  const Eigen::RowVectorXd& mean_input() const { return mean_input_; }
  const Vector& first_layer_shift() const { return shift_; }

 private:
  Dataset train_;
  BottomUpArch arch_;
  std::vector<LayerSpec> specs_;
  Matrix targets_;
  Eigen::RowVectorXd mean_input_;
  Vector shift_;
};

/// Initial bottom-up network for a seed and its first-layer pre-activations on
/// the problem's inputs.
struct InitialState {
  Mlp mlp;
  Matrix first_preact;
};

inline InitialState make_initial_state(const ClassificationProblem& problem, std::uint64_t seed) {
  Mlp mlp = init_mlp(problem.specs(), seed);
  Matrix z = problem.inputs() * mlp.weights(0).transpose();
  z.rowwise() += mlp.biases(0).transpose();
  return {std::move(mlp), std::move(z)};
}

struct InnerLoopResult {
  Mlp mlp;
  InnerLoopTrace trace;
};

namespace detail {

inline bool can_run_incremental(const TdcaNetwork& tdca, const CreditLayout& layout,
                                const Mlp& mlp) {
  return mlp.layer_count() >= 2 && layout.kind != Granularity::Kind::PerParameter &&
         tdca.rule != ExpansionRule::Broadcast;
}

inline void check_finite_outputs(const Matrix& out, std::size_t step) {
  if (!out.allFinite()) {
    throw ValueError("inner loop: non-finite activations at step " + std::to_string(step));
  }
}

}  // namespace detail

/// Fresh network from `initial`, then `steps` rounds of
/// forward -> state -> credits -> update (scale 1).
inline InnerLoopResult inner_loop(const TdcaNetwork& tdca, const InitialState& initial,
                                  const ClassificationProblem& problem, std::size_t steps,
                                  const InnerLoopOptions& opts = {}) {
  detail::require_value(steps >= 1, "inner loop needs at least one step");
  Mlp mlp = initial.mlp;
  const CreditLayout layout = resolve_credit_layout(tdca.granularity, mlp.layers());
  detail::require_dims(layout.dimension == tdca.credit_dim(),
                       "credit network emits " + std::to_string(tdca.credit_dim()) +
                           " credits, bottom-up network needs " + std::to_string(layout.dimension));
  const Matrix& y = problem.targets();
  const auto& labels = problem.train().labels;

  InnerLoopResult res{mlp, {}};
  res.trace.steps.reserve(steps);
  auto record = [&](const Matrix& out, std::size_t step) {
    detail::check_finite_outputs(out, step);
    StepMetrics m{accuracy_of_outputs(out, labels), cross_entropy(out, y)};
    if (step == 0) {
      res.trace.initial = m;
    } else {
      res.trace.steps.push_back(m);
    }
    if (opts.record_snapshots) res.trace.snapshots.push_back(mlp.flatten());
  };

  const bool incremental = opts.incremental_first_layer && detail::can_run_incremental(tdca, layout, mlp);
  if (!incremental) {
    for (std::size_t s = 0; s <= steps; ++s) {
      const ForwardCache cache = forward(mlp, problem.inputs());
      record(cache.output(), s);
      if (s == steps) break;
      const StateVector state = build_state(cache.output(), y);
      const CreditVector credits = generate_credits(tdca, state);
      const ParamVector delta = credits_to_update(credits, mlp, cache, layout, tdca.rule, &y);
      apply_update_inplace(mlp, delta, 1.0);
    }
    res.mlp = std::move(mlp);
    return res;
  }

  // Incremental path: the first-layer update is c (x) mean_x, so its
  // pre-activations move by shift_b * c_j with shift_b = x_b . mean_x + 1.
  Matrix z1 = initial.first_preact;
  const Vector& shift = problem.first_layer_shift();
  const Activation act0 = mlp.layers()[0].activation;
  ForwardCache cache;  // activations[0] is left empty: never read below
  cache.activations.resize(mlp.layer_count() + 1);
  for (std::size_t s = 0; s <= steps; ++s) {
    cache.activations[1] = z1;
    detail::activate_inplace(cache.activations[1], act0);
    for (std::size_t t = 1; t < mlp.layer_count(); ++t) {
      Matrix z = cache.activations[t] * mlp.weights(t).transpose();
      z.rowwise() += mlp.biases(t).transpose();
      detail::activate_inplace(z, mlp.layers()[t].activation);
      cache.activations[t + 1] = std::move(z);
    }
    record(cache.output(), s);
    if (s == steps) break;

    const StateVector state = build_state(cache.output(), y);
    const CreditVector credits = generate_credits(tdca, state);
    detail::require_value(credits.values.allFinite(), "non-finite credits");
    for (std::size_t t = 0; t < mlp.layer_count(); ++t) {
      const bool is_output = t + 1 == mlp.layer_count();
      Vector c = layer_neuron_credits(credits, layout.layers[t]);
      if (!(tdca.rule == ExpansionRule::LocalError && is_output)) {
        c *= mean_activity_gain(tdca.rule, mlp.layers()[t], is_output);
      }
      if (t == 0) {
        mlp.weights(0).noalias() += c * problem.mean_input();
        mlp.biases(0) += c;
        z1.noalias() += shift * c.transpose();
      } else if (tdca.rule == ExpansionRule::LocalError && is_output) {
        const Matrix& pre = cache.activations[t];
        const Matrix err = y - cache.output();
        const double inv_b = 1.0 / static_cast<double>(pre.rows());
        mlp.weights(t).noalias() += c.asDiagonal() * ((err.transpose() * pre) * inv_b);
        mlp.biases(t) += c.cwiseProduct(err.colwise().mean().transpose());
      } else {
        const Eigen::RowVectorXd mean_pre = cache.activations[t].colwise().mean();
        mlp.weights(t).noalias() += c * mean_pre;
        mlp.biases(t) += c;
      }
    }
  }
  res.mlp = std::move(mlp);
  return res;
}

inline InnerLoopResult inner_loop(const TdcaNetwork& tdca, std::uint64_t init_seed,
                                  const ClassificationProblem& problem, std::size_t steps,
                                  const InnerLoopOptions& opts = {}) {
  return inner_loop(tdca, make_initial_state(problem, init_seed), problem, steps, opts);
}

/// Point trajectory of the two-dimensional task; theta is the point itself.
inline std::vector<Point2> gaussian_inner_loop(const TdcaNetwork& tdca, const MixedGaussian& f,
                                               Point2 start, std::size_t steps,
                                               double step_scale = 1.0) {
  detail::require_value(steps >= 1, "inner loop needs at least one step");
  detail::require_dims(tdca.credit_dim() == 2 && tdca.state_dim() == 3,
                       "gaussian task needs a 3 -> 2 credit network");
  std::vector<Point2> path{start};
  path.reserve(steps + 1);
  for (std::size_t s = 0; s < steps; ++s) {
    const CreditVector c = generate_credits(tdca, build_gaussian_state(f, start));
    start += step_scale * Point2(c.values[0], c.values[1]);
    if (!start.allFinite()) throw ValueError("gaussian inner loop diverged at step " + std::to_string(s));
    path.push_back(start);
  }
  return path;
}

// ---------------------------------------------------------------------------
// Tasks, fitness and evolution

struct GaussianTask {
  MixedGaussian f = MixedGaussian::standard();
  Point2 trap_start{3.0, 3.0};
  std::size_t random_starts = 0;  // extra starts drawn uniformly from the domain per init seed
  double domain = 6.0;            // square [-domain, domain]^2
  std::size_t steps = 30;
};

struct ClassificationTask {
  std::vector<std::shared_ptr<const ClassificationProblem>> problems;  // fitness is their mean
  std::size_t steps = 20;
  double loss_weight = 0.001;
};

using TaskConfig = std::variant<GaussianTask, ClassificationTask>;

inline std::vector<Point2> gaussian_starts(const GaussianTask& task, std::uint64_t init_seed) {
  std::vector<Point2> starts{task.trap_start};
  Rng rng(init_seed);
  std::uniform_real_distribution<double> u(-task.domain, task.domain);
  for (std::size_t i = 0; i < task.random_starts; ++i) {
    const double x = u(rng);
    const double y = u(rng);
    starts.emplace_back(x, y);
  }
  return starts;
}

/// Credit network architecture implied by a task.
inline TdcaNetwork make_tdca_for(const TaskConfig& task, const TdcaConfig& cfg) {
  if (std::holds_alternative<GaussianTask>(task)) {
    TdcaConfig c = cfg;
    c.granularity = Granularity::per_parameter();
    return make_tdca(3, 2, c);
  }
  const auto& ct = std::get<ClassificationTask>(task);
  detail::require_value(!ct.problems.empty(), "classification task without datasets");
  const std::size_t credits = credit_dimension(cfg.granularity, ct.problems.front()->specs());
  for (const auto& p : ct.problems) {
    detail::require_dims(credit_dimension(cfg.granularity, p->specs()) == credits,
                         "datasets of one task must share the credit dimension");
  }
  return make_tdca(2 * kClassCount + 1, credits, cfg);
}

/// Scores candidate credit networks. For classification, the initial
/// bottom-up state of the most recent seed is cached so candidates of one
/// generation (which share the seed) reuse the first-layer pre-activations.
class FitnessEvaluator {
 public:
  FitnessEvaluator(TaskConfig task, TdcaConfig cfg)
      : task_(std::move(task)), cfg_(std::move(cfg)), proto_(make_tdca_for(task_, cfg_)) {}

  const TdcaNetwork& prototype() const { return proto_; }
  const TaskConfig& task() const { return task_; }

  double operator()(const Vector& beta, std::uint64_t init_seed) const {
    TdcaNetwork tdca = proto_;
    tdca.set_parameters(beta);
    if (const auto* g = std::get_if<GaussianTask>(&task_)) {
      double total = 0.0;
      const auto starts = gaussian_starts(*g, init_seed);
      for (const auto& s : starts) {
        const auto path = gaussian_inner_loop(tdca, g->f, s, g->steps);
        total -= gaussian_value(g->f, path.back());
      }
      return total / static_cast<double>(starts.size());
    }
    const auto& ct = std::get<ClassificationTask>(task_);
    const auto inits = initial_states(init_seed);
    double total = 0.0;
    for (std::size_t i = 0; i < ct.problems.size(); ++i) {
      const auto res = inner_loop(tdca, (*inits)[i], *ct.problems[i], ct.steps);
      total += res.trace.final().accuracy - ct.loss_weight * res.trace.final().loss;
    }
    return total / static_cast<double>(ct.problems.size());
  }

 private:
  std::shared_ptr<const std::vector<InitialState>> initial_states(std::uint64_t seed) const {
    std::lock_guard<std::mutex> lock(*mutex_);
    if (cached_ && cached_seed_ == seed) return cached_;
    const auto& ct = std::get<ClassificationTask>(task_);
    auto states = std::make_shared<std::vector<InitialState>>();
    for (const auto& p : ct.problems) states->push_back(make_initial_state(*p, seed));
    cached_ = std::move(states);
    cached_seed_ = seed;
    return cached_;
  }

  TaskConfig task_;
  TdcaConfig cfg_;
  TdcaNetwork proto_;
  std::shared_ptr<std::mutex> mutex_ = std::make_shared<std::mutex>();
  mutable std::shared_ptr<const std::vector<InitialState>> cached_;
  mutable std::uint64_t cached_seed_ = 0;
};

/// fitness of one candidate beta: classification -> final train accuracy
/// minus loss_weight * final loss (averaged over datasets); gaussian -> mean
/// of -f(final point) over the task's starts.
inline double fitness_of(const Vector& beta, const TaskConfig& task, const TdcaConfig& cfg,
                         std::uint64_t init_seed) {
  return FitnessEvaluator(task, cfg)(beta, init_seed);
}

struct EvolvedTdca {
  TdcaNetwork tdca;
  pgpe::Result evolution;
};

/// Outer loop: PGPE over beta starting from zero (a neutral credit network).
/// Every candidate of a generation shares that generation's init seed.
inline EvolvedTdca evolve_tdca(const TaskConfig& task, const TdcaConfig& cfg,
                               const pgpe::Config& pcfg,
                               const pgpe::GenerationCallback& on_generation = {}) {
  FitnessEvaluator eval(task, cfg);
  TdcaNetwork tdca = eval.prototype();
  const Vector start = Vector::Zero(static_cast<Eigen::Index>(tdca.net.parameter_count()));
  if (pcfg.generations == 0) {
    return {tdca, pgpe::Result{start, pgpe::State::make(start, pcfg), {}}};
  }
  auto objective = [&eval](const Vector& beta, const pgpe::EvalContext& ctx) {
    return eval(beta, ctx.generation_seed);
  };
  pgpe::Result r = pgpe::evolve(objective, start, pcfg, on_generation);
  tdca.set_parameters(r.best_center);
  return {std::move(tdca), std::move(r)};
}

}  // namespace tdca
