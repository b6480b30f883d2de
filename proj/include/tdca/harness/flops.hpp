#pragma once

// Analytic floating-point operation counts per inner-loop step. A multiply-add
// counts as two operations; activations and comparisons are not counted.

#include "tdca/harness/report.hpp"
#include "tdca/nn.hpp"
#include "tdca/tdca.hpp"

#include <string>
#include <vector>

namespace tdca::harness {

struct FlopRow {
  std::string network;  // "default" or "big"
  std::string method;   // bp, tdca-parameter, tdca-neuron, tdca-group
  std::size_t parameters = 0;
  std::size_t credit_parameters = 0;
  double forward = 0.0;  // MFLOPs
  double credit = 0.0;   // backward pass for BP, state + credit net + expansion for TDCA
  double update = 0.0;

  double total() const { return forward + credit + update; }
};

struct FlopReport {
  std::size_t batch = 0;
  std::vector<FlopRow> rows;

  const FlopRow& find(const std::string& network, const std::string& method) const {
    for (const auto& r : rows) {
      if (r.network == network && r.method == method) return r;
    }
    throw ValueError("no flop row for " + network + "/" + method);
  }

  Table table() const {
    Table t({"network", "method", "parameters", "credit_parameters", "forward_mflops",
             "credit_mflops", "update_mflops", "total_mflops"});
    for (const auto& r : rows) {
      t.add_row({r.network, r.method, std::to_string(r.parameters), std::to_string(r.credit_parameters),
                 fmt(r.forward, 4), fmt(r.credit, 4), fmt(r.update, 4), fmt(r.total(), 4)});
    }
    return t;
  }
};

/// 2 * in * out per example and layer.
inline double forward_flops_per_example(std::span<const LayerSpec> specs) {
  double f = 0.0;
  for (const auto& l : specs) f += 2.0 * static_cast<double>(l.in_dim) * static_cast<double>(l.out_dim);
  return f;
}

inline double bias_adds_per_example(std::span<const LayerSpec> specs) {
  double f = 0.0;
  for (const auto& l : specs) f += static_cast<double>(l.out_dim);
  return f;
}

/// Counts for one bottom-up architecture at a batch size.
inline std::vector<FlopRow> count_flops(const std::string& network, std::span<const LayerSpec> specs,
                                        std::size_t batch, std::size_t credit_hidden,
                                        const std::vector<std::pair<std::string, Granularity>>& tdca_variants,
                                        ExpansionRule rule = ExpansionRule::MeanActivity) {
  validate_specs(specs);
  const double b = static_cast<double>(batch);
  const double p = static_cast<double>(parameter_count(specs));
  const double fwd = b * (forward_flops_per_example(specs) + bias_adds_per_example(specs));
  const double update = 2.0 * p;  // theta += scale * delta
  const double classes = static_cast<double>(specs.back().out_dim);
  const double mega = 1e-6;
  std::vector<FlopRow> rows;

  FlopRow bp{network, "bp", parameter_count(specs), 0, fwd * mega, 2.0 * fwd * mega, update * mega};
  rows.push_back(bp);

  const std::size_t state_dim = 2 * specs.back().out_dim + 1;
  for (const auto& [label, g] : tdca_variants) {
    const CreditLayout layout = resolve_credit_layout(g, specs);
    const std::vector<LayerSpec> credit_net{{state_dim, credit_hidden, Activation::Tanh},
                                            {credit_hidden, layout.dimension, Activation::Tanh}};
    // state: mean outputs, mean errors (subtract + sum), mean loss
    double credit = b * (3.0 * classes + 1.0);
    credit += forward_flops_per_example(credit_net) + bias_adds_per_example(credit_net);
    credit += static_cast<double>(layout.dimension);  // eta scaling
    if (layout.kind != Granularity::Kind::PerParameter) {
      for (std::size_t t = 0; t < specs.size(); ++t) {
        const double in = static_cast<double>(specs[t].in_dim);
        const double out = static_cast<double>(specs[t].out_dim);
        const auto& lc = layout.layers[t];
        if (lc.diffused) credit += 2.0 * out * static_cast<double>(lc.count);
        const bool local = rule == ExpansionRule::LocalError && t + 1 == specs.size();
        if (local) {
          credit += b * out + 2.0 * b * in * out + in * out + b * out;
        } else if (rule == ExpansionRule::Broadcast) {
          credit += 0.0;
        } else {
          credit += b * in + in * out;  // batch-mean activity, outer product
        }
      }
    }
    rows.push_back({network, label, parameter_count(specs), parameter_count(credit_net), fwd * mega,
                    credit * mega, update * mega});
  }
  return rows;
}

/// Default and enlarged single-hidden-layer nets with the standard variants.
inline FlopReport flop_report(std::size_t input_dim, std::size_t hidden, std::size_t big_hidden,
                              std::size_t batch, std::size_t group_credits, std::size_t credit_hidden,
                              ExpansionRule rule = ExpansionRule::MeanActivity) {
  FlopReport report;
  report.batch = batch;
  for (const auto& [name, h] : {std::pair<std::string, std::size_t>{"default", hidden}, {"big", big_hidden}}) {
    const std::vector<LayerSpec> specs{{input_dim, h, Activation::Tanh}, {h, kClassCount, Activation::Softmax}};
    const std::vector<std::pair<std::string, Granularity>> variants{
        {"tdca-parameter", Granularity::per_parameter()},
        {"tdca-neuron", Granularity::per_neuron()},
        {"tdca-group", Granularity::per_group({NeighborStructure::line(h), group_credits, 0.0, false})}};
    for (auto& r : count_flops(name, specs, batch, credit_hidden, variants, rule)) report.rows.push_back(r);
  }
  return report;
}

}  // namespace tdca::harness
