// Command-line front end: evolve, compare, transfer, diffuse, flops,
// landscape, field. Every run writes CSV files plus manifest.json into its
// output directory.

#include "tdca/harness/config.hpp"
#include "tdca/harness/data.hpp"
#include "tdca/harness/experiments.hpp"
#include "tdca/harness/flops.hpp"
#include "tdca/harness/landscape.hpp"
#include "tdca/harness/report.hpp"
#include "tdca/io.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace tdca;
using namespace tdca::harness;

namespace {

struct CommonOptions {
  std::string config;
  std::string data_dir;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool quiet = false;
};

/// Output directory plus the manifest that records everything written there.
class Run {
 public:
  Run(std::string command, const CommonOptions& opts)
      : command_(std::move(command)),
        cfg_file_(ConfigFile::load(opts.config)),
        data_dir_(resolve_data_dir(opts.data_dir)),
        quiet_(opts.quiet) {
    if (opts.seed) cfg_file_.set("pgpe.seed", std::to_string(*opts.seed));
    if (opts.threads) cfg_file_.set("pgpe.threads", std::to_string(*opts.threads));
    if (!opts.checkpoint.empty()) cfg_file_.set("tdca.checkpoint", opts.checkpoint);
    if (!opts.out.empty()) cfg_file_.set("experiment.out", opts.out);
    cfg_ = experiment_from(cfg_file_);
    out_ = cfg_.out;
    auto echo = cfg_file_.values();
    echo.erase("pgpe.threads");  // never changes results
    manifest_.emplace(command_, echo);
    manifest_->add_input(opts.config);
    fs::create_directories(out_);
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  const fs::path& data_dir() const { return data_dir_; }
  const fs::path& out() const { return out_; }

  void log(const std::string& line) const {
    if (!quiet_) std::cerr << line << '\n';
  }

  std::vector<PreparedData> load(const std::vector<DatasetId>& ids) {
    std::vector<PreparedData> out;
    for (DatasetId id : ids) {
      log("loading " + std::string(to_string(id)) + " from " + data_dir_.string());
      out.push_back(prepare_data(data_dir_, id, cfg_.train_size, cfg_.test_size, cfg_.subsample_seed));
      for (const auto& f : out.back().files) manifest_->add_input(f);
    }
    return out;
  }

  std::optional<TdcaNetwork> checkpoint(bool required) {
    if (cfg_.checkpoint.empty()) {
      if (required) throw Error("missing checkpoint for TDCA method: set tdca.checkpoint or pass --checkpoint");
      return std::nullopt;
    }
    if (!fs::exists(cfg_.checkpoint)) throw Error("missing checkpoint " + cfg_.checkpoint);
    manifest_->add_input(cfg_.checkpoint);
    return load_tdca(cfg_.checkpoint);
  }

  void write(const std::string& name, const std::string& content) {
    write_text(out_ / name, content);
    manifest_->add_output(name, content);
  }

  void write_table(const std::string& stem, const Table& t, bool text = false) {
    write(stem + ".csv", t.to_csv());
    if (text) write(stem + ".txt", t.to_text());
  }

  void save_checkpoint(const std::string& name, const TdcaNetwork& tdca) {
    save_tdca(out_ / name, tdca);
    manifest_->add_output(name, read_text(out_ / name));
  }

  void note(const std::string& k, const std::string& v) { manifest_->set(k, v); }

  void finish() {
    manifest_->write(out_);
    log("wrote " + out_.string() + " (content hash " + manifest_->content_hash() + ")");
  }

  pgpe::GenerationCallback progress(const std::string& label) const {
    if (quiet_) return {};
    return [label](const pgpe::GenerationLog& g) {
      if (g.generation % 10 == 0) {
        std::fprintf(stderr, "%s gen %3zu  best %.5f  mean %.5f  sigma %.5f\n", label.c_str(), g.generation,
                     g.best_fitness, g.mean_fitness, g.sigma_mean);
      }
    };
  }

 private:
  std::string command_;
  ConfigFile cfg_file_;
  ExperimentConfig cfg_;
  fs::path data_dir_;
  fs::path out_;
  bool quiet_;
  std::optional<Manifest> manifest_;
};

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  }
  return s;
}

Table tdca_eval_table(const ExperimentConfig& cfg, const TdcaNetwork& tdca, const std::vector<PreparedData>& data) {
  Table t({"dataset", "seed", "initial_train_accuracy", "train_accuracy", "test_accuracy", "train_loss"});
  for (const auto& d : data) {
    const auto problem = make_problem(d, cfg.arch);
    for (auto seed : cfg.seeds) {
      const auto m = run_tdca(tdca, *problem, d.test, seed, cfg.steps);
      t.add_row({std::string(to_string(d.id)), std::to_string(seed), fmt(m.initial_train_accuracy),
                 fmt(m.train_accuracy), fmt(m.test_accuracy), fmt(m.train_loss)});
    }
  }
  return t;
}

int cmd_evolve(const CommonOptions& o) {
  Run run("evolve", o);
  const auto& cfg = run.cfg();
  std::vector<PreparedData> data;
  if (cfg.task == TaskKind::Classification) data = run.load(cfg.datasets);
  const auto evolved = evolve_for(cfg, data, run.progress(cfg.name));
  run.save_checkpoint("tdca.ckpt", evolved.tdca);
  run.write_table("history", history_table(evolved.evolution));
  if (cfg.task == TaskKind::Classification) {
    run.write_table("evaluation", tdca_eval_table(cfg, evolved.tdca, data), true);
  } else {
    run.write_table("trajectory", gaussian_path_table(run_gaussian_compare(cfg, &evolved.tdca)));
  }
  run.finish();
  return 0;
}

int cmd_compare(const CommonOptions& o) {
  Run run("compare", o);
  const auto& cfg = run.cfg();
  const auto tdca = run.checkpoint(cfg.method == MethodKind::TDCA);
  if (cfg.task == TaskKind::Gaussian) {
    const auto g = run_gaussian_compare(cfg, tdca ? &*tdca : nullptr);
    run.write_table("gaussian_compare", gaussian_summary_table(g), true);
    run.write_table("gaussian_paths", gaussian_path_table(g));
  } else {
    const auto data = run.load(cfg.datasets);
    const auto results = run_compare(cfg, data, tdca ? &*tdca : nullptr);
    run.write_table("compare", compare_table(results), true);
  }
  run.finish();
  return 0;
}

int cmd_transfer(const CommonOptions& o) {
  Run run("transfer", o);
  const auto& cfg = run.cfg();
  if (cfg.transfer_sources.empty()) throw ConfigError("transfer.sources lists no checkpoints");
  std::vector<std::pair<std::string, TdcaNetwork>> sources;
  for (const auto& [label, path] : cfg.transfer_sources) {
    if (!fs::exists(path)) throw Error("missing checkpoint for TDCA method: " + path + " (source " + label + ")");
    sources.emplace_back(label, load_tdca(path));
  }
  const auto data = run.load(cfg.transfer_targets.empty() ? cfg.datasets : cfg.transfer_targets);
  run.write_table("transfer", transfer_table(run_transfer(cfg, sources, data)), true);
  run.finish();
  return 0;
}

int cmd_diffuse(const CommonOptions& o) {
  Run run("diffuse", o);
  const auto& cfg = run.cfg();
  if (cfg.sweep.empty()) throw ConfigError("diffusion.settings lists no settings");
  const auto data = run.load({cfg.datasets.front()});
  const bool quiet = o.quiet;
  const auto results = run_diffusion_sweep(cfg, data.front(), [quiet](const std::string& l, const pgpe::GenerationLog& g) {
    if (!quiet && g.generation % 10 == 0) {
      std::fprintf(stderr, "%s gen %3zu  best %.5f  mean %.5f\n", l.c_str(), g.generation, g.best_fitness, g.mean_fitness);
    }
  });
  for (const auto& r : results) {
    const std::string stem = safe_name(r.setting.label);
    run.save_checkpoint("tdca_" + stem + ".ckpt", r.tdca);
    run.write_table("history_" + stem, history_table(r.evolution));
  }
  run.write_table("diffusion", sweep_table(results), true);
  run.finish();
  return 0;
}

int cmd_flops(const CommonOptions& o) {
  Run run("flops", o);
  const auto& cfg = run.cfg();
  const auto report = flop_report(input_dim(cfg.datasets.front()), cfg.arch.hidden.front(), cfg.flops.big_hidden,
                                  cfg.flops.batch, cfg.flops.group_credits, cfg.tdca.hidden, cfg.tdca.rule);
  run.write_table("flops", report.table(), true);
  run.finish();
  return 0;
}

int cmd_landscape(const CommonOptions& o) {
  Run run("landscape", o);
  const auto& cfg = run.cfg();
  if (cfg.task != TaskKind::Classification) throw ConfigError("landscape needs a classification task");
  const auto tdca = run.checkpoint(true);
  const auto data = run.load({cfg.datasets.front()});
  const auto problem = make_problem(data.front(), cfg.arch);
  require_compatible(*tdca, 2 * kClassCount + 1, problem->specs());
  const std::uint64_t seed = cfg.seeds.front();
  std::vector<ParamVector> bp_snaps, tdca_snaps;
  run_bp(*problem, data.front().test, seed, cfg.steps, cfg.bp_lr, &bp_snaps);
  run_tdca(*tdca, *problem, data.front().test, seed, cfg.steps, &tdca_snaps);
  const auto bp = to_trajectory("bp", bp_snaps);
  const auto td = to_trajectory("tdca", tdca_snaps);
  const Plane plane = pca_plane(bp, td);
  const auto pbp = project(plane, bp);
  const auto ptd = project(plane, td);
  const GridSpec grid = grid_around({pbp, ptd}, cfg.landscape.points, cfg.landscape.margin);
  run.log("evaluating " + std::to_string(grid.points * grid.points) + " grid points");
  const auto land = landscape_eval(problem->specs(), problem->inputs(), problem->targets(), problem->train().labels,
                                   plane, grid);
  run.write_table("landscape_grid", landscape_table(land));
  run.write_table("trajectories", projection_table({{"bp", pbp}, {"tdca", ptd}}));
  double max_res_bp = 0.0, max_res_td = 0.0;
  for (const auto& q : pbp) max_res_bp = std::max(max_res_bp, q.residual);
  for (const auto& q : ptd) max_res_td = std::max(max_res_td, q.residual);
  Table summary({"explained_pc1", "explained_pc2", "principal_angle_degrees", "max_residual_bp", "max_residual_tdca"});
  summary.add_row({fmt(plane.explained[0]), fmt(plane.explained[1]), fmt(principal_angle_degrees(bp, td), 4),
                   fmt(max_res_bp), fmt(max_res_td)});
  run.write_table("plane", summary, true);
  run.finish();
  return 0;
}

int cmd_field(const CommonOptions& o) {
  Run run("field", o);
  const auto& cfg = run.cfg();
  const MixedGaussian f = MixedGaussian::standard();
  const FieldSpec spec{cfg.field.lo, cfg.field.hi, cfg.field.points};
  const auto tdca = run.checkpoint(cfg.method == MethodKind::TDCA);
  std::vector<std::pair<std::string, std::vector<FlowResult>>> flows;
  run.write_table("field_bp", field_table(bp_rule(f), spec));
  flows.emplace_back("bp", flow_grid(bp_rule(f), f, spec, cfg.field.steps, cfg.field.scale, cfg.field.tolerance));
  if (tdca) {
    run.write_table("field_tdca", field_table(tdca_rule(*tdca, f), spec));
    flows.emplace_back("tdca", flow_grid(tdca_rule(*tdca, f), f, spec, cfg.field.steps, cfg.field.scale,
                                         cfg.field.tolerance));
  }
  run.write_table("flow", flow_table(flows));
  Table summary({"method", "starts", "global_basin", "local_basin", "elsewhere"});
  const int global = static_cast<int>(f.dominant());
  for (const auto& [m, rs] : flows) {
    std::size_t g = 0, l = 0, e = 0;
    for (const auto& r : rs) {
      if (r.basin == global) {
        ++g;
      } else if (r.basin >= 0) {
        ++l;
      } else {
        ++e;
      }
    }
    summary.add_row({m, std::to_string(rs.size()), std::to_string(g), std::to_string(l), std::to_string(e)});
  }
  run.write_table("field_summary", summary, true);
  run.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Top-down credit assignment laboratory"};
  app.require_subcommand(1);
  CommonOptions opts;

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const CommonOptions&);
  };
  const Sub subs[] = {
      {"evolve", "evolve a credit network with PGPE and save its checkpoint", cmd_evolve},
      {"compare", "BP baseline over seeds against a credit network checkpoint", cmd_compare},
      {"transfer", "apply evolved credit networks to other datasets", cmd_transfer},
      {"diffuse", "evolve one credit network per credit-diffusion setting", cmd_diffuse},
      {"flops", "analytic per-step MFLOPs of BP and credit variants", cmd_flops},
      {"landscape", "PCA plane of BP and TDCA trajectories and the loss on it", cmd_landscape},
      {"field", "update fields on the mixed gaussian and where they flow", cmd_field},
  };
  int (*chosen)(const CommonOptions&) = nullptr;
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("--config", opts.config, "experiment config (key = value)")->required()->check(CLI::ExistingFile);
    sc->add_option("--data-dir", opts.data_dir, "dataset root (default $TDCA_DATA_DIR, then ./data)");
    sc->add_option("--out", opts.out, "output directory (default experiment.out)");
    sc->add_option("--seed", opts.seed, "master seed for evolution (overrides pgpe.seed)");
    sc->add_option("--threads", opts.threads, "worker threads for candidate evaluation");
    sc->add_option("--checkpoint", opts.checkpoint, "credit network checkpoint (overrides tdca.checkpoint)");
    sc->add_flag("--quiet", opts.quiet, "no progress output");
    sc->callback([&chosen, fn = s.fn] { chosen = fn; });
  }
  CLI11_PARSE(app, argc, argv);
  try {
    return chosen(opts);
  } catch (const MissingDataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
