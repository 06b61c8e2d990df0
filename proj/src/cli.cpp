#include "difclue/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "difclue/checkpoint.hpp"
#include "difclue/error.hpp"
#include "difclue/experiment.hpp"

namespace difclue {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> alpha;
  std::optional<int> k;
  std::optional<int> steps;
};

ExperimentConfig resolve(const Flags& f, bool check) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out = f.out;
  if (f.alpha) cfg.alpha = *f.alpha;
  if (f.k) cfg.k = *f.k;
  if (f.steps) cfg.dae.ddim_steps = *f.steps;
  if (check) validate(cfg);  // run validates inside its own config stage
  return cfg;
}

std::string in_dir(const ExperimentConfig& cfg, const char* name) { return (fs::path(cfg.out) / name).string(); }

template <class Fn>
void tagged(const char* name, Fn&& fn) {
  try {
    fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

ModeModel load_modes(const ExperimentConfig& cfg, const Dataset& mixed, const DiffusionAutoencoder& model) {
  ModeModel mm;
  mm.clusters = load_clusters(in_dir(cfg, "clusters.ckpt"));
  mm.directions = load_directions(in_dir(cfg, "directions.ckpt"));
  mm.positives = mixed.indices_with_label(kPositiveLabel);
  Eigen::MatrixXd z(model.latent_dim, static_cast<Index>(mm.positives.size()));
  for (std::size_t i = 0; i < mm.positives.size(); ++i) {
    z.col(static_cast<Index>(i)) = encode_semantic(model, mixed.values.col(mm.positives[i])).z;
  }
  mm.assignments = kmeans_assign_all(mm.clusters, z);
  return mm;
}

void cmd_generate(const ExperimentConfig& cfg) {
  tagged("data", [&] {
    fs::create_directories(cfg.out);
    save_dataset(in_dir(cfg, "dataset.txt"), stage_generate(cfg));
  });
}

void cmd_train(const ExperimentConfig& cfg) {
  Dataset raw, mixed;
  tagged("data", [&] {
    raw = load_dataset(in_dir(cfg, "dataset.txt"));
    mixed = stage_mix(cfg, raw);
  });
  tagged("oracle", [&] { save_checkpoint(in_dir(cfg, "oracle.ckpt"), stage_oracle(cfg, raw)); });
  tagged("train", [&] {
    const auto ae = stage_autoencoder(cfg, mixed);
    save_checkpoint(in_dir(cfg, "autoencoder.ckpt"), ae.model);
    std::ofstream o(in_dir(cfg, "loss.csv"));
    o << "epoch,loss\n";
    for (std::size_t e = 0; e < ae.loss_history.size(); ++e) o << e << ',' << format_value(ae.loss_history[e]) << '\n';
    if (!o) throw Error("cannot write loss.csv");
  });
}

void cmd_cluster(const ExperimentConfig& cfg) {
  tagged("cluster", [&] {
    const auto mixed = stage_mix(cfg, load_dataset(in_dir(cfg, "dataset.txt")));
    const auto model = load_autoencoder(in_dir(cfg, "autoencoder.ckpt"));
    const auto mm = stage_cluster(cfg, mixed, model);
    save_checkpoint(in_dir(cfg, "clusters.ckpt"), mm.clusters);
    save_checkpoint(in_dir(cfg, "directions.ckpt"), mm.directions);
  });
}

void cmd_explain(const ExperimentConfig& cfg) {
  tagged("explain", [&] {
    const auto mixed = stage_mix(cfg, load_dataset(in_dir(cfg, "dataset.txt")));
    const auto model = load_autoencoder(in_dir(cfg, "autoencoder.ckpt"));
    const auto oracle = load_classifier(in_dir(cfg, "oracle.ckpt"));
    const auto mm = load_modes(cfg, mixed, model);
    const auto records = stage_explain(cfg, mixed, model, mm.directions, oracle);
    save_dataset(in_dir(cfg, "counterfactuals.txt"), records_to_dataset(records, mixed, majority_classes(mixed, mm)));
  });
}

void cmd_evaluate(const ExperimentConfig& cfg) {
  Dataset mixed;
  OracleClassifier oracle;
  DiffusionAutoencoder model;
  ModeModel mm;
  std::vector<CounterfactualRecord> records;
  tagged("evaluate", [&] {
    mixed = stage_mix(cfg, load_dataset(in_dir(cfg, "dataset.txt")));
    model = load_autoencoder(in_dir(cfg, "autoencoder.ckpt"));
    oracle = load_classifier(in_dir(cfg, "oracle.ckpt"));
    mm = load_modes(cfg, mixed, model);
    records = records_from_dataset(load_dataset(in_dir(cfg, "counterfactuals.txt")), cfg.alpha);
    for (auto& r : records) r.oracle_probabilities = oracle.probabilities(r.decoded);
  });
  Evaluation ev;
  tagged("evaluate", [&] { ev = stage_evaluate(cfg, mixed, oracle, model, mm, records); });
  tagged("report", [&] { write_evaluation(cfg.out, cfg, mixed, records, ev); });
}

void cmd_report(const ExperimentConfig& cfg, std::ostream& out) {
  tagged("report", [&] {
    std::ifstream in(in_dir(cfg, "metrics.csv"));
    if (!in) throw Error("cannot read " + in_dir(cfg, "metrics.csv"));
    const std::string text = render_report(read_metrics_csv(in));
    std::ofstream o(in_dir(cfg, "report.md"));
    o << text;
    if (!o) throw Error("cannot write report.md");
    out << text;
  });
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"DifCluE desk-scale pipeline: diffusion-autoencoder counterfactuals per discovered mode", "difclue"};
  app.require_subcommand(1, 1);
  Flags flags;
  struct Command {
    const char* name;
    const char* help;
    bool alpha, k, steps;
  };
  const std::vector<Command> commands = {
      {"generate-data", "write dataset.txt for the configured domain", false, false, false},
      {"train", "train the oracle and the diffusion autoencoder on dataset.txt", false, false, false},
      {"cluster", "cluster positive semantic codes and fit the direction classifier", false, true, false},
      {"explain", "generate counterfactuals from negatives toward every cluster", true, false, true},
      {"evaluate", "compute metrics.csv, trajectories.csv, records.csv and report.md", true, false, true},
      {"run", "all stages end to end", true, true, true},
      {"report", "render report.md from metrics.csv", false, false, false},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", flags.config, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "64-bit experiment seed");
    sub->add_option("--out", flags.out, "working / output directory");
    if (c.alpha) sub->add_option("--alpha", flags.alpha, "perturbation magnitude");
    if (c.k) sub->add_option("--k", flags.k, "number of clusters")->check(CLI::PositiveNumber);
    if (c.steps) sub->add_option("--steps", flags.steps, "DDIM steps")->check(CLI::PositiveNumber);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    ExperimentConfig cfg;
    try {
      cfg = resolve(flags, name != "run");
    } catch (const std::exception& e) {
      throw StageError("config", e.what());
    }
    if (name == "generate-data") {
      cmd_generate(cfg);
    } else if (name == "train") {
      cmd_train(cfg);
    } else if (name == "cluster") {
      cmd_cluster(cfg);
    } else if (name == "explain") {
      cmd_explain(cfg);
    } else if (name == "evaluate") {
      cmd_evaluate(cfg);
    } else if (name == "run") {
      run_experiment(cfg);
      out << "results written to " << cfg.out << "\n";
    } else if (name == "report") {
      cmd_report(cfg, out);
    }
  } catch (const StageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace difclue
