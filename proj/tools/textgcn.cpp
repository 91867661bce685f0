// textgcn: build corpus graphs, train GCN text classifiers, run ablation sweeps.
//
//   textgcn build-graph --config cfg.json [--edges d2w+w2w] [--out graph.coo]
//   textgcn train       --config cfg.json [--layers 2] [--seed 1] [--repeat 0]
//   textgcn evaluate    --config cfg.json --checkpoint out/.../model.ckpt
//   textgcn sweep       --config cfg.json [--jobs 4]
//
// Exit codes: 0 success, 1 total failure, 2 partial cell failures.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "textgcn/harness.hpp"
#include "textgcn/sparse.hpp"
#include "textgcn/textgraph.hpp"

namespace {

using namespace textgcn;
using harness::ExperimentConfig;

struct Overrides {
  std::string config;
  std::optional<int> layers;
  std::optional<std::string> edges;
  std::optional<std::string> features;
  std::optional<std::string> feature_path;
  std::optional<double> train_fraction;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<int> repeats;
  int threads = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON experiment config")->required()->check(CLI::ExistingFile);
    cmd->add_option("--layers", layers, "number of GCN layers (1-5)");
    cmd->add_option("--edges", edges, "d2w | d2w+w2w | d2w+w2w+d2d");
    cmd->add_option("--features", features, "onehot | dense_file");
    cmd->add_option("--feature-path", feature_path, "feature file for dense_file features");
    cmd->add_option("--train-fraction", train_fraction,
                    "limited environment with this labelled fraction");
    cmd->add_option("--seed", seed, "base seed");
    cmd->add_option("--output", output, "output directory");
    cmd->add_option("--repeats", repeats, "repeats per sweep cell");
    cmd->add_option("--threads", threads, "threads for matrix kernels")->default_val(1);
  }

  ExperimentConfig apply(ExperimentConfig c) const {
    if (layers) c.train.n_layers = *layers;
    if (edges) c.edge_config = parse_edge_config(*edges);
    if (features) c.node_feature = harness::parse_node_feature(*features);
    if (feature_path) c.feature_path = *feature_path;
    if (train_fraction) {
      c.environment.limited = true;
      c.environment.fraction = *train_fraction;
    }
    if (seed) c.train.seed = *seed;
    if (output) c.output_dir = *output;
    if (repeats) c.n_repeats = *repeats;
    return c;
  }

  // Command-line axis overrides pin the matching sweep axis to one value.
  harness::SweepSpec apply(harness::SweepSpec s) const {
    if (layers) s.n_layers = {*layers};
    if (edges) s.edge_config = {parse_edge_config(*edges)};
    if (features) s.node_feature = {harness::parse_node_feature(*features)};
    if (train_fraction) s.train_fraction = {*train_fraction};
    return s;
  }
};

void print_record(const harness::EvalRecord& rec) {
  std::cout << nlohmann::json(rec).dump(2) << '\n';
  if (!rec.ok) std::cerr << "error in stage " << rec.error_stage << ": " << rec.error_message << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Corpus-level text graphs and GCN text classification"};
  app.require_subcommand(1);

  Overrides build_opts;
  std::string graph_out;
  auto* build_cmd = app.add_subcommand("build-graph", "build and write the corpus graph");
  build_opts.attach(build_cmd);
  build_cmd->add_option("--out", graph_out, "graph file (default <output>/graph.coo)");

  Overrides train_opts;
  int repeat = 0;
  auto* train_cmd = app.add_subcommand("train", "train one model and evaluate it on the test split");
  train_opts.attach(train_cmd);
  train_cmd->add_option("--repeat", repeat, "repeat index (seed offset)");

  Overrides eval_opts;
  std::string checkpoint;
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a saved checkpoint on the test split");
  eval_opts.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--repeat", repeat, "repeat index the checkpoint was trained with");

  Overrides sweep_opts;
  int jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "run the configured ablation grid");
  sweep_opts.attach(sweep_cmd);
  sweep_cmd->add_option("--jobs", jobs, "cells run in parallel")->default_val(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build_cmd) {
      sparse::set_num_threads(build_opts.threads);
      auto c = build_opts.apply(harness::load_config(build_opts.config));
      auto corpus = load_corpus(c.meta_path, c.text_path, c.preproc);
      for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << '\n';
      auto graph = build_graph(corpus, c.edge_config, {c.window_size, c.jaccard_threshold});
      std::filesystem::path out = graph_out.empty() ? c.output_dir / "graph.coo" : std::filesystem::path(graph_out);
      if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
      write_graph(out, graph);
      std::cout << "N=" << graph.num_nodes() << " D=" << graph.num_docs() << " M=" << graph.num_words()
                << " nnz=" << graph.adjacency().nnz() << " edges=" << to_string(graph.edge_config())
                << " -> " << out.string() << '\n';
      return 0;
    }
    if (*train_cmd) {
      sparse::set_num_threads(train_opts.threads);
      auto c = train_opts.apply(harness::load_config(train_opts.config));
      auto rec = harness::run_experiment(c, repeat);
      print_record(rec);
      return rec.ok ? 0 : 1;
    }
    if (*eval_cmd) {
      sparse::set_num_threads(eval_opts.threads);
      auto c = eval_opts.apply(harness::load_config(eval_opts.config));
      auto rec = harness::evaluate_checkpoint(c, checkpoint, repeat);
      print_record(rec);
      return rec.ok ? 0 : 1;
    }
    if (*sweep_cmd) {
      sparse::set_num_threads(sweep_opts.threads);
      auto c = sweep_opts.apply(harness::load_config(sweep_opts.config));
      auto spec = sweep_opts.apply(harness::load_sweep(sweep_opts.config));
      auto report = harness::run_sweep(spec, c, jobs);
      for (const auto& r : report.records) {
        std::cerr << harness::cell_name(r.cell) << " rep" << r.repeat << ": ";
        if (r.ok)
          std::cerr << "acc=" << r.metrics.accuracy << " macro_f1=" << r.metrics.macro_f1
                    << " weighted_f1=" << r.metrics.weighted_f1 << '\n';
        else
          std::cerr << "FAILED [" << r.error_stage << "] " << r.error_message << '\n';
      }
      for (const auto& p : harness::emit_report(report, c.output_dir)) std::cout << p.string() << '\n';
      return harness::exit_code(report);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
