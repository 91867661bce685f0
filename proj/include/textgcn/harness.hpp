#pragma once

// Experiment pipeline and ablation sweeps:
//   load -> (limited re-split) -> build graph -> normalize -> features
//        -> train -> predict test docs -> evaluate
// plus JSON / CSV report emission.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "textgcn/corpus.hpp"
#include "textgcn/gcn.hpp"
#include "textgcn/metrics.hpp"
#include "textgcn/textgraph.hpp"

namespace textgcn::harness {

enum class NodeFeature { kOneHot, kDenseFile };
std::string to_string(NodeFeature f);
NodeFeature parse_node_feature(const std::string& s);

struct Environment {
  bool limited = false;
  double fraction = 1.0;
  // Split seed; defaults to the training seed when unset.
  std::optional<std::uint64_t> seed;
  bool stratified = true;
};

struct ExperimentConfig {
  std::filesystem::path meta_path;
  std::filesystem::path text_path;
  PreprocConfig preproc;
  NodeFeature node_feature = NodeFeature::kOneHot;
  std::filesystem::path feature_path;
  bool zero_fill_missing_words = false;
  EdgeConfig edge_config = EdgeConfig::kD2W_W2W_D2D;
  std::int64_t window_size = 20;
  double jaccard_threshold = 0.2;
  gcn::TrainConfig train;
  Environment environment;
  int n_repeats = 5;
  std::filesystem::path output_dir = "out";
  bool save_graph = true;
  bool save_checkpoint = true;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
/// Reads a JSON config; relative paths resolve against the file's directory.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Sweep axes; an empty axis means "use the base config's value".
struct SweepSpec {
  std::vector<NodeFeature> node_feature;
  std::vector<EdgeConfig> edge_config;
  std::vector<int> n_layers;
  // Each value re-splits into the limited environment with that fraction;
  // nullopt keeps the base environment.
  std::vector<std::optional<double>> train_fraction;
};
SweepSpec sweep_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const SweepSpec& s);

/// The axis values identifying one sweep cell.
struct CellKey {
  NodeFeature node_feature = NodeFeature::kOneHot;
  EdgeConfig edge_config = EdgeConfig::kD2W_W2W_D2D;
  int n_layers = 2;
  std::optional<double> train_fraction;

  friend bool operator==(const CellKey&, const CellKey&) = default;
};
CellKey cell_of(const ExperimentConfig& c);
std::string cell_name(const CellKey& k);

struct EvalRecord {
  CellKey cell;
  int repeat = 0;
  std::uint64_t seed = 0;
  nlohmann::json config;  // fully resolved config for this repeat
  bool ok = false;
  std::string error_stage;
  std::string error_message;
  metrics::EvalResult metrics;
  int stop_epoch = 0;
  int best_epoch = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 0;
  double wall_time_s = 0.0;

  /// Equality ignoring wall time.
  bool same_result(const EvalRecord& other) const;
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

void to_json(nlohmann::json& j, const EvalRecord& r);
void from_json(const nlohmann::json& j, EvalRecord& r);

struct EvalReport {
  std::vector<EvalRecord> records;

  std::size_t n_failed() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Resolves `repeat` into concrete seeds (seed + repeat) and returns the
/// config that run_experiment(config, repeat) actually executes.
ExperimentConfig resolve_repeat(const ExperimentConfig& config, int repeat);

/// Runs one repeat of one configuration. Stage failures are captured in the
/// record rather than thrown. Writes graph, checkpoint and record.json under
/// `output_dir/<cell>/rep<repeat>/` as enabled.
EvalRecord run_experiment(const ExperimentConfig& config, int repeat = 0);

/// Rebuilds the pipeline up to the features, loads `checkpoint` instead of
/// training, and evaluates it on the test documents.
EvalRecord evaluate_checkpoint(const ExperimentConfig& config,
                               const std::filesystem::path& checkpoint, int repeat = 0);

/// The optional "sweep" object of a config file (empty axes when absent).
SweepSpec load_sweep(const std::filesystem::path& config_path);

/// Cross product of the axes times n_repeats, run on up to `jobs` threads.
/// Records come back in cell-major, repeat-minor order regardless of jobs.
EvalReport run_sweep(const SweepSpec& spec, const ExperimentConfig& base, int jobs = 1);

enum class ReportFormat { kJson, kCsvPivot, kCsvLong };

std::string report_json(const EvalReport& report);
EvalReport parse_report_json(const std::string& text);

/// Axis names: node_feature, edge_config, n_layers, train_fraction.
extern const std::vector<std::string> kAxes;

/// Pivot table of mean accuracy (4 decimals, "mean ± std" when a cell has
/// several successful repeats). Remaining axes become leading key columns.
std::string pivot_csv(const EvalReport& report, const std::string& row_axis,
                      const std::string& col_axis, const std::string& metric = "accuracy");

/// One row per record, sorted by `axis` (stable).
std::string long_csv(const EvalReport& report, const std::string& axis);

/// Writes report.json, table_<a>_<b>.csv for every axis pair and
/// curve_<axis>.csv for every axis into `dir`. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const EvalReport& report,
                                               const std::filesystem::path& dir,
                                               std::vector<ReportFormat> formats = {
                                                   ReportFormat::kJson, ReportFormat::kCsvPivot,
                                                   ReportFormat::kCsvLong});

/// 0 when every record succeeded, 1 when all failed (or none ran), 2 otherwise.
int exit_code(const EvalReport& report);

}  // namespace textgcn::harness
