#include "textgcn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "textgcn/error.hpp"
#include "textgcn/features.hpp"

namespace textgcn::harness {

using nlohmann::json;

std::string to_string(NodeFeature f) { return f == NodeFeature::kOneHot ? "onehot" : "dense_file"; }

NodeFeature parse_node_feature(const std::string& s) {
  if (s == "onehot" || s == "one_hot" || s == "ONEHOT") return NodeFeature::kOneHot;
  if (s == "dense_file" || s == "dense" || s == "bert" || s == "DENSE_FILE") return NodeFeature::kDenseFile;
  throw ArgumentError("unknown node feature '" + s + "'");
}

// ---------------------------------------------------------------- config JSON

namespace {

json train_to_json(const gcn::TrainConfig& t) {
  return json{{"n_layers", t.n_layers},       {"hidden_dim", t.hidden_dim},
              {"learning_rate", t.learning_rate}, {"dropout", t.dropout},
              {"l2_weight", t.l2_weight},     {"max_epochs", t.max_epochs},
              {"patience", t.patience},       {"val_fraction", t.val_fraction},
              {"seed", t.seed}};
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ArgumentError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.contains(key)) throw ArgumentError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

gcn::TrainConfig train_from_json(const json& j) {
  check_keys(j,
             {"n_layers", "hidden_dim", "learning_rate", "dropout", "l2_weight", "max_epochs",
              "patience", "val_fraction", "seed"},
             "train");
  gcn::TrainConfig t;
  read_if(j, "n_layers", t.n_layers);
  read_if(j, "hidden_dim", t.hidden_dim);
  read_if(j, "learning_rate", t.learning_rate);
  read_if(j, "dropout", t.dropout);
  read_if(j, "l2_weight", t.l2_weight);
  read_if(j, "max_epochs", t.max_epochs);
  read_if(j, "patience", t.patience);
  read_if(j, "val_fraction", t.val_fraction);
  read_if(j, "seed", t.seed);
  return t;
}

json preproc_to_json(const PreprocConfig& p) {
  json j{{"lowercase", p.lowercase},
         {"clean_chars", p.clean_chars},
         {"language", p.language},
         {"stopwords", p.stopwords}};
  j["remove_stopwords"] = p.remove_stopwords ? json(*p.remove_stopwords) : json(nullptr);
  j["min_word_freq"] = p.min_word_freq ? json(*p.min_word_freq) : json(nullptr);
  return j;
}

PreprocConfig preproc_from_json(const json& j) {
  check_keys(j, {"lowercase", "clean_chars", "remove_stopwords", "language", "min_word_freq", "stopwords"},
             "preproc");
  PreprocConfig p;
  read_if(j, "lowercase", p.lowercase);
  read_if(j, "clean_chars", p.clean_chars);
  read_if(j, "language", p.language);
  read_if(j, "stopwords", p.stopwords);
  if (j.contains("remove_stopwords") && !j["remove_stopwords"].is_null())
    p.remove_stopwords = j["remove_stopwords"].get<bool>();
  if (j.contains("min_word_freq") && !j["min_word_freq"].is_null())
    p.min_word_freq = j["min_word_freq"].get<int>();
  return p;
}

json env_to_json(const Environment& e) {
  json j{{"type", e.limited ? "limited" : "full"}};
  if (e.limited) {
    j["fraction"] = e.fraction;
    j["stratified"] = e.stratified;
    j["seed"] = e.seed ? json(*e.seed) : json(nullptr);
  }
  return j;
}

Environment env_from_json(const json& j) {
  Environment e;
  if (j.is_string()) {
    e.limited = j.get<std::string>() == "limited";
    if (!e.limited && j.get<std::string>() != "full")
      throw ArgumentError("environment must be 'full' or 'limited'");
    if (e.limited) e.fraction = 0.01;
    return e;
  }
  check_keys(j, {"type", "fraction", "seed", "stratified"}, "environment");
  const auto type = j.value("type", std::string("full"));
  if (type != "full" && type != "limited") throw ArgumentError("environment.type must be 'full' or 'limited'");
  e.limited = type == "limited";
  if (e.limited) e.fraction = 0.01;
  read_if(j, "fraction", e.fraction);
  read_if(j, "stratified", e.stratified);
  if (j.contains("seed") && !j["seed"].is_null()) e.seed = j["seed"].get<std::uint64_t>();
  return e;
}

}  // namespace

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"meta_path", c.meta_path.string()},
           {"text_path", c.text_path.string()},
           {"preproc", preproc_to_json(c.preproc)},
           {"node_feature", to_string(c.node_feature)},
           {"feature_path", c.feature_path.string()},
           {"zero_fill_missing_words", c.zero_fill_missing_words},
           {"edge_config", std::string(to_string(c.edge_config))},
           {"window_size", c.window_size},
           {"jaccard_threshold", c.jaccard_threshold},
           {"train", train_to_json(c.train)},
           {"environment", env_to_json(c.environment)},
           {"n_repeats", c.n_repeats},
           {"output_dir", c.output_dir.string()},
           {"save_graph", c.save_graph},
           {"save_checkpoint", c.save_checkpoint}};
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j,
             {"meta_path", "text_path", "preproc", "node_feature", "feature_path",
              "zero_fill_missing_words", "edge_config", "window_size", "jaccard_threshold", "train",
              "environment", "n_repeats", "output_dir", "save_graph", "save_checkpoint", "sweep"},
             "config");
  ExperimentConfig c;
  if (j.contains("meta_path")) c.meta_path = j["meta_path"].get<std::string>();
  if (j.contains("text_path")) c.text_path = j["text_path"].get<std::string>();
  if (j.contains("preproc")) c.preproc = preproc_from_json(j["preproc"]);
  if (j.contains("node_feature")) c.node_feature = parse_node_feature(j["node_feature"].get<std::string>());
  if (j.contains("feature_path")) c.feature_path = j["feature_path"].get<std::string>();
  read_if(j, "zero_fill_missing_words", c.zero_fill_missing_words);
  if (j.contains("edge_config")) c.edge_config = parse_edge_config(j["edge_config"].get<std::string>());
  read_if(j, "window_size", c.window_size);
  read_if(j, "jaccard_threshold", c.jaccard_threshold);
  if (j.contains("train")) c.train = train_from_json(j["train"]);
  if (j.contains("environment")) c.environment = env_from_json(j["environment"]);
  read_if(j, "n_repeats", c.n_repeats);
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  read_if(j, "save_graph", c.save_graph);
  read_if(j, "save_checkpoint", c.save_checkpoint);
  if (c.n_repeats < 1) throw ArgumentError("n_repeats must be >= 1");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("invalid JSON in '" + path.string() + "': " + e.what());
  }
  auto c = config_from_json(j);
  const auto base = path.parent_path();
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  resolve(c.meta_path);
  resolve(c.text_path);
  resolve(c.feature_path);
  resolve(c.output_dir);
  return c;
}

// ----------------------------------------------------------------- sweep spec

SweepSpec sweep_from_json(const json& j) {
  check_keys(j, {"node_feature", "edge_config", "n_layers", "train_fraction"}, "sweep");
  SweepSpec s;
  if (j.contains("node_feature"))
    for (const auto& v : j["node_feature"]) s.node_feature.push_back(parse_node_feature(v.get<std::string>()));
  if (j.contains("edge_config"))
    for (const auto& v : j["edge_config"]) s.edge_config.push_back(parse_edge_config(v.get<std::string>()));
  if (j.contains("n_layers"))
    for (const auto& v : j["n_layers"]) s.n_layers.push_back(v.get<int>());
  if (j.contains("train_fraction")) {
    for (const auto& v : j["train_fraction"]) {
      if (v.is_null() || (v.is_string() && v.get<std::string>() == "full"))
        s.train_fraction.push_back(std::nullopt);
      else
        s.train_fraction.push_back(v.get<double>());
    }
  }
  return s;
}

void to_json(json& j, const SweepSpec& s) {
  j = json::object();
  for (auto f : s.node_feature) j["node_feature"].push_back(to_string(f));
  for (auto e : s.edge_config) j["edge_config"].push_back(std::string(to_string(e)));
  for (auto l : s.n_layers) j["n_layers"].push_back(l);
  for (auto f : s.train_fraction) j["train_fraction"].push_back(f ? json(*f) : json(nullptr));
}

CellKey cell_of(const ExperimentConfig& c) {
  CellKey k;
  k.node_feature = c.node_feature;
  k.edge_config = c.edge_config;
  k.n_layers = c.train.n_layers;
  if (c.environment.limited) k.train_fraction = c.environment.fraction;
  return k;
}

namespace {

std::string fraction_label(const std::optional<double>& f) {
  if (!f) return "full";
  std::ostringstream s;
  s << *f;
  return s.str();
}

std::string axis_value(const CellKey& k, const std::string& axis) {
  if (axis == "node_feature") return to_string(k.node_feature);
  if (axis == "edge_config") return std::string(to_string(k.edge_config));
  if (axis == "n_layers") return std::to_string(k.n_layers);
  if (axis == "train_fraction") return fraction_label(k.train_fraction);
  throw ArgumentError("unknown axis '" + axis + "'");
}

// Orders axis values the way they were declared, not lexicographically.
int axis_rank(const CellKey& k, const std::string& axis) {
  if (axis == "node_feature") return static_cast<int>(k.node_feature);
  if (axis == "edge_config") return static_cast<int>(k.edge_config);
  if (axis == "n_layers") return k.n_layers;
  return 0;
}

bool axis_less(const CellKey& a, const CellKey& b, const std::string& axis) {
  if (axis == "train_fraction") {
    // full environment sorts after every limited fraction
    const double fa = a.train_fraction.value_or(2.0);
    const double fb = b.train_fraction.value_or(2.0);
    return fa < fb;
  }
  return axis_rank(a, axis) < axis_rank(b, axis);
}

}  // namespace

std::string cell_name(const CellKey& k) {
  std::string edges(to_string(k.edge_config));
  std::replace(edges.begin(), edges.end(), '+', '_');
  return to_string(k.node_feature) + "__" + edges + "__L" + std::to_string(k.n_layers) + "__" +
         fraction_label(k.train_fraction);
}

// -------------------------------------------------------------------- records

bool EvalRecord::same_result(const EvalRecord& other) const {
  EvalRecord a = *this;
  EvalRecord b = other;
  a.wall_time_s = b.wall_time_s = 0.0;
  return a == b;
}

void to_json(json& j, const EvalRecord& r) {
  j = json{{"cell",
            {{"node_feature", to_string(r.cell.node_feature)},
             {"edge_config", std::string(to_string(r.cell.edge_config))},
             {"n_layers", r.cell.n_layers},
             {"train_fraction", r.cell.train_fraction ? json(*r.cell.train_fraction) : json(nullptr)}}},
           {"repeat", r.repeat},
           {"seed", r.seed},
           {"config", r.config},
           {"status", r.ok ? "ok" : "failed"},
           {"stop_epoch", r.stop_epoch},
           {"best_epoch", r.best_epoch},
           {"n_train", r.n_train},
           {"n_val", r.n_val},
           {"n_test", r.n_test},
           {"wall_time_s", r.wall_time_s}};
  if (r.ok) {
    j["metrics"] = {{"accuracy", r.metrics.accuracy},
                    {"macro_f1", r.metrics.macro_f1},
                    {"weighted_f1", r.metrics.weighted_f1},
                    {"confusion", r.metrics.confusion}};
  } else {
    j["error"] = {{"stage", r.error_stage}, {"message", r.error_message}};
  }
}

void from_json(const json& j, EvalRecord& r) {
  const auto& c = j.at("cell");
  r.cell.node_feature = parse_node_feature(c.at("node_feature").get<std::string>());
  r.cell.edge_config = parse_edge_config(c.at("edge_config").get<std::string>());
  r.cell.n_layers = c.at("n_layers").get<int>();
  if (c.at("train_fraction").is_null())
    r.cell.train_fraction.reset();
  else
    r.cell.train_fraction = c.at("train_fraction").get<double>();
  r.repeat = j.at("repeat").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config = j.at("config");
  r.ok = j.at("status").get<std::string>() == "ok";
  r.stop_epoch = j.at("stop_epoch").get<int>();
  r.best_epoch = j.at("best_epoch").get<int>();
  r.n_train = j.at("n_train").get<std::size_t>();
  r.n_val = j.at("n_val").get<std::size_t>();
  r.n_test = j.at("n_test").get<std::size_t>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  r.metrics = {};
  r.error_stage.clear();
  r.error_message.clear();
  if (r.ok) {
    const auto& m = j.at("metrics");
    r.metrics.accuracy = m.at("accuracy").get<double>();
    r.metrics.macro_f1 = m.at("macro_f1").get<double>();
    r.metrics.weighted_f1 = m.at("weighted_f1").get<double>();
    r.metrics.confusion = m.at("confusion").get<std::vector<std::vector<std::int64_t>>>();
  } else {
    r.error_stage = j.at("error").at("stage").get<std::string>();
    r.error_message = j.at("error").at("message").get<std::string>();
  }
}

std::size_t EvalReport::n_failed() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const EvalRecord& r) { return !r.ok; }));
}

// ------------------------------------------------------------------- pipeline

ExperimentConfig resolve_repeat(const ExperimentConfig& config, int repeat) {
  ExperimentConfig c = config;
  const auto offset = static_cast<std::uint64_t>(repeat);
  c.train.seed = config.train.seed + offset;
  if (c.environment.limited) c.environment.seed = config.environment.seed.value_or(config.train.seed) + offset;
  c.n_repeats = 1;
  return c;
}

namespace {

struct StageError : Error {
  StageError(std::string stage_name, const std::string& what) : Error(what), stage(std::move(stage_name)) {}
  std::string stage;
};

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

// Corpora and graphs shared between the cells of one sweep.
class PipelineCache {
 public:
  std::shared_ptr<const Corpus> corpus(const ExperimentConfig& c) {
    const std::string key = json{{"m", c.meta_path.string()}, {"t", c.text_path.string()},
                                 {"p", preproc_to_json(c.preproc)}}
                                .dump();
    return get(corpora_, key, [&] { return load_corpus(c.meta_path, c.text_path, c.preproc); });
  }

  // Graphs do not depend on the split, so one build serves every repeat.
  std::shared_ptr<const TextGraph> graph(const std::string& corpus_key_src, const Corpus& corpus,
                                         const ExperimentConfig& c) {
    const std::string key = corpus_key_src + "|" + std::string(to_string(c.edge_config)) + "|" +
                            std::to_string(c.window_size) + "|" +
                            sparse::format_double(c.jaccard_threshold);
    return get(graphs_, key, [&] {
      return build_graph(corpus, c.edge_config, {c.window_size, c.jaccard_threshold});
    });
  }

 private:
  template <typename T>
  struct Slot {
    std::once_flag once;
    std::shared_ptr<const T> value;
  };

  template <typename T, typename Make>
  std::shared_ptr<const T> get(std::map<std::string, std::shared_ptr<Slot<T>>>& table,
                               const std::string& key, Make&& make) {
    std::shared_ptr<Slot<T>> slot;
    {
      std::lock_guard lock(mu_);
      auto& s = table[key];
      if (!s) s = std::make_shared<Slot<T>>();
      slot = s;
    }
    std::call_once(slot->once, [&] { slot->value = std::make_shared<const T>(make()); });
    return slot->value;
  }

  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Slot<Corpus>>> corpora_;
  std::map<std::string, std::shared_ptr<Slot<TextGraph>>> graphs_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw LoadError("failed writing '" + path.string() + "'");
}

// Everything up to (not including) training.
struct Prepared {
  std::shared_ptr<const Corpus> loaded;
  Corpus resplit;
  bool limited = false;
  std::shared_ptr<const TextGraph> graph;
  FeatureMatrix features;

  const Corpus& corpus() const { return limited ? resplit : *loaded; }
};

Prepared prepare(const ExperimentConfig& c, PipelineCache& cache) {
  Prepared p;
  p.loaded = stage("load", [&] { return cache.corpus(c); });
  if (c.environment.limited) {
    p.limited = true;
    p.resplit = stage("split", [&] {
      return sample_limited_split(*p.loaded, c.environment.fraction, *c.environment.seed,
                                  c.environment.stratified);
    });
  }
  const std::string corpus_key = c.meta_path.string() + "|" + c.text_path.string() + "|" +
                                 preproc_to_json(c.preproc).dump();
  p.graph = stage("build_graph", [&] { return cache.graph(corpus_key, *p.loaded, c); });
  stage("normalize", [&] { return p.graph->normalized_adjacency().nnz(); });
  p.features = stage("features", [&] {
    if (c.node_feature == NodeFeature::kOneHot)
      return onehot_features(static_cast<sparse::Index>(p.graph->num_nodes()));
    FeatureLoadOptions opts;
    opts.zero_fill_missing_words = c.zero_fill_missing_words;
    return load_embedding_file(c.feature_path, p.corpus(), *p.graph, opts).features;
  });
  return p;
}

metrics::EvalResult score_test_docs(const Prepared& p, const gcn::GcnModel& model, std::size_t& n_test) {
  const auto& corpus = p.corpus();
  const auto test_docs = corpus.indices_with_split(Split::kTest);
  n_test = test_docs.size();
  auto pred = stage("predict", [&] {
    if (test_docs.empty()) throw ArgumentError("no test documents");
    return gcn::predict(model, p.graph->normalized_adjacency(), p.features, test_docs);
  });
  return stage("evaluate", [&] {
    std::vector<std::uint32_t> gold;
    gold.reserve(test_docs.size());
    for (auto d : test_docs) gold.push_back(corpus.documents[d].label);
    return metrics::evaluate(pred, gold, corpus.num_labels());
  });
}

EvalRecord new_record(const ExperimentConfig& c, int repeat) {
  EvalRecord rec;
  rec.cell = cell_of(c);
  rec.repeat = repeat;
  rec.seed = c.train.seed;
  rec.config = c;
  return rec;
}

void persist_record(const EvalRecord& rec, const std::filesystem::path& rep_dir) {
  // A record that cannot be persisted is still returned to the caller.
  try {
    std::filesystem::create_directories(rep_dir);
    write_text(rep_dir / "record.json", json(rec).dump(2) + "\n");
  } catch (const std::exception&) {
  }
}

EvalRecord run_resolved(const ExperimentConfig& base, int repeat, PipelineCache& cache) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = resolve_repeat(base, repeat);
  EvalRecord rec = new_record(c, repeat);

  const auto cell_dir = c.output_dir / cell_name(rec.cell);
  const auto rep_dir = cell_dir / ("rep" + std::to_string(repeat));
  try {
    const Prepared p = prepare(c, cache);
    auto trained = stage("train", [&] { return gcn::train(*p.graph, p.features, p.corpus(), c.train); });
    rec.metrics = score_test_docs(p, trained.model, rec.n_test);
    rec.stop_epoch = trained.history.stop_epoch;
    rec.best_epoch = trained.history.best_epoch;
    rec.n_train = trained.history.n_train_docs;
    rec.n_val = trained.history.n_val_docs;
    rec.ok = true;

    stage("write", [&] {
      if (!c.save_graph && !c.save_checkpoint) return 0;
      std::filesystem::create_directories(rep_dir);
      if (c.save_graph && repeat == 0) write_graph(cell_dir / "graph.coo", *p.graph);
      if (c.save_checkpoint) gcn::save_checkpoint(rep_dir / "model.ckpt", trained.model);
      return 0;
    });
  } catch (const StageError& e) {
    rec.ok = false;
    rec.error_stage = e.stage;
    rec.error_message = e.what();
  }
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!c.output_dir.empty()) persist_record(rec, rep_dir);
  return rec;
}

}  // namespace

EvalRecord run_experiment(const ExperimentConfig& config, int repeat) {
  PipelineCache cache;
  return run_resolved(config, repeat, cache);
}

EvalRecord evaluate_checkpoint(const ExperimentConfig& config,
                               const std::filesystem::path& checkpoint, int repeat) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = resolve_repeat(config, repeat);
  EvalRecord rec = new_record(c, repeat);
  PipelineCache cache;
  try {
    const Prepared p = prepare(c, cache);
    auto model = stage("load_checkpoint", [&] {
      auto m = gcn::load_checkpoint(checkpoint);
      if (m.num_layers() != static_cast<std::size_t>(c.train.n_layers)) {
        throw ArgumentError("checkpoint has " + std::to_string(m.num_layers()) + " layers, config expects " +
                            std::to_string(c.train.n_layers));
      }
      return m;
    });
    rec.metrics = score_test_docs(p, model, rec.n_test);
    rec.n_train = p.corpus().indices_with_split(Split::kTrain).size();
    rec.ok = true;
  } catch (const StageError& e) {
    rec.ok = false;
    rec.error_stage = e.stage;
    rec.error_message = e.what();
  }
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

SweepSpec load_sweep(const std::filesystem::path& config_path) {
  std::ifstream in(config_path);
  if (!in) throw LoadError("cannot open config '" + config_path.string() + "'");
  const json j = json::parse(in);
  if (!j.contains("sweep")) return {};
  return sweep_from_json(j["sweep"]);
}

EvalReport run_sweep(const SweepSpec& spec, const ExperimentConfig& base, int jobs) {
  const auto feats = spec.node_feature.empty() ? std::vector{base.node_feature} : spec.node_feature;
  const auto edges = spec.edge_config.empty() ? std::vector{base.edge_config} : spec.edge_config;
  const auto layers = spec.n_layers.empty() ? std::vector{base.train.n_layers} : spec.n_layers;
  std::vector<std::optional<double>> fracs = spec.train_fraction;
  const bool env_axis = !fracs.empty();
  if (!env_axis) fracs.push_back(std::nullopt);

  std::vector<ExperimentConfig> cells;
  for (auto f : feats)
    for (auto e : edges)
      for (auto l : layers)
        for (const auto& frac : fracs) {
          ExperimentConfig c = base;
          c.node_feature = f;
          c.edge_config = e;
          c.train.n_layers = l;
          if (env_axis) {
            c.environment.limited = frac.has_value();
            c.environment.fraction = frac.value_or(1.0);
          }
          cells.push_back(std::move(c));
        }

  struct Task {
    std::size_t cell;
    int repeat;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (int r = 0; r < base.n_repeats; ++r) tasks.push_back({i, r});

  EvalReport report;
  report.records.resize(tasks.size());
  PipelineCache cache;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();)
      report.records[t] = run_resolved(cells[tasks[t].cell], tasks[t].repeat, cache);
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return report;
}

// -------------------------------------------------------------------- reports

const std::vector<std::string> kAxes = {"node_feature", "edge_config", "n_layers", "train_fraction"};

std::string report_json(const EvalReport& report) {
  json j{{"records", report.records}};
  return j.dump(2) + "\n";
}

EvalReport parse_report_json(const std::string& text) {
  EvalReport report;
  auto j = json::parse(text);
  report.records = j.at("records").get<std::vector<EvalRecord>>();
  return report;
}

namespace {

double metric_of(const EvalRecord& r, const std::string& metric) {
  if (metric == "accuracy") return r.metrics.accuracy;
  if (metric == "macro_f1") return r.metrics.macro_f1;
  if (metric == "weighted_f1") return r.metrics.weighted_f1;
  throw ArgumentError("unknown metric '" + metric + "'");
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// Distinct cell keys in first-seen order, then sorted by the given axes.
std::vector<CellKey> ordered_values(const EvalReport& report, const std::string& axis) {
  std::vector<CellKey> out;
  for (const auto& r : report.records) {
    const auto v = axis_value(r.cell, axis);
    if (std::none_of(out.begin(), out.end(), [&](const CellKey& k) { return axis_value(k, axis) == v; }))
      out.push_back(r.cell);
  }
  std::stable_sort(out.begin(), out.end(), [&](const CellKey& a, const CellKey& b) { return axis_less(a, b, axis); });
  return out;
}

}  // namespace

std::string pivot_csv(const EvalReport& report, const std::string& row_axis,
                      const std::string& col_axis, const std::string& metric) {
  if (row_axis == col_axis) throw ArgumentError("pivot axes must differ");
  std::vector<std::string> other;
  for (const auto& a : kAxes)
    if (a != row_axis && a != col_axis) other.push_back(a);

  const auto cols = ordered_values(report, col_axis);
  // Row groups: distinct combinations of (other axes..., row axis).
  std::vector<CellKey> rows;
  auto row_sig = [&](const CellKey& k) {
    std::string s;
    for (const auto& a : other) s += axis_value(k, a) + "\x1f";
    return s + axis_value(k, row_axis);
  };
  for (const auto& r : report.records)
    if (std::none_of(rows.begin(), rows.end(), [&](const CellKey& k) { return row_sig(k) == row_sig(r.cell); }))
      rows.push_back(r.cell);
  std::stable_sort(rows.begin(), rows.end(), [&](const CellKey& a, const CellKey& b) {
    for (const auto& ax : other) {
      if (axis_less(a, b, ax)) return true;
      if (axis_less(b, a, ax)) return false;
    }
    return axis_less(a, b, row_axis);
  });

  std::ostringstream out;
  for (const auto& a : other) out << a << ',';
  out << row_axis;
  for (const auto& c : cols) out << ',' << col_axis << '=' << axis_value(c, col_axis);
  out << '\n';
  for (const auto& row : rows) {
    for (const auto& a : other) out << axis_value(row, a) << ',';
    out << axis_value(row, row_axis);
    for (const auto& col : cols) {
      std::vector<double> vals;
      for (const auto& r : report.records) {
        if (!r.ok || row_sig(r.cell) != row_sig(row)) continue;
        if (axis_value(r.cell, col_axis) != axis_value(col, col_axis)) continue;
        vals.push_back(metric_of(r, metric));
      }
      out << ',';
      if (vals.empty()) {
        out << "NA";
        continue;
      }
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      out << fixed4(mean);
      if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        out << " ± " << fixed4(std::sqrt(ss / static_cast<double>(vals.size() - 1)));
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string long_csv(const EvalReport& report, const std::string& axis) {
  std::vector<std::size_t> order(report.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return axis_less(report.records[a].cell, report.records[b].cell, axis);
  });

  std::ostringstream out;
  out << axis;
  for (const auto& a : kAxes)
    if (a != axis) out << ',' << a;
  out << ",repeat,seed,status,accuracy,macro_f1,weighted_f1,stop_epoch,best_epoch,wall_time_s\n";
  for (auto i : order) {
    const auto& r = report.records[i];
    out << axis_value(r.cell, axis);
    for (const auto& a : kAxes)
      if (a != axis) out << ',' << axis_value(r.cell, a);
    out << ',' << r.repeat << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',';
    if (r.ok) {
      out << sparse::format_double(r.metrics.accuracy) << ',' << sparse::format_double(r.metrics.macro_f1)
          << ',' << sparse::format_double(r.metrics.weighted_f1);
    } else {
      out << ",,";
    }
    out << ',' << r.stop_epoch << ',' << r.best_epoch << ',' << sparse::format_double(r.wall_time_s) << '\n';
  }
  return out.str();
}

std::vector<std::filesystem::path> emit_report(const EvalReport& report,
                                               const std::filesystem::path& dir,
                                               std::vector<ReportFormat> formats) {
  if (report.records.empty()) throw ArgumentError("cannot emit an empty report");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto has = [&](ReportFormat f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
  if (has(ReportFormat::kJson)) {
    written.push_back(dir / "report.json");
    write_text(written.back(), report_json(report));
  }
  if (has(ReportFormat::kCsvPivot)) {
    for (std::size_t a = 0; a < kAxes.size(); ++a)
      for (std::size_t b = a + 1; b < kAxes.size(); ++b) {
        written.push_back(dir / ("table_" + kAxes[a] + "_" + kAxes[b] + ".csv"));
        write_text(written.back(), pivot_csv(report, kAxes[a], kAxes[b]));
      }
  }
  if (has(ReportFormat::kCsvLong)) {
    for (const auto& a : kAxes) {
      written.push_back(dir / ("curve_" + a + ".csv"));
      write_text(written.back(), long_csv(report, a));
    }
  }
  return written;
}

int exit_code(const EvalReport& report) {
  const auto failed = report.n_failed();
  if (report.records.empty() || failed == report.records.size()) return 1;
  return failed ? 2 : 0;
}

}  // namespace textgcn::harness
