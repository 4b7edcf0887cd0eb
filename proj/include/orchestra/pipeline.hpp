#pragma once

// Config-driven commands: validate -> embed -> train -> pools -> route -> report,
// plus the synthetic end-to-end harness. Every command is a pure function of
// (config, input files, seed) and writes its artifacts under the output dir.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "orchestra/cost.hpp"
#include "orchestra/dialogue.hpp"
#include "orchestra/embedding.hpp"
#include "orchestra/error.hpp"
#include "orchestra/experts.hpp"
#include "orchestra/metrics.hpp"
#include "orchestra/routing.hpp"
#include "orchestra/simulate.hpp"
#include "orchestra/supervision.hpp"

namespace orchestra {

namespace fs = std::filesystem;

// MultiWOZ-derived SLM cost: 272 TeraFLOPs over ~7333 test turns.
inline constexpr double kDefaultSlmTeraflopsPerTurn = 272.0 / 7333.0;

struct EmbeddingSource {
  std::string mode = "hash";  // "hash" | "store"
  std::size_t dim = 256;
  std::uint64_t seed = 0;
  fs::path holdout_store;
  fs::path test_store;
};

struct SimulationConfig {
  SimulationSpec holdout{100, 3, 6, 0.5, 3, 8, "hold"};
  SimulationSpec test{200, 3, 6, 0.5, 3, 8, "test"};
  double accuracy_in = 0.95;
  double accuracy_out = 0.30;
};

struct RunConfig {
  fs::path corpus;
  fs::path holdout;
  std::vector<fs::path> predictions;
  std::vector<fs::path> holdout_predictions;
  fs::path out = "out";
  std::optional<fs::path> adapter;
  EmbeddingSource embedding;
  std::size_t k = 10;
  std::size_t l = 25;
  std::size_t default_pool_size = 100;
  std::map<std::string, std::size_t> pool_size;
  double margin = 0.2;
  double learning_rate = 0.01;
  int epochs = 30;
  ClassifierConfig classifier;
  CostTable costs{{{kSlm, kDefaultSlmTeraflopsPerTurn}, {kLlm, kLlmTeraflopsPerTurn}},
                  kRetrieverTeraflopsPerTurn};
  std::uint64_t seed = 0;
  std::string router = "retrieval";
  std::string supervision = "task+expert";
  ExpertRoster roster = ExpertRoster::slm_llm();
  std::optional<std::set<std::string>> training_domains;
  PriorMode prior = PriorMode::predicted;
  SimulationConfig simulation;

  [[nodiscard]] std::size_t pool_size_for(const std::string& expert) const {
    auto it = pool_size.find(expert);
    return it == pool_size.end() ? default_pool_size : it->second;
  }

  [[nodiscard]] fs::path adapter_path() const { return adapter ? *adapter : out / "adapter.json"; }

  void validate() const {
    if (k < 1) throw InputError("k must be >= 1");
    if (l < 1) throw InputError("l must be >= 1");
    if (default_pool_size < 1) throw InputError("pool_size must be >= 1");
    for (const auto& [name, n] : pool_size)
      if (n < 1) throw InputError("pool_size of '" + name + "' must be >= 1");
    static const std::set<std::string> supervisions{"none", "task", "expert", "task+expert"};
    if (supervisions.count(supervision) == 0)
      throw InputError("unknown supervision kind '" + supervision + "'");
    if (router != "retrieval" && router != "oracle" && router != "cascade" && router != "classifier" &&
        router.rfind("constant:", 0) != 0)
      throw InputError("unknown router kind '" + router + "'");
    if (embedding.mode != "hash" && embedding.mode != "store")
      throw InputError("unknown embedding mode '" + embedding.mode + "'");
    costs.validate();
    TrainConfig{l, margin, learning_rate, epochs, seed}.validate();
  }
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline std::vector<fs::path> path_list(const nlohmann::json& j, const fs::path& base) {
  std::vector<fs::path> out;
  if (j.is_string()) {
    out.push_back(resolve(base, j.get<std::string>()));
  } else {
    for (const auto& p : j) out.push_back(resolve(base, p.get<std::string>()));
  }
  return out;
}

inline SimulationSpec simulation_spec_from_json(const nlohmann::json& j, SimulationSpec spec) {
  spec.dialogues = j.value("dialogues", spec.dialogues);
  spec.min_turns = j.value("min_turns", spec.min_turns);
  spec.max_turns = j.value("max_turns", spec.max_turns);
  spec.cluster_a_share = j.value("cluster_a_share", spec.cluster_a_share);
  spec.cue_words = j.value("cue_words", spec.cue_words);
  spec.filler_words = j.value("filler_words", spec.filler_words);
  return spec;
}

inline nlohmann::json simulation_spec_to_json(const SimulationSpec& s) {
  return {{"dialogues", s.dialogues},       {"min_turns", s.min_turns},
          {"max_turns", s.max_turns},       {"cluster_a_share", s.cluster_a_share},
          {"cue_words", s.cue_words},       {"filler_words", s.filler_words}};
}

} // namespace detail

/// Reads the structured config; relative paths resolve against `base_dir`.
inline RunConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  RunConfig c;
  try {
    if (j.contains("corpus")) c.corpus = detail::resolve(base_dir, j.at("corpus").get<std::string>());
    if (j.contains("holdout")) c.holdout = detail::resolve(base_dir, j.at("holdout").get<std::string>());
    if (j.contains("predictions")) c.predictions = detail::path_list(j.at("predictions"), base_dir);
    if (j.contains("holdout_predictions"))
      c.holdout_predictions = detail::path_list(j.at("holdout_predictions"), base_dir);
    if (j.contains("out")) c.out = detail::resolve(base_dir, j.at("out").get<std::string>());
    if (j.contains("adapter")) c.adapter = detail::resolve(base_dir, j.at("adapter").get<std::string>());
    if (j.contains("embedding")) {
      const auto& e = j.at("embedding");
      c.embedding.mode = e.value("mode", c.embedding.mode);
      c.embedding.dim = e.value("dim", c.embedding.dim);
      c.embedding.seed = e.value("seed", c.embedding.seed);
      if (e.contains("holdout_store"))
        c.embedding.holdout_store = detail::resolve(base_dir, e.at("holdout_store").get<std::string>());
      if (e.contains("test_store"))
        c.embedding.test_store = detail::resolve(base_dir, e.at("test_store").get<std::string>());
    }
    c.k = j.value("k", c.k);
    c.l = j.value("l", c.l);
    if (j.contains("pool_size")) {
      const auto& p = j.at("pool_size");
      if (p.is_number()) {
        c.default_pool_size = p.get<std::size_t>();
      } else {
        c.pool_size = p.get<std::map<std::string, std::size_t>>();
      }
    }
    c.margin = j.value("margin", c.margin);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("classifier")) {
      const auto& cl = j.at("classifier");
      c.classifier.learning_rate = cl.value("learning_rate", c.classifier.learning_rate);
      c.classifier.epochs = cl.value("epochs", c.classifier.epochs);
    }
    if (j.contains("costs")) c.costs = cost_table_from_json(j.at("costs"));
    c.seed = j.value("seed", c.seed);
    c.classifier.seed = c.seed;
    c.router = j.value("router", c.router);
    c.supervision = j.value("supervision", c.supervision);
    if (j.contains("experts")) {
      std::vector<ExpertId> ids;
      for (const auto& e : j.at("experts"))
        ids.push_back({e.at("name").get<std::string>(), e.at("rank").get<int>()});
      c.roster = ExpertRoster(std::move(ids));
    }
    if (j.contains("training_domains"))
      c.training_domains = j.at("training_domains").get<std::set<std::string>>();
    if (j.contains("prior_mode")) {
      const auto mode = j.at("prior_mode").get<std::string>();
      if (mode != "predicted" && mode != "gold") throw InputError("prior_mode must be predicted or gold");
      c.prior = mode == "gold" ? PriorMode::gold : PriorMode::predicted;
    }
    if (j.contains("simulation")) {
      const auto& s = j.at("simulation");
      if (s.contains("holdout")) c.simulation.holdout = detail::simulation_spec_from_json(s.at("holdout"), c.simulation.holdout);
      if (s.contains("test")) c.simulation.test = detail::simulation_spec_from_json(s.at("test"), c.simulation.test);
      c.simulation.accuracy_in = s.value("accuracy_in", c.simulation.accuracy_in);
      c.simulation.accuracy_out = s.value("accuracy_out", c.simulation.accuracy_out);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

/// Serializes a config with paths written relative to `base_dir` when possible.
inline nlohmann::json config_to_json(const RunConfig& c, const fs::path& base_dir) {
  auto rel = [&](const fs::path& p) { return p.lexically_relative(base_dir).generic_string(); };
  auto rel_list = [&](const std::vector<fs::path>& ps) {
    std::vector<std::string> out;
    for (const auto& p : ps) out.push_back(rel(p));
    return out;
  };
  nlohmann::json experts = nlohmann::json::array();
  for (const auto& e : c.roster.experts()) experts.push_back({{"name", e.name}, {"rank", e.priority_rank}});
  nlohmann::json j{{"corpus", rel(c.corpus)},
                   {"holdout", rel(c.holdout)},
                   {"predictions", rel_list(c.predictions)},
                   {"holdout_predictions", rel_list(c.holdout_predictions)},
                   {"out", rel(c.out)},
                   {"embedding", {{"mode", c.embedding.mode}, {"dim", c.embedding.dim}, {"seed", c.embedding.seed}}},
                   {"k", c.k},
                   {"l", c.l},
                   {"margin", c.margin},
                   {"learning_rate", c.learning_rate},
                   {"epochs", c.epochs},
                   {"classifier", {{"learning_rate", c.classifier.learning_rate}, {"epochs", c.classifier.epochs}}},
                   {"costs", cost_table_to_json(c.costs)},
                   {"seed", c.seed},
                   {"router", c.router},
                   {"supervision", c.supervision},
                   {"experts", experts},
                   {"prior_mode", c.prior == PriorMode::gold ? "gold" : "predicted"},
                   {"simulation",
                    {{"holdout", detail::simulation_spec_to_json(c.simulation.holdout)},
                     {"test", detail::simulation_spec_to_json(c.simulation.test)},
                     {"accuracy_in", c.simulation.accuracy_in},
                     {"accuracy_out", c.simulation.accuracy_out}}}};
  if (c.pool_size.empty()) {
    j["pool_size"] = c.default_pool_size;
  } else {
    j["pool_size"] = c.pool_size;
  }
  if (c.training_domains) j["training_domains"] = *c.training_domains;
  if (c.adapter) j["adapter"] = rel(*c.adapter);
  if (c.embedding.mode == "store") {
    j["embedding"]["holdout_store"] = rel(c.embedding.holdout_store);
    j["embedding"]["test_store"] = rel(c.embedding.test_store);
  }
  return j;
}

// ---------------------------------------------------------------------------
// File helpers.

namespace detail {

inline void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw InputError(what + " path is not configured");
  if (!fs::exists(p)) throw InputError(what + " '" + p.string() + "' does not exist");
}

inline std::ifstream open_in(const fs::path& p, const std::string& what) {
  require_file(p, what);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot read " + what + " '" + p.string() + "'");
  return in;
}

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + p.string() + "'");
  out << text;
}

inline nlohmann::json read_json(const fs::path& p, const std::string& what) {
  auto in = open_in(p, what);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(what + " '" + p.string() + "' is not valid JSON: " + e.what());
  }
}

inline std::string file_tag(std::string router) {
  std::replace(router.begin(), router.end(), ':', '_');
  return router;
}

} // namespace detail

inline std::vector<Dialogue> read_corpus_file(const fs::path& p, Diagnostics* diag = nullptr) {
  auto in = detail::open_in(p, "corpus");
  return parse_dialogues(in, diag).dialogues;
}

inline PredictionTable read_prediction_files(const std::vector<fs::path>& paths,
                                             Diagnostics* diag = nullptr) {
  PredictionTable merged;
  for (const auto& p : paths) {
    auto in = detail::open_in(p, "predictions file");
    for (auto& [expert, rows] : read_predictions(in, diag))
      for (auto& [key, pred] : rows)
        if (!merged[expert].emplace(key, std::move(pred)).second)
          throw InputError("duplicate prediction for " + expert + " at '" + key + "' in '" + p.string() + "'");
  }
  return merged;
}

inline EmbeddingStore read_store_file(const fs::path& p) {
  auto in = detail::open_in(p, "embedding store");
  return load_store(in);
}

inline ProjectionAdapter read_adapter_file(const fs::path& p) {
  return adapter_from_json(detail::read_json(p, "adapter"));
}

namespace artifacts {
inline fs::path holdout_embeddings(const RunConfig& c) { return c.out / "holdout_embeddings.jsonl"; }
inline fs::path loss_history(const RunConfig& c) { return c.out / "loss_history.json"; }
inline fs::path pairs(const RunConfig& c) { return c.out / "pairs.json"; }
inline fs::path pool(const RunConfig& c, const std::string& expert) { return c.out / ("pool_" + expert + ".json"); }
inline fs::path run(const RunConfig& c, const std::string& router) {
  return c.out / ("run_" + detail::file_tag(router) + ".jsonl");
}
inline fs::path report(const RunConfig& c, const std::string& router) {
  return c.out / ("report_" + detail::file_tag(router) + ".json");
}
} // namespace artifacts

/// A hold-out turn with its gold-prior triplet.
struct HoldoutTurn {
  Triplet triplet;
  TurnBelief gold;
  std::string text;
};

inline std::vector<HoldoutTurn> holdout_turns(std::span<const Dialogue> dialogues) {
  std::vector<HoldoutTurn> out;
  for (const auto& d : dialogues)
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      auto triplet = triplet_of_turn(d, t, gold_prev_state(d, t));
      auto text = serialize_triplet(triplet);
      out.push_back({std::move(triplet), d.turns[t].gold_tlb, std::move(text)});
    }
  return out;
}

/// Per-turn expert labels (best graded accuracy, ties to the preferred expert).
inline std::map<std::string, std::string> expert_labels(std::span<const HoldoutTurn> turns,
                                                        const PredictionTable& preds,
                                                        const ExpertRoster& roster) {
  std::map<std::string, std::string> labels;
  for (const auto& h : turns) {
    const auto key = h.triplet.key();
    std::vector<std::pair<ExpertId, TurnBelief>> options;
    for (const auto& e : roster.experts()) {
      auto table = preds.find(e.name);
      if (table == preds.end()) throw InputError("no hold-out predictions for expert '" + e.name + "'");
      auto it = table->second.find(key);
      if (it == table->second.end())
        throw InputError("missing hold-out prediction from '" + e.name + "' for turn '" + key + "'");
      options.emplace_back(e, it->second.tlb);
    }
    labels[key] = assign_expert_label(options, h.gold).name;
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Commands.

namespace detail {

inline void check_coverage(std::span<const Dialogue> corpus, const PredictionTable& preds,
                           const ExpertRoster& roster, const std::string& what) {
  for (const auto& e : roster.experts()) {
    auto table = preds.find(e.name);
    for (const auto& d : corpus)
      for (const auto& t : d.turns) {
        const auto key = turn_key(d.dialogue_id, t.turn_id);
        if (table == preds.end() || table->second.count(key) == 0)
          throw InputError(what + ": missing prediction from '" + e.name + "' for turn '" + key + "'");
      }
  }
}

} // namespace detail

inline nlohmann::json cmd_validate(const RunConfig& c, Diagnostics& diag) {
  c.validate();
  const auto corpus = read_corpus_file(c.corpus, &diag);
  if (corpus.empty()) throw InputError("corpus '" + c.corpus.string() + "' is empty");
  const auto preds = read_prediction_files(c.predictions, &diag);
  detail::check_coverage(corpus, preds, c.roster, "corpus");
  nlohmann::json summary{{"dialogues", corpus.size()}, {"turns", count_turns(corpus)}};
  if (!c.holdout.empty()) {
    const auto holdout = read_corpus_file(c.holdout, &diag);
    if (holdout.empty()) throw InputError("hold-out corpus '" + c.holdout.string() + "' is empty");
    const auto hpreds = read_prediction_files(c.holdout_predictions, &diag);
    detail::check_coverage(holdout, hpreds, c.roster, "hold-out");
    summary["holdout_dialogues"] = holdout.size();
    summary["holdout_turns"] = count_turns(holdout);
  }
  summary["warnings"] = diag.warnings.size();
  return summary;
}

inline nlohmann::json cmd_embed(const RunConfig& c, Diagnostics& diag) {
  c.validate();
  const auto holdout = read_corpus_file(c.holdout, &diag);
  const auto turns = holdout_turns(holdout);
  EmbeddingStore store;
  if (c.embedding.mode == "hash") {
    for (const auto& h : turns) store.insert(h.triplet.key(), hash_embed(h.text, c.embedding.dim, c.embedding.seed));
  } else {
    const auto imported = read_store_file(c.embedding.holdout_store);
    for (const auto& h : turns) store.insert(h.triplet.key(), imported.lookup(h.triplet.key()));
    if (!c.corpus.empty()) {
      const auto test_store = read_store_file(c.embedding.test_store);
      require_same_dim(store.dim(), test_store.dim(), "hold-out and test stores");
      for (const auto& d : read_corpus_file(c.corpus, &diag))
        for (const auto& t : d.turns) (void)test_store.lookup(turn_key(d.dialogue_id, t.turn_id));
    }
  }
  std::ostringstream text;
  write_store(text, store);
  detail::write_text(artifacts::holdout_embeddings(c), text.str());
  return {{"embedded", store.size()}, {"dim", store.dim()}, {"mode", c.embedding.mode}};
}

inline nlohmann::json cmd_mine_and_train(const RunConfig& c, Diagnostics& diag) {
  c.validate();
  const auto holdout = read_corpus_file(c.holdout, &diag);
  const auto turns = holdout_turns(holdout);
  const auto store = read_store_file(artifacts::holdout_embeddings(c));

  PairSet pairs;
  std::size_t task_count = 0, expert_count = 0;
  if (c.supervision == "task" || c.supervision == "task+expert") {
    std::vector<LabeledTurn> labeled;
    for (const auto& h : turns) labeled.push_back({h.triplet.key(), h.triplet.prev_state, h.gold});
    auto task = mine_task_pairs(labeled, c.l, &diag);
    task_count = task.size();
    pairs = merge_pairs(pairs, task);
  }
  if (c.supervision == "expert" || c.supervision == "task+expert") {
    const auto preds = read_prediction_files(c.holdout_predictions, &diag);
    const auto labels = expert_labels(turns, preds, c.roster);
    std::vector<ExpertSample> samples;
    for (const auto& h : turns) {
      const auto key = h.triplet.key();
      samples.push_back({key, labels.at(key), store.lookup(key)});
    }
    auto expert = mine_expert_pairs(samples, c.l, &diag);
    expert_count = expert.size();
    pairs = merge_pairs(pairs, expert);
  }

  nlohmann::json history = nlohmann::json::array();
  if (c.supervision == "none") {
    detail::write_text(c.adapter_path(), adapter_to_json(ProjectionAdapter::identity(store.dim())).dump() + "\n");
  } else {
    const auto result = train_adapter(pairs, store, TrainConfig{c.l, c.margin, c.learning_rate, c.epochs, c.seed});
    detail::write_text(c.adapter_path(), adapter_to_json(result.adapter).dump() + "\n");
    history = result.loss_history;
  }
  detail::write_text(artifacts::pairs(c), pairs_to_json(pairs).dump() + "\n");
  nlohmann::json summary{{"supervision", c.supervision},
                         {"task_pairs", task_count},
                         {"expert_pairs", expert_count},
                         {"positives", pairs.positives.size()},
                         {"negatives", pairs.negatives.size()},
                         {"loss", history}};
  detail::write_text(artifacts::loss_history(c), summary.dump(2) + "\n");
  return summary;
}

inline nlohmann::json cmd_build_pools(const RunConfig& c, Diagnostics& diag) {
  c.validate();
  const auto holdout = read_corpus_file(c.holdout, &diag);
  const auto turns = holdout_turns(holdout);
  const auto store = read_store_file(artifacts::holdout_embeddings(c));
  const auto adapter = read_adapter_file(c.adapter_path());
  const auto preds = read_prediction_files(c.holdout_predictions, &diag);

  std::vector<PoolCandidate> candidates;
  for (const auto& h : turns) {
    const auto key = h.triplet.key();
    candidates.push_back({key, h.text, project(adapter, store.lookup(key)), h.gold});
  }
  const auto built = build_pools(candidates, preds, c.roster);
  nlohmann::json summary{{"excluded", built.excluded.size()}};
  for (const auto& e : c.roster.experts()) {
    const auto& pool = built.pools.at(e.name);
    const auto sampled = sample_pool(pool, c.pool_size_for(e.name), derive_seed(c.seed, "pool:" + e.name));
    detail::write_text(artifacts::pool(c, e.name), pool_to_json(sampled).dump() + "\n");
    summary["built"][e.name] = pool.entries.size();
    summary["sampled"][e.name] = sampled.entries.size();
  }
  return summary;
}

namespace detail {

inline Embedder test_embedder(const RunConfig& c, std::shared_ptr<EmbeddingStore>& keep_alive) {
  if (c.embedding.mode == "hash") return hashing_embedder(c.embedding.dim, c.embedding.seed);
  keep_alive = std::make_shared<EmbeddingStore>(read_store_file(c.embedding.test_store));
  return store_embedder(*keep_alive);
}

} // namespace detail

/// Builds the configured router and routes the test corpus.
inline RoutedRun route_corpus(const RunConfig& c, Diagnostics& diag, nlohmann::json* summary = nullptr) {
  c.validate();
  const auto corpus = read_corpus_file(c.corpus, &diag);
  const auto preds = read_prediction_files(c.predictions, &diag);
  ExpertSet experts(c.roster);
  for (const auto& e : c.roster.experts()) {
    auto it = preds.find(e.name);
    if (it == preds.end()) throw InputError("no test predictions for expert '" + e.name + "'");
    experts.add(std::make_shared<ReplayExpert>(e, it->second));
  }

  PipelineOptions options;
  options.prior = c.prior;
  options.snapshot.k = c.k;
  options.snapshot.seed = c.seed;
  options.snapshot.costs = c.costs;

  std::shared_ptr<EmbeddingStore> test_store;
  RouterSpec router = ConstantRouter{c.roster.preferred().name};
  nlohmann::json extra = nlohmann::json::object();
  if (c.router == "retrieval") {
    RetrievalRouter r;
    r.k = c.k;
    r.embed = detail::test_embedder(c, test_store);
    r.adapter = read_adapter_file(c.adapter_path());
    for (const auto& e : c.roster.experts()) {
      r.pools.push_back(pool_from_json(detail::read_json(artifacts::pool(c, e.name), "pool file"), c.roster));
      options.snapshot.pool_sizes[e.name] = r.pools.back().entries.size();
    }
    router = std::move(r);
  } else if (c.router == "oracle") {
    router = OracleRouter{std::make_shared<const GoldIndex>(index_gold(corpus))};
  } else if (c.router == "cascade") {
    if (c.roster.size() != 2) throw InputError("cascade routing needs exactly two experts");
    const auto& small = c.roster.experts()[0].name;
    const auto& large = c.roster.experts()[1].name;
    const auto holdout = read_corpus_file(c.holdout, &diag);
    const auto hpreds = read_prediction_files(c.holdout_predictions, &diag);
    detail::check_coverage(holdout, hpreds, c.roster, "hold-out");
    std::vector<CascadeSample> samples;
    for (const auto& d : holdout)
      for (const auto& t : d.turns) {
        const auto key = turn_key(d.dialogue_id, t.turn_id);
        const auto& sp = hpreds.at(small).at(key);
        if (!sp.confidence) throw InputError("hold-out prediction of '" + small + "' at '" + key + "' has no confidence");
        samples.push_back({*sp.confidence, judge_correct(sp.tlb, t.gold_tlb),
                           judge_correct(hpreds.at(large).at(key).tlb, t.gold_tlb)});
      }
    const double tau = tune_cascade_threshold(samples);
    extra["threshold"] = tau;
    router = CascadeRouter{tau, small, large};
  } else if (c.router == "classifier") {
    const auto holdout = read_corpus_file(c.holdout, &diag);
    const auto turns = holdout_turns(holdout);
    const auto store = read_store_file(artifacts::holdout_embeddings(c));
    const auto labels = expert_labels(turns, read_prediction_files(c.holdout_predictions, &diag), c.roster);
    std::vector<ClassifierSample> samples;
    for (const auto& h : turns) {
      const auto key = h.triplet.key();
      samples.push_back({store.lookup(key), labels.at(key)});
    }
    router = ClassifierRouter{train_classifier_router(samples, c.roster, c.classifier, &diag),
                              detail::test_embedder(c, test_store)};
  } else {
    const auto name = c.router.substr(std::string("constant:").size());
    (void)c.roster.get(name);
    router = ConstantRouter{name};
  }

  auto run = run_pipeline(corpus, experts, router, options);
  if (summary != nullptr) {
    *summary = extra;
    (*summary)["router"] = run.config.router;
    (*summary)["turns"] = run.turns.size();
    if (!run.turns.empty()) (*summary)["assignment_ratio"] = assignment_ratio(run);
  }
  return run;
}

inline nlohmann::json cmd_route(const RunConfig& c, Diagnostics& diag) {
  nlohmann::json summary;
  const auto run = route_corpus(c, diag, &summary);
  std::ostringstream text;
  write_run(text, run);
  const auto path = artifacts::run(c, run.config.router);
  detail::write_text(path, text.str());
  summary["run_file"] = path.filename().string();
  return summary;
}

inline RoutedRun read_run_file(const fs::path& p) {
  auto in = detail::open_in(p, "routed-run file");
  return read_run(in);
}

/// Reports every given run file (default: all run_*.jsonl in the output dir)
/// and a plot-ready accuracy/cost series.
inline nlohmann::json cmd_report(const RunConfig& c, Diagnostics& diag, std::vector<fs::path> runs = {}) {
  c.validate();
  const auto corpus = read_corpus_file(c.corpus, &diag);
  if (runs.empty() && fs::exists(c.out))
    for (const auto& entry : fs::directory_iterator(c.out)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("run_", 0) == 0 && entry.path().extension() == ".jsonl") runs.push_back(entry.path());
    }
  std::sort(runs.begin(), runs.end());
  if (runs.empty()) throw InputError("no routed-run files to report on in '" + c.out.string() + "'");
  nlohmann::json series = nlohmann::json::array();
  for (const auto& p : runs) {
    const auto run = read_run_file(p);
    const auto report = make_report(run, corpus, c.costs, c.training_domains);
    detail::write_text(artifacts::report(c, run.config.router), report_to_json(report).dump(2) + "\n");
    series.push_back({{"router", run.config.router},
                      {"tlb_jga", report.tlb_jga},
                      {"dst_jga", report.dst_jga},
                      {"total_teraflops", report.total_teraflops},
                      {"assignment_ratio", report.assignment_ratio}});
  }
  detail::write_text(c.out / "series.json", series.dump(2) + "\n");
  return series;
}

/// Writes a seeded synthetic hold-out/test corpus with cluster-specialized
/// experts, then runs embed -> train -> pools -> route (every router plus
/// single-expert baselines) -> report inside `c.out`.
inline nlohmann::json cmd_simulate(const RunConfig& base, Diagnostics& diag) {
  RunConfig c = base;
  c.validate();
  fs::create_directories(c.out);
  const auto holdout = generate_corpus(c.simulation.holdout, c.seed);
  const auto test = generate_corpus(c.simulation.test, c.seed);
  if (c.roster.size() != 2) throw InputError("simulation needs exactly two experts");
  const auto& small = c.roster.experts()[0];
  const auto& large = c.roster.experts()[1];
  const SyntheticExpertSpec specs[] = {
      {small.name, small.priority_rank, true, c.simulation.accuracy_in, c.simulation.accuracy_out},
      {large.name, large.priority_rank, false, c.simulation.accuracy_in, c.simulation.accuracy_out}};

  auto write_corpus = [&](const SyntheticCorpus& corpus, const fs::path& corpus_path, const fs::path& pred_path) {
    std::ostringstream text;
    write_dialogues(text, corpus.dialogues);
    detail::write_text(corpus_path, text.str());
    std::ostringstream preds;
    for (const auto& spec : specs) write_predictions(preds, synthesize_predictions(corpus, spec, c.seed));
    detail::write_text(pred_path, preds.str());
  };
  c.holdout = c.out / "holdout.jsonl";
  c.corpus = c.out / "test.jsonl";
  c.holdout_predictions = {c.out / "holdout_predictions.jsonl"};
  c.predictions = {c.out / "test_predictions.jsonl"};
  c.embedding.mode = "hash";
  c.adapter.reset();
  write_corpus(holdout, c.holdout, c.holdout_predictions.front());
  write_corpus(test, c.corpus, c.predictions.front());
  detail::write_text(c.out / "config.json", config_to_json(c, c.out).dump(2) + "\n");

  nlohmann::json summary;
  summary["validate"] = cmd_validate(c, diag);
  summary["embed"] = cmd_embed(c, diag);
  auto train = cmd_mine_and_train(c, diag);
  train.erase("loss");
  summary["train"] = train;
  summary["pools"] = cmd_build_pools(c, diag);
  const std::vector<std::string> routers{"retrieval", "oracle", "cascade", "classifier",
                                         "constant:" + small.name, "constant:" + large.name};
  for (const auto& r : routers) {
    RunConfig rc = c;
    rc.router = r;
    summary["route"][r] = cmd_route(rc, diag);
  }
  summary["report"] = cmd_report(c, diag);
  detail::write_text(c.out / "simulation_summary.json", summary.dump(2) + "\n");
  return summary;
}

} // namespace orchestra
