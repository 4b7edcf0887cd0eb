#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "orchestra/cost.hpp"
#include "orchestra/dialogue.hpp"
#include "orchestra/embedding.hpp"
#include "orchestra/error.hpp"
#include "orchestra/experts.hpp"
#include "orchestra/rng.hpp"

namespace orchestra {

struct Neighbor {
  std::string key;
  std::string expert;
  double score = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct RoutingDecision {
  std::string key;
  std::string chosen;
  std::map<std::string, std::size_t> votes;  // retrieval only
  std::vector<Neighbor> neighbors;           // retrieval only, best first; expert not persisted
  std::optional<double> confidence;          // cascade only
  std::vector<std::string> invoked;          // experts actually called this turn

  friend bool operator==(const RoutingDecision&, const RoutingDecision&) = default;
};

// ---------------------------------------------------------------------------
// Retrieval router: exact cosine scan over all pools, majority vote of top k.

inline RoutingDecision route_retrieval(const EmbeddingVector& query,
                                       std::span<const ExpertPool> pools, std::size_t k) {
  if (k < 1) throw InputError("retrieval k must be >= 1");
  struct Candidate {
    double score;
    const std::string* key;
    const ExpertId* expert;
  };
  std::vector<Candidate> all;
  for (const auto& pool : pools)
    for (const auto& e : pool.entries) all.push_back({cosine(query, e.vector), &e.key, &pool.expert});
  if (all.empty()) throw InputError("retrieval routing with all pools empty");

  const std::size_t top = std::min(k, all.size());
  // Total order: score desc, then turn key asc, then expert priority.
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(top), all.end(),
                    [](const Candidate& a, const Candidate& b) {
                      if (a.score != b.score) return a.score > b.score;
                      if (*a.key != *b.key) return *a.key < *b.key;
                      return a.expert->priority_rank < b.expert->priority_rank;
                    });

  RoutingDecision d;
  for (const auto& pool : pools) d.votes.emplace(pool.expert.name, 0);
  for (std::size_t i = 0; i < top; ++i) {
    ++d.votes[all[i].expert->name];
    d.neighbors.push_back({*all[i].key, all[i].expert->name, all[i].score});
  }
  const ExpertId* best = nullptr;
  std::size_t best_votes = 0;
  for (const auto& pool : pools) {
    const std::size_t v = d.votes[pool.expert.name];
    if (best == nullptr || v > best_votes ||
        (v == best_votes && pool.expert.priority_rank < best->priority_rank)) {
      best = &pool.expert;
      best_votes = v;
    }
  }
  d.chosen = best->name;
  d.invoked = {d.chosen};
  return d;
}

// ---------------------------------------------------------------------------
// Oracle router: cheapest exactly-correct expert, else the preferred one.

inline RoutingDecision route_oracle(std::span<const std::pair<ExpertId, TurnBelief>> preds,
                                    const TurnBelief& gold) {
  if (preds.empty()) throw InputError("oracle routing needs at least one prediction");
  const ExpertId* correct = nullptr;
  const ExpertId* preferred = nullptr;
  for (const auto& [id, tlb] : preds) {
    if (preferred == nullptr || id.priority_rank < preferred->priority_rank) preferred = &id;
    if (judge_correct(tlb, gold) && (correct == nullptr || id.priority_rank < correct->priority_rank))
      correct = &id;
  }
  RoutingDecision d;
  d.chosen = (correct != nullptr ? correct : preferred)->name;
  d.invoked = {d.chosen};
  return d;
}

// ---------------------------------------------------------------------------
// Cascade router: always run the small expert, defer below a threshold.

struct CascadeSample {
  double slm_confidence = 0.0;
  bool slm_correct = false;
  bool llm_correct = false;
};

/// Hold-out accuracy of the rule "confidence >= threshold keeps the SLM".
inline double cascade_accuracy(std::span<const CascadeSample> samples, double threshold) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) hits += (s.slm_confidence >= threshold ? s.slm_correct : s.llm_correct) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

/// Grid search over the distinct hold-out confidences plus 0 and 1; ties
/// pick the larger threshold.
inline double tune_cascade_threshold(std::span<const CascadeSample> samples) {
  if (samples.empty()) throw InputError("cannot tune cascade threshold on an empty hold-out");
  std::set<double> grid{0.0, 1.0};
  for (const auto& s : samples) grid.insert(s.slm_confidence);
  double best_tau = 0.0;
  double best_acc = -1.0;
  for (double tau : grid) {
    const double acc = cascade_accuracy(samples, tau);
    if (acc >= best_acc) {
      best_acc = acc;
      best_tau = tau;
    }
  }
  return best_tau;
}

inline RoutingDecision route_cascade(const ExpertPrediction& slm_pred, double threshold,
                                     const std::string& large = kLlm) {
  if (!slm_pred.confidence)
    throw InputError("cascade routing needs a confidence from '" + slm_pred.expert + "' at '" +
                     slm_pred.key() + "'");
  RoutingDecision d;
  d.confidence = slm_pred.confidence;
  if (*slm_pred.confidence >= threshold) {
    d.chosen = slm_pred.expert;
    d.invoked = {slm_pred.expert};
  } else {
    d.chosen = large;
    d.invoked = {slm_pred.expert, large};
  }
  return d;
}

// ---------------------------------------------------------------------------
// Classifier router: logistic regression over frozen triplet embeddings.

struct ClassifierConfig {
  double learning_rate = 0.5;
  int epochs = 300;
  std::uint64_t seed = 0;
};

struct ClassifierSample {
  EmbeddingVector vector;
  std::string label;
};

/// Binary router between the preferred expert (probability <= 0.5) and the
/// other one (probability > 0.5).
class LogisticRouter {
public:
  LogisticRouter(ExpertId negative, ExpertId positive, std::vector<double> weights, double bias)
      : negative_(std::move(negative)), positive_(std::move(positive)),
        weights_(std::move(weights)), bias_(bias) {}

  /// Always answers `expert` (degenerate single-class training data).
  static LogisticRouter constant(ExpertId negative, ExpertId positive, const std::string& expert) {
    LogisticRouter r(std::move(negative), std::move(positive), {}, 0.0);
    r.constant_ = expert;
    return r;
  }

  /// Probability of the non-preferred expert.
  [[nodiscard]] double probability(std::span<const float> x) const {
    require_same_dim(weights_.size(), x.size(), "classifier");
    double z = bias_;
    for (std::size_t i = 0; i < x.size(); ++i) z += weights_[i] * static_cast<double>(x[i]);
    return 1.0 / (1.0 + std::exp(-z));
  }

  [[nodiscard]] RoutingDecision route(const EmbeddingVector& query) const {
    RoutingDecision d;
    if (constant_) {
      d.chosen = *constant_;
    } else {
      d.chosen = probability(query.values) > 0.5 ? positive_.name : negative_.name;
    }
    d.invoked = {d.chosen};
    return d;
  }

  [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }
  [[nodiscard]] double bias() const noexcept { return bias_; }
  [[nodiscard]] const std::optional<std::string>& constant_expert() const noexcept { return constant_; }

private:
  ExpertId negative_;
  ExpertId positive_;
  std::vector<double> weights_;
  double bias_ = 0.0;
  std::optional<std::string> constant_;
};

inline LogisticRouter train_classifier_router(std::span<const ClassifierSample> samples,
                                              const ExpertRoster& roster,
                                              const ClassifierConfig& config,
                                              Diagnostics* diag = nullptr) {
  if (roster.size() != 2) throw InputError("classifier router supports exactly two experts");
  if (samples.empty()) throw InputError("classifier router needs training samples");
  const ExpertId& negative = roster.experts()[0];
  const ExpertId& positive = roster.experts()[1];
  const std::size_t dim = samples.front().vector.dim();
  std::vector<double> y;
  y.reserve(samples.size());
  std::size_t positives = 0;
  for (const auto& s : samples) {
    require_same_dim(dim, s.vector.dim(), "classifier sample");
    if (s.label == positive.name) {
      y.push_back(1.0);
      ++positives;
    } else if (s.label == negative.name) {
      y.push_back(0.0);
    } else {
      throw InputError("classifier label '" + s.label + "' is not in the roster");
    }
  }
  if (positives == 0 || positives == samples.size()) {
    const auto& majority = positives == 0 ? negative : positive;
    warn(diag, "classifier training data has a single class; routing everything to '" +
                   majority.name + "'");
    return LogisticRouter::constant(negative, positive, majority.name);
  }

  Rng rng = make_rng(config.seed, "classifier");
  std::vector<double> w(dim);
  for (double& x : w) x = (uniform_unit(rng) - 0.5) * 0.02;
  double b = 0.0;
  const double n = static_cast<double>(samples.size());
  std::vector<double> grad(dim);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& x = samples[i].vector.values;
      double z = b;
      for (std::size_t j = 0; j < dim; ++j) z += w[j] * static_cast<double>(x[j]);
      const double err = 1.0 / (1.0 + std::exp(-z)) - y[i];
      for (std::size_t j = 0; j < dim; ++j) grad[j] += err * static_cast<double>(x[j]);
      grad_b += err;
    }
    for (std::size_t j = 0; j < dim; ++j) w[j] -= config.learning_rate * grad[j] / n;
    b -= config.learning_rate * grad_b / n;
  }
  return LogisticRouter(negative, positive, std::move(w), b);
}

// ---------------------------------------------------------------------------
// Routed runs.

struct RetrievalRouter {
  std::vector<ExpertPool> pools;
  std::size_t k = 10;
  Embedder embed;
  std::optional<ProjectionAdapter> adapter;  // none: route on base embeddings
};

struct OracleRouter {
  std::shared_ptr<const GoldIndex> gold;
};

struct CascadeRouter {
  double threshold = 0.5;
  std::string small = kSlm;
  std::string large = kLlm;
};

struct ClassifierRouter {
  LogisticRouter model;
  Embedder embed;
};

struct ConstantRouter {
  std::string expert;
};

using RouterSpec =
    std::variant<RetrievalRouter, OracleRouter, CascadeRouter, ClassifierRouter, ConstantRouter>;

inline std::string router_name(const RouterSpec& spec) {
  struct Namer {
    std::string operator()(const RetrievalRouter&) const { return "retrieval"; }
    std::string operator()(const OracleRouter&) const { return "oracle"; }
    std::string operator()(const CascadeRouter&) const { return "cascade"; }
    std::string operator()(const ClassifierRouter&) const { return "classifier"; }
    std::string operator()(const ConstantRouter& c) const { return "constant:" + c.expert; }
  };
  return std::visit(Namer{}, spec);
}

/// Retrieval and classifier routers pay the per-turn router cost.
inline bool router_is_charged(const std::string& router) {
  return router == "retrieval" || router == "classifier";
}

class ExpertSet {
public:
  explicit ExpertSet(ExpertRoster roster) : roster_(std::move(roster)) {}

  void add(std::shared_ptr<const Expert> expert) {
    if (!roster_.contains(expert->id().name))
      throw InputError("expert '" + expert->id().name + "' is not in the roster");
    experts_[expert->id().name] = std::move(expert);
  }

  [[nodiscard]] const ExpertRoster& roster() const noexcept { return roster_; }

  [[nodiscard]] const Expert& get(const std::string& name) const {
    auto it = experts_.find(name);
    if (it == experts_.end()) throw InputError("expert '" + name + "' is not configured");
    return *it->second;
  }

private:
  ExpertRoster roster_;
  std::map<std::string, std::shared_ptr<const Expert>> experts_;
};

enum class PriorMode { predicted, gold };

struct RunSnapshot {
  std::string router;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> pool_sizes;
  std::string prior_mode = "predicted";
  CostTable costs;

  friend bool operator==(const RunSnapshot&, const RunSnapshot&) = default;
};

struct RoutedTurn {
  std::string dialogue_id;
  int turn_id = 0;
  RoutingDecision decision;
  TurnBelief tlb;       // chosen expert's prediction
  DialogueState state;  // accumulated prediction after this turn

  [[nodiscard]] std::string key() const { return turn_key(dialogue_id, turn_id); }
};

struct RoutedRun {
  std::vector<RoutedTurn> turns;
  RunSnapshot config;
};

struct PipelineOptions {
  PriorMode prior = PriorMode::predicted;
  RunSnapshot snapshot;
};

namespace detail {

inline RoutingDecision dispatch(const RouterSpec& spec, const Triplet& triplet,
                                const ExpertSet& experts, ExpertPrediction& chosen) {
  struct Visitor {
    const Triplet& triplet;
    const ExpertSet& experts;
    ExpertPrediction& chosen;

    RoutingDecision operator()(const RetrievalRouter& r) const {
      auto q = r.embed(triplet);
      if (r.adapter) q = project(*r.adapter, q);
      auto d = route_retrieval(q, r.pools, r.k);
      chosen = experts.get(d.chosen).predict(triplet);
      return d;
    }
    RoutingDecision operator()(const OracleRouter& r) const {
      if (!r.gold) throw InputError("oracle router without gold annotations");
      auto it = r.gold->find(triplet.key());
      if (it == r.gold->end()) throw InputError("oracle router has no gold for '" + triplet.key() + "'");
      std::vector<std::pair<ExpertId, TurnBelief>> preds;
      std::map<std::string, ExpertPrediction> by_name;
      for (const auto& id : experts.roster().experts()) {
        auto p = experts.get(id.name).predict(triplet);
        preds.emplace_back(id, p.tlb);
        by_name.emplace(id.name, std::move(p));
      }
      auto d = route_oracle(preds, it->second);
      chosen = by_name.at(d.chosen);
      return d;
    }
    RoutingDecision operator()(const CascadeRouter& r) const {
      auto small = experts.get(r.small).predict(triplet);
      auto d = route_cascade(small, r.threshold, r.large);
      chosen = d.chosen == r.small ? std::move(small) : experts.get(r.large).predict(triplet);
      return d;
    }
    RoutingDecision operator()(const ClassifierRouter& r) const {
      auto d = r.model.route(r.embed(triplet));
      chosen = experts.get(d.chosen).predict(triplet);
      return d;
    }
    RoutingDecision operator()(const ConstantRouter& r) const {
      RoutingDecision d;
      d.chosen = r.expert;
      d.invoked = {r.expert};
      chosen = experts.get(r.expert).predict(triplet);
      return d;
    }
  };
  return std::visit(Visitor{triplet, experts, chosen}, spec);
}

} // namespace detail

/// Routes every turn of every dialogue in order. Each turn's triplet carries
/// the accumulated prediction so far (or the gold prior in PriorMode::gold).
inline RoutedRun run_pipeline(std::span<const Dialogue> corpus, const ExpertSet& experts,
                              const RouterSpec& router, PipelineOptions options = {}) {
  RoutedRun run;
  run.config = std::move(options.snapshot);
  run.config.router = router_name(router);
  run.config.prior_mode = options.prior == PriorMode::gold ? "gold" : "predicted";
  for (const auto& dialogue : corpus) {
    DialogueState running;
    DialogueState gold_running;
    for (std::size_t t = 0; t < dialogue.turns.size(); ++t) {
      const auto& prior = options.prior == PriorMode::gold ? gold_running : running;
      const Triplet triplet = triplet_of_turn(dialogue, t, prior);
      ExpertPrediction chosen;
      RoutingDecision decision;
      try {
        decision = detail::dispatch(router, triplet, experts, chosen);
      } catch (const InputError& e) {
        throw InputError("dialogue '" + dialogue.dialogue_id + "' aborted at turn " +
                         std::to_string(dialogue.turns[t].turn_id) + ": " + e.what());
      }
      decision.key = triplet.key();
      running = aggregate_state(running, chosen.tlb);
      gold_running = aggregate_state(gold_running, dialogue.turns[t].gold_tlb);
      run.turns.push_back({dialogue.dialogue_id, dialogue.turns[t].turn_id, std::move(decision),
                           std::move(chosen.tlb), running});
    }
  }
  return run;
}

// ---------------------------------------------------------------------------
// Routed-run file: one record per turn, then a summary record.

inline nlohmann::json routed_turn_to_json(const RoutedTurn& t) {
  nlohmann::json neighbors = nlohmann::json::array();
  for (const auto& n : t.decision.neighbors) neighbors.push_back({n.key, n.score});
  nlohmann::json j{{"key", t.key()},
                   {"dialogue_id", t.dialogue_id},
                   {"turn_id", t.turn_id},
                   {"expert", t.decision.chosen},
                   {"votes", t.decision.votes},
                   {"neighbors", neighbors},
                   {"invoked", t.decision.invoked},
                   {"tlb", slot_values_to_json(t.tlb)},
                   {"state", slot_values_to_json(t.state)}};
  j["confidence"] = t.decision.confidence ? nlohmann::json(*t.decision.confidence) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json snapshot_to_json(const RunSnapshot& s) {
  return {{"router", s.router},         {"k", s.k},
          {"seed", s.seed},             {"pool_sizes", s.pool_sizes},
          {"prior_mode", s.prior_mode}, {"costs", cost_table_to_json(s.costs)}};
}

inline RunSnapshot snapshot_from_json(const nlohmann::json& j) {
  RunSnapshot s;
  s.router = j.at("router").get<std::string>();
  s.k = j.at("k").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.pool_sizes = j.at("pool_sizes").get<std::map<std::string, std::size_t>>();
  s.prior_mode = j.at("prior_mode").get<std::string>();
  s.costs = cost_table_from_json(j.at("costs"));
  return s;
}

inline void write_run(std::ostream& out, const RoutedRun& run) {
  for (const auto& t : run.turns) out << routed_turn_to_json(t).dump() << '\n';
  out << nlohmann::json{{"summary", {{"turns", run.turns.size()}, {"config", snapshot_to_json(run.config)}}}}.dump()
      << '\n';
}

inline RoutedRun read_run(std::istream& in) {
  RoutedRun run;
  bool have_summary = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("summary")) {
        run.config = snapshot_from_json(j.at("summary").at("config"));
        if (j.at("summary").at("turns").get<std::size_t>() != run.turns.size())
          throw InputError("summary turn count does not match the records");
        have_summary = true;
        continue;
      }
      if (have_summary) throw InputError("record after the summary");
      RoutedTurn t;
      t.dialogue_id = j.at("dialogue_id").get<std::string>();
      t.turn_id = j.at("turn_id").get<int>();
      t.decision.key = j.at("key").get<std::string>();
      t.decision.chosen = j.at("expert").get<std::string>();
      t.decision.votes = j.at("votes").get<std::map<std::string, std::size_t>>();
      for (const auto& n : j.at("neighbors"))
        t.decision.neighbors.push_back({n.at(0).get<std::string>(), {}, n.at(1).get<double>()});
      t.decision.invoked = j.at("invoked").get<std::vector<std::string>>();
      if (!j.at("confidence").is_null()) t.decision.confidence = j.at("confidence").get<double>();
      t.tlb = slot_values_from_json<TurnBeliefTag>(j.at("tlb"));
      t.state = slot_values_from_json<DialogueStateTag>(j.at("state"));
      run.turns.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("run line " + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const InputError& e) {
      throw InputError("run line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_summary) throw InputError("routed-run file has no summary record");
  return run;
}

} // namespace orchestra
