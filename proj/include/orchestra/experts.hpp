#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "orchestra/dialogue.hpp"
#include "orchestra/embedding.hpp"
#include "orchestra/error.hpp"
#include "orchestra/rng.hpp"
#include "orchestra/similarity.hpp"

namespace orchestra {

/// An expert name and its tie-break rank (lower is preferred).
struct ExpertId {
  std::string name;
  int priority_rank = 0;

  friend bool operator==(const ExpertId&, const ExpertId&) = default;
};

inline const std::string kSlm = "slm";
inline const std::string kLlm = "llm";

/// Experts of one run, ordered by priority rank.
class ExpertRoster {
public:
  ExpertRoster() = default;

  explicit ExpertRoster(std::vector<ExpertId> experts) : experts_(std::move(experts)) {
    std::sort(experts_.begin(), experts_.end(),
              [](const ExpertId& a, const ExpertId& b) { return a.priority_rank < b.priority_rank; });
    std::set<std::string> names;
    for (std::size_t i = 0; i < experts_.size(); ++i) {
      if (!names.insert(experts_[i].name).second)
        throw InputError("duplicate expert name '" + experts_[i].name + "'");
      if (i > 0 && experts_[i].priority_rank == experts_[i - 1].priority_rank)
        throw InputError("experts '" + experts_[i - 1].name + "' and '" + experts_[i].name +
                         "' share a priority rank");
    }
  }

  /// The standard pair: slm (rank 0) and llm (rank 1).
  static ExpertRoster slm_llm() { return ExpertRoster({{kSlm, 0}, {kLlm, 1}}); }

  [[nodiscard]] const std::vector<ExpertId>& experts() const noexcept { return experts_; }
  [[nodiscard]] std::size_t size() const noexcept { return experts_.size(); }
  [[nodiscard]] const ExpertId& preferred() const {
    if (experts_.empty()) throw InputError("empty expert roster");
    return experts_.front();
  }

  [[nodiscard]] const ExpertId& get(const std::string& name) const {
    for (const auto& e : experts_)
      if (e.name == name) return e;
    throw InputError("unknown expert '" + name + "'");
  }

  [[nodiscard]] bool contains(const std::string& name) const {
    return std::any_of(experts_.begin(), experts_.end(),
                       [&](const ExpertId& e) { return e.name == name; });
  }

private:
  std::vector<ExpertId> experts_;
};

struct ExpertPrediction {
  std::string dialogue_id;
  int turn_id = 0;
  std::string expert;
  TurnBelief tlb;
  std::optional<double> confidence;

  [[nodiscard]] std::string key() const { return turn_key(dialogue_id, turn_id); }
};

/// A turn-level belief predictor. Implementations must tolerate concurrent
/// predict calls on distinct turns.
class Expert {
public:
  virtual ~Expert() = default;
  [[nodiscard]] virtual const ExpertId& id() const = 0;
  [[nodiscard]] virtual ExpertPrediction predict(const Triplet& triplet) const = 0;
};

/// Exact set equality of (slot, value) pairs.
inline bool judge_correct(const TurnBelief& pred, const TurnBelief& gold) { return pred == gold; }

/// The expert with the highest graded accuracy; ties go to the lower
/// priority rank. Independent of the order of `preds`.
inline ExpertId assign_expert_label(std::span<const std::pair<ExpertId, TurnBelief>> preds,
                                    const TurnBelief& gold) {
  if (preds.empty()) throw InputError("assign_expert_label needs at least one prediction");
  const std::pair<ExpertId, TurnBelief>* best = nullptr;
  double best_score = 0.0;
  for (const auto& entry : preds) {
    const double score = graded_accuracy(entry.second, gold);
    if (best == nullptr || score > best_score ||
        (score == best_score && entry.first.priority_rank < best->first.priority_rank)) {
      best = &entry;
      best_score = score;
    }
  }
  return best->first;
}

// ---------------------------------------------------------------------------
// Replay and synthetic experts.

/// expert name -> turn key -> prediction
using PredictionTable = std::map<std::string, std::map<std::string, ExpertPrediction>>;

inline PredictionTable read_predictions(std::istream& in, Diagnostics* diag = nullptr) {
  PredictionTable table;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ExpertPrediction p;
    try {
      const auto j = nlohmann::json::parse(line);
      p.dialogue_id = j.at("dialogue_id").get<std::string>();
      p.turn_id = j.at("turn_id").get<int>();
      p.expert = j.at("expert").get<std::string>();
      p.tlb = slot_values_from_json<TurnBeliefTag>(j.at("tlb"), &dropped);
      if (j.contains("confidence") && !j.at("confidence").is_null()) {
        const double c = j.at("confidence").get<double>();
        if (!(c >= 0.0 && c <= 1.0)) throw InputError("confidence outside [0, 1]");
        p.confidence = c;
      }
    } catch (const nlohmann::json::exception& e) {
      throw InputError("predictions line " + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const InputError& e) {
      throw InputError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto key = p.key();
    if (!table[p.expert].emplace(key, p).second)
      throw InputError("predictions line " + std::to_string(line_no) + ": duplicate prediction for " +
                       p.expert + " at '" + key + "'");
  }
  if (dropped > 0) warn(diag, std::to_string(dropped) + " null predicted value(s) dropped");
  return table;
}

inline nlohmann::json prediction_to_json(const ExpertPrediction& p) {
  nlohmann::json j{{"dialogue_id", p.dialogue_id},
                   {"turn_id", p.turn_id},
                   {"expert", p.expert},
                   {"tlb", slot_values_to_json(p.tlb)}};
  j["confidence"] = p.confidence ? nlohmann::json(*p.confidence) : nlohmann::json(nullptr);
  return j;
}

inline void write_predictions(std::ostream& out, std::span<const ExpertPrediction> preds) {
  for (const auto& p : preds) out << prediction_to_json(p).dump() << '\n';
}

/// Serves stored predictions; a turn without one is an error.
class ReplayExpert final : public Expert {
public:
  ReplayExpert(ExpertId id, std::map<std::string, ExpertPrediction> predictions)
      : id_(std::move(id)), predictions_(std::move(predictions)) {}

  [[nodiscard]] const ExpertId& id() const override { return id_; }

  [[nodiscard]] ExpertPrediction predict(const Triplet& triplet) const override {
    auto it = predictions_.find(triplet.key());
    if (it == predictions_.end())
      throw InputError("missing prediction from expert '" + id_.name + "' for turn '" +
                       triplet.key() + "'");
    return it->second;
  }

  [[nodiscard]] std::size_t size() const noexcept { return predictions_.size(); }

private:
  ExpertId id_;
  std::map<std::string, ExpertPrediction> predictions_;
};

/// turn key -> gold turn belief
using GoldIndex = std::map<std::string, TurnBelief>;

inline GoldIndex index_gold(std::span<const Dialogue> dialogues) {
  GoldIndex index;
  for (const auto& d : dialogues)
    for (const auto& t : d.turns) index.emplace(turn_key(d.dialogue_id, t.turn_id), t.gold_tlb);
  return index;
}

using CompetencePredicate = std::function<bool(const Triplet&)>;

/// Competent on turns whose user utterance contains `token` as a word.
inline CompetencePredicate token_trigger(std::string token) {
  return [token = canonicalize_value(token)](const Triplet& t) {
    const auto words = word_tokens(t.user_utterance);
    return std::find(words.begin(), words.end(), token) != words.end();
  };
}

/// Competent on an explicit set of turn keys.
inline CompetencePredicate key_membership(std::set<std::string> keys) {
  return [keys = std::move(keys)](const Triplet& t) { return keys.count(t.key()) > 0; };
}

struct SyntheticProfile {
  CompetencePredicate competent;
  double accuracy_in = 1.0;
  double accuracy_out = 1.0;
  double confidence_when_correct = 0.9;
  double confidence_when_wrong = 0.3;
};

/// Emits the gold belief with the profile's accuracy, otherwise a corrupted
/// one (one entry dropped or one value replaced). Randomness is a pure
/// function of (seed, turn key).
class SyntheticExpert final : public Expert {
public:
  SyntheticExpert(ExpertId id, SyntheticProfile profile, std::shared_ptr<const GoldIndex> gold,
                  std::uint64_t seed)
      : id_(std::move(id)), profile_(std::move(profile)), gold_(std::move(gold)), seed_(seed) {
    if (!gold_) throw InputError("synthetic expert needs a gold index");
  }

  [[nodiscard]] const ExpertId& id() const override { return id_; }

  [[nodiscard]] ExpertPrediction predict(const Triplet& triplet) const override {
    const auto key = triplet.key();
    auto it = gold_->find(key);
    if (it == gold_->end()) throw InputError("synthetic expert has no gold for '" + key + "'");
    const TurnBelief& gold = it->second;

    Rng rng(derive_seed(seed_, key));
    const bool in = profile_.competent && profile_.competent(triplet);
    const double accuracy = in ? profile_.accuracy_in : profile_.accuracy_out;
    const bool correct = uniform_unit(rng) < accuracy;

    ExpertPrediction p{triplet.dialogue_id, triplet.turn_id, id_.name, gold, std::nullopt};
    if (correct) {
      p.confidence = profile_.confidence_when_correct;
      return p;
    }
    p.confidence = profile_.confidence_when_wrong;
    const bool drop = uniform_index(rng, 2) == 0;
    const std::string marker = "corrupted-" + std::to_string(uniform_index(rng, 1000));
    if (gold.empty()) {
      TurnBelief spurious;
      spurious.set(SlotName("corrupted", "slot"), marker);
      p.tlb = std::move(spurious);
      return p;
    }
    const std::size_t victim = uniform_index(rng, gold.size());
    TurnBelief corrupted;
    std::size_t i = 0;
    for (const auto& [slot, value] : gold.entries()) {
      if (i++ == victim) {
        if (!drop) corrupted.set(slot, marker);
        continue;
      }
      corrupted.set(slot, value);
    }
    p.tlb = std::move(corrupted);
    return p;
  }

private:
  ExpertId id_;
  SyntheticProfile profile_;
  std::shared_ptr<const GoldIndex> gold_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Expert pools.

struct PoolEntry {
  std::string key;
  std::string text;
  EmbeddingVector vector;

  friend bool operator==(const PoolEntry&, const PoolEntry&) = default;
};

/// Exemplar turns the expert predicted exactly right.
struct ExpertPool {
  ExpertId expert;
  std::vector<PoolEntry> entries;
};

/// A hold-out turn offered for pool construction.
struct PoolCandidate {
  std::string key;
  std::string text;
  EmbeddingVector vector;
  TurnBelief gold;
};

struct PoolBuild {
  std::map<std::string, ExpertPool> pools;  // by expert name, one per roster entry
  std::vector<std::string> excluded;        // turns no expert got right
};

/// Each candidate goes to the highest-priority expert that predicted it
/// exactly; candidates nobody got right are excluded.
inline PoolBuild build_pools(std::span<const PoolCandidate> holdout,
                             const PredictionTable& predictions, const ExpertRoster& roster) {
  PoolBuild out;
  for (const auto& e : roster.experts()) out.pools[e.name].expert = e;
  for (const auto& cand : holdout) {
    const ExpertId* winner = nullptr;
    for (const auto& e : roster.experts()) {
      auto table = predictions.find(e.name);
      if (table == predictions.end())
        throw InputError("no predictions for expert '" + e.name + "'");
      auto it = table->second.find(cand.key);
      if (it == table->second.end())
        throw InputError("missing prediction from expert '" + e.name + "' for turn '" + cand.key + "'");
      if (winner == nullptr && judge_correct(it->second.tlb, cand.gold)) winner = &e;
    }
    if (winner == nullptr) {
      out.excluded.push_back(cand.key);
      continue;
    }
    out.pools[winner->name].entries.push_back({cand.key, cand.text, cand.vector});
  }
  return out;
}

/// Uniform sample of min(n, size) entries without replacement, sorted by key.
inline ExpertPool sample_pool(const ExpertPool& pool, std::size_t n, std::uint64_t seed) {
  ExpertPool out{pool.expert, pool.entries};
  if (n < out.entries.size()) {
    Rng rng(splitmix64(seed));
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = i + uniform_index(rng, out.entries.size() - i);
      std::swap(out.entries[i], out.entries[j]);
    }
    out.entries.resize(n);
  }
  std::sort(out.entries.begin(), out.entries.end(),
            [](const PoolEntry& a, const PoolEntry& b) { return a.key < b.key; });
  return out;
}

inline nlohmann::json pool_to_json(const ExpertPool& pool) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : pool.entries)
    entries.push_back({{"key", e.key}, {"text", e.text}, {"vector", e.vector.values}});
  return {{"expert", pool.expert.name}, {"entries", entries}};
}

inline ExpertPool pool_from_json(const nlohmann::json& j, const ExpertRoster& roster) {
  try {
    ExpertPool pool{roster.get(j.at("expert").get<std::string>()), {}};
    std::size_t dim = 0;
    std::set<std::string> keys;
    for (const auto& e : j.at("entries")) {
      PoolEntry entry{e.at("key").get<std::string>(), e.at("text").get<std::string>(), {}};
      entry.vector.values = e.at("vector").get<std::vector<float>>();
      entry.vector.normalized = has_unit_norm(entry.vector.values);
      if (pool.entries.empty()) dim = entry.vector.dim();
      if (entry.vector.dim() != dim)
        throw InputError("pool entry '" + entry.key + "' has inconsistent dimension");
      if (!keys.insert(entry.key).second)
        throw InputError("duplicate pool entry '" + entry.key + "'");
      pool.entries.push_back(std::move(entry));
    }
    return pool;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed pool file: ") + e.what());
  }
}

} // namespace orchestra
