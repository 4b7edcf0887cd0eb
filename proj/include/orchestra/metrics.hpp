#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "orchestra/cost.hpp"
#include "orchestra/dialogue.hpp"
#include "orchestra/error.hpp"
#include "orchestra/experts.hpp"
#include "orchestra/routing.hpp"

namespace orchestra {

namespace detail {

// Run turns indexed by key, checked to cover the corpus exactly once.
inline std::unordered_map<std::string, const RoutedTurn*> index_run(const RoutedRun& run,
                                                                    std::span<const Dialogue> gold) {
  std::unordered_map<std::string, const RoutedTurn*> index;
  for (const auto& t : run.turns)
    if (!index.emplace(t.key(), &t).second)
      throw InputError("routed run covers turn '" + t.key() + "' more than once");
  std::size_t covered = 0;
  for (const auto& d : gold)
    for (const auto& t : d.turns) {
      const auto key = turn_key(d.dialogue_id, t.turn_id);
      if (index.count(key) == 0) throw InputError("routed run does not cover turn '" + key + "'");
      ++covered;
    }
  if (covered != index.size())
    throw InputError("routed run has " + std::to_string(index.size()) + " turns, corpus has " +
                     std::to_string(covered));
  return index;
}

struct JgaCounts {
  std::size_t turns = 0;
  std::size_t tlb_correct = 0;
  std::size_t dst_correct = 0;
};

inline JgaCounts count_jga(const Dialogue& d,
                           const std::unordered_map<std::string, const RoutedTurn*>& index) {
  JgaCounts c;
  DialogueState gold_state;
  DialogueState pred_state;
  for (const auto& t : d.turns) {
    const RoutedTurn& r = *index.at(turn_key(d.dialogue_id, t.turn_id));
    gold_state = aggregate_state(gold_state, t.gold_tlb);
    pred_state = aggregate_state(pred_state, r.tlb);
    ++c.turns;
    if (judge_correct(r.tlb, t.gold_tlb)) ++c.tlb_correct;
    if (pred_state == gold_state) ++c.dst_correct;
  }
  return c;
}

inline double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

} // namespace detail

/// Fraction of turns whose routed belief exactly matches gold.
inline double tlb_jga(const RoutedRun& run, std::span<const Dialogue> gold) {
  const auto index = detail::index_run(run, gold);
  std::size_t turns = 0, correct = 0;
  for (const auto& d : gold) {
    const auto c = detail::count_jga(d, index);
    turns += c.turns;
    correct += c.tlb_correct;
  }
  return detail::ratio(correct, turns);
}

/// Fraction of turns whose accumulated predicted state equals the
/// accumulated gold state.
inline double dst_jga(const RoutedRun& run, std::span<const Dialogue> gold) {
  const auto index = detail::index_run(run, gold);
  std::size_t turns = 0, correct = 0;
  for (const auto& d : gold) {
    const auto c = detail::count_jga(d, index);
    turns += c.turns;
    correct += c.dst_correct;
  }
  return detail::ratio(correct, turns);
}

/// TeraFLOPs of every expert call in the run, plus the router overhead for
/// routers that embed each turn.
inline double total_cost(const RoutedRun& run, const CostTable& costs) {
  double total = 0.0;
  for (const auto& t : run.turns)
    for (const auto& expert : t.decision.invoked) total += costs.expert_cost(expert);
  if (router_is_charged(run.config.router))
    total += costs.router_teraflops * static_cast<double>(run.turns.size());
  return total;
}

inline std::map<std::string, double> assignment_ratio(const RoutedRun& run) {
  if (run.turns.empty()) throw InputError("assignment ratio of an empty run");
  std::map<std::string, std::size_t> counts;
  for (const auto& t : run.turns) ++counts[t.decision.chosen];
  std::map<std::string, double> out;
  for (const auto& [name, n] : counts) out[name] = detail::ratio(n, run.turns.size());
  return out;
}

enum class OodCategory { in_domain, half_ood, ood };

inline const char* to_string(OodCategory c) {
  switch (c) {
    case OodCategory::in_domain: return "In-Domain";
    case OodCategory::half_ood: return "Half OOD";
    case OodCategory::ood: return "OOD";
  }
  return "?";
}

inline OodCategory categorize_ood(const std::set<std::string>& dialogue_domains,
                                  const std::set<std::string>& training_domains) {
  if (dialogue_domains.empty()) throw InputError("dialogue has no domains to categorize");
  std::size_t known = 0;
  for (const auto& d : dialogue_domains) known += training_domains.count(d);
  if (known == dialogue_domains.size()) return OodCategory::in_domain;
  if (known == 0) return OodCategory::ood;
  return OodCategory::half_ood;
}

struct CategoryBreakdown {
  std::size_t dialogues = 0;
  std::size_t turns = 0;
  double tlb_jga = 0.0;
  double dst_jga = 0.0;
};

struct Report {
  std::size_t turns = 0;
  double tlb_jga = 0.0;
  double dst_jga = 0.0;
  std::map<std::string, double> assignment_ratio;
  double total_teraflops = 0.0;
  std::optional<std::map<std::string, CategoryBreakdown>> breakdown;
  RunSnapshot config;
};

inline Report make_report(const RoutedRun& run, std::span<const Dialogue> gold, const CostTable& costs,
                          const std::optional<std::set<std::string>>& training_domains = std::nullopt) {
  const auto index = detail::index_run(run, gold);
  Report r;
  r.config = run.config;
  r.config.costs = costs;
  std::size_t tlb = 0, dst = 0;
  std::map<std::string, detail::JgaCounts> per_category;
  std::map<std::string, std::size_t> dialogues_per_category;
  for (const auto& d : gold) {
    const auto c = detail::count_jga(d, index);
    r.turns += c.turns;
    tlb += c.tlb_correct;
    dst += c.dst_correct;
    if (training_domains && !d.domains.empty()) {
      const std::string cat = to_string(categorize_ood(d.domains, *training_domains));
      auto& acc = per_category[cat];
      acc.turns += c.turns;
      acc.tlb_correct += c.tlb_correct;
      acc.dst_correct += c.dst_correct;
      ++dialogues_per_category[cat];
    }
  }
  r.tlb_jga = detail::ratio(tlb, r.turns);
  r.dst_jga = detail::ratio(dst, r.turns);
  r.assignment_ratio = assignment_ratio(run);
  r.total_teraflops = total_cost(run, costs);
  if (training_domains) {
    std::map<std::string, CategoryBreakdown> breakdown;
    for (const auto& [cat, c] : per_category)
      breakdown[cat] = {dialogues_per_category[cat], c.turns, detail::ratio(c.tlb_correct, c.turns),
                        detail::ratio(c.dst_correct, c.turns)};
    r.breakdown = std::move(breakdown);
  }
  return r;
}

inline nlohmann::json report_to_json(const Report& r) {
  nlohmann::json j{{"turns", r.turns},
                   {"tlb_jga", r.tlb_jga},
                   {"dst_jga", r.dst_jga},
                   {"assignment_ratio", r.assignment_ratio},
                   {"total_teraflops", r.total_teraflops},
                   {"config", snapshot_to_json(r.config)}};
  if (r.breakdown) {
    nlohmann::json b = nlohmann::json::object();
    for (const auto& [cat, c] : *r.breakdown)
      b[cat] = {{"dialogues", c.dialogues}, {"turns", c.turns}, {"tlb_jga", c.tlb_jga}, {"dst_jga", c.dst_jga}};
    j["breakdown"] = std::move(b);
  }
  return j;
}

} // namespace orchestra
