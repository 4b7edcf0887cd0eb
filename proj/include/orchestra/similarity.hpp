#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <utility>

#include "orchestra/dialogue.hpp"

namespace orchestra {

/// F1 of two finite sets. F(empty, empty) = 1; F = 0 when either side is
/// empty or the sets are disjoint.
template <typename T>
double f1_sets(const std::set<T>& a, const std::set<T>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  // 2PR/(P+R) reduces to 2|a&b|/(|a|+|b|), which rounds only once.
  return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

struct SlotF1 {
  double slot_value = 0.0;
  double slot = 0.0;

  [[nodiscard]] double similarity() const noexcept { return slot_value + slot - 1.0; }
};

template <typename Tag>
SlotF1 slot_f1(const SlotValues<Tag>& a, const SlotValues<Tag>& b) {
  std::set<std::pair<std::string, std::string>> pairs_a, pairs_b;
  std::set<std::string> slots_a, slots_b;
  for (const auto& [slot, value] : a.entries()) {
    pairs_a.emplace(slot.str(), value);
    slots_a.insert(slot.str());
  }
  for (const auto& [slot, value] : b.entries()) {
    pairs_b.emplace(slot.str(), value);
    slots_b.insert(slot.str());
  }
  return {f1_sets(pairs_a, pairs_b), f1_sets(slots_a, slots_b)};
}

/// F_slot-value + F_slot - 1, in [-1, 1].
inline double tlb_similarity(const TurnBelief& a, const TurnBelief& b) {
  return slot_f1(a, b).similarity();
}

/// Same form as tlb_similarity, over accumulated states.
inline double state_similarity(const DialogueState& a, const DialogueState& b) {
  return slot_f1(a, b).similarity();
}

/// A hold-out turn with its gold previous state and gold turn belief.
struct LabeledTurn {
  std::string key;
  DialogueState prev_state;
  TurnBelief tlb;
};

inline constexpr double kContextWeight = 0.5;

/// 0.5 * state similarity of the previous states + belief similarity, in [-1.5, 1.5].
inline double turn_similarity(const LabeledTurn& a, const LabeledTurn& b) {
  return kContextWeight * state_similarity(a.prev_state, b.prev_state) +
         tlb_similarity(a.tlb, b.tlb);
}

/// Graded score of a prediction against gold; used to label the best expert.
inline double graded_accuracy(const TurnBelief& pred, const TurnBelief& gold) {
  return tlb_similarity(pred, gold);
}

} // namespace orchestra
