#pragma once

#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "orchestra/dialogue.hpp"
#include "orchestra/rng.hpp"

namespace testing_support {

using Entries = std::initializer_list<std::pair<const char*, const char*>>;

template <typename Tag = orchestra::TurnBeliefTag>
orchestra::SlotValues<Tag> values(Entries entries) {
  orchestra::SlotValues<Tag> out;
  for (const auto& [name, value] : entries) out.set(orchestra::SlotName::parse(name), value);
  return out;
}

inline orchestra::TurnBelief tlb(Entries entries) { return values<orchestra::TurnBeliefTag>(entries); }
inline orchestra::DialogueState state(Entries entries) { return values<orchestra::DialogueStateTag>(entries); }

// Random belief over a small universe so collisions are frequent.
template <typename Tag = orchestra::TurnBeliefTag>
orchestra::SlotValues<Tag> random_values(orchestra::Rng& rng, std::size_t max_entries = 5,
                                         std::size_t slots = 6, std::size_t vals = 3) {
  orchestra::SlotValues<Tag> out;
  const auto n = orchestra::uniform_index(rng, max_entries + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = orchestra::uniform_index(rng, slots);
    const auto v = orchestra::uniform_index(rng, vals);
    out.set(orchestra::SlotName("d" + std::to_string(s % 2), "s" + std::to_string(s)), "v" + std::to_string(v));
  }
  return out;
}

inline orchestra::Dialogue dialogue(std::string id, std::vector<orchestra::TurnBelief> tlbs,
                                    std::set<std::string> domains = {"hotel"}) {
  orchestra::Dialogue d;
  d.dialogue_id = std::move(id);
  d.domains = std::move(domains);
  for (std::size_t t = 0; t < tlbs.size(); ++t) {
    orchestra::Turn turn;
    turn.turn_id = static_cast<int>(t);
    turn.system_utterance = t == 0 ? "" : "anything else";
    turn.user_utterance = "user says " + std::to_string(t);
    turn.gold_tlb = std::move(tlbs[t]);
    d.turns.push_back(std::move(turn));
  }
  return d;
}

} // namespace testing_support
