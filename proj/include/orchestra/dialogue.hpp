#pragma once

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstddef>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "orchestra/error.hpp"

namespace orchestra {

/// Lowercases, trims, and collapses internal whitespace runs to one space.
inline std::string canonicalize_value(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

/// Canonical values that mean "no value" and never enter a belief or state.
inline bool is_null_value(std::string_view canonical) {
  return canonical.empty() || canonical == "none";
}

/// A (domain, slot) pair rendered as "domain-slot". Ordered by the rendered
/// name so every map keyed by SlotName iterates lexicographically.
class SlotName {
public:
  static constexpr char separator = '-';

  SlotName(std::string_view domain, std::string_view slot)
      : domain_(canonicalize_value(domain)), slot_(canonicalize_value(slot)) {
    if (domain_.empty() || slot_.empty())
      throw InputError("slot name needs a non-empty domain and slot: '" +
                       std::string(domain) + "-" + std::string(slot) + "'");
    if (domain_.find(separator) != std::string::npos ||
        slot_.find(separator) != std::string::npos)
      throw InputError("separator inside slot name part: '" + domain_ + "' / '" + slot_ + "'");
    full_ = domain_ + separator + slot_;
  }

  /// Parses "domain-slot", splitting at the first separator.
  static SlotName parse(std::string_view rendered) {
    const auto pos = rendered.find(separator);
    if (pos == std::string_view::npos)
      throw InputError("slot name without domain separator: '" + std::string(rendered) + "'");
    return SlotName(rendered.substr(0, pos), rendered.substr(pos + 1));
  }

  [[nodiscard]] const std::string& domain() const noexcept { return domain_; }
  [[nodiscard]] const std::string& slot() const noexcept { return slot_; }
  [[nodiscard]] const std::string& str() const noexcept { return full_; }

  friend bool operator==(const SlotName& a, const SlotName& b) noexcept {
    return a.full_ == b.full_;
  }
  friend std::strong_ordering operator<=>(const SlotName& a, const SlotName& b) noexcept {
    return a.full_ <=> b.full_;
  }

private:
  std::string domain_;
  std::string slot_;
  std::string full_;
};

/// Slot -> canonical value mapping. The tag keeps turn beliefs and
/// accumulated states from being mixed up.
template <typename Tag>
class SlotValues {
public:
  using Map = std::map<SlotName, std::string>;

  SlotValues() = default;

  /// Inserts a canonicalized value. Null values are dropped; returns
  /// whether the entry was kept.
  bool set(const SlotName& name, std::string_view raw_value) {
    auto value = canonicalize_value(raw_value);
    if (is_null_value(value)) return false;
    entries_.insert_or_assign(name, std::move(value));
    return true;
  }

  [[nodiscard]] const Map& entries() const noexcept { return entries_; }
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }

  [[nodiscard]] const std::string* find(const SlotName& name) const {
    auto it = entries_.find(name);
    return it == entries_.end() ? nullptr : &it->second;
  }

  friend bool operator==(const SlotValues&, const SlotValues&) = default;

private:
  Map entries_;
};

struct TurnBeliefTag {};
struct DialogueStateTag {};

/// Slot values newly expressed or updated in one turn.
using TurnBelief = SlotValues<TurnBeliefTag>;
/// Accumulated non-null slot values up to a turn.
using DialogueState = SlotValues<DialogueStateTag>;

struct Turn {
  int turn_id = 0;
  std::string system_utterance;
  std::string user_utterance;
  TurnBelief gold_tlb;

  friend bool operator==(const Turn&, const Turn&) = default;
};

struct Dialogue {
  std::string dialogue_id;
  std::set<std::string> domains;
  std::vector<Turn> turns;

  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

/// "dialogue_id:turn_id", the identity of one turn across every file format.
inline std::string turn_key(std::string_view dialogue_id, int turn_id) {
  return std::string(dialogue_id) + ":" + std::to_string(turn_id);
}

/// Router and expert input: previous state, previous system act, user turn.
struct Triplet {
  std::string dialogue_id;
  int turn_id = 0;
  DialogueState prev_state;
  std::string system_utterance;
  std::string user_utterance;

  [[nodiscard]] std::string key() const { return turn_key(dialogue_id, turn_id); }
};

/// Overwrites or inserts every entry of `tlb` into a copy of `prev`.
inline DialogueState aggregate_state(const DialogueState& prev, const TurnBelief& tlb) {
  DialogueState next = prev;
  for (const auto& [slot, value] : tlb.entries()) next.set(slot, value);
  return next;
}

inline std::vector<DialogueState> accumulate_dialogue(const std::vector<TurnBelief>& tlbs) {
  std::vector<DialogueState> states;
  states.reserve(tlbs.size());
  DialogueState running;
  for (const auto& tlb : tlbs) {
    running = aggregate_state(running, tlb);
    states.push_back(running);
  }
  return states;
}

inline std::vector<TurnBelief> gold_tlbs(const Dialogue& dialogue) {
  std::vector<TurnBelief> out;
  out.reserve(dialogue.turns.size());
  for (const auto& turn : dialogue.turns) out.push_back(turn.gold_tlb);
  return out;
}

/// State before turn `t` under gold annotations (empty for t = 0).
inline DialogueState gold_prev_state(const Dialogue& dialogue, std::size_t t) {
  DialogueState state;
  for (std::size_t i = 0; i < t && i < dialogue.turns.size(); ++i)
    state = aggregate_state(state, dialogue.turns[i].gold_tlb);
  return state;
}

/// The caller decides where `prev_state` comes from (gold or predicted).
inline Triplet triplet_of_turn(const Dialogue& dialogue, std::size_t t,
                               const DialogueState& prev_state) {
  if (t >= dialogue.turns.size())
    throw InputError("turn index " + std::to_string(t) + " out of range for dialogue '" +
                     dialogue.dialogue_id + "' with " +
                     std::to_string(dialogue.turns.size()) + " turns");
  const Turn& turn = dialogue.turns[t];
  Triplet triplet;
  triplet.dialogue_id = dialogue.dialogue_id;
  triplet.turn_id = turn.turn_id;
  if (t > 0) {
    triplet.prev_state = prev_state;
    triplet.system_utterance = turn.system_utterance;
  }
  triplet.user_utterance = turn.user_utterance;
  return triplet;
}

// ---------------------------------------------------------------------------
// Corpus file: one JSON dialogue record per line.

template <typename Tag>
nlohmann::json slot_values_to_json(const SlotValues<Tag>& values) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [slot, value] : values.entries()) out[slot.str()] = value;
  return out;
}

/// Reads a {"domain-slot": "value"} object. Null values are dropped and
/// counted in `dropped`.
template <typename Tag>
SlotValues<Tag> slot_values_from_json(const nlohmann::json& obj, std::size_t* dropped = nullptr) {
  if (!obj.is_object()) throw InputError("slot-value record must be an object");
  SlotValues<Tag> out;
  for (const auto& [name, value] : obj.items()) {
    if (!value.is_string()) throw InputError("value of '" + name + "' must be a string");
    if (!out.set(SlotName::parse(name), value.template get<std::string>()) && dropped != nullptr)
      ++*dropped;
  }
  return out;
}

struct ParsedCorpus {
  std::vector<Dialogue> dialogues;
  std::size_t dropped_null_values = 0;
};

inline Dialogue dialogue_from_json(const nlohmann::json& record, std::size_t* dropped) {
  Dialogue dialogue;
  dialogue.dialogue_id = record.at("dialogue_id").get<std::string>();
  if (dialogue.dialogue_id.empty()) throw InputError("empty dialogue_id");
  if (record.contains("domains"))
    for (const auto& d : record.at("domains")) dialogue.domains.insert(canonicalize_value(d.get<std::string>()));
  const auto& turns = record.at("turns");
  if (!turns.is_array() || turns.empty())
    throw InputError("dialogue '" + dialogue.dialogue_id + "' has no turns");
  for (const auto& t : turns) {
    Turn turn;
    turn.turn_id = t.at("turn_id").get<int>();
    if (turn.turn_id < 0 ||
        (!dialogue.turns.empty() && turn.turn_id <= dialogue.turns.back().turn_id))
      throw InputError("dialogue '" + dialogue.dialogue_id +
                       "': turn_id not strictly increasing at " + std::to_string(turn.turn_id));
    turn.system_utterance = t.value("system", std::string{});
    turn.user_utterance = t.at("user").get<std::string>();
    if (turn.user_utterance.empty())
      throw InputError("dialogue '" + dialogue.dialogue_id + "': empty user utterance at turn " +
                       std::to_string(turn.turn_id));
    if (t.contains("gold_tlb"))
      turn.gold_tlb = slot_values_from_json<TurnBeliefTag>(t.at("gold_tlb"), dropped);
    dialogue.turns.push_back(std::move(turn));
  }
  return dialogue;
}

inline ParsedCorpus parse_dialogues(std::istream& in, Diagnostics* diag = nullptr) {
  ParsedCorpus corpus;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Dialogue dialogue;
    try {
      dialogue = dialogue_from_json(nlohmann::json::parse(line), &corpus.dropped_null_values);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("corpus line " + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const InputError& e) {
      throw InputError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(dialogue.dialogue_id).second)
      throw InputError("corpus line " + std::to_string(line_no) + ": duplicate dialogue_id '" +
                       dialogue.dialogue_id + "'");
    corpus.dialogues.push_back(std::move(dialogue));
  }
  if (corpus.dropped_null_values > 0)
    warn(diag, std::to_string(corpus.dropped_null_values) + " null gold value(s) dropped");
  return corpus;
}

inline nlohmann::json dialogue_to_json(const Dialogue& dialogue) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : dialogue.turns)
    turns.push_back({{"turn_id", t.turn_id},
                     {"system", t.system_utterance},
                     {"user", t.user_utterance},
                     {"gold_tlb", slot_values_to_json(t.gold_tlb)}});
  return {{"dialogue_id", dialogue.dialogue_id}, {"domains", dialogue.domains}, {"turns", turns}};
}

inline void write_dialogues(std::ostream& out, const std::vector<Dialogue>& dialogues) {
  for (const auto& d : dialogues) out << dialogue_to_json(d).dump() << '\n';
}

inline std::size_t count_turns(const std::vector<Dialogue>& dialogues) {
  std::size_t n = 0;
  for (const auto& d : dialogues) n += d.turns.size();
  return n;
}

} // namespace orchestra
