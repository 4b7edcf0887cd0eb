#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "orchestra/dialogue.hpp"
#include "orchestra/experts.hpp"
#include "orchestra/rng.hpp"

namespace orchestra {

/// Shape of a synthetic corpus with two latent turn clusters.
struct SimulationSpec {
  std::size_t dialogues = 200;
  std::size_t min_turns = 3;
  std::size_t max_turns = 6;
  double cluster_a_share = 0.5;   // probability that a turn belongs to cluster A
  std::size_t cue_words = 3;      // cluster-revealing words per user turn
  std::size_t filler_words = 8;   // shared vocabulary words per user turn
  std::string id_prefix = "sim";
};

struct SyntheticCorpus {
  std::vector<Dialogue> dialogues;
  std::set<std::string> cluster_a;  // turn keys of cluster A
  std::set<std::string> cluster_b;
};

namespace detail {

struct ClusterVocab {
  std::string_view domain;
  std::array<std::string_view, 4> slots;
  std::array<std::array<std::string_view, 5>, 4> values;
  std::array<std::string_view, 8> cues;
};

inline const ClusterVocab& cluster_vocab(int cluster) {
  static const ClusterVocab a{
      "hotel",
      {"area", "pricerange", "stars", "type"},
      {{{"north", "south", "east", "west", "centre"},
        {"cheap", "moderate", "expensive", "cheap", "moderate"},
        {"one", "two", "three", "four", "five"},
        {"guesthouse", "hotel", "guesthouse", "hotel", "guesthouse"}}},
      {"room", "stay", "nights", "parking", "wifi", "breakfast", "reservation", "beds"}};
  static const ClusterVocab b{
      "train",
      {"departure", "destination", "day", "leaveat"},
      {{{"cambridge", "london", "ely", "norwich", "stevenage"},
        {"cambridge", "london", "ely", "norwich", "stevenage"},
        {"monday", "tuesday", "friday", "saturday", "sunday"},
        {"0815", "0930", "1145", "1400", "1730"}}},
      {"ticket", "travel", "journey", "platform", "railway", "seat", "fare", "arrive"}};
  return cluster == 0 ? a : b;
}

inline constexpr std::array<std::string_view, 40> kFiller{
    "i",     "need",  "would", "like",  "please", "the",   "a",      "to",    "for",  "and",
    "can",   "you",   "find",  "me",    "looking", "also", "want",   "that",  "is",   "it",
    "some",  "there", "what",  "about", "okay",   "yes",   "thanks", "great", "maybe", "just",
    "get",   "have",  "any",   "with",  "on",     "in",    "at",     "be",    "my",   "we"};

inline constexpr std::array<std::string_view, 8> kSystemPhrases{
    "what else can i help with", "is there anything else", "could you tell me more",
    "sure let me check that",    "i have found some options", "do you have a preference",
    "anything more you need",    "how about this one"};

template <std::size_t N>
std::string_view pick(Rng& rng, const std::array<std::string_view, N>& words) {
  return words[uniform_index(rng, N)];
}

} // namespace detail

/// Generates dialogues whose turns each belong to one of two latent
/// clusters (hotel-like A, train-like B). Deterministic per seed.
inline SyntheticCorpus generate_corpus(const SimulationSpec& spec, std::uint64_t seed) {
  if (spec.min_turns < 1 || spec.max_turns < spec.min_turns)
    throw InputError("simulation turn range is empty");
  Rng rng = make_rng(seed, "corpus:" + spec.id_prefix);
  SyntheticCorpus out;
  for (std::size_t d = 0; d < spec.dialogues; ++d) {
    Dialogue dialogue;
    dialogue.dialogue_id = spec.id_prefix + std::to_string(d);
    const std::size_t turns =
        spec.min_turns + uniform_index(rng, spec.max_turns - spec.min_turns + 1);
    for (std::size_t t = 0; t < turns; ++t) {
      const int cluster = uniform_unit(rng) < spec.cluster_a_share ? 0 : 1;
      const auto& vocab = detail::cluster_vocab(cluster);
      Turn turn;
      turn.turn_id = static_cast<int>(t);
      if (t > 0) turn.system_utterance = std::string(detail::pick(rng, detail::kSystemPhrases));

      std::vector<std::string> words;
      const std::size_t slots = 1 + uniform_index(rng, 2);
      std::size_t first_slot = uniform_index(rng, vocab.slots.size());
      for (std::size_t s = 0; s < slots; ++s) {
        const std::size_t slot = (first_slot + s) % vocab.slots.size();
        const auto value = vocab.values[slot][uniform_index(rng, vocab.values[slot].size())];
        turn.gold_tlb.set(SlotName(vocab.domain, vocab.slots[slot]), value);
        words.emplace_back(value);
      }
      for (std::size_t c = 0; c < spec.cue_words; ++c) words.emplace_back(detail::pick(rng, vocab.cues));
      for (std::size_t f = 0; f < spec.filler_words; ++f) words.emplace_back(detail::pick(rng, detail::kFiller));
      for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[uniform_index(rng, i)]);
      for (const auto& w : words) {
        if (!turn.user_utterance.empty()) turn.user_utterance += ' ';
        turn.user_utterance += w;
      }

      dialogue.domains.insert(std::string(vocab.domain));
      (cluster == 0 ? out.cluster_a : out.cluster_b).insert(turn_key(dialogue.dialogue_id, turn.turn_id));
      dialogue.turns.push_back(std::move(turn));
    }
    out.dialogues.push_back(std::move(dialogue));
  }
  return out;
}

/// Accuracy profile of one synthetic expert, split by its specialty cluster.
struct SyntheticExpertSpec {
  std::string name;
  int priority_rank = 0;
  bool specializes_in_a = true;
  double accuracy_in = 0.95;
  double accuracy_out = 0.30;
  double confidence_when_correct = 0.9;
  double confidence_when_wrong = 0.3;
};

/// Runs a synthetic expert over every turn with the gold prior state and
/// returns its predictions (replay-file content).
inline std::vector<ExpertPrediction> synthesize_predictions(const SyntheticCorpus& corpus,
                                                            const SyntheticExpertSpec& spec,
                                                            std::uint64_t seed) {
  auto gold = std::make_shared<const GoldIndex>(index_gold(corpus.dialogues));
  SyntheticProfile profile{key_membership(spec.specializes_in_a ? corpus.cluster_a : corpus.cluster_b),
                           spec.accuracy_in, spec.accuracy_out, spec.confidence_when_correct,
                           spec.confidence_when_wrong};
  SyntheticExpert expert({spec.name, spec.priority_rank}, std::move(profile), gold,
                         derive_seed(seed, "expert:" + spec.name));
  std::vector<ExpertPrediction> preds;
  for (const auto& d : corpus.dialogues)
    for (std::size_t t = 0; t < d.turns.size(); ++t)
      preds.push_back(expert.predict(triplet_of_turn(d, t, gold_prev_state(d, t))));
  return preds;
}

} // namespace orchestra
