#include <sstream>

#include <gtest/gtest.h>

#include "orchestra/metrics.hpp"
#include "support.hpp"

using namespace orchestra;
using testing_support::tlb;

namespace {

constexpr double kN = 7333.0;
const CostTable kMultiwoz{{{kSlm, 272.0 / kN}, {kLlm, 3000.0}}, 0.02};

// A run that chose `chosen[i]` and predicted `preds[i]` for the i-th turn.
RoutedRun make_run(const std::vector<Dialogue>& corpus, const std::vector<TurnBelief>& preds,
                   const std::vector<std::string>& chosen, std::string router = "retrieval") {
  RoutedRun run;
  run.config.router = std::move(router);
  std::size_t i = 0;
  for (const auto& d : corpus) {
    DialogueState s;
    for (const auto& t : d.turns) {
      s = aggregate_state(s, preds[i]);
      RoutedTurn rt{d.dialogue_id, t.turn_id, {}, preds[i], s};
      rt.decision.chosen = chosen[i];
      rt.decision.invoked = {chosen[i]};
      run.turns.push_back(rt);
      ++i;
    }
  }
  return run;
}

RoutedRun uniform_run(std::size_t turns, std::size_t slm_turns, const std::string& router) {
  RoutedRun run;
  run.config.router = router;
  for (std::size_t i = 0; i < turns; ++i) {
    RoutedTurn t{"n", int(i), {}, {}, {}};
    t.decision.chosen = i < slm_turns ? kSlm : kLlm;
    t.decision.invoked = {t.decision.chosen};
    if (router == "cascade" && i >= slm_turns) t.decision.invoked = {kSlm, kLlm};
    run.turns.push_back(t);
  }
  return run;
}

} // namespace

TEST(TlbJga, Counting) {
  const auto g = tlb({{"hotel-area", "west"}});
  const auto bad = tlb({{"hotel-area", "east"}});
  const std::vector<Dialogue> corpus{testing_support::dialogue("a", {g, g}), testing_support::dialogue("b", {g, g})};
  EXPECT_DOUBLE_EQ(tlb_jga(make_run(corpus, {g, g, g, g}, {kSlm, kSlm, kSlm, kSlm}), corpus), 1.0);
  EXPECT_DOUBLE_EQ(tlb_jga(make_run(corpus, {g, bad, g, g}, {kSlm, kSlm, kSlm, kSlm}), corpus), 0.75);
}

TEST(TlbJga, OracleOnComplementaryExperts) {
  Rng rng(1);
  std::vector<Dialogue> corpus;
  for (int i = 0; i < 20; ++i) {
    std::vector<TurnBelief> tlbs;
    for (int t = 0; t < 3; ++t) tlbs.push_back(tlb({{"hotel-area", "a"}}));
    corpus.push_back(testing_support::dialogue("c" + std::to_string(i), tlbs));
  }
  auto gold = std::make_shared<GoldIndex>(index_gold(corpus));
  std::set<std::string> first_half;
  for (const auto& [key, _] : *gold)
    if (first_half.size() < gold->size() / 2) first_half.insert(key);
  std::set<std::string> second_half;
  for (const auto& [key, _] : *gold)
    if (!first_half.count(key)) second_half.insert(key);
  ExpertSet experts(ExpertRoster::slm_llm());
  experts.add(std::make_shared<SyntheticExpert>(ExpertId{kSlm, 0}, SyntheticProfile{key_membership(first_half), 1.0, 0.0}, gold, 1));
  experts.add(std::make_shared<SyntheticExpert>(ExpertId{kLlm, 1}, SyntheticProfile{key_membership(second_half), 1.0, 0.0}, gold, 2));
  const auto run = run_pipeline(corpus, experts, OracleRouter{gold});
  EXPECT_DOUBLE_EQ(tlb_jga(run, corpus), 1.0);
  EXPECT_DOUBLE_EQ(dst_jga(run, corpus), 1.0);
  EXPECT_NEAR(assignment_ratio(run).at(kSlm), 0.5, 1e-12);
}

TEST(DstJga, ErrorPersistenceAndOverwrite) {
  const auto w = tlb({{"hotel-area", "west"}});
  const auto e = tlb({{"hotel-area", "east"}});
  const auto s = tlb({{"hotel-stars", "4"}});
  const auto p = tlb({{"hotel-price", "cheap"}});
  const std::vector<std::string> c3(3, kSlm);

  // perfect everywhere
  std::vector<Dialogue> corpus{testing_support::dialogue("x", {w, s, p})};
  EXPECT_DOUBLE_EQ(dst_jga(make_run(corpus, {w, s, p}, c3), corpus), 1.0);

  // first turn wrong and never corrected: every turn of the dialogue fails
  auto run = make_run(corpus, {e, s, p}, c3);
  EXPECT_DOUBLE_EQ(dst_jga(run, corpus), 0.0);
  EXPECT_NEAR(tlb_jga(run, corpus), 2.0 / 3.0, 1e-15);

  // single slot: wrong at turn 1, overwritten with the right value at turn 2
  std::vector<Dialogue> single{testing_support::dialogue("y", {w, w})};
  run = make_run(single, {e, w}, {kSlm, kSlm});
  EXPECT_DOUBLE_EQ(dst_jga(run, single), 0.5);
  EXPECT_DOUBLE_EQ(tlb_jga(run, single), 0.5);
}

TEST(DstJga, CoverageMismatch) {
  const auto g = tlb({{"hotel-area", "west"}});
  const std::vector<Dialogue> corpus{testing_support::dialogue("a", {g, g})};
  auto run = make_run(corpus, {g, g}, {kSlm, kSlm});
  run.turns.pop_back();
  EXPECT_THROW(dst_jga(run, corpus), InputError);
  auto dup = make_run(corpus, {g, g}, {kSlm, kSlm});
  dup.turns.push_back(dup.turns.front());
  EXPECT_THROW(tlb_jga(dup, corpus), InputError);
}

TEST(JgaProperty, NoMaskingMeansDstEqualsTlbPerfection) {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Dialogue> corpus;
    std::vector<TurnBelief> preds;
    for (int d = 0; d < 3; ++d) {
      std::vector<TurnBelief> tlbs;
      const auto turns = 1 + uniform_index(rng, 4);
      for (std::size_t t = 0; t < turns; ++t) {
        // slot t is mentioned only in turn t
        TurnBelief g;
        g.set(SlotName("d", "s" + std::to_string(t)), "v" + std::to_string(uniform_index(rng, 2)));
        tlbs.push_back(g);
        TurnBelief p = g;
        if (uniform_index(rng, 8) == 0) p.set(SlotName("d", "s" + std::to_string(t)), "wrong");
        preds.push_back(p);
      }
      corpus.push_back(testing_support::dialogue("q" + std::to_string(d), tlbs));
    }
    const auto run = make_run(corpus, preds, std::vector<std::string>(preds.size(), kSlm));
    EXPECT_EQ(dst_jga(run, corpus) == 1.0, tlb_jga(run, corpus) == 1.0);
  }
}

TEST(Cost, TableRowsMultiwoz) {
  const auto slm62 = uniform_run(7333, 4546, "retrieval");  // 62%
  EXPECT_NEAR(total_cost(slm62, kMultiwoz) / 8.3e6, 1.0, 0.02);
  const auto cascade = uniform_run(7333, 953, "cascade");  // 13% kept on slm
  EXPECT_NEAR(total_cost(cascade, kMultiwoz) / 19.14e6, 1.0, 0.02);
  CostTable no_router = kMultiwoz;
  no_router.router_teraflops = 0.0;
  EXPECT_NEAR(total_cost(uniform_run(7333, 7333, "retrieval"), no_router), 272.0, 1e-9);
}

TEST(Cost, RouterChargedOnlyForRetrievalAndClassifier) {
  CostTable t{{{kSlm, 1.0}, {kLlm, 10.0}}, 0.5};
  EXPECT_DOUBLE_EQ(total_cost(uniform_run(4, 2, "retrieval"), t), 2 + 20 + 2.0);
  EXPECT_DOUBLE_EQ(total_cost(uniform_run(4, 2, "classifier"), t), 2 + 20 + 2.0);
  EXPECT_DOUBLE_EQ(total_cost(uniform_run(4, 2, "oracle"), t), 22.0);
  EXPECT_DOUBLE_EQ(total_cost(uniform_run(4, 2, "cascade"), t), 4 + 20.0);
  EXPECT_THROW(total_cost(uniform_run(1, 1, "oracle"), CostTable{{}, 0.0}), InputError);
}

TEST(CostProperty, DecreasingInSlmShare) {
  for (const char* router : {"retrieval", "classifier", "oracle"}) {
    double previous = 1e300;
    for (std::size_t s = 0; s <= 50; ++s) {
      const double c = total_cost(uniform_run(50, s, router), kMultiwoz);
      EXPECT_LT(c, previous);
      previous = c;
    }
  }
}

TEST(CostTableTest, Validation) {
  EXPECT_THROW((CostTable{{{kSlm, -1.0}}, 0.0}.validate()), InputError);
  EXPECT_THROW(cost_table_from_json(nlohmann::json::parse(R"({"experts":{"slm":-2}})")), InputError);
  EXPECT_EQ(cost_table_from_json(cost_table_to_json(kMultiwoz)), kMultiwoz);
}

TEST(Assignment, Ratios) {
  EXPECT_EQ(assignment_ratio(uniform_run(5, 5, "oracle")), (std::map<std::string, double>{{kSlm, 1.0}}));
  const auto r = assignment_ratio(uniform_run(100, 62, "oracle"));
  EXPECT_DOUBLE_EQ(r.at(kSlm), 0.62);
  EXPECT_DOUBLE_EQ(r.at(kLlm), 0.38);
  EXPECT_THROW(assignment_ratio(RoutedRun{}), InputError);
}

TEST(Ood, Categories) {
  EXPECT_EQ(categorize_ood({"hotel"}, {"hotel", "taxi"}), OodCategory::in_domain);
  EXPECT_EQ(categorize_ood({"flights"}, {"hotel"}), OodCategory::ood);
  EXPECT_EQ(categorize_ood({"hotel", "flights"}, {"hotel"}), OodCategory::half_ood);
  EXPECT_STREQ(to_string(OodCategory::half_ood), "Half OOD");
  EXPECT_THROW(categorize_ood({}, {"hotel"}), InputError);
}

TEST(Report, StructureAndHandCounts) {
  const auto g = tlb({{"hotel-area", "west"}});
  const auto bad = tlb({{"hotel-area", "east"}});
  std::vector<Dialogue> corpus{testing_support::dialogue("a", {g, g}, {"hotel"}),
                               testing_support::dialogue("b", {g, g}, {"hotel", "flights"}),
                               testing_support::dialogue("c", {g}, {"flights"})};
  const auto run = make_run(corpus, {g, g, bad, g, g}, {kSlm, kLlm, kSlm, kSlm, kLlm});
  const CostTable costs{{{kSlm, 1.0}, {kLlm, 100.0}}, 0.5};

  const auto plain = make_report(run, corpus, costs);
  EXPECT_FALSE(plain.breakdown.has_value());
  EXPECT_EQ(plain.turns, 5u);
  EXPECT_DOUBLE_EQ(plain.tlb_jga, 4.0 / 5.0);
  // a: 1,1  b: bad then west again -> 0,1  c: 1
  EXPECT_DOUBLE_EQ(plain.dst_jga, 4.0 / 5.0);
  EXPECT_DOUBLE_EQ(plain.assignment_ratio.at(kSlm), 0.6);
  EXPECT_DOUBLE_EQ(plain.total_teraflops, 3 * 1.0 + 2 * 100.0 + 5 * 0.5);

  const auto full = make_report(run, corpus, costs, std::set<std::string>{"hotel"});
  ASSERT_TRUE(full.breakdown.has_value());
  EXPECT_EQ(full.breakdown->at("In-Domain").turns, 2u);
  EXPECT_DOUBLE_EQ(full.breakdown->at("Half OOD").tlb_jga, 0.5);
  EXPECT_DOUBLE_EQ(full.breakdown->at("OOD").dst_jga, 1.0);
  const auto j = report_to_json(full);
  for (const char* field : {"turns", "tlb_jga", "dst_jga", "assignment_ratio", "total_teraflops", "config", "breakdown"})
    EXPECT_TRUE(j.contains(field)) << field;
}

TEST(Report, RecomputedFromFileIsExact) {
  Rng rng(23);
  std::vector<Dialogue> corpus;
  std::vector<TurnBelief> preds;
  std::vector<std::string> chosen;
  for (int d = 0; d < 15; ++d) {
    std::vector<TurnBelief> tlbs;
    for (int t = 0; t < 4; ++t) {
      tlbs.push_back(testing_support::random_values(rng, 2, 3, 2));
      preds.push_back(uniform_index(rng, 3) ? tlbs.back() : testing_support::random_values(rng, 2, 3, 2));
      chosen.push_back(uniform_index(rng, 2) ? kSlm : kLlm);
    }
    corpus.push_back(testing_support::dialogue("f" + std::to_string(d), tlbs));
  }
  auto run = make_run(corpus, preds, chosen);
  run.config.costs = kMultiwoz;
  std::ostringstream out;
  write_run(out, run);
  std::istringstream in(out.str());
  const auto back = read_run(in);
  EXPECT_EQ(report_to_json(make_report(back, corpus, kMultiwoz)).dump(),
            report_to_json(make_report(run, corpus, kMultiwoz)).dump());
}
