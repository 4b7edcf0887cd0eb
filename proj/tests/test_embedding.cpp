#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "orchestra/embedding.hpp"
#include "support.hpp"

using namespace orchestra;

namespace {

Triplet make_triplet(DialogueState prev, std::string system, std::string user) {
  Triplet t;
  t.dialogue_id = "d";
  t.turn_id = 1;
  t.prev_state = std::move(prev);
  t.system_utterance = std::move(system);
  t.user_utterance = std::move(user);
  return t;
}

EmbeddingVector vec(std::vector<float> v) {
  EmbeddingVector e;
  e.values = std::move(v);
  e.normalized = has_unit_norm(e.values);
  return e;
}

EmbeddingVector random_unit(Rng& rng, std::size_t dim) {
  std::vector<float> v(dim);
  double n = 0;
  for (auto& x : v) {
    x = static_cast<float>(uniform_unit(rng) * 2 - 1);
    n += double(x) * x;
  }
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(n));
  auto e = vec(v);
  e.normalized = true;
  return e;
}

} // namespace

TEST(Serialize, Template) {
  EXPECT_EQ(serialize_triplet(make_triplet({}, "", "hi")), "[state] none [system]  [user] hi");
  EXPECT_EQ(serialize_triplet(make_triplet(testing_support::state({{"hotel-area", "west"}}), "Any area?", "West please")),
            "[state] hotel-area=west [system] Any area? [user] West please");
}

TEST(Serialize, EntryOrderIrrelevant) {
  DialogueState a, b;
  a.set(SlotName("hotel", "area"), "west");
  a.set(SlotName("hotel", "stars"), "4");
  b.set(SlotName("hotel", "stars"), "4");
  b.set(SlotName("hotel", "area"), "west");
  EXPECT_EQ(serialize_triplet(make_triplet(a, "x", "y")), serialize_triplet(make_triplet(b, "x", "y")));
  EXPECT_EQ(serialize_triplet(make_triplet(a, "x", "y")), "[state] hotel-area=west; hotel-stars=4 [system] x [user] y");
}

TEST(HashEmbed, DeterministicAndNormalized) {
  const auto a = hash_embed("i need a cheap hotel in the west", 64, 5);
  const auto b = hash_embed("i need a cheap hotel in the west", 64, 5);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.normalized);
  EXPECT_TRUE(has_unit_norm(a.values));
  EXPECT_NE(a, hash_embed("i need a cheap hotel in the west", 64, 6));
}

TEST(HashEmbed, EmptyTextIsZero) {
  const auto z = hash_embed("", 32, 1);
  EXPECT_FALSE(z.normalized);
  EXPECT_EQ(z.dim(), 32u);
  EXPECT_TRUE(std::all_of(z.values.begin(), z.values.end(), [](float x) { return x == 0.0F; }));
  EXPECT_EQ(cosine(z, hash_embed("hello", 32, 1)), 0.0);
}

TEST(HashEmbed, ExtraTokenChangesVector) {
  for (const char* s : {"hi", "book a train to london", "[state] none [system]  [user] hi"}) {
    const double c = cosine(hash_embed(s, 256, 0), hash_embed(std::string(s) + " unrelatedtoken", 256, 0));
    EXPECT_LT(c, 1.0) << s;
  }
}

TEST(HashEmbed, WordOrderMatters) {
  EXPECT_NE(hash_embed("cheap hotel west", 256, 0), hash_embed("west hotel cheap", 256, 0));
}

TEST(HashEmbed, RejectsBadDims) {
  EXPECT_THROW(hash_embed("x", 8, 0), InputError);
  EXPECT_THROW(hash_embed("x", 100, 0), InputError);
}

TEST(Cosine, Examples) {
  EXPECT_NEAR(cosine(vec({1, 2, 3}), vec({1, 2, 3})), 1.0, 1e-12);
  EXPECT_EQ(cosine(vec({1, 0}), vec({0, 1})), 0.0);
  EXPECT_NEAR(cosine(vec({1, 0}), vec({1, 1})), 0.7071, 1e-4);
  EXPECT_THROW(cosine(vec({1, 0}), vec({1, 0, 0})), InputError);
}

TEST(Project, Examples) {
  const auto u = vec({0.6F, 0.8F});
  EXPECT_EQ(project(ProjectionAdapter::identity(2), u), u);
  const auto doubled = project(ProjectionAdapter::from_matrix(2, {2, 0, 0, 2}), u);
  EXPECT_NEAR(doubled.values[0], 0.6F, 1e-6);
  EXPECT_NEAR(doubled.values[1], 0.8F, 1e-6);
  const auto rotated = project(ProjectionAdapter::from_matrix(2, {0, -1, 1, 0}), vec({1, 0}));
  EXPECT_NEAR(rotated.values[0], 0.0, 1e-7);
  EXPECT_NEAR(rotated.values[1], 1.0, 1e-7);
  const auto zero = project(ProjectionAdapter::from_matrix(2, {0, 0, 0, 0}), u);
  EXPECT_FALSE(zero.normalized);
  EXPECT_EQ(zero.values, std::vector<float>({0, 0}));
  EXPECT_THROW(project(ProjectionAdapter::identity(3), u), InputError);
}

TEST(ProjectProperty, IdentityAndScaleInvariance) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 2 + uniform_index(rng, 15);
    const auto q = random_unit(rng, dim);
    std::vector<EmbeddingVector> pool;
    for (int i = 0; i < 8; ++i) pool.push_back(random_unit(rng, dim));
    const auto id = ProjectionAdapter::identity(dim);
    for (const auto& p : pool)
      EXPECT_NEAR(cosine(project(id, q), project(id, p)), cosine(q, p), 1e-6);

    std::vector<double> m(dim * dim);
    for (auto& x : m) x = uniform_unit(rng) * 2 - 1;
    auto scaled = m;
    for (auto& x : scaled) x *= 3.5;
    const auto a = ProjectionAdapter::from_matrix(dim, m);
    const auto b = ProjectionAdapter::from_matrix(dim, scaled);
    std::vector<double> sa, sb;
    for (const auto& p : pool) {
      sa.push_back(cosine(project(a, q), project(a, p)));
      sb.push_back(cosine(project(b, q), project(b, p)));
    }
    for (std::size_t i = 0; i < pool.size(); ++i) EXPECT_NEAR(sa[i], sb[i], 1e-6);
  }
}

TEST(Adapter, JsonRoundTripAndValidation) {
  const auto a = ProjectionAdapter::from_matrix(2, {1, 2, 3, 4});
  EXPECT_EQ(adapter_to_json(a).dump(), R"({"dim":2,"matrix":[[1.0,2.0],[3.0,4.0]]})");
  EXPECT_EQ(adapter_from_json(adapter_to_json(a)), a);
  EXPECT_TRUE(ProjectionAdapter::identity(4).is_identity());
  EXPECT_FALSE(a.is_identity());
  EXPECT_THROW(adapter_from_json(nlohmann::json::parse(R"({"dim":2,"matrix":[[1,0]]})")), InputError);
  EXPECT_THROW(ProjectionAdapter::from_matrix(2, {1, 2, 3}), InputError);
}

TEST(Store, LoadAndLookup) {
  std::istringstream in(
      "{\"key\":\"a:0\",\"vector\":[1,0,0,0,0,0,0,0]}\n"
      "{\"key\":\"a:1\",\"vector\":[0,1,0,0,0,0,0,0]}\n"
      "{\"key\":\"b:0\",\"vector\":[0,0,2,0,0,0,0,0]}\n");
  const auto store = load_store(in);
  EXPECT_EQ(store.size(), 3u);
  EXPECT_EQ(store.dim(), 8u);
  EXPECT_TRUE(store.lookup("a:0").normalized);
  EXPECT_FALSE(store.lookup("b:0").normalized);
  EXPECT_THROW((void)store.lookup("zz:9"), InputError);
}

TEST(Store, MixedDimsNameTheKey) {
  std::istringstream in(
      "{\"key\":\"a:0\",\"vector\":[1,0,0,0,0,0,0,0]}\n"
      "{\"key\":\"odd:3\",\"vector\":[1,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]}\n");
  try {
    load_store(in);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("odd:3"), std::string::npos);
  }
}

TEST(Store, MalformedAndDuplicate) {
  std::istringstream bad("{\"key\":\"a:0\"}\n");
  EXPECT_THROW(load_store(bad), InputError);
  std::istringstream dup("{\"key\":\"a:0\",\"vector\":[1]}\n{\"key\":\"a:0\",\"vector\":[1]}\n");
  EXPECT_THROW(load_store(dup), InputError);
}

TEST(Store, WriteRoundTrip) {
  EmbeddingStore s;
  s.insert("x:0", hash_embed("hello there", 16, 2));
  s.insert("x:1", hash_embed("general kenobi", 16, 2));
  std::ostringstream out;
  write_store(out, s);
  std::istringstream in(out.str());
  const auto back = load_store(in);
  EXPECT_EQ(back.vectors(), s.vectors());
}
