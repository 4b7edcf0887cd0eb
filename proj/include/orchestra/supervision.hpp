#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "orchestra/embedding.hpp"
#include "orchestra/error.hpp"
#include "orchestra/similarity.hpp"

namespace orchestra {

enum class PairSource { task, expert };

inline const char* to_string(PairSource s) { return s == PairSource::task ? "task" : "expert"; }

struct Pair {
  std::string query;
  std::string candidate;
  PairSource source = PairSource::task;
};

/// Contrastive supervision: ordered (query, candidate) pairs per polarity.
struct PairSet {
  std::vector<Pair> positives;
  std::vector<Pair> negatives;

  [[nodiscard]] std::size_t size() const noexcept { return positives.size() + negatives.size(); }
  [[nodiscard]] bool empty() const noexcept { return positives.empty() && negatives.empty(); }
};

struct TrainConfig {
  std::size_t l = 25;
  double margin = 0.2;
  double learning_rate = 0.01;
  int epochs = 30;
  std::uint64_t seed = 0;

  void validate() const {
    if (l < 1) throw InputError("pairs-per-query l must be >= 1");
    if (!(margin >= 0.0 && margin < 1.0)) throw InputError("margin must be in [0, 1)");
    if (!(learning_rate > 0.0)) throw InputError("learning rate must be positive");
    if (epochs < 0) throw InputError("epochs must be >= 0");
  }
};

namespace detail {

struct Scored {
  double score;
  const std::string* key;
};

inline bool higher_first(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  return *a.key < *b.key;
}

inline bool lower_first(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score < b.score;
  return *a.key < *b.key;
}

inline std::size_t effective_l(std::size_t n, std::size_t l, Diagnostics* diag) {
  if (n < 2) return 0;
  if (l + 1 > n) {
    warn(diag, "hold-out has " + std::to_string(n) + " turns; pairs-per-query reduced from " +
                   std::to_string(l) + " to " + std::to_string(n - 1));
    return n - 1;
  }
  return l;
}

// Best `count` entries under `order`, in that order.
template <typename Order>
std::vector<Scored> top(std::vector<Scored> scored, std::size_t count, Order order) {
  count = std::min(count, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(count),
                    scored.end(), order);
  scored.resize(count);
  return scored;
}

} // namespace detail

/// Task-aware pairs: per query, the l most and l least similar other
/// hold-out turns under turn_similarity of the gold annotations.
inline PairSet mine_task_pairs(std::span<const LabeledTurn> holdout, std::size_t l,
                               Diagnostics* diag = nullptr) {
  if (l < 1) throw InputError("pairs-per-query l must be >= 1");
  PairSet out;
  const std::size_t count = detail::effective_l(holdout.size(), l, diag);
  if (count == 0) return out;
  for (std::size_t q = 0; q < holdout.size(); ++q) {
    std::vector<detail::Scored> scored;
    scored.reserve(holdout.size() - 1);
    for (std::size_t c = 0; c < holdout.size(); ++c) {
      if (c == q || holdout[c].key == holdout[q].key) continue;
      scored.push_back({turn_similarity(holdout[q], holdout[c]), &holdout[c].key});
    }
    for (const auto& s : detail::top(scored, count, detail::higher_first))
      out.positives.push_back({holdout[q].key, *s.key, PairSource::task});
    for (const auto& s : detail::top(scored, count, detail::lower_first))
      out.negatives.push_back({holdout[q].key, *s.key, PairSource::task});
  }
  return out;
}

struct ExpertSample {
  std::string key;
  std::string label;
  EmbeddingVector base;
};

/// Expert-aware pairs: rank by base-embedding cosine; same-label turns among
/// the top l become positives, different-label turns among the bottom l
/// become negatives.
inline PairSet mine_expert_pairs(std::span<const ExpertSample> holdout, std::size_t l,
                                 Diagnostics* diag = nullptr) {
  if (l < 1) throw InputError("pairs-per-query l must be >= 1");
  PairSet out;
  const std::size_t count = detail::effective_l(holdout.size(), l, diag);
  if (count == 0) return out;
  std::unordered_map<const std::string*, const ExpertSample*> by_key;
  for (const auto& s : holdout) by_key.emplace(&s.key, &s);
  for (std::size_t q = 0; q < holdout.size(); ++q) {
    std::vector<detail::Scored> scored;
    scored.reserve(holdout.size() - 1);
    for (std::size_t c = 0; c < holdout.size(); ++c) {
      if (c == q || holdout[c].key == holdout[q].key) continue;
      scored.push_back({cosine(holdout[q].base, holdout[c].base), &holdout[c].key});
    }
    for (const auto& s : detail::top(scored, count, detail::higher_first))
      if (by_key.at(s.key)->label == holdout[q].label)
        out.positives.push_back({holdout[q].key, *s.key, PairSource::expert});
    for (const auto& s : detail::top(scored, count, detail::lower_first))
      if (by_key.at(s.key)->label != holdout[q].label)
        out.negatives.push_back({holdout[q].key, *s.key, PairSource::expert});
  }
  return out;
}

/// Concatenation with duplicate ordered pairs removed per polarity; the
/// first occurrence (and its provenance) wins.
inline PairSet merge_pairs(const PairSet& a, const PairSet& b) {
  PairSet out;
  auto append = [](std::vector<Pair>& dst, std::set<std::pair<std::string, std::string>>& seen,
                   const std::vector<Pair>& src) {
    for (const auto& p : src)
      if (seen.emplace(p.query, p.candidate).second) dst.push_back(p);
  };
  std::set<std::pair<std::string, std::string>> seen_pos, seen_neg;
  append(out.positives, seen_pos, a.positives);
  append(out.positives, seen_pos, b.positives);
  append(out.negatives, seen_neg, a.negatives);
  append(out.negatives, seen_neg, b.negatives);
  return out;
}

inline std::string pair_id(const Pair& p) { return p.query + ":" + p.candidate; }

inline nlohmann::json pairs_to_json(const PairSet& pairs) {
  nlohmann::json pos = nlohmann::json::array(), neg = nlohmann::json::array();
  nlohmann::json provenance = nlohmann::json::object();
  for (const auto& p : pairs.positives) {
    pos.push_back({p.query, p.candidate});
    provenance.emplace(pair_id(p), to_string(p.source));
  }
  for (const auto& p : pairs.negatives) {
    neg.push_back({p.query, p.candidate});
    provenance.emplace(pair_id(p), to_string(p.source));
  }
  return {{"positives", pos}, {"negatives", neg}, {"provenance", provenance}};
}

inline PairSet pairs_from_json(const nlohmann::json& j) {
  PairSet out;
  try {
    const auto& provenance = j.at("provenance");
    auto read = [&](const nlohmann::json& arr, std::vector<Pair>& dst) {
      for (const auto& item : arr) {
        Pair p{item.at(0).get<std::string>(), item.at(1).get<std::string>(), PairSource::task};
        if (p.query == p.candidate) throw InputError("self-pair '" + p.query + "'");
        auto it = provenance.find(pair_id(p));
        if (it != provenance.end() && it->get<std::string>() == "expert") p.source = PairSource::expert;
        dst.push_back(std::move(p));
      }
    };
    read(j.at("positives"), out.positives);
    read(j.at("negatives"), out.negatives);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed pair file: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contrastive objective over projected embeddings.

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // dim x dim, row-major, d loss / d W
};

/// mean_pos(1 - cos) + mean_neg(max(0, cos - margin)) with cosines taken
/// between adapter projections, and its exact gradient with respect to W.
inline LossAndGradient contrastive_loss(const ProjectionAdapter& adapter, const PairSet& pairs,
                                        const EmbeddingStore& embeddings, double margin) {
  const std::size_t dim = adapter.dim();
  struct Projected {
    const EmbeddingVector* base;
    std::vector<double> unit;  // W v / |W v|, zero when W v = 0
    double norm = 0.0;
    std::vector<double> grad;  // d loss / d (W v)
  };
  std::map<std::string, Projected> cache;
  auto fetch = [&](const std::string& key) -> Projected& {
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const EmbeddingVector& base = embeddings.lookup(key);
    Projected p{&base, adapter.apply(base.values), 0.0, std::vector<double>(dim, 0.0)};
    double n2 = 0.0;
    for (double x : p.unit) n2 += x * x;
    p.norm = std::sqrt(n2);
    if (p.norm > 0.0)
      for (double& x : p.unit) x /= p.norm;
    return cache.emplace(key, std::move(p)).first->second;
  };

  // Adds weight * d cos(q, c) / d p_q (and the symmetric term for c).
  auto accumulate = [dim](Projected& q, Projected& c, double cos_qc, double weight) {
    if (q.norm == 0.0 || c.norm == 0.0) return;
    for (std::size_t i = 0; i < dim; ++i) {
      q.grad[i] += weight * (c.unit[i] - cos_qc * q.unit[i]) / q.norm;
      c.grad[i] += weight * (q.unit[i] - cos_qc * c.unit[i]) / c.norm;
    }
  };
  auto dot = [dim](const Projected& a, const Projected& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) s += a.unit[i] * b.unit[i];
    return s;
  };

  LossAndGradient out;
  out.gradient.assign(dim * dim, 0.0);
  if (!pairs.positives.empty()) {
    const double w = 1.0 / static_cast<double>(pairs.positives.size());
    for (const auto& pair : pairs.positives) {
      Projected& q = fetch(pair.query);
      Projected& c = fetch(pair.candidate);
      const double cos_qc = dot(q, c);
      out.loss += w * (1.0 - cos_qc);
      accumulate(q, c, cos_qc, -w);
    }
  }
  if (!pairs.negatives.empty()) {
    const double w = 1.0 / static_cast<double>(pairs.negatives.size());
    for (const auto& pair : pairs.negatives) {
      Projected& q = fetch(pair.query);
      Projected& c = fetch(pair.candidate);
      const double cos_qc = dot(q, c);
      if (cos_qc <= margin) continue;
      out.loss += w * (cos_qc - margin);
      accumulate(q, c, cos_qc, w);
    }
  }
  // d loss / d W = sum_i g_i v_i^T
  for (const auto& [key, p] : cache) {
    const auto& v = p.base->values;
    for (std::size_t r = 0; r < dim; ++r) {
      const double g = p.grad[r];
      if (g == 0.0) continue;
      double* row = out.gradient.data() + r * dim;
      for (std::size_t c = 0; c < dim; ++c) row[c] += g * static_cast<double>(v[c]);
    }
  }
  return out;
}

struct TrainResult {
  ProjectionAdapter adapter;
  std::vector<double> loss_history;  // epochs + 1 entries, initial loss first
};

/// Full-batch gradient descent from the identity adapter.
inline TrainResult train_adapter(const PairSet& pairs, const EmbeddingStore& embeddings,
                                 const TrainConfig& config) {
  config.validate();
  if (pairs.empty()) throw InputError("cannot train adapter without supervision pairs");
  TrainResult result{ProjectionAdapter::identity(embeddings.dim()), {}};
  result.loss_history.reserve(static_cast<std::size_t>(config.epochs) + 1);
  for (int epoch = 0;; ++epoch) {
    auto lg = contrastive_loss(result.adapter, pairs, embeddings, config.margin);
    if (!std::isfinite(lg.loss))
      throw InputError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
    result.loss_history.push_back(lg.loss);
    if (epoch == config.epochs) break;
    auto w = result.adapter.matrix();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!std::isfinite(lg.gradient[i]))
        throw InputError("training diverged: non-finite gradient at epoch " + std::to_string(epoch));
      w[i] -= config.learning_rate * lg.gradient[i];
    }
  }
  return result;
}

struct GradCheckResult {
  double max_relative = 0.0;
  double max_absolute = 0.0;
};

/// Entry-wise comparison of the analytic gradient with central finite
/// differences; relative errors use denominators max(|a|, |b|, 1e-6).
/// Central differences carry roundoff near 1e-16 * loss / epsilon, so a
/// smaller floor turns noise on exactly-zero entries into large ratios.
inline GradCheckResult grad_check_detail(const ProjectionAdapter& adapter, const PairSet& pairs,
                                         const EmbeddingStore& embeddings, double margin,
                                         double epsilon) {
  const auto analytic = contrastive_loss(adapter, pairs, embeddings, margin).gradient;
  ProjectionAdapter probe = adapter;
  GradCheckResult out;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double saved = probe.matrix()[i];
    probe.matrix()[i] = saved + epsilon;
    const double up = contrastive_loss(probe, pairs, embeddings, margin).loss;
    probe.matrix()[i] = saved - epsilon;
    const double down = contrastive_loss(probe, pairs, embeddings, margin).loss;
    probe.matrix()[i] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double diff = std::abs(analytic[i] - numeric);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    out.max_relative = std::max(out.max_relative, diff / denom);
    out.max_absolute = std::max(out.max_absolute, diff);
  }
  return out;
}

inline double grad_check(const ProjectionAdapter& adapter, const PairSet& pairs,
                         const EmbeddingStore& embeddings, double margin, double epsilon) {
  return grad_check_detail(adapter, pairs, embeddings, margin, epsilon).max_relative;
}

} // namespace orchestra
