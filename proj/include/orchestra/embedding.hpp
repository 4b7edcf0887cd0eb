#pragma once

#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "orchestra/dialogue.hpp"
#include "orchestra/error.hpp"
#include "orchestra/rng.hpp"

namespace orchestra {

struct EmbeddingVector {
  std::vector<float> values;
  bool normalized = false;

  [[nodiscard]] std::size_t dim() const noexcept { return values.size(); }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// "[state] d-s=v; ... [system] <system> [user] <user>" with state entries in
/// slot-name order; an empty state renders as "none".
inline std::string serialize_triplet(const Triplet& t) {
  std::string out = "[state] ";
  if (t.prev_state.empty()) {
    out += "none";
  } else {
    bool first = true;
    for (const auto& [slot, value] : t.prev_state.entries()) {
      if (!first) out += "; ";
      first = false;
      out += slot.str();
      out += '=';
      out += value;
    }
  }
  out += " [system] ";
  out += t.system_utterance;
  out += " [user] ";
  out += t.user_utterance;
  return out;
}

/// Lowercased alphanumeric word tokens. Bytes >= 0x80 count as word
/// characters so UTF-8 words stay whole.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Signed feature hashing of word unigrams and bigrams, L2-normalized.
/// Text without tokens (or whose features cancel) yields the zero vector.
inline EmbeddingVector hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 16 || !is_power_of_two(dim))
    throw InputError("hash_embed dimension must be a power of two >= 16, got " +
                     std::to_string(dim));
  std::vector<double> acc(dim, 0.0);
  const std::uint64_t salt = splitmix64(seed);
  auto add = [&](std::string_view feature) {
    const std::uint64_t h = splitmix64(fnv1a64(feature) ^ salt);
    acc[h & (dim - 1)] += (h >> 63) != 0 ? -1.0 : 1.0;
  };
  const auto tokens = word_tokens(text);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add(tokens[i]);
    if (i + 1 < tokens.size()) add(tokens[i] + ' ' + tokens[i + 1]);
  }
  double norm2 = 0.0;
  for (double x : acc) norm2 += x * x;
  EmbeddingVector out;
  out.values.assign(dim, 0.0F);
  if (norm2 == 0.0) return out;
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t i = 0; i < dim; ++i) out.values[i] = static_cast<float>(acc[i] * inv);
  out.normalized = true;
  return out;
}

inline void require_same_dim(std::size_t a, std::size_t b, std::string_view what) {
  if (a != b)
    throw InputError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                     " vs " + std::to_string(b) + ")");
}

/// Cosine similarity; 0 when either vector has zero norm.
inline double cosine(std::span<const float> u, std::span<const float> v) {
  require_same_dim(u.size(), v.size(), "cosine");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i];
    const double b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return dot / (std::sqrt(uu) * std::sqrt(vv));
}

inline double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  return cosine(std::span<const float>(u.values), std::span<const float>(v.values));
}

/// Trainable dim x dim linear map applied on top of frozen base embeddings.
/// Row-major storage.
class ProjectionAdapter {
public:
  ProjectionAdapter() = default;

  static ProjectionAdapter identity(std::size_t dim) {
    ProjectionAdapter a;
    a.dim_ = dim;
    a.matrix_.assign(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) a.matrix_[i * dim + i] = 1.0;
    return a;
  }

  static ProjectionAdapter from_matrix(std::size_t dim, std::vector<double> row_major) {
    if (row_major.size() != dim * dim)
      throw InputError("adapter matrix has " + std::to_string(row_major.size()) +
                       " entries, expected " + std::to_string(dim * dim));
    for (double x : row_major)
      if (!std::isfinite(x)) throw InputError("adapter matrix has a non-finite entry");
    ProjectionAdapter a;
    a.dim_ = dim;
    a.matrix_ = std::move(row_major);
    return a;
  }

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::span<const double> matrix() const noexcept { return matrix_; }
  [[nodiscard]] std::span<double> matrix() noexcept { return matrix_; }
  [[nodiscard]] double at(std::size_t row, std::size_t col) const { return matrix_[row * dim_ + col]; }
  double& at(std::size_t row, std::size_t col) { return matrix_[row * dim_ + col]; }

  [[nodiscard]] bool is_identity() const {
    for (std::size_t r = 0; r < dim_; ++r)
      for (std::size_t c = 0; c < dim_; ++c)
        if (at(r, c) != (r == c ? 1.0 : 0.0)) return false;
    return true;
  }

  /// W * v without normalization.
  [[nodiscard]] std::vector<double> apply(std::span<const float> v) const {
    require_same_dim(dim_, v.size(), "adapter");
    std::vector<double> out(dim_, 0.0);
    for (std::size_t r = 0; r < dim_; ++r) {
      const double* row = matrix_.data() + r * dim_;
      double s = 0.0;
      for (std::size_t c = 0; c < dim_; ++c) s += row[c] * static_cast<double>(v[c]);
      out[r] = s;
    }
    return out;
  }

  friend bool operator==(const ProjectionAdapter&, const ProjectionAdapter&) = default;

private:
  std::size_t dim_ = 0;
  std::vector<double> matrix_;
};

/// W * v, L2-normalized. A zero product stays zero and unnormalized.
inline EmbeddingVector project(const ProjectionAdapter& adapter, const EmbeddingVector& v) {
  require_same_dim(adapter.dim(), v.dim(), "adapter");
  // I * v renormalized is v itself; skipping the float round trip keeps
  // untrained routing bit-identical to routing on base embeddings.
  if (v.normalized && adapter.is_identity()) return v;
  const auto p = adapter.apply(v.values);
  double norm2 = 0.0;
  for (double x : p) norm2 += x * x;
  EmbeddingVector out;
  out.values.assign(p.size(), 0.0F);
  if (norm2 == 0.0) return out;
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t i = 0; i < p.size(); ++i) out.values[i] = static_cast<float>(p[i] * inv);
  out.normalized = true;
  return out;
}

inline nlohmann::json adapter_to_json(const ProjectionAdapter& adapter) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < adapter.dim(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < adapter.dim(); ++c) row.push_back(adapter.at(r, c));
    rows.push_back(std::move(row));
  }
  return {{"dim", adapter.dim()}, {"matrix", rows}};
}

inline ProjectionAdapter adapter_from_json(const nlohmann::json& j) {
  try {
    const auto dim = j.at("dim").get<std::size_t>();
    const auto& rows = j.at("matrix");
    if (!rows.is_array() || rows.size() != dim)
      throw InputError("adapter matrix must have " + std::to_string(dim) + " rows");
    std::vector<double> m;
    m.reserve(dim * dim);
    for (const auto& row : rows) {
      if (!row.is_array() || row.size() != dim)
        throw InputError("adapter matrix rows must have " + std::to_string(dim) + " columns");
      for (const auto& x : row) m.push_back(x.get<double>());
    }
    return ProjectionAdapter::from_matrix(dim, std::move(m));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed adapter file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Precomputed embeddings keyed by "dialogue_id:turn_id".

class EmbeddingStore {
public:
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t size() const noexcept { return vectors_.size(); }
  [[nodiscard]] bool contains(const std::string& key) const { return vectors_.count(key) > 0; }
  [[nodiscard]] const std::map<std::string, EmbeddingVector>& vectors() const noexcept { return vectors_; }

  void insert(const std::string& key, EmbeddingVector v) {
    if (vectors_.empty() && dim_ == 0) dim_ = v.dim();
    if (v.dim() != dim_)
      throw InputError("embedding '" + key + "' has dim " + std::to_string(v.dim()) +
                       ", store dim is " + std::to_string(dim_));
    for (float x : v.values)
      if (!std::isfinite(x)) throw InputError("embedding '" + key + "' has a non-finite component");
    if (!vectors_.emplace(key, std::move(v)).second)
      throw InputError("duplicate embedding key '" + key + "'");
  }

  [[nodiscard]] const EmbeddingVector& lookup(const std::string& key) const {
    auto it = vectors_.find(key);
    if (it == vectors_.end()) throw InputError("missing embedding for key '" + key + "'");
    return it->second;
  }

private:
  std::size_t dim_ = 0;
  std::map<std::string, EmbeddingVector> vectors_;
};

inline bool has_unit_norm(std::span<const float> v, double tol = 1e-5) {
  double n2 = 0.0;
  for (float x : v) n2 += static_cast<double>(x) * x;
  return std::abs(std::sqrt(n2) - 1.0) <= tol;
}

inline EmbeddingStore load_store(std::istream& in) {
  EmbeddingStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string key;
    EmbeddingVector v;
    try {
      const auto j = nlohmann::json::parse(line);
      key = j.at("key").get<std::string>();
      v.values = j.at("vector").get<std::vector<float>>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError("embedding line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    v.normalized = has_unit_norm(v.values);
    store.insert(key, std::move(v));
  }
  return store;
}

inline void write_store(std::ostream& out, const EmbeddingStore& store) {
  for (const auto& [key, v] : store.vectors())
    out << nlohmann::json{{"key", key}, {"vector", v.values}}.dump() << '\n';
}

/// Maps a triplet to its base (pre-adapter) embedding.
using Embedder = std::function<EmbeddingVector(const Triplet&)>;

inline Embedder hashing_embedder(std::size_t dim, std::uint64_t seed) {
  return [dim, seed](const Triplet& t) { return hash_embed(serialize_triplet(t), dim, seed); };
}

/// Looks triplets up by turn key; the store must outlive the embedder.
inline Embedder store_embedder(const EmbeddingStore& store) {
  return [&store](const Triplet& t) { return store.lookup(t.key()); };
}

} // namespace orchestra
