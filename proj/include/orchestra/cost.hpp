#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "orchestra/error.hpp"

namespace orchestra {

// Published per-turn inference estimates, in TeraFLOPs.
inline constexpr double kLlmTeraflopsPerTurn = 3000.0;
inline constexpr double kRetrieverTeraflopsPerTurn = 0.02;

/// Per-turn TeraFLOPs of each expert plus the per-turn router overhead.
struct CostTable {
  std::map<std::string, double> expert_teraflops;
  double router_teraflops = kRetrieverTeraflopsPerTurn;

  [[nodiscard]] double expert_cost(const std::string& expert) const {
    auto it = expert_teraflops.find(expert);
    if (it == expert_teraflops.end()) throw InputError("no cost entry for expert '" + expert + "'");
    return it->second;
  }

  void validate() const {
    if (router_teraflops < 0.0) throw InputError("router cost must be >= 0");
    for (const auto& [name, cost] : expert_teraflops)
      if (cost < 0.0) throw InputError("cost of expert '" + name + "' must be >= 0");
  }

  friend bool operator==(const CostTable&, const CostTable&) = default;
};

inline nlohmann::json cost_table_to_json(const CostTable& t) {
  return {{"experts", t.expert_teraflops}, {"router", t.router_teraflops}};
}

inline CostTable cost_table_from_json(const nlohmann::json& j) {
  CostTable t;
  try {
    t.expert_teraflops = j.at("experts").get<std::map<std::string, double>>();
    t.router_teraflops = j.value("router", kRetrieverTeraflopsPerTurn);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed cost table: ") + e.what());
  }
  t.validate();
  return t;
}

} // namespace orchestra
