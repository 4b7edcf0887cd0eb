#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "orchestra/pipeline.hpp"

namespace {

void configure_logging() {
  const char* level = std::getenv("ORCHESTRA_LOG");
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string router;
  std::string supervision;
};

orchestra::RunConfig resolve_config(const Overrides& o, bool config_required) {
  orchestra::RunConfig c;
  if (!o.config.empty()) {
    c = orchestra::load_config(o.config);
  } else if (config_required) {
    throw orchestra::InputError("--config is required for this command");
  }
  if (o.seed) {
    c.seed = *o.seed;
    c.classifier.seed = *o.seed;
  }
  if (!o.out.empty()) c.out = o.out;
  if (!o.router.empty()) c.router = o.router;
  if (!o.supervision.empty()) c.supervision = o.supervision;
  return c;
}

} // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"orchestra: retrieval-based routing between dialogue-state-tracking experts"};
  app.require_subcommand(1);

  Overrides o;
  app.add_option("--config", o.config, "run configuration (JSON)");
  app.add_option("--seed", o.seed, "override the configured seed");
  app.add_option("--out", o.out, "override the output directory");
  app.add_option("--router", o.router, "router kind")
      ->check(CLI::IsMember({"retrieval", "oracle", "cascade", "classifier"}));
  app.add_option("--supervision", o.supervision, "adapter supervision kind")
      ->check(CLI::IsMember({"none", "task", "expert", "task+expert"}));

  auto* validate = app.add_subcommand("validate", "parse and cross-check corpus and predictions");
  auto* embed = app.add_subcommand("embed", "embed hold-out triplets or verify an imported store");
  auto* train = app.add_subcommand("train", "mine supervision pairs and train the adapter");
  auto* pools = app.add_subcommand("pools", "build and sample expert pools");
  auto* route = app.add_subcommand("route", "route the test corpus");
  auto* report = app.add_subcommand("report", "score routed runs");
  auto* simulate = app.add_subcommand("simulate", "synthetic end-to-end run");
  std::vector<std::string> run_files;
  report->add_option("runs", run_files, "routed-run files (default: all in the output dir)");
  app.fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  orchestra::Diagnostics diag;
  try {
    nlohmann::json result;
    if (simulate->parsed()) {
      result = orchestra::cmd_simulate(resolve_config(o, false), diag);
      result = result["report"];
    } else {
      const auto config = resolve_config(o, true);
      if (validate->parsed()) result = orchestra::cmd_validate(config, diag);
      if (embed->parsed()) result = orchestra::cmd_embed(config, diag);
      if (train->parsed()) result = orchestra::cmd_mine_and_train(config, diag);
      if (pools->parsed()) result = orchestra::cmd_build_pools(config, diag);
      if (route->parsed()) result = orchestra::cmd_route(config, diag);
      if (report->parsed()) {
        std::vector<orchestra::fs::path> paths(run_files.begin(), run_files.end());
        result = orchestra::cmd_report(config, diag, paths);
      }
    }
    for (const auto& w : diag.warnings) spdlog::warn("{}", w);
    std::cout << result.dump(2) << "\n";
    return 0;
  } catch (const orchestra::InputError& e) {
    for (const auto& w : diag.warnings) spdlog::warn("{}", w);
    spdlog::error("{}", e.what());
    return 1;
  } catch (const orchestra::InvariantError& e) {
    spdlog::critical("invariant violated: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::critical("{}", e.what());
    return 2;
  }
}
