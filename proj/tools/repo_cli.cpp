// Command-line front end: `repo_cli run <config>` and
// `repo_cli sweep <config> --axis <name>`.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "repo/experiment.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw CLI::ValidationError("--seed", "expected a comma-separated list of non-negative integers, got '" + text + "'");
    out.push_back(std::stoull(item));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group policy optimization with replay on toy tasks"};
  app.require_subcommand(1);

  std::string config_path, axis, out_dir, seeds;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory (overrides $REPO_OUT_DIR and the config)");
    sub->add_option("--seed", seeds, "comma-separated seed list (overrides the config)");
  };

  auto* run = app.add_subcommand("run", "train every configured seed and write metrics");
  add_common(run);
  auto* sweep = app.add_subcommand("sweep", "train every value of one axis and write a comparison table");
  add_common(sweep);
  sweep->add_option("--axis", axis, "strategy, g_off, grouping or normalizer")->required();

  CLI11_PARSE(app, argc, argv);

  repo::experiment::CommandOptions opts;
  if (!out_dir.empty()) opts.out_dir = out_dir;
  try {
    if (!seeds.empty()) opts.seeds = parse_seed_list(seeds);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  }

  if (run->parsed()) return repo::experiment::cmd_run(config_path, opts, std::cout, std::cerr);
  return repo::experiment::cmd_sweep(config_path, axis, opts, std::cout, std::cerr);
}
