// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "devmoe/config/experiment_config.hpp"

namespace {

void add_common(CLI::App* sub, devmoe::cli::CommonOptions& o, std::string& out) {
  sub->add_option("-c,--config", o.config, "YAML experiment config")->check(CLI::ExistingFile);
  sub->add_option("-o,--override", o.overrides, "dotted.key=value, applied after the config file");
  sub->add_option("--seeds", o.seeds, "seed list, replaces the config's seeds")->delimiter(',');
  sub->add_option("--out", out, "output directory (default: $DEVMOE_OUT or ./devmoe_out)");
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = devmoe::cli;
  CLI::App app{"devmoe: developmental mixture-of-experts continual learning on a synthetic stream"};
  app.require_subcommand(1);

  cli::CommonOptions common;
  std::string out;
  CLI::App* run = app.add_subcommand("run", "train the configured variant (default full) over the seed list and write reports");
  CLI::App* ablate = app.add_subcommand("ablate", "run every variant over the seed list");
  CLI::App* sweep = app.add_subcommand("sweep-rank", "run the full variant for each rank in sweep_ranks");
  for (CLI::App* s : {run, ablate, sweep}) add_common(s, common, out);

  std::string report_dir;
  CLI::App* report = app.add_subcommand("report", "summarise score matrices found below a directory");
  report->add_option("dir", report_dir, "directory written by run/ablate/sweep-rank")->required()->check(CLI::ExistingDirectory);

  bool inject_fault = false;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference and gradient-span checks");
  gradcheck->add_flag("--inject-fault", inject_fault, "use a primitive with a wrong backward rule");

  std::uint64_t prop_seed = 3;
  std::size_t prop_cases = 50;
  CLI::App* propcheck = app.add_subcommand("propcheck", "randomised property checks");
  propcheck->add_option("--seed", prop_seed, "generator seed");
  propcheck->add_option("--cases", prop_cases, "cases per property")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  if (out.empty()) {
    const char* env = std::getenv("DEVMOE_OUT");
    out = env != nullptr && *env != '\0' ? env : "devmoe_out";
  }
  common.out = out;

  try {
    if (*run) return cli::cmd_run(common);
    if (*ablate) return cli::cmd_ablate(common);
    if (*sweep) return cli::cmd_sweep_rank(common);
    if (*report) return cli::cmd_report(report_dir);
    if (*gradcheck) return cli::cmd_gradcheck(inject_fault);
    if (*propcheck) return cli::cmd_propcheck(prop_seed, prop_cases);
  } catch (const devmoe::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitFailure;
  }
  return cli::kExitUsage;
}
