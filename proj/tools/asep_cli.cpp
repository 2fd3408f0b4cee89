#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "asep/experiment.hpp"

namespace {

struct VerbArgs {
  std::string config;
  std::string out;
};

CLI::App* add_verb(CLI::App& app, const char* name, const char* help, VerbArgs& args) {
  auto* sub = app.add_subcommand(name, help);
  sub->add_option("--config", args.config, "INI experiment config")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", args.out, "output directory (overrides experiment.output_dir)");
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inhomogeneous exclusion process: exact solver, Monte Carlo and audits"};
  app.set_version_flag("--version", std::string(asep::kToolVersion));
  app.require_subcommand(1);

  VerbArgs args;
  using Driver = int (*)(const asep::ExperimentConfig&, std::ostream&);
  const std::pair<CLI::App*, Driver> verbs[] = {
      {add_verb(app, "scan-flux", "flux table over sizes and seeds", args), asep::verb_scan_flux},
      {add_verb(app, "audit-monotone", "raise each rate by delta, check flux never drops", args),
       asep::verb_audit_monotone},
      {add_verb(app, "audit-coupling", "check coupling invariants at every event", args),
       asep::verb_audit_coupling},
      {add_verb(app, "classify-env", "reversible-measure regime and flux criterion", args),
       asep::verb_classify_env},
      {add_verb(app, "sigma-solve", "single-particle invariant measures", args),
       asep::verb_sigma_solve},
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : asep::kExitError;
  }

  try {
    auto config = asep::load_config(args.config);
    if (!args.out.empty()) config.output_dir = args.out;
    for (const auto& [sub, run] : verbs)
      if (sub->parsed()) return run(config, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return asep::kExitError;
  }
  return asep::kExitError;
}
