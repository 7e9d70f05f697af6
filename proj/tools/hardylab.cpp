// hardylab run|validate|report
//
// exit codes: 0 all checks passed, 1 a check failed, 2 construction/solver
// error (including suspected criticality), 3 configuration error.

#include <iostream>

#include <CLI11.hpp>

#include "hardylab/hardylab.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hardy-weight numerical laboratory"};
  app.set_version_flag("--version", hardylab::kToolVersion);
  app.require_subcommand(1);

  std::string config_path, manifest_path;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "run the pipeline of a scenario file");
  run->add_option("config", config_path, "scenario file")->required();
  run->add_flag("-q,--quiet", quiet, "only print the final status line");
  auto* validate = app.add_subcommand("validate", "parse and check a scenario file");
  validate->add_option("config", config_path, "scenario file")->required();
  auto* report = app.add_subcommand("report", "pretty-print a run manifest");
  report->add_option("manifest", manifest_path, "manifest.json of a finished run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  }

  try {
    if (*validate) {
      const auto cfg = hardylab::parse_config(config_path);
      std::cout << "ok: " << cfg.name << " (pipeline " << cfg.pipeline << ", hash "
                << hardylab::detail::hex64(cfg.hash()) << ")\n";
      return 0;
    }
    if (*report) {
      hardylab::print_manifest(manifest_path, std::cout);
      return 0;
    }
    const auto cfg = hardylab::parse_config(config_path);
    const auto out = hardylab::run(cfg, quiet ? nullptr : &std::cout);
    std::cout << (out.exit_code == 0 ? "PASS" : "FAIL") << " " << cfg.name << " -> " << out.directory.string()
              << " (exit " << out.exit_code << ")\n";
    return out.exit_code;
  } catch (const hardylab::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 3;
  } catch (const hardylab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
