// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end for the federated simulation lab.
//
//   scfa run    --config cfg.json --out out/run1 [--seed-override N] [--variant v]
//   scfa sweep  --config sweep.json --out out/sweep1 [--jobs N]
//   scfa fit    --kind convergence|violation|zones --config input.csv
//               --out report.json [--variant v] [--threshold x]
//   scfa report --config out/sweep1/summary.csv --out report.json
//
// Errors print a machine-readable record {"error": {...}} on stdout and exit
// nonzero (2 for configuration problems, 1 otherwise).

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "scfa/config.hpp"
#include "scfa/harness.hpp"

namespace {

int fail(const std::string& message, const std::string& field, int code) {
  scfa::Json err;
  err["error"]["message"] = message;
  if (!field.empty()) err["error"]["field"] = field;
  std::cout << err.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scfa: deterministic federated-learning simulation lab"};
  app.require_subcommand(1);

  std::string config_path, out_path, fit_kind;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> variant, seed_filter;
  double threshold = 0.18;
  int jobs = 0;

  auto add_common = [&](CLI::App* cmd, bool out_required) {
    cmd->add_option("--config", config_path, "input config / file path")
        ->required();
    auto* o = cmd->add_option("--out", out_path, "output directory or file");
    if (out_required) o->required();
  };

  CLI::App* run = app.add_subcommand("run", "execute one experiment config");
  add_common(run, true);
  run->add_option("--seed-override", seed_override,
                  "replace training.master_seed");
  run->add_option("--variant", variant, "run only this variant");

  CLI::App* sweep = app.add_subcommand("sweep", "execute a sweep grid");
  add_common(sweep, true);
  sweep->add_option("--jobs", jobs, "worker threads (default: hardware)");

  CLI::App* fit = app.add_subcommand("fit", "fit theory forms to results");
  add_common(fit, true);
  fit->add_option("--kind", fit_kind, "convergence | violation | zones")
      ->required();
  fit->add_option("--variant", variant, "restrict rows to this variant");
  fit->add_option("--seed", seed_filter, "restrict rows to this seed");
  fit->add_option("--threshold", threshold,
                  "rho threshold for the violation fit");

  CLI::App* report = app.add_subcommand("report", "summarize a sweep");
  add_common(report, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const scfa::ExperimentConfig cfg =
          scfa::load_experiment_config(config_path);
      scfa::RunOverrides ov;
      ov.master_seed = seed_override;
      ov.variant = variant;
      const scfa::RunOutput out = scfa::run_to_directory(cfg, out_path, ov);
      std::printf("wrote %s (%zu variant(s))\n", out.dir.string().c_str(),
                  out.results.size());
      return 0;
    }
    if (sweep->parsed()) {
      const scfa::SweepSpec spec = scfa::load_sweep_spec(config_path);
      const scfa::SweepOutput out = scfa::run_sweep(spec, out_path, jobs);
      std::printf("sweep: %d cells, %d failed, summary at %s\n",
                  out.cells_total, out.cells_failed,
                  (out.dir / "summary.csv").string().c_str());
      return out.cells_failed == out.cells_total && out.cells_total > 0 ? 1 : 0;
    }
    if (fit->parsed()) {
      scfa::Json rep;
      if (fit_kind == "convergence") {
        rep = scfa::fit_convergence_report(config_path, variant, seed_filter);
      } else if (fit_kind == "violation") {
        rep = scfa::fit_violation_report(config_path, variant, threshold,
                                         seed_filter);
      } else if (fit_kind == "zones") {
        rep = scfa::fit_zones_report(config_path);
      } else {
        throw scfa::ConfigError("kind must be convergence|violation|zones",
                                "--kind");
      }
      scfa::atomic_write(out_path, rep.dump(2) + "\n");
      std::printf("wrote %s\n", out_path.c_str());
      return 0;
    }
    if (report->parsed()) {
      const scfa::Json rep = scfa::summary_report(config_path);
      scfa::atomic_write(out_path, rep.dump(2) + "\n");
      std::printf("wrote %s\n", out_path.c_str());
      return 0;
    }
  } catch (const scfa::ConfigError& e) {
    return fail(e.what(), e.field(), 2);
  } catch (const scfa::CalibrationError& e) {
    return fail(e.what(), "", 1);
  } catch (const std::exception& e) {
    return fail(e.what(), "", 1);
  }
  return 0;
}
