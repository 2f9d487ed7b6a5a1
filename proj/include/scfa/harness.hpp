// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "scfa/analysis.hpp"
#include "scfa/config.hpp"
#include "scfa/csv.hpp"
#include "scfa/engine.hpp"
#include "scfa/errors.hpp"

namespace scfa {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// rounds.csv: one row per round per variant. Lists are ';'-joined within a
// cell. Column order is fixed; floats use 17 significant digits. Wall time
// is deliberately not serialized so manifest replay is byte-identical.
// ---------------------------------------------------------------------------
inline constexpr const char* kRoundsCsvHeader =
    "variant,seed,round,participants,s,alpha,rho,grad_norm_sq,global_loss,"
    "metric,snr,degenerate";

inline std::string rounds_csv_rows(const std::string& variant,
                                   std::uint64_t seed,
                                   std::span<const RoundRecord> records) {
  std::string out;
  for (const RoundRecord& r : records) {
    std::vector<std::string> ids, ss, alphas;
    for (int c : r.participants) ids.push_back(std::to_string(c));
    for (double s : r.validity) ss.push_back(fmt_double(s));
    for (double a : r.weights) alphas.push_back(fmt_double(a));
    out += variant;
    out += ',';
    out += std::to_string(seed);
    out += ',';
    out += std::to_string(r.round);
    out += ',';
    out += join(ids, ';');
    out += ',';
    out += join(ss, ';');
    out += ',';
    out += join(alphas, ';');
    out += ',';
    out += fmt_double(r.rho);
    out += ',';
    out += fmt_double(r.grad_norm_sq);
    out += ',';
    out += fmt_double(r.global_loss);
    out += ',';
    out += fmt_double(r.metric);
    out += ',';
    out += fmt_double(r.snr);
    out += ',';
    out += r.degenerate ? "1" : "0";
    out += '\n';
  }
  return out;
}

// model.bin: "SCFM", u32 version, u32 length, raw little-endian doubles.
inline std::string params_to_binary(const ParamVector& w) {
  std::string out;
  out.append("SCFM", 4);
  const std::uint32_t version = 1;
  const std::uint32_t n = static_cast<std::uint32_t>(w.size());
  out.append(reinterpret_cast<const char*>(&version), 4);
  out.append(reinterpret_cast<const char*>(&n), 4);
  out.append(reinterpret_cast<const char*>(w.data()), w.size() * sizeof(double));
  return out;
}

inline ParamVector params_from_binary(const std::string& blob) {
  if (blob.size() < 12 || blob.compare(0, 4, "SCFM") != 0) {
    throw ConfigError("not a model file");
  }
  std::uint32_t version = 0, n = 0;
  std::memcpy(&version, blob.data() + 4, 4);
  std::memcpy(&n, blob.data() + 8, 4);
  if (version != 1) throw ConfigError("unsupported model file version");
  if (blob.size() != 12 + static_cast<std::size_t>(n) * sizeof(double)) {
    throw ConfigError("truncated model file");
  }
  ParamVector w(n);
  std::memcpy(w.data(), blob.data() + 12, n * sizeof(double));
  return w;
}

// ---------------------------------------------------------------------------
// run: execute every variant of a config and persist the artifacts.
// ---------------------------------------------------------------------------
struct RunOutput {
  fs::path dir;
  std::map<std::string, ExperimentResult> results;  // by variant name
};

struct RunOverrides {
  std::optional<std::uint64_t> master_seed;
  std::optional<std::string> variant;  // restrict to one variant by name
};

inline ExperimentConfig apply_overrides(ExperimentConfig cfg,
                                        const RunOverrides& ov) {
  if (ov.master_seed) cfg.training.master_seed = *ov.master_seed;
  if (ov.variant) {
    const VariantKind want = variant_from_name(*ov.variant);
    std::vector<AlgorithmVariant> kept;
    for (const AlgorithmVariant& v : cfg.variants) {
      if (v.kind == want) kept.push_back(v);
    }
    if (kept.empty()) {
      throw ConfigError("variant '" + *ov.variant + "' not present in config",
                        "variants");
    }
    cfg.variants = std::move(kept);
  }
  return cfg;
}

inline RunOutput run_to_directory(const ExperimentConfig& raw_cfg,
                                  const fs::path& out_dir,
                                  const RunOverrides& ov = {}) {
  const ExperimentConfig cfg = apply_overrides(raw_cfg, ov);
  MaterializedExperiment mat = materialize(cfg);

  RunOutput out;
  out.dir = out_dir;
  fs::create_directories(out_dir);

  std::string rounds = kRoundsCsvHeader;
  rounds += '\n';
  for (const AlgorithmVariant& v : mat.config.variants) {
    ExperimentResult res = run_experiment(mat.setup, v);
    rounds += rounds_csv_rows(variant_name(v.kind),
                              mat.config.training.master_seed, res.records);
    const std::string model_file =
        mat.config.variants.size() == 1
            ? "model.bin"
            : "model_" + variant_name(v.kind) + ".bin";
    atomic_write(out_dir / model_file, params_to_binary(res.final_params));
    out.results.emplace(variant_name(v.kind), std::move(res));
  }
  atomic_write(out_dir / "rounds.csv", rounds);
  atomic_write(out_dir / "manifest.json", manifest_json(mat.config).dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// sweep: cartesian grid over {variant, alpha, epsilon, target_rho, seed}.
// ---------------------------------------------------------------------------
struct SweepSpec {
  ExperimentConfig base;
  std::vector<std::string> variants;  // empty vector = axis absent
  std::vector<double> alphas;
  std::vector<double> epsilons;
  std::vector<double> target_rhos;
  std::vector<std::uint64_t> seeds;
};

inline SweepSpec parse_sweep_spec(const Json& j) {
  SweepSpec sweep;
  sweep.base = parse_experiment_config(jsonutil::require(j, "base", ""));
  const Json& g = jsonutil::require(j, "grid", "");
  if (!g.is_object() || g.empty()) {
    throw ConfigError("grid must name at least one axis", "grid");
  }
  auto axis = [&](const char* key, auto& out) {
    if (!g.contains(key)) return;
    try {
      out = g.at(key).get<std::decay_t<decltype(out)>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("wrong type", std::string("grid.") + key);
    }
    if (out.empty()) {
      throw ConfigError("axis must be non-empty", std::string("grid.") + key);
    }
  };
  axis("variants", sweep.variants);
  axis("alpha", sweep.alphas);
  axis("epsilon", sweep.epsilons);
  axis("target_rho", sweep.target_rhos);
  axis("seeds", sweep.seeds);
  for (const std::string& v : sweep.variants) variant_from_name(v);  // validate
  return sweep;
}

inline SweepSpec load_sweep_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sweep file " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  return parse_sweep_spec(j);
}

struct SweepCell {
  std::string id;
  ExperimentConfig config;
  std::optional<std::string> variant;
  std::optional<double> alpha;
  std::optional<double> epsilon;
  std::optional<double> target_rho;
  std::optional<std::uint64_t> seed;
};

inline std::string compact_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// Cells are enumerated variant -> alpha -> epsilon -> target_rho -> seed so
// the cell order (and the cell-to-seed mapping) never depends on scheduling.
inline std::vector<SweepCell> enumerate_cells(const SweepSpec& sweep) {
  auto or_one = [](std::size_t n) { return n == 0 ? std::size_t{1} : n; };
  std::vector<SweepCell> cells;
  for (std::size_t iv = 0; iv < or_one(sweep.variants.size()); ++iv) {
    for (std::size_t ia = 0; ia < or_one(sweep.alphas.size()); ++ia) {
      for (std::size_t ie = 0; ie < or_one(sweep.epsilons.size()); ++ie) {
        for (std::size_t ir = 0; ir < or_one(sweep.target_rhos.size()); ++ir) {
          for (std::size_t is = 0; is < or_one(sweep.seeds.size()); ++is) {
            SweepCell cell;
            cell.config = sweep.base;
            std::vector<std::string> parts;
            if (!sweep.variants.empty()) {
              cell.variant = sweep.variants[iv];
              // Reuse the base config's parametrization of this variant when
              // it lists one; otherwise take the documented defaults.
              const VariantKind want = variant_from_name(*cell.variant);
              AlgorithmVariant chosen;
              chosen.kind = want;
              for (const AlgorithmVariant& v : sweep.base.variants) {
                if (v.kind == want) {
                  chosen = v;
                  break;
                }
              }
              cell.config.variants = {chosen};
              parts.push_back(*cell.variant);
            }
            if (!sweep.alphas.empty()) {
              cell.alpha = sweep.alphas[ia];
              cell.config.partition.dirichlet_alpha = *cell.alpha;
              parts.push_back("a" + compact_number(*cell.alpha));
            }
            if (!sweep.epsilons.empty()) {
              cell.epsilon = sweep.epsilons[ie];
              cell.config.privacy.enabled = true;
              cell.config.privacy.epsilon = *cell.epsilon;
              parts.push_back("e" + compact_number(*cell.epsilon));
            }
            if (!sweep.target_rhos.empty()) {
              cell.target_rho = sweep.target_rhos[ir];
              cell.config.constraints.target_rho = *cell.target_rho;
              parts.push_back("r" + compact_number(*cell.target_rho));
            }
            if (!sweep.seeds.empty()) {
              // A sweep seed is an independent replication: it reseeds the
              // training streams and shifts the data and partition draws.
              cell.seed = sweep.seeds[is];
              cell.config.training.master_seed = *cell.seed;
              cell.config.data.seed = sweep.base.data.seed + *cell.seed;
              cell.config.partition.seed =
                  sweep.base.partition.seed + *cell.seed;
              parts.push_back("s" + std::to_string(*cell.seed));
            }
            cell.id = parts.empty() ? "cell" : join(parts, '-');
            cells.push_back(std::move(cell));
          }
        }
      }
    }
  }
  return cells;
}

inline constexpr const char* kSummaryCsvHeader =
    "cell,variant,alpha,epsilon,target_rho,seed,rounds_to_convergence,"
    "final_metric,mean_rho,utility_loss";

struct SweepOutput {
  fs::path dir;
  int cells_total = 0;
  int cells_failed = 0;
};

// One run per grid cell, executed by a fixed-size worker pool. Cells with a
// privacy budget also run their non-private twin to report utility loss.
// Individual cell failures are recorded in failures.csv and the sweep
// continues.
inline SweepOutput run_sweep(const SweepSpec& sweep, const fs::path& out_dir,
                             int jobs = 0) {
  const std::vector<SweepCell> cells = enumerate_cells(sweep);
  fs::create_directories(out_dir);

  struct CellResult {
    bool ok = false;
    std::string error;
    std::string summary_row;
  };
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const SweepCell& cell = cells[i];
      CellResult& slot = results[i];
      try {
        const RunOutput run = run_to_directory(cell.config, out_dir / cell.id);
        if (run.results.size() != 1) {
          throw ConfigError(
              "sweep cells must resolve to exactly one variant; use the "
              "'variants' axis or a single-variant base config",
              "variants");
        }
        const auto& [vname, res] = *run.results.begin();
        double util = NAN;
        if (cell.config.privacy.enabled) {
          ExperimentConfig twin = cell.config;
          twin.privacy.enabled = false;
          MaterializedExperiment mat = materialize(twin);
          const ExperimentResult nonpriv =
              run_experiment(mat.setup, mat.config.variants.front());
          if (!nonpriv.records.empty() && !res.records.empty() &&
              nonpriv.records.back().metric > 0.0) {
            util = utility_loss(res.records.back().metric,
                                nonpriv.records.back().metric);
          }
        }
        std::vector<std::string> row = {
            cell.id,
            vname,
            fmt_double(cell.config.partition.dirichlet_alpha),
            cell.config.privacy.enabled ? fmt_double(cell.config.privacy.epsilon)
                                        : "nan",
            fmt_double(cell.config.constraints.target_rho),
            std::to_string(cell.config.training.master_seed),
            std::to_string(rounds_to_convergence(res.records)),
            fmt_double(res.records.empty() ? NAN : res.records.back().metric),
            fmt_double(mean_rho(res.records)),
            fmt_double(util)};
        slot.summary_row = join(row, ',');
        slot.ok = true;
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
  };

  int n_jobs = jobs > 0 ? jobs
                        : static_cast<int>(std::thread::hardware_concurrency());
  n_jobs = std::clamp(n_jobs, 1, 16);
  std::vector<std::thread> pool;
  for (int j = 0; j < n_jobs; ++j) pool.emplace_back(worker);
  for (std::thread& th : pool) th.join();

  std::string summary = kSummaryCsvHeader;
  summary += '\n';
  std::string failures = "cell,error\n";
  SweepOutput out;
  out.dir = out_dir;
  out.cells_total = static_cast<int>(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (results[i].ok) {
      summary += results[i].summary_row;
      summary += '\n';
    } else {
      ++out.cells_failed;
      std::string msg = results[i].error;
      for (char& ch : msg) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
      failures += cells[i].id + "," + msg + "\n";
    }
  }
  atomic_write(out_dir / "summary.csv", summary);
  if (out.cells_failed > 0) atomic_write(out_dir / "failures.csv", failures);
  return out;
}

// ---------------------------------------------------------------------------
// fit: read result CSVs and run the matching analysis operation.
// ---------------------------------------------------------------------------
inline Json fit_result_to_json(const FitResult& fit) {
  Json j;
  j["ok"] = fit.ok;
  j["params"] = fit.params;
  j["r_squared"] = fit.r_squared;
  Json ci = Json::array();
  for (const auto& c : fit.ci95) ci.push_back({c[0], c[1]});
  j["ci95"] = ci;
  j["residual_mean_abs"] = fit.residual_mean_abs;
  j["residual_max_abs"] = fit.residual_max_abs;
  if (!fit.note.empty()) j["note"] = fit.note;
  return j;
}

// Convergence-form fits, one per (variant, seed) series in a rounds.csv.
inline Json fit_convergence_report(const fs::path& rounds_csv,
                                   const std::optional<std::string>& variant,
                                   const std::optional<std::string>& seed = {}) {
  const CsvTable t = read_csv(rounds_csv);
  const int c_variant = t.require_column("variant");
  const int c_seed = t.require_column("seed");
  const int c_round = t.require_column("round");
  const int c_grad = t.require_column("grad_norm_sq");
  const int c_rho = t.require_column("rho");

  std::map<std::pair<std::string, std::string>,
           std::vector<std::pair<int, std::pair<double, double>>>>
      series;
  for (const auto& row : t.rows) {
    if (variant && row[static_cast<std::size_t>(c_variant)] != *variant) continue;
    if (seed && row[static_cast<std::size_t>(c_seed)] != *seed) continue;
    series[{row[static_cast<std::size_t>(c_variant)],
            row[static_cast<std::size_t>(c_seed)]}]
        .push_back({std::stoi(row[static_cast<std::size_t>(c_round)]),
                    {std::stod(row[static_cast<std::size_t>(c_grad)]),
                     std::stod(row[static_cast<std::size_t>(c_rho)])}});
  }
  if (series.empty()) throw ConfigError("no matching rows in " + rounds_csv.string());

  Json report;
  report["kind"] = "convergence";
  report["input"] = rounds_csv.string();
  report["model"] = "grad_norm_sq(t) = a/sqrt(t) + b*mean_rho";
  Json fits = Json::array();
  for (auto& [key, rows] : series) {
    std::sort(rows.begin(), rows.end());
    std::vector<double> y, rho;
    for (const auto& r : rows) {
      y.push_back(r.second.first);
      rho.push_back(r.second.second);
    }
    const FitResult fit = fit_convergence_rate(y, rho);
    Json fj = fit_result_to_json(fit);
    fj["variant"] = key.first;
    fj["seed"] = key.second;
    fj["rounds"] = y.size();
    double rho_bar = 0.0;
    for (double r : rho) rho_bar += r;
    fj["mean_rho"] = y.empty() ? 0.0 : rho_bar / static_cast<double>(y.size());
    fits.push_back(fj);
  }
  report["fits"] = fits;
  return report;
}

// Violation-performance line over a sweep summary. Fit one seed at a time
// when the sweep spans several replications; federations differ in their
// achievable metric, which otherwise swamps the within-federation slope.
inline Json fit_violation_report(const fs::path& summary_csv,
                                 const std::optional<std::string>& variant,
                                 double rho_threshold,
                                 const std::optional<std::string>& seed = {}) {
  const CsvTable t = read_csv(summary_csv);
  const int c_variant = t.require_column("variant");
  const int c_seed = t.require_column("seed");
  const int c_rho = t.require_column("mean_rho");
  const int c_metric = t.require_column("final_metric");
  std::vector<std::pair<double, double>> points;
  for (const auto& row : t.rows) {
    if (variant && row[static_cast<std::size_t>(c_variant)] != *variant) continue;
    if (seed && row[static_cast<std::size_t>(c_seed)] != *seed) continue;
    points.push_back({std::stod(row[static_cast<std::size_t>(c_rho)]),
                      std::stod(row[static_cast<std::size_t>(c_metric)])});
  }
  if (points.empty()) throw ConfigError("no matching rows in " + summary_csv.string());
  const FitResult fit = violation_performance_fit(points, rho_threshold);
  Json report;
  report["kind"] = "violation";
  report["input"] = summary_csv.string();
  report["model"] = "metric = (F* - eps_opt) - Delta_max * rho, rho < threshold";
  report["rho_threshold"] = rho_threshold;
  report["points_used"] = points.size();
  report["fit"] = fit_result_to_json(fit);
  if (fit.ok) {
    report["intercept"] = fit.params[0];
    report["slope"] = fit.params[1];
    report["delta_max"] = fitted_delta_max(fit);
  }
  return report;
}

// Zone classification of a rho column ("mean_rho" if present, else "rho").
inline Json fit_zones_report(const fs::path& csv_path) {
  const CsvTable t = read_csv(csv_path);
  int col = t.column("mean_rho");
  if (col < 0) col = t.column("rho");
  if (col < 0) throw ConfigError("missing column 'mean_rho' (or 'rho')");
  std::map<std::string, int> counts{
      {"safe", 0}, {"warning", 0}, {"danger", 0}, {"critical", 0}};
  for (const auto& row : t.rows) {
    const OperationalZone z =
        classify_zone(std::stod(row[static_cast<std::size_t>(col)]));
    counts[zone_name(z.zone)] += 1;
  }
  Json report;
  report["kind"] = "zones";
  report["input"] = csv_path.string();
  report["total"] = t.rows.size();
  report["counts"] = counts;
  report["thresholds"] = {{"safe", "rho < 0.05"},
                          {"warning", "0.05 <= rho < 0.10"},
                          {"danger", "0.10 <= rho < 0.18"},
                          {"critical", "rho >= 0.18"}};
  return report;
}

// ---------------------------------------------------------------------------
// report: per-variant medians over a sweep summary.
// ---------------------------------------------------------------------------
inline Json summary_report(const fs::path& summary_csv) {
  const CsvTable t = read_csv(summary_csv);
  const int c_variant = t.require_column("variant");
  const int c_rounds = t.require_column("rounds_to_convergence");
  const int c_metric = t.require_column("final_metric");
  const int c_rho = t.require_column("mean_rho");
  const int c_util = t.require_column("utility_loss");

  std::map<std::string, std::vector<std::array<double, 4>>> by_variant;
  for (const auto& row : t.rows) {
    by_variant[row[static_cast<std::size_t>(c_variant)]].push_back(
        {std::stod(row[static_cast<std::size_t>(c_rounds)]),
         std::stod(row[static_cast<std::size_t>(c_metric)]),
         std::stod(row[static_cast<std::size_t>(c_rho)]),
         std::stod(row[static_cast<std::size_t>(c_util)])});
  }
  Json report;
  report["kind"] = "summary";
  report["input"] = summary_csv.string();
  report["rows"] = t.rows.size();
  Json variants = Json::object();
  for (auto& [name, vals] : by_variant) {
    std::vector<double> rounds, metric, rho, util;
    for (const auto& v : vals) {
      rounds.push_back(v[0]);
      metric.push_back(v[1]);
      rho.push_back(v[2]);
      if (!std::isnan(v[3])) util.push_back(v[3]);
    }
    Json vj;
    vj["runs"] = vals.size();
    vj["median_rounds_to_convergence"] = median(rounds);
    vj["median_final_metric"] = median(metric);
    vj["median_mean_rho"] = median(rho);
    if (!util.empty()) vj["median_utility_loss"] = median(util);
    variants[name] = vj;
  }
  report["variants"] = variants;
  return report;
}

}  // namespace scfa
