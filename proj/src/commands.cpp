#include "epifc/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "epifc/harness.hpp"
#include "epifc/ingest.hpp"
#include "epifc/numerics.hpp"
#include "epifc/rng.hpp"
#include "text_io.hpp"

namespace epifc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kToolVersion = "1.0.0";

std::string num(double v) { return detail::format_double(v); }

fs::path panel_dir(const RunConfig& c) { return c.out / "panel"; }
fs::path results_dir(const RunConfig& c) { return c.out / "results"; }

Panel load_ingested(const RunConfig& c) {
  const auto dir = panel_dir(c);
  if (!fs::exists(dir / "statics.csv")) {
    throw Error(ErrorCode::Io, "no ingested panel at " + dir.string() + "; run `epifc ingest` first");
  }
  return read_panel(dir);
}

void require_path(const fs::path& p, std::string_view key) {
  if (p.empty()) throw Error(ErrorCode::InvalidArgument, "missing required setting '" + std::string(key) + "'");
}

std::vector<CellResult> load_cells(const fs::path& dir) {
  std::vector<fs::path> files;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<CellResult> cells;
  for (const auto& f : files) {
    try {
      cells.push_back(cell_from_json(detail::read_text_file(f)));
    } catch (const Error& e) {
      throw Error(ErrorCode::Io, f.string() + ": " + e.what());
    }
  }
  return cells;
}

std::string report_row(const CvReport& r) {
  return num(r.train_mean) + "," + num(r.train_sd) + "," + num(r.test_mean) + "," + num(r.test_sd);
}

std::string selection_parameter(const SelectionMask& m) {
  if (m.threshold) return num(*m.threshold);
  if (m.prefix_size) return std::to_string(*m.prefix_size);
  if (m.lambda) return num(*m.lambda);
  return "";
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
      return kExitUsage;
    case ErrorCode::MalformedCsv:
    case ErrorCode::GapInDates:
    case ErrorCode::NegativeCumulative:
    case ErrorCode::UnmappableHeader:
    case ErrorCode::EmptyIntersection:
    case ErrorCode::SeriesLengthMismatch:
    case ErrorCode::SeriesTooShort:
    case ErrorCode::UnknownCountry:
    case ErrorCode::InsufficientHistory:
    case ErrorCode::MissingCells:
    case ErrorCode::Io:
      return kExitData;
    default:
      return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------

void cmd_ingest(const RunConfig& c, std::ostream& log) {
  require_path(c.confirmed, "confirmed");
  require_path(c.deaths, "deaths");
  require_path(c.recovered, "recovered");
  if (c.statics.empty()) throw Error(ErrorCode::InvalidArgument, "missing required setting 'statics'");

  const auto confirmed = load_timeseries_csv(c.confirmed, SeriesKind::Confirmed);
  const auto deaths = load_timeseries_csv(c.deaths, SeriesKind::Deaths);
  const auto recovered = load_timeseries_csv(c.recovered, SeriesKind::Recovered);
  std::vector<StaticFeatureTable> statics;
  for (const auto& p : c.statics) statics.push_back(load_static_csv(p, c.strict_headers));

  MergeReport report;
  const auto panel = merge_and_clean(confirmed, deaths, recovered, statics, {c.date_from, c.date_to}, &report);

  fs::remove_all(panel_dir(c));
  write_panel(panel, panel_dir(c));

  std::ostringstream os;
  os << "countries: " << panel.countries.size() << "\n";
  os << "days: " << panel.num_days() << " (" << format_iso_date(panel.dates.front()) << " to "
     << format_iso_date(panel.dates.back()) << ")\n";
  os << "static features: " << panel.static_names.size() << "\n";
  os << "dropped countries: " << report.dropped_countries.size() << "\n";
  for (const auto& name : report.dropped_countries) os << "  " << name << "\n";
  os << "dropped features: " << report.dropped_features.size() << "\n";
  for (const auto& name : report.dropped_features) os << "  " << name << "\n";
  os << "warnings: " << report.warnings.size() << "\n";
  for (const auto& w : report.warnings) os << "  " << w << "\n";
  detail::write_text_file(c.out / "ingest_report.txt", os.str());
  log << "ingest: " << panel.countries.size() << " countries x " << panel.num_days() << " days, "
      << panel.static_names.size() << " static features -> " << panel_dir(c).string() << "\n";
}

void cmd_heatmap(const RunConfig& c, std::ostream& log) {
  const auto panel = load_ingested(c);
  Matrix data;
  std::vector<std::string> names;
  if (c.statics_only) {
    if (panel.static_names.empty()) throw Error(ErrorCode::InvalidArgument, "panel has no static features");
    data.resize(static_cast<Eigen::Index>(panel.countries.size()),
                static_cast<Eigen::Index>(panel.static_names.size()));
    for (std::size_t i = 0; i < panel.countries.size(); ++i) {
      for (std::size_t j = 0; j < panel.static_names.size(); ++j) {
        data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = panel.statics[i][j];
      }
    }
    names = panel.static_names;
  } else {
    const auto samples = build_samples(panel, 1, c.window);
    data = samples.X;
    names = samples.spec.names();
  }
  const Matrix corr = correlation_matrix(data);
  std::string text = "feature";
  for (const auto& n : names) text += "," + detail::csv_field(n);
  text += "\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    text += detail::csv_field(names[i]);
    for (std::size_t j = 0; j < names.size(); ++j) {
      text += "," + num(corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    text += "\n";
  }
  detail::write_text_file(c.out / "heatmap.csv", text);
  log << "heatmap: " << names.size() << "x" << names.size() << " -> " << (c.out / "heatmap.csv").string() << "\n";
}

void cmd_sweep(const RunConfig& c, std::ostream& log) {
  const auto panel = load_ingested(c);
  auto sweep = c.sweep_config();
  sweep.store = results_dir(c);
  const auto resolved = sweep.resolved();
  const int k_max = resolved.horizons.back();
  const auto samples = build_samples(panel, k_max, c.window);
  const auto result = run_sweep(sweep, samples);
  const auto& rc = result.config;

  int failed_cells = 0;
  for (const auto& [key, cell] : result.cells) {
    if (!cell.error.empty() || !cell.report.valid()) {
      ++failed_cells;
      log << "sweep: cell " << key.name() << " invalid" << (cell.error.empty() ? "" : ": " + cell.error) << "\n";
    }
  }

  for (auto m : rc.models) {
    for (auto s : rc.methods) {
      std::string text = "K,train_mean,train_sd,test_mean,test_sd,n_ok,valid\n";
      for (int k : rc.horizons) {
        const auto& cell = result.cells.at({m, s, k});
        const bool ok = cell.error.empty() && cell.report.valid();
        text += std::to_string(k) + "," + report_row(cell.report) + "," +
                std::to_string(cell.report.succeeded()) + "," + (ok ? "1" : "0") + "\n";
      }
      detail::write_text_file(c.out / "curves" / (std::string(to_string(m)) + "_" + std::string(to_string(s)) + ".csv"),
                              text);
    }
  }

  std::string best = "model,K,method,train_mean,train_sd,test_mean,test_sd\n";
  for (auto m : rc.models) {
    for (int k : rc.horizons) {
      auto it = result.best.find({m, k});
      best += std::string(to_string(m)) + "," + std::to_string(k) + ",";
      if (it == result.best.end()) {
        best += "none,nan,nan,nan,nan\n";
      } else {
        best += std::string(to_string(it->second)) + "," + report_row(result.cells.at({m, it->second, k}).report) + "\n";
      }
    }
  }
  detail::write_text_file(c.out / "best_methods.csv", best);

  std::string counts = "model,method,K,count,parameter\n";
  std::string search = "model,method,K,parameter,mask_size,score\n";
  for (const auto& [key, cell] : result.cells) {
    const std::string prefix =
        std::string(to_string(key.model)) + "," + std::string(to_string(key.method)) + "," + std::to_string(key.k);
    counts += prefix + "," + std::to_string(cell.mask.size()) + "," + selection_parameter(cell.mask) + "\n";
    for (const auto& p : cell.selection) {
      search += prefix + "," + num(p.parameter) + "," + std::to_string(p.mask_size) + "," +
                (p.score ? num(*p.score) : "nan") + "\n";
    }
  }
  detail::write_text_file(c.out / "feature_counts.csv", counts);
  detail::write_text_file(c.out / "selection_search.csv", search);
  log << "sweep: " << result.cells.size() << " cells (" << failed_cells << " invalid), hash "
      << result.config_hash << " -> " << results_dir(c).string() << "\n";
}

void cmd_trace(const RunConfig& c, std::ostream& log) {
  const auto panel = load_ingested(c);
  const int k = c.trace_k;
  const auto spec = FeatureSpec::make(c.window, panel.static_names);

  // Use the sweep's best cell per model when the results cover this horizon.
  SweepResult stored;
  stored.config.models = c.models;
  stored.config.methods = c.methods;
  for (auto& cell : load_cells(results_dir(c))) {
    if (cell.key.k == k) stored.cells.emplace(cell.key, std::move(cell));
  }

  std::vector<TraceModel> models;
  for (auto m : c.models) {
    TraceModel tm;
    tm.label = std::string(to_string(m));
    try {
      const auto method = best_method(stored, m, k).first;
      const auto& cell = stored.cells.at({m, method, k});
      tm.config = cell.config;
      tm.mask = cell.mask;
      log << "trace: " << tm.label << " uses " << to_string(method) << " " << cell.config.architecture() << "\n";
    } catch (const Error&) {
      ForecasterConfig base;
      base.kind = m;
      base.batch = c.batch;
      base.max_epochs = c.fast ? std::min(c.max_epochs, 100) : c.max_epochs;
      base.patience = c.patience;
      tm.config = architecture_grid(base, c.fast).front();
      tm.mask = no_fs(spec);
      log << "trace: " << tm.label << " uses NoFS " << tm.config.architecture() << " (no sweep results for K="
          << k << ")\n";
    }
    tm.config.seed = derive_seed(c.seed, 0x7ace, static_cast<std::uint64_t>(m));
    models.push_back(std::move(tm));
  }

  const auto trace = country_trace(panel, c.country, k, models, c.window);
  std::string text = "date,truth";
  for (const auto& [label, _] : trace.predictions) text += "," + label;
  text += "\n";
  for (std::size_t i = 0; i < trace.dates.size(); ++i) {
    text += format_iso_date(trace.dates[i]) + "," + num(trace.truth[i]);
    for (const auto& [_, pred] : trace.predictions) text += "," + num(pred[i]);
    text += "\n";
  }
  const auto path = c.out / ("trace_K" + std::to_string(k) + ".csv");
  detail::write_text_file(path, text);
  log << "trace: " << trace.country << " K=" << k << ", " << trace.dates.size() << " points -> " << path.string()
      << "\n";
}

void cmd_report(const RunConfig& c, std::ostream& log) {
  auto cells = load_cells(results_dir(c));
  if (cells.empty()) throw Error(ErrorCode::Io, "no cell documents in " + results_dir(c).string());

  SweepResult result;
  std::set<ModelKind> models;
  std::set<SelectionMethod> methods;
  std::set<int> horizons;
  for (const auto& cell : cells) {
    models.insert(cell.key.model);
    methods.insert(cell.key.method);
    horizons.insert(cell.key.k);
  }
  result.config.models.assign(models.begin(), models.end());
  result.config.methods.assign(methods.begin(), methods.end());
  std::set<std::string> hashes;
  for (const auto& f : fs::directory_iterator(results_dir(c))) {
    if (f.path().extension() != ".json") continue;
    std::string hash;
    cell_from_json(detail::read_text_file(f.path()), &hash);
    hashes.insert(hash);
  }
  for (auto& cell : cells) result.cells.emplace(cell.key, std::move(cell));

  const auto snapshot = c.to_text(false);
  json summary;
  summary["format"] = "epifc-summary";
  summary["version"] = 1;
  summary["tool_version"] = kToolVersion;
  summary["config_snapshot"] = snapshot;
  summary["config_snapshot_hash"] = fnv1a_hex(snapshot);
  summary["seed"] = c.seed;
  summary["sweep_hashes"] = hashes;
  summary["cell_count"] = result.cells.size();
  auto number = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json cell_list = json::array();
  for (const auto& [key, cell] : result.cells) {
    json train = json::array(), test = json::array();
    for (double v : cell.report.train_r2) train.push_back(number(v));
    for (double v : cell.report.test_r2) test.push_back(number(v));
    cell_list.push_back({{"name", key.name()},
                         {"model", to_string(key.model)},
                         {"method", to_string(key.method)},
                         {"K", key.k},
                         {"train_mean", number(cell.report.train_mean)},
                         {"train_sd", number(cell.report.train_sd)},
                         {"test_mean", number(cell.report.test_mean)},
                         {"test_sd", number(cell.report.test_sd)},
                         {"train_r2", train},
                         {"test_r2", test},
                         {"seeds", cell.report.seeds},
                         {"n_ok", cell.report.succeeded()},
                         {"valid", cell.error.empty() && cell.report.valid()},
                         {"feature_count", cell.mask.size()},
                         {"architecture", cell.config.architecture()},
                         {"error", cell.error}});
  }
  summary["cells"] = cell_list;

  json best_list = json::array();
  std::ostringstream txt;
  txt << "epifc " << kToolVersion << " summary\n";
  txt << "config snapshot hash: " << fnv1a_hex(snapshot) << "\n";
  txt << "cells: " << result.cells.size() << "\n";
  for (auto m : models) {
    txt << "\n" << to_string(m) << ": mean test r2 (sd) per method; * marks the best\n";
    txt << "K";
    for (auto s : methods) txt << "\t" << to_string(s);
    txt << "\n";
    for (int k : horizons) {
      std::optional<SelectionMethod> best;
      try {
        best = best_method(result, m, k).first;
        const auto& r = result.cells.at({m, *best, k}).report;
        best_list.push_back({{"model", to_string(m)},
                             {"K", k},
                             {"method", to_string(*best)},
                             {"train_mean", number(r.train_mean)},
                             {"test_mean", number(r.test_mean)},
                             {"test_sd", number(r.test_sd)}});
      } catch (const Error&) {
        best_list.push_back({{"model", to_string(m)}, {"K", k}, {"method", nullptr}});
      }
      txt << k;
      for (auto s : methods) {
        auto it = result.cells.find({m, s, k});
        txt << "\t";
        if (it == result.cells.end()) {
          txt << "-";
          continue;
        }
        const auto& r = it->second.report;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f (%.4f)", r.test_mean, r.test_sd);
        txt << buf << (best == s ? "*" : "");
      }
      txt << "\n";
    }
  }
  summary["best"] = best_list;
  detail::write_text_file(c.out / "summary.json", summary.dump(1) + "\n");
  detail::write_text_file(c.out / "summary.txt", txt.str());
  log << "report: " << result.cells.size() << " cells -> " << (c.out / "summary.json").string() << "\n";
}

// ---------------------------------------------------------------------------

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Epidemic active-case forecasting benchmark"};
  app.require_subcommand(1, 1);
  std::string config_path;
  app.add_option("--config", config_path, "flat key = value configuration file");

  std::map<std::string, std::string> given;
  std::map<std::string, CLI::Option*> options;
  for (const auto& key : config_keys()) {
    std::string flag = "--" + std::string(key.name);
    std::replace(flag.begin(), flag.end(), '_', '-');
    auto& slot = given[std::string(key.name)];
    options[std::string(key.name)] = key.boolean
        ? app.add_flag(flag + "{true}", slot, std::string(key.help))
        : app.add_option(flag, slot, std::string(key.help));
  }
  app.fallthrough();
  app.add_subcommand("ingest", "load, merge and clean the inputs; export the panel")->fallthrough();
  app.add_subcommand("heatmap", "pairwise correlation matrix of the features")->fallthrough();
  app.add_subcommand("sweep", "model x method x horizon cross-validation grid")->fallthrough();
  app.add_subcommand("trace", "sliding-window forecast trace for one country")->fallthrough();
  app.add_subcommand("report", "consolidate the sweep results")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  RunConfig config;
  try {
    if (!config_path.empty()) config = load_config_file(config_path);
    for (const auto& key : config_keys()) {
      const auto name = std::string(key.name);
      if (options[name]->count() > 0) set_config_value(config, name, given[name]);
    }
    config.validate();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "ingest") cmd_ingest(config, out);
    if (command == "heatmap") cmd_heatmap(config, out);
    if (command == "sweep") cmd_sweep(config, out);
    if (command == "trace") cmd_trace(config, out);
    if (command == "report") cmd_report(config, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace epifc
