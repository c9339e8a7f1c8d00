// gridcarbon: locational emission rates from solved power-flow snapshots.
//
// Pipeline subcommands: validate -> trace (orient, condense, trace, report),
// plus lme, synth, aggregate and bench. Exit codes: 0 success, 1 domain
// error (validation, infeasibility), 2 usage or I/O error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "gridcarbon/flowgraph.hpp"
#include "gridcarbon/model.hpp"
#include "gridcarbon/report.hpp"
#include "gridcarbon/scc.hpp"
#include "gridcarbon/synth.hpp"
#include "gridcarbon/tracer.hpp"
#include "gridcarbon/util.hpp"

namespace gc = gridcarbon;
namespace fs = std::filesystem;
using gc::json;

namespace {

int exit_code_for(const gc::Error& e) {
  switch (e.kind()) {
    case gc::ErrorKind::Io:
    case gc::ErrorKind::Usage:
      return 2;
    default:
      return 1;
  }
}

struct CommonOpts {
  double eps_mw = 1e-6;
  double tol_abs = 1e-6;
  double tol_rel = 1e-6;
  std::string loss_policy = "absorb";
  std::string emissions_csv;
  std::string out_dir = ".";
  bool allow_negative_loads = false;
  std::string negative_load_fuel = "solar";

  gc::Tolerance tolerance() const { return {tol_abs, tol_rel}; }

  gc::LossPolicy policy() const {
    if (loss_policy == "strict") return gc::LossPolicy::strict();
    if (loss_policy == "absorb") return gc::LossPolicy::absorb();
    if (loss_policy.rfind("slack", 0) == 0) {
      auto colon = loss_policy.find(':');
      gc::FuelType fuel = colon == std::string::npos
                              ? gc::FuelType::OtherImport
                              : gc::fuel_from_string(loss_policy.substr(colon + 1));
      return gc::LossPolicy::slack(fuel);
    }
    gc::fail(gc::ErrorKind::Usage,
             "unknown loss policy \"" + loss_policy + "\" (strict|absorb|slack[:<fuel>])");
  }

  gc::EmissionTable table() const {
    return emissions_csv.empty() ? gc::EmissionTable::defaults()
                                 : gc::parse_emission_table(emissions_csv);
  }

  gc::SnapshotOptions snapshot_options() const {
    gc::SnapshotOptions o;
    o.allow_negative_loads = allow_negative_loads;
    o.negative_load_fuel = gc::fuel_from_string(negative_load_fuel);
    return o;
  }
};

void add_common_flags(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--eps", opts.eps_mw, "Zero-flow threshold in MW")
      ->capture_default_str();
  cmd->add_option("--tol", opts.tol_abs, "Absolute balance tolerance in MW")
      ->capture_default_str();
  cmd->add_option("--tol-rel", opts.tol_rel, "Relative balance tolerance")
      ->capture_default_str();
  cmd->add_option("--loss-policy", opts.loss_policy,
                  "Residual handling: strict, absorb, or slack[:<fuel>]")
      ->capture_default_str();
  cmd->add_option("--emissions", opts.emissions_csv,
                  "fuel,rate_t_per_mwh csv merged onto the built-in table");
  cmd->add_option("-o,--out", opts.out_dir, "Output directory")->capture_default_str();
}

void write_json_file(const fs::path& path, const json& doc) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  gc::atomic_write_file(path, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

int cmd_validate(const std::string& net_path, const std::string& snap_path,
                 const CommonOpts& opts) {
  gc::Network net = gc::parse_network_file(net_path);
  gc::Snapshot snap = gc::parse_snapshot_file(snap_path, net, opts.snapshot_options());
  gc::ValidationReport report = gc::validate_snapshot(net, snap, opts.tolerance());
  write_json_file(fs::path(opts.out_dir) / "validation.json",
                  gc::validation_report_to_json(report));
  if (!report.ok()) {
    std::cerr << "validation failed at " << report.violations.size()
              << " bus(es); first: \"" << report.violations.front()
              << "\" (max |residual| " << gc::format_g9(report.max_abs_residual)
              << " MW)\n";
    return 1;
  }
  std::cout << "balance ok; max |residual| " << gc::format_g9(report.max_abs_residual)
            << " MW over " << report.residuals.size() << " buses\n";
  return 0;
}

// ---------------------------------------------------------------------------
// trace
// ---------------------------------------------------------------------------

struct TraceFlags {
  bool dump_sccs = false;
  bool dump_gldf = false;
  bool dump_dot = false;
  int jobs = 1;
};

void trace_one(const gc::Network& net, const gc::EmissionTable& table,
               const fs::path& snap_path, const fs::path& out_dir,
               const std::string& stem, const CommonOpts& opts, const TraceFlags& flags) {
  gc::Snapshot snap = gc::parse_snapshot_file(snap_path, net, opts.snapshot_options());
  gc::DirectedFlowGraph g = gc::orient(net, snap, opts.eps_mw, opts.policy(), opts.tolerance());
  gc::CondensedGraph cg = gc::condense(g, gc::find_sccs(g));
  gc::TraceResult t = gc::trace(cg, table);

  gc::TraceJsonOptions jopts;
  jopts.include_gldf = flags.dump_gldf;
  jopts.loss_policy = opts.loss_policy;
  jopts.eps_mw = opts.eps_mw;
  json doc = gc::trace_to_json(t, cg, net, snap, g, jopts);
  json demand = json::object();
  for (int b = 0; b < cg.original_n_buses; ++b) {
    demand[cg.original_ids[b]] = gc::round9(cg.original_demand[b]);
  }
  doc["demand_mw"] = std::move(demand);
  doc["system_emissions_t"] = gc::round9(gc::system_emissions(t, cg));
  write_json_file(out_dir / (stem + "trace.json"), doc);

  gc::RegionReport report = gc::aggregate_regions(t, cg, net);
  std::ostringstream csv;
  gc::write_region_csv(report, csv);
  gc::atomic_write_file(out_dir / (stem + "report.csv"), csv.str());

  if (flags.dump_sccs) {
    write_json_file(out_dir / (stem + "sccs.json"), gc::sccs_to_json(cg));
  }
  if (flags.dump_dot) {
    std::ostringstream dot;
    gc::write_dot(g, net, dot);
    gc::atomic_write_file(out_dir / (stem + "flowgraph.dot"), dot.str());
  }
}

int cmd_trace(const std::string& net_path, const std::string& snap_path,
              const CommonOpts& opts, const TraceFlags& flags) {
  gc::Network net = gc::parse_network_file(net_path);
  gc::EmissionTable table = opts.table();
  fs::path out_dir(opts.out_dir);
  fs::create_directories(out_dir);

  if (!fs::is_directory(snap_path)) {
    trace_one(net, table, snap_path, out_dir, "", opts, flags);
    return 0;
  }

  // Batch mode: every *.json in the directory, parallel across snapshots.
  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(snap_path)) {
    if (entry.path().extension() == ".json") inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) {
    gc::fail(gc::ErrorKind::Usage, "no .json snapshots in " + snap_path);
  }

  std::atomic<size_t> next{0};
  std::atomic<int> failures{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < inputs.size(); i = next.fetch_add(1)) {
      try {
        trace_one(net, table, inputs[i], out_dir, inputs[i].stem().string() + ".",
                  opts, flags);
      } catch (const std::exception& e) {
        ++failures;
        std::cerr << inputs[i].string() << ": " << e.what() << "\n";
      }
    }
  };
  int n_threads = std::max(1, std::min<int>(flags.jobs, static_cast<int>(inputs.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();
  if (failures > 0) {
    std::cerr << failures << " of " << inputs.size() << " snapshots failed\n";
    return 1;
  }
  std::cout << "traced " << inputs.size() << " snapshots -> " << out_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// lme
// ---------------------------------------------------------------------------

int cmd_lme(const std::string& net_path, const std::string& base_path,
            const std::string& pert_path, const std::string& bus, bool allow_multi,
            const CommonOpts& opts) {
  gc::Network net = gc::parse_network_file(net_path);
  gc::EmissionTable table = opts.table();
  gc::Snapshot base = gc::parse_snapshot_file(base_path, net, opts.snapshot_options());
  gc::Snapshot pert = gc::parse_snapshot_file(pert_path, net, opts.snapshot_options());
  gc::LmeResult r = gc::lme(net, table, base, pert, bus, allow_multi);
  write_json_file(fs::path(opts.out_dir) / "lme.json",
                  json{{"bus", r.bus_id},
                       {"delta_mw", gc::round9(r.delta_mw)},
                       {"base_emissions_t", gc::round9(r.base_emissions_t)},
                       {"perturbed_emissions_t", gc::round9(r.perturbed_emissions_t)},
                       {"mu_t_per_mwh", gc::round9(r.mu)}});
  std::cout << "mu(" << bus << ") = " << gc::format_g9(r.mu) << " t CO2/MWh over "
            << gc::format_g9(r.delta_mw) << " MW\n";
  return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(int buses, int gens, double avg_degree, std::uint64_t seed,
              const std::string& preset, const std::string& perturb,
              const CommonOpts& opts) {
  gc::RandomGrid grid;
  if (preset == "regions200") {
    grid = gc::make_region_demo();
  } else if (preset.empty()) {
    grid = gc::random_grid(buses, gens, avg_degree, seed);
  } else {
    gc::fail(gc::ErrorKind::Usage, "unknown preset \"" + preset + "\"");
  }

  fs::path out_dir(opts.out_dir);
  fs::create_directories(out_dir);
  write_json_file(out_dir / "network.json", gc::network_to_json(grid.net));
  gc::Snapshot snap = gc::make_snapshot(grid.net, grid.loads, grid.costs);
  write_json_file(out_dir / "snapshot.json", gc::snapshot_to_json(snap));

  json costs = json::object();
  for (const auto& [gen, c] : grid.costs) costs[gen] = c;
  write_json_file(out_dir / "costs.json", costs);

  if (!perturb.empty()) {
    auto colon = perturb.rfind(':');
    if (colon == std::string::npos) {
      gc::fail(gc::ErrorKind::Usage, "--perturb expects <bus>:<delta_mw>");
    }
    std::string bus = perturb.substr(0, colon);
    double delta = std::stod(perturb.substr(colon + 1));
    gc::Snapshot pert = gc::make_perturbed_snapshot(grid.net, grid.loads, grid.costs,
                                                    bus, delta);
    write_json_file(out_dir / "snapshot_perturbed.json", gc::snapshot_to_json(pert));
  }
  std::cout << "wrote network.json (" << grid.net.buses.size() << " buses, "
            << grid.net.lines.size() << " lines) and snapshot.json to "
            << out_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// aggregate
// ---------------------------------------------------------------------------

std::vector<double> read_series_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) gc::fail(gc::ErrorKind::Io, "cannot open series csv: " + path.string());
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    auto comma = line.rfind(',');
    std::string cell = comma == std::string::npos ? line : line.substr(comma + 1);
    try {
      values.push_back(std::stod(cell));
    } catch (const std::exception&) {
      if (values.empty()) continue;  // header row
      gc::fail(gc::ErrorKind::Parse, path.string() + ": malformed number \"" + cell + "\"");
    }
  }
  return values;
}

int cmd_aggregate(const std::string& net_path, const std::string& trace_path,
                  const std::string& boundaries_path, const std::string& actual_csv,
                  const std::string& estimated_csv, const CommonOpts& opts) {
  fs::path out_dir(opts.out_dir);
  fs::create_directories(out_dir);

  if (!actual_csv.empty() || !estimated_csv.empty()) {
    if (actual_csv.empty() || estimated_csv.empty()) {
      gc::fail(gc::ErrorKind::Usage, "--actual and --estimated must be given together");
    }
    std::vector<double> actual = read_series_csv(actual_csv);
    std::vector<double> estimated = read_series_csv(estimated_csv);
    gc::SeriesMetrics m = gc::series_metrics(actual, estimated);
    write_json_file(out_dir / "metrics.json", gc::metrics_to_json(m));
    std::cout << "metrics.json: wmape "
              << (m.wmape ? gc::format_g9(*m.wmape) : "undefined") << " over " << m.n
              << " samples\n";
    if (net_path.empty()) return 0;
  }

  gc::Network net = gc::parse_network_file(net_path);
  std::ifstream in(trace_path);
  if (!in) gc::fail(gc::ErrorKind::Io, "cannot open trace file: " + trace_path);
  json trace_doc = json::parse(in);
  if (!trace_doc.contains("lae") || !trace_doc.contains("demand_mw")) {
    gc::fail(gc::ErrorKind::Parse, trace_path + ": not a trace.json (missing lae/demand_mw)");
  }

  struct Acc {
    double demand = 0.0, emissions = 0.0;
    std::uint64_t population = 0;
    bool has_population = false;
  };
  std::map<std::string, Acc> acc;
  for (const gc::Bus& bus : net.buses) {
    Acc& a = acc[bus.region.value_or("unassigned")];
    if (trace_doc["demand_mw"].contains(bus.id)) {
      double d = trace_doc["demand_mw"][bus.id].get<double>();
      a.demand += d;
      if (trace_doc["lae"].contains(bus.id)) {
        a.emissions += trace_doc["lae"][bus.id].get<double>() * d;
      }
    }
    if (bus.population) {
      a.population += *bus.population;
      a.has_population = true;
    }
  }
  gc::RegionReport report;
  for (const auto& [region, a] : acc) {
    gc::RegionRow row;
    row.region = region;
    row.demand_mw = a.demand;
    row.emissions_t = a.emissions;
    if (a.demand > 0.0) row.rate_t_per_mwh = a.emissions / a.demand;
    if (a.has_population) row.population = a.population;
    if (a.population > 0) row.per_capita = a.emissions / static_cast<double>(a.population);
    report.system_emissions_t += a.emissions;
    report.system_demand_mw += a.demand;
    report.rows.push_back(std::move(row));
  }

  std::ostringstream csv;
  gc::write_region_csv(report, csv);
  gc::atomic_write_file(out_dir / "report.csv", csv.str());
  if (!boundaries_path.empty()) {
    std::ifstream bin(boundaries_path);
    if (!bin) gc::fail(gc::ErrorKind::Io, "cannot open boundaries: " + boundaries_path);
    write_json_file(out_dir / "report.geojson",
                    gc::region_geojson(report, json::parse(bin)));
  }
  std::cout << "report.csv: " << report.rows.size() << " regions, system "
            << gc::format_g9(report.system_emissions_t) << " t CO2/h\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

int cmd_bench(const std::vector<std::uint64_t>& sizes, std::uint64_t seed,
              double avg_degree, double gens_ratio, const CommonOpts& opts) {
  using clock = std::chrono::steady_clock;
  std::ostringstream csv;
  csv << "n_buses,n_lines,n_gens,seconds\n";
  std::vector<double> log_size, log_time;
  for (size_t i = 0; i < sizes.size(); ++i) {
    const int n = static_cast<int>(sizes[i]);
    const int gens = std::max(2, static_cast<int>(n * gens_ratio));
    gc::RandomGrid grid = gc::random_grid(n, gens, avg_degree, seed + i);
    gc::Snapshot snap = gc::make_snapshot(grid.net, grid.loads, grid.costs);

    double seconds = 1e18;
    double checksum = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
      auto start = clock::now();
      gc::DirectedFlowGraph g = gc::orient(grid.net, snap, opts.eps_mw, opts.policy(),
                                           opts.tolerance());
      gc::CondensedGraph cg = gc::condense(g, gc::find_sccs(g));
      gc::TraceResult t = gc::trace(cg, gc::EmissionTable::defaults());
      auto stop = clock::now();
      checksum = t.delta.empty() ? 0.0 : t.delta[0];
      seconds = std::min(seconds, std::chrono::duration<double>(stop - start).count());
    }
    size_t n_lines = grid.net.lines.size();
    csv << n << ',' << n_lines << ',' << gens << ',' << gc::format_g9(seconds) << "\n";
    std::cout << "n=" << n << " lines=" << n_lines << " trace=" << gc::format_g9(seconds)
              << " s (delta[0]=" << gc::format_g9(checksum) << ")\n";
    log_size.push_back(std::log(static_cast<double>(n) + static_cast<double>(n_lines)));
    log_time.push_back(std::log(std::max(seconds, 1e-9)));
  }

  if (log_size.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(log_size.size());
    for (size_t i = 0; i < log_size.size(); ++i) {
      sx += log_size[i];
      sy += log_time[i];
      sxx += log_size[i] * log_size[i];
      sxy += log_size[i] * log_time[i];
    }
    double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    csv << "# log-log slope," << gc::format_g9(slope) << "\n";
    std::cout << "log-log slope of wall time vs (N+L): " << gc::format_g9(slope) << "\n";
  }
  fs::path out_dir(opts.out_dir);
  fs::create_directories(out_dir);
  gc::atomic_write_file(out_dir / "bench.csv", csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"locational carbon emission rates via flow tracing"};
  app.require_subcommand(1);

  CommonOpts opts;
  TraceFlags trace_flags;

  std::string net_path, snap_path, base_path, pert_path, bus;
  bool allow_multi = false;

  auto* validate = app.add_subcommand("validate", "check nodal balance of a snapshot");
  validate->add_option("network", net_path, "network.json")->required();
  validate->add_option("snapshot", snap_path, "snapshot.json")->required();
  add_common_flags(validate, opts);
  validate->add_flag("--allow-negative-loads", opts.allow_negative_loads,
                     "convert negative loads to virtual sources");

  auto* trace_cmd = app.add_subcommand("trace", "trace generator shares and rates");
  trace_cmd->add_option("network", net_path, "network.json")->required();
  trace_cmd->add_option("snapshot", snap_path, "snapshot.json or a directory of them")
      ->required();
  add_common_flags(trace_cmd, opts);
  trace_cmd->add_flag("--allow-negative-loads", opts.allow_negative_loads,
                      "convert negative loads to virtual sources");
  trace_cmd->add_option("--negative-load-fuel", opts.negative_load_fuel,
                        "fuel for converted negative loads")
      ->capture_default_str();
  trace_cmd->add_flag("--dump-sccs", trace_flags.dump_sccs, "write sccs.json");
  trace_cmd->add_flag("--dump-gldf", trace_flags.dump_gldf, "include per-line shares");
  trace_cmd->add_flag("--dump-dot", trace_flags.dump_dot, "write flowgraph.dot");
  trace_cmd->add_option("-j,--jobs", trace_flags.jobs, "parallel snapshots in batch mode")
      ->capture_default_str();

  auto* lme_cmd = app.add_subcommand("lme", "marginal rate from a snapshot pair");
  lme_cmd->add_option("network", net_path)->required();
  lme_cmd->add_option("base", base_path, "base snapshot.json")->required();
  lme_cmd->add_option("perturbed", pert_path, "perturbed snapshot.json")->required();
  lme_cmd->add_option("--bus", bus, "perturbed bus id")->required();
  lme_cmd->add_flag("--allow-multi", allow_multi, "aggregate multi-bus perturbations");
  add_common_flags(lme_cmd, opts);

  int synth_buses = 100, synth_gens = 10;
  double synth_degree = 3.0;
  std::uint64_t synth_seed = 1;
  std::string synth_preset, synth_perturb;
  auto* synth_cmd = app.add_subcommand("synth", "generate a consistent test grid");
  synth_cmd->add_option("--buses", synth_buses)->capture_default_str();
  synth_cmd->add_option("--gens", synth_gens)->capture_default_str();
  synth_cmd->add_option("--avg-degree", synth_degree)->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed)->capture_default_str();
  synth_cmd->add_option("--preset", synth_preset, "named fixture: regions200");
  synth_cmd->add_option("--perturb", synth_perturb,
                        "<bus>:<delta_mw>, also writes snapshot_perturbed.json");
  add_common_flags(synth_cmd, opts);

  std::string trace_path, boundaries_path, actual_csv, estimated_csv;
  auto* agg_cmd = app.add_subcommand("aggregate", "regional report from a trace");
  agg_cmd->add_option("network", net_path)->required(false);
  agg_cmd->add_option("trace", trace_path, "trace.json from the trace subcommand");
  agg_cmd->add_option("--boundaries", boundaries_path, "GeoJSON FeatureCollection");
  agg_cmd->add_option("--actual", actual_csv, "actual series csv (last column)");
  agg_cmd->add_option("--estimated", estimated_csv, "estimated series csv");
  add_common_flags(agg_cmd, opts);

  std::vector<std::uint64_t> bench_sizes{10000, 100000, 1000000};
  std::uint64_t bench_seed = 7;
  double bench_degree = 3.0, bench_gens_ratio = 0.05;
  auto* bench_cmd = app.add_subcommand("bench", "linear-scaling benchmark");
  bench_cmd->add_option("--sizes", bench_sizes, "bus counts, comma separated")
      ->delimiter(',')
      ->capture_default_str();
  bench_cmd->add_option("--seed", bench_seed)->capture_default_str();
  bench_cmd->add_option("--avg-degree", bench_degree)->capture_default_str();
  bench_cmd->add_option("--gens-ratio", bench_gens_ratio, "generators per bus")
      ->capture_default_str();
  add_common_flags(bench_cmd, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (validate->parsed()) return cmd_validate(net_path, snap_path, opts);
    if (trace_cmd->parsed()) return cmd_trace(net_path, snap_path, opts, trace_flags);
    if (lme_cmd->parsed()) {
      return cmd_lme(net_path, base_path, pert_path, bus, allow_multi, opts);
    }
    if (synth_cmd->parsed()) {
      return cmd_synth(synth_buses, synth_gens, synth_degree, synth_seed, synth_preset,
                       synth_perturb, opts);
    }
    if (agg_cmd->parsed()) {
      if (net_path.empty() && actual_csv.empty()) {
        gc::fail(gc::ErrorKind::Usage, "aggregate needs a network+trace or --actual/--estimated");
      }
      return cmd_aggregate(net_path, trace_path, boundaries_path, actual_csv,
                           estimated_csv, opts);
    }
    if (bench_cmd->parsed()) {
      return cmd_bench(bench_sizes, bench_seed, bench_degree, bench_gens_ratio, opts);
    }
  } catch (const gc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
