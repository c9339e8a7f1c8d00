#include "gridcarbon/report.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gridcarbon/util.hpp"

namespace gridcarbon {

double system_emissions(const TraceResult& t, const CondensedGraph& cg) {
  double total = 0.0;
  for (int v = 0; v < cg.graph.n_buses; ++v) {
    if (t.status[v] == RateStatus::Defined) {
      total += t.delta[v] * cg.graph.demand[v];
    }
  }
  return total;
}

double system_emissions(const std::map<std::string, LaeEntry>& lae_by_bus,
                        const std::map<std::string, double>& demands_mw) {
  double total = 0.0;
  for (const auto& [bus, mw] : demands_mw) {
    auto it = lae_by_bus.find(bus);
    if (it == lae_by_bus.end() || it->second.status == RateStatus::Undefined) {
      if (mw > 0.0) {
        fail(ErrorKind::Validation, "no traced rate for bus \"" + bus + "\" with demand");
      }
      continue;
    }
    total += it->second.rate * mw;
  }
  return total;
}

RegionReport aggregate_regions(const TraceResult& t, const CondensedGraph& cg,
                               const Network& net) {
  struct Acc {
    double demand = 0.0;
    double emissions = 0.0;
    std::uint64_t population = 0;
    bool has_population = false;
  };
  std::map<std::string, Acc> acc;

  for (int b = 0; b < cg.original_n_buses; ++b) {
    const Bus& bus = net.buses[b];
    Acc& a = acc[bus.region.value_or("unassigned")];
    const double d = cg.original_demand[b];
    const int v = cg.node_to_super[b];
    a.demand += d;
    if (t.status[v] != RateStatus::Undefined) {
      a.emissions += t.delta[v] * d;
    }
    if (bus.population) {
      a.population += *bus.population;
      a.has_population = true;
    }
  }

  RegionReport report;
  report.rows.reserve(acc.size());
  for (const auto& [region, a] : acc) {
    RegionRow row;
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
  return report;
}

SeriesMetrics series_metrics(std::span<const double> actual,
                             std::span<const double> estimated) {
  if (actual.size() != estimated.size()) {
    fail(ErrorKind::Degenerate, "series lengths differ: " + std::to_string(actual.size()) +
                                    " vs " + std::to_string(estimated.size()));
  }
  if (actual.empty()) {
    fail(ErrorKind::Degenerate, "empty series");
  }

  SeriesMetrics m;
  m.n = actual.size();
  double abs_err_sum = 0.0, abs_actual_sum = 0.0, rel_sum = 0.0;
  bool any_zero_actual = false;
  for (size_t i = 0; i < actual.size(); ++i) {
    const double err = std::abs(actual[i] - estimated[i]);
    abs_err_sum += err;
    abs_actual_sum += std::abs(actual[i]);
    if (actual[i] == 0.0) {
      any_zero_actual = true;
    } else {
      rel_sum += err / std::abs(actual[i]);
    }
  }
  if (!any_zero_actual) m.mape = rel_sum / static_cast<double>(m.n);
  if (abs_actual_sum > 0.0) m.wmape = abs_err_sum / abs_actual_sum;
  return m;
}

std::map<std::string, double> allocate_renewables(
    const std::map<std::string, double>& full_loads_mw, const TraceResult& net_trace,
    const CondensedGraph& net_cg, const Tolerance& tol) {
  // Non-renewable contribution at a bus is its net-baseline demand times the
  // trace row sum (1 when traced, 0 when the bus saw no power).
  std::map<std::string, int> bus_index;
  for (int b = 0; b < net_cg.original_n_buses; ++b) {
    bus_index[net_cg.original_ids[b]] = b;
  }

  std::map<std::string, double> shares;
  std::vector<char> seen(net_cg.original_n_buses, 0);
  for (const auto& [bus, full] : full_loads_mw) {
    auto it = bus_index.find(bus);
    if (it == bus_index.end()) {
      fail(ErrorKind::Validation, "full load references bus \"" + bus +
                                      "\" absent from the baseline trace");
    }
    seen[it->second] = 1;
    const int v = net_cg.node_to_super[it->second];
    double row_sum = 0.0;
    for (double f : net_trace.row_fractions(v)) row_sum += f;
    const double contribution = net_cg.original_demand[it->second] * row_sum;
    const double share = full - contribution;
    if (share < -tol.threshold(full, contribution)) {
      fail(ErrorKind::Validation, "bus \"" + bus + "\": non-renewable contribution " +
                                      format_g9(contribution) + " MW exceeds full load " +
                                      format_g9(full) + " MW (inconsistent baseline)");
    }
    shares[bus] = std::max(0.0, share);
  }
  for (int b = 0; b < net_cg.original_n_buses; ++b) {
    if (!seen[b] && net_cg.original_demand[b] > tol.abs_mw) {
      fail(ErrorKind::Validation, "baseline serves bus \"" + net_cg.original_ids[b] +
                                      "\" with no full-load entry");
    }
  }
  return shares;
}

double fit_import_rate(std::span<const std::pair<double, double>> mw_tonnes_pairs) {
  if (mw_tonnes_pairs.size() < 2) {
    fail(ErrorKind::Degenerate, "import fit needs at least 2 data points");
  }
  double pe = 0.0, pp = 0.0;
  for (const auto& [p, e] : mw_tonnes_pairs) {
    pe += p * e;
    pp += p * p;
  }
  if (pp == 0.0) {
    fail(ErrorKind::Degenerate, "import fit is degenerate: all power values are zero");
  }
  return pe / pp;
}

// ---------------------------------------------------------------------------
// Emitters
// ---------------------------------------------------------------------------

void write_region_csv(const RegionReport& report, std::ostream& out) {
  out << "region,demand_mw,emissions_t,rate_t_per_mwh,per_capita\n";
  for (const RegionRow& r : report.rows) {
    out << r.region << ',' << format_g9(r.demand_mw) << ',' << format_g9(r.emissions_t)
        << ',';
    if (r.rate_t_per_mwh) out << format_g9(*r.rate_t_per_mwh);
    out << ',';
    if (r.per_capita) out << format_g9(*r.per_capita);
    out << '\n';
  }
}

json region_geojson(const RegionReport& report, const json& boundaries) {
  if (!boundaries.is_object() || boundaries.value("type", "") != "FeatureCollection") {
    fail(ErrorKind::Parse, "boundaries file is not a GeoJSON FeatureCollection");
  }
  std::map<std::string, const RegionRow*> by_region;
  for (const RegionRow& r : report.rows) by_region[r.region] = &r;

  json out = boundaries;
  for (json& feature : out["features"]) {
    if (!feature.contains("properties") || !feature["properties"].is_object()) {
      feature["properties"] = json::object();
    }
    json& props = feature["properties"];
    std::string region;
    for (const char* key : {"region", "id", "name"}) {
      if (props.contains(key) && props[key].is_string()) {
        region = props[key].get<std::string>();
        break;
      }
    }
    auto it = by_region.find(region);
    if (it == by_region.end()) continue;
    const RegionRow& r = *it->second;
    props["region"] = r.region;
    props["demand_mw"] = round9(r.demand_mw);
    props["emissions_t"] = round9(r.emissions_t);
    props["rate_t_per_mwh"] = r.rate_t_per_mwh ? json(round9(*r.rate_t_per_mwh)) : json();
    props["per_capita"] = r.per_capita ? json(round9(*r.per_capita)) : json();
  }
  return out;
}

json metrics_to_json(const SeriesMetrics& m) {
  return json{{"mape", m.mape ? json(round9(*m.mape)) : json()},
              {"wmape", m.wmape ? json(round9(*m.wmape)) : json()},
              {"n", m.n}};
}

}  // namespace gridcarbon
