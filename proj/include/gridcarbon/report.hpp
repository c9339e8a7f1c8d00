#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridcarbon/model.hpp"
#include "gridcarbon/tracer.hpp"

namespace gridcarbon {

// ---------------------------------------------------------------------------
// System totals and regional aggregation
// ---------------------------------------------------------------------------

/// Sum of rate * effective demand over traced nodes, t CO2/h.
double system_emissions(const TraceResult& t, const CondensedGraph& cg);

/// Literal form over an expanded per-bus rate map and a demand map.
double system_emissions(const std::map<std::string, LaeEntry>& lae_by_bus,
                        const std::map<std::string, double>& demands_mw);

struct RegionRow {
  std::string region;
  double demand_mw = 0.0;
  double emissions_t = 0.0;  // t CO2/h
  std::optional<double> rate_t_per_mwh;  // emissions/demand where demand > 0
  std::optional<std::uint64_t> population;
  std::optional<double> per_capita;  // t CO2/h per person, needs population > 0
};

struct RegionReport {
  std::vector<RegionRow> rows;  // sorted by region name
  double system_emissions_t = 0.0;
  double system_demand_mw = 0.0;
};

/// Buses without a region tag aggregate under "unassigned".
RegionReport aggregate_regions(const TraceResult& t, const CondensedGraph& cg,
                               const Network& net);

// ---------------------------------------------------------------------------
// Series accuracy metrics
// ---------------------------------------------------------------------------

struct SeriesMetrics {
  std::optional<double> mape;   // undefined when any actual value is zero
  std::optional<double> wmape;  // undefined when sum |actual| is zero
  std::size_t n = 0;
};

SeriesMetrics series_metrics(std::span<const double> actual,
                             std::span<const double> estimated);

// ---------------------------------------------------------------------------
// Renewable allocation (net-baseline subtraction)
// ---------------------------------------------------------------------------

/// Per-bus renewable share: full load minus the summed non-renewable
/// contributions from the trace of the non-renewable-only snapshot. Shares
/// land in [0, full]; a share negative beyond tolerance means the baseline
/// does not belong to these loads.
std::map<std::string, double> allocate_renewables(
    const std::map<std::string, double>& full_loads_mw, const TraceResult& net_trace,
    const CondensedGraph& net_cg, const Tolerance& tol = {});

// ---------------------------------------------------------------------------
// Import-rate fit
// ---------------------------------------------------------------------------

/// Least-squares slope through the origin of emissions on power:
/// rate = sum(p*e) / sum(p^2), t CO2/MWh.
double fit_import_rate(std::span<const std::pair<double, double>> mw_tonnes_pairs);

// ---------------------------------------------------------------------------
// Emitters
// ---------------------------------------------------------------------------

void write_region_csv(const RegionReport& report, std::ostream& out);

/// Attaches region metrics as feature properties on a user-supplied GeoJSON
/// FeatureCollection; geometry is passed through untouched. Features match
/// regions by their "region", "id" or "name" property.
json region_geojson(const RegionReport& report, const json& boundaries);

json metrics_to_json(const SeriesMetrics& m);

}  // namespace gridcarbon
