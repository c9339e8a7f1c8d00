#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gridcarbon/error.hpp"

#include "json.hpp"

namespace gridcarbon {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Fuel types and emission rates
// ---------------------------------------------------------------------------

enum class FuelType : std::uint8_t {
  Coal,
  PetroleumLiquids,
  NaturalGas,
  Nuclear,
  Hydro,
  Biomass,
  Wind,
  Solar,
  Geothermal,
  OtherImport,
};

enum class FuelCategory : std::uint8_t { Fossil, LowCarbon, Renewable, Mix };

constexpr int kNumFuelTypes = 10;

const char* to_string(FuelType fuel);
FuelType fuel_from_string(std::string_view name);  // throws on unknown names
FuelCategory fuel_category(FuelType fuel);
bool is_renewable(FuelType fuel);

/// Fuel type -> emission rate in metric tonnes CO2 per MWh.
struct EmissionTable {
  std::map<FuelType, double> rates;

  /// Built-in table: EIA-derived per-fuel rates.
  static EmissionTable defaults();

  bool has(FuelType fuel) const { return rates.count(fuel) != 0; }
  double rate(FuelType fuel) const;  // throws on missing entry
};

/// `fuel,rate_t_per_mwh` rows merged onto the built-in defaults.
EmissionTable parse_emission_table(const std::filesystem::path& csv_path);

// ---------------------------------------------------------------------------
// Static network
// ---------------------------------------------------------------------------

struct Bus {
  std::string id;
  std::optional<std::string> region;
  std::optional<std::uint64_t> population;

  bool operator==(const Bus&) const = default;
};

struct Generator {
  std::string id;
  std::string bus_id;
  FuelType fuel = FuelType::OtherImport;
  double capacity_mw = 0.0;
  std::optional<double> rate_override;  // t CO2/MWh, wins over the table

  bool operator==(const Generator&) const = default;
};

struct Line {
  std::string id;
  std::string from_bus;
  std::string to_bus;
  std::optional<double> reactance_pu;   // only the synth module reads this
  std::optional<double> flow_limit_mw;

  bool operator==(const Line&) const = default;
};

/// Immutable after construction. Element vectors are sorted by id, which is
/// also the canonical serialization order.
struct Network {
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Line> lines;

  std::unordered_map<std::string, int> bus_index;
  std::unordered_map<std::string, int> gen_index;
  std::unordered_map<std::string, int> line_index;

  // Resolved references, aligned with lines/generators.
  std::vector<int> line_from_idx, line_to_idx;
  std::vector<int> gen_bus_idx;

  int bus_of(const std::string& id) const {
    auto it = bus_index.find(id);
    return it == bus_index.end() ? -1 : it->second;
  }
  int gen_of(const std::string& id) const {
    auto it = gen_index.find(id);
    return it == gen_index.end() ? -1 : it->second;
  }
  int line_of(const std::string& id) const {
    auto it = line_index.find(id);
    return it == line_index.end() ? -1 : it->second;
  }

  bool operator==(const Network& o) const {
    return buses == o.buses && generators == o.generators && lines == o.lines;
  }
};

/// Sorts, indexes and checks invariants: unique ids, endpoints exist and
/// differ, no duplicate unordered bus pair, generator buses exist.
Network make_network(std::vector<Bus> buses, std::vector<Generator> generators,
                     std::vector<Line> lines);

// ---------------------------------------------------------------------------
// Snapshot: one timestamp's solved state
// ---------------------------------------------------------------------------

/// Signed line flow, positive from->to. `recv` is the optional receiving-end
/// magnitude measured on the same convention.
struct LineFlow {
  double send = 0.0;
  std::optional<double> recv;

  bool operator==(const LineFlow&) const = default;
};

/// Source injected at a bus that is not a modeled generator (converted
/// negative load, or a slack import added by the orient step).
struct ExtraSource {
  std::string id;
  std::string bus_id;
  double p_mw = 0.0;
  FuelType fuel = FuelType::Solar;

  bool operator==(const ExtraSource&) const = default;
};

struct Snapshot {
  std::string timestamp;
  std::map<std::string, double> loads;     // bus -> MW, >= 0
  std::map<std::string, double> dispatch;  // generator -> MW, >= 0
  std::map<std::string, LineFlow> flows;   // line -> signed flow
  std::map<std::string, double> line_loss;  // line -> MW, charged at receiving bus
  std::vector<ExtraSource> extra_sources;

  double load(const std::string& bus_id) const {
    auto it = loads.find(bus_id);
    return it == loads.end() ? 0.0 : it->second;
  }

  bool operator==(const Snapshot&) const = default;
};

struct SnapshotOptions {
  bool allow_negative_loads = false;
  FuelType negative_load_fuel = FuelType::Solar;
};

// ---------------------------------------------------------------------------
// Parsing and serialization
// ---------------------------------------------------------------------------

Network parse_network(const json& doc, const std::string& context = "network");
Network parse_network_file(const std::filesystem::path& path);

Snapshot parse_snapshot(const json& doc, const Network& net,
                        const SnapshotOptions& opts = {},
                        const std::string& context = "snapshot");

/// CSV alternative: `timestamp,<ts>` once, then `load,<bus>,<mw>`,
/// `dispatch,<gen>,<mw>` and `flow,<line>,<send>[,<recv>]` rows in any order.
Snapshot parse_snapshot_csv(const std::filesystem::path& path, const Network& net,
                            const SnapshotOptions& opts = {});

/// Dispatches on the extension: .csv rows or the JSON document format.
Snapshot parse_snapshot_file(const std::filesystem::path& path,
                             const Network& net,
                             const SnapshotOptions& opts = {});

json network_to_json(const Network& net);
json snapshot_to_json(const Snapshot& snap);

// ---------------------------------------------------------------------------
// Snapshot validation
// ---------------------------------------------------------------------------

/// Dual tolerance: a residual at a bus is flagged when it exceeds
/// abs_mw + rel * max(nodal inflow, nodal outflow).
struct Tolerance {
  double abs_mw = 1e-6;
  double rel = 1e-6;

  double threshold(double inflow, double outflow) const {
    return abs_mw + rel * std::max(inflow, outflow);
  }
};

struct BusResidual {
  std::string bus_id;
  double residual_mw = 0.0;  // inflow + gen - outflow - load
  bool flagged = false;
};

struct ValidationReport {
  std::vector<BusResidual> residuals;  // one per bus, network order
  double max_abs_residual = 0.0;
  std::vector<std::string> violations;  // bus ids beyond tolerance

  bool ok() const { return violations.empty(); }
};

/// Nodal active-power balance check. Inflow uses the receiving-end value when
/// a line carries a [send, recv] pair, so line losses stay on the line.
ValidationReport validate_snapshot(const Network& net, const Snapshot& snap,
                                   const Tolerance& tol = {});

json validation_report_to_json(const ValidationReport& report);

/// Override if present, else table rate. Throws on a fuel with no entry.
double emission_rate(const EmissionTable& table, const Generator& gen);

}  // namespace gridcarbon
