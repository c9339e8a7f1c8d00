#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridcarbon/model.hpp"
#include "gridcarbon/scc.hpp"

namespace gridcarbon {

enum class RateStatus : std::uint8_t {
  Defined,        // positive demand, traced mix
  ZeroDemandMix,  // no demand, rate of the power flowing through
  Undefined,      // isolated node: no demand, no inflow
};

const char* to_string(RateStatus s);

struct TraceOptions {
  /// Fractions below this are dropped during propagation and the remainder
  /// renormalized; bounds row growth on deep graphs.
  double prune = 1e-12;
  /// Test hook: when set, ready nodes pop in seeded random order instead of
  /// FIFO. The result is invariant; tests rely on that.
  std::optional<std::uint64_t> pop_order_seed;
};

/// Sparse generator share rows per condensed node, plus the per-node average
/// emission rate. Row entries are sorted by source index and sum to 1 for
/// every node with inflow. Rows live in one arena addressed through
/// row_off/row_len; a node with a single inflow shares its tail's range, so
/// ranges are not disjoint.
struct TraceResult {
  std::vector<std::size_t> row_off;       // node -> arena start
  std::vector<std::size_t> row_len;       // node -> entry count
  std::vector<std::uint32_t> row_source;  // arena: source index
  std::vector<double> row_frac;           // arena: fraction in [0, 1]
  std::vector<double> delta;              // t CO2/MWh; 0 when Undefined
  std::vector<RateStatus> status;
  std::vector<double> gamma;              // resolved rate per source

  int node_count() const { return static_cast<int>(delta.size()); }
  std::span<const std::uint32_t> row_sources(int v) const {
    return {row_source.data() + row_off[v], row_len[v]};
  }
  std::span<const double> row_fractions(int v) const {
    return {row_frac.data() + row_off[v], row_len[v]};
  }
};

/// Kahn-ordered propagation over the condensed DAG: each node's generator
/// shares are the flow-weighted average of its inflow edges' shares, every
/// outflow edge inherits the node's shares, and the average emission rate is
/// the dot product of the shares with the per-source rates.
TraceResult trace(const CondensedGraph& cg, const EmissionTable& table,
                  const TraceOptions& opts = {});

struct LaeEntry {
  double rate = 0.0;
  RateStatus status = RateStatus::Undefined;
};

/// Average emission rate at one original bus.
LaeEntry lae(const TraceResult& t, const CondensedGraph& cg, const Network& net,
             const std::string& bus_id);

/// Rates for every condensed node (supernodes appear as "scc:<bus>").
std::map<std::string, LaeEntry> lae_vector(const TraceResult& t, const CondensedGraph& cg);

/// Rates for every original bus: members of a supernode share its rate,
/// singletons keep their own.
std::map<std::string, LaeEntry> expand_scc(const TraceResult& t, const CondensedGraph& cg);

/// Generator contributions in MW serving one original bus's effective demand.
std::vector<std::pair<std::string, double>> bus_contributions_mw(
    const TraceResult& t, const CondensedGraph& cg, const Network& net,
    const std::string& bus_id);

/// GLDF row of an original line that survived orientation: the shares of the
/// supernode its tail belongs to.
std::map<std::string, double> line_gldf(const TraceResult& t, const CondensedGraph& cg,
                                        const DirectedFlowGraph& original, int edge_index);

// ---------------------------------------------------------------------------
// Marginal emission rate from a snapshot pair
// ---------------------------------------------------------------------------

struct LmeResult {
  std::string bus_id;
  double delta_mw = 0.0;
  double base_emissions_t = 0.0;       // t CO2/h
  double perturbed_emissions_t = 0.0;  // t CO2/h
  double mu = 0.0;                     // t CO2/MWh
};

/// Total-emission difference over load difference. Requires the pair to
/// differ in load at exactly one bus unless allow_multi is set, in which
/// case the denominator is the summed load change.
LmeResult lme(const Network& net, const EmissionTable& table, const Snapshot& base,
              const Snapshot& perturbed, const std::string& bus_id,
              bool allow_multi = false);

/// Total emissions of a snapshot from dispatch alone.
double snapshot_emissions(const Network& net, const EmissionTable& table,
                          const Snapshot& snap);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

struct TraceJsonOptions {
  double gndf_min_fraction = 1e-9;
  bool include_gldf = false;
  std::string loss_policy = "absorb";
  double eps_mw = 1e-6;
};

json trace_to_json(const TraceResult& t, const CondensedGraph& cg, const Network& net,
                   const Snapshot& snap, const DirectedFlowGraph& original,
                   const TraceJsonOptions& opts = {});

json sccs_to_json(const CondensedGraph& cg);

}  // namespace gridcarbon
