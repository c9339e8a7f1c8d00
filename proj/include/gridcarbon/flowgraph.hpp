#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gridcarbon/model.hpp"

namespace gridcarbon {

// ---------------------------------------------------------------------------
// Loss policy
// ---------------------------------------------------------------------------

enum class LossPolicyKind : std::uint8_t {
  Strict,           // any residual beyond tolerance is an error
  AbsorbAsDemand,   // positive residual becomes extra demand at the bus
  SlackSource,      // negative residual becomes a virtual import generator
};

struct LossPolicy {
  LossPolicyKind kind = LossPolicyKind::AbsorbAsDemand;
  FuelType slack_fuel = FuelType::OtherImport;

  static LossPolicy strict() { return {LossPolicyKind::Strict, FuelType::OtherImport}; }
  static LossPolicy absorb() { return {LossPolicyKind::AbsorbAsDemand, FuelType::OtherImport}; }
  static LossPolicy slack(FuelType fuel = FuelType::OtherImport) {
    return {LossPolicyKind::SlackSource, fuel};
  }
};

const char* to_string(LossPolicyKind kind);

// ---------------------------------------------------------------------------
// Directed flow graph
// ---------------------------------------------------------------------------

enum class SourceKind : std::uint8_t { Generator, NegativeLoad, Slack };

/// One in-degree-zero virtual node per dispatching generator (and per extra
/// source). Its single edge injects p_mw into the attached bus.
struct SourceInfo {
  std::string id;       // generator id, or "~negload:.."/"~slack:.."
  int node = -1;        // node index of the virtual source
  int bus = -1;         // node index of the bus it feeds
  double p_mw = 0.0;
  FuelType fuel = FuelType::OtherImport;
  std::optional<double> rate_override;
  SourceKind kind = SourceKind::Generator;
};

struct FlowEdge {
  int src = -1;
  int dst = -1;
  double flow_mw = 0.0;  // strictly positive
  int line = -1;         // index into Network::lines, or -1
  int source = -1;       // index into sources, or -1
};

/// Flow-oriented snapshot graph. Nodes 0..n_buses-1 are buses in Network
/// order; the remainder are virtual source nodes. After construction every
/// non-source node satisfies inflow == outflow + demand exactly.
struct DirectedFlowGraph {
  std::vector<std::string> node_ids;
  int n_buses = 0;
  std::vector<FlowEdge> edges;     // sorted by origin id
  std::vector<double> demand;      // effective demand per node (loss-adjusted)
  std::vector<SourceInfo> sources;

  // CSR adjacency over edge indices, built by build_adjacency().
  std::vector<int> in_off, in_edge, out_off, out_edge;
  // Endpoint-only copies aligned with in_edge/out_edge; topology traversals
  // read these instead of chasing into the edge structs.
  std::vector<int> in_src, out_dst;

  int node_count() const { return static_cast<int>(node_ids.size()); }
  bool is_source_node(int v) const { return v >= n_buses; }

  std::span<const int> in_edges(int v) const {
    return {in_edge.data() + in_off[v], static_cast<size_t>(in_off[v + 1] - in_off[v])};
  }
  std::span<const int> out_edges(int v) const {
    return {out_edge.data() + out_off[v], static_cast<size_t>(out_off[v + 1] - out_off[v])};
  }
  int in_degree(int v) const { return in_off[v + 1] - in_off[v]; }
  int out_degree(int v) const { return out_off[v + 1] - out_off[v]; }

  double total_inflow(int v) const {
    double s = 0.0;
    for (int e : in_edges(v)) s += edges[e].flow_mw;
    return s;
  }
  double total_outflow(int v) const {
    double s = 0.0;
    for (int e : out_edges(v)) s += edges[e].flow_mw;
    return s;
  }

  /// Origin id of an edge: physical line id or virtual source id.
  const std::string& origin_id(const Network& net, const FlowEdge& e) const;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Collapses [send, recv] pairs: directed flow keeps the sending-end
/// magnitude, the difference is recorded as line loss charged at the
/// receiving bus. Throws when |recv| exceeds |send| beyond tolerance.
Snapshot reconcile_dual_end_flows(const Network& net, const Snapshot& snap,
                                  const Tolerance& tol = {});

/// Builds the directed flow graph: drops |flow| < eps_mw, reverses
/// negative-flow lines, attaches dispatching generators as virtual sources,
/// and reconciles per-bus residuals under the loss policy so that balance
/// holds exactly at every non-source node.
DirectedFlowGraph orient(const Network& net, const Snapshot& snap,
                         double eps_mw = 1e-6, const LossPolicy& policy = {},
                         const Tolerance& tol = {});

/// Node id -> (in_degree, out_degree).
std::map<std::string, std::pair<int, int>> degree_tables(const DirectedFlowGraph& g);

/// Recomputes the CSR tables from the edge list.
void build_adjacency(DirectedFlowGraph& g);

/// Sets demand = inflow - outflow at every non-source node, scaling outflows
/// down where solver dust left outflow above inflow, so the balance identity
/// holds exactly rather than within tolerance. Edges scaled to zero are
/// removed.
void settle_exact_demand(DirectedFlowGraph& g);

/// Checks structural invariants (positive flows, consistent adjacency, exact
/// nodal balance). Throws ErrorKind::Internal on violation; used by tests and
/// after condensation.
void check_flow_invariants(const DirectedFlowGraph& g, double balance_eps = 0.0);

/// Graphviz dump for visual inspection.
void write_dot(const DirectedFlowGraph& g, const Network& net, std::ostream& out);

}  // namespace gridcarbon
