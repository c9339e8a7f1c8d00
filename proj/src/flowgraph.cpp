#include "gridcarbon/flowgraph.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gridcarbon/util.hpp"

namespace gridcarbon {

const char* to_string(LossPolicyKind kind) {
  switch (kind) {
    case LossPolicyKind::Strict: return "strict";
    case LossPolicyKind::AbsorbAsDemand: return "absorb";
    case LossPolicyKind::SlackSource: return "slack";
  }
  return "unknown";
}

const std::string& DirectedFlowGraph::origin_id(const Network& net,
                                                const FlowEdge& e) const {
  return e.line >= 0 ? net.lines[e.line].id : sources[e.source].id;
}

// ---------------------------------------------------------------------------
// Dual-end reconciliation
// ---------------------------------------------------------------------------

Snapshot reconcile_dual_end_flows(const Network& net, const Snapshot& snap,
                                  const Tolerance& tol) {
  Snapshot out = snap;
  for (auto& [line_id, f] : out.flows) {
    if (!f.recv) continue;
    double send_mag = std::abs(f.send);
    double recv_mag = std::abs(*f.recv);
    if (recv_mag > send_mag + tol.threshold(send_mag, recv_mag)) {
      fail(ErrorKind::Infeasible,
           "line \"" + line_id + "\": receiving end " + format_g9(recv_mag) +
               " MW exceeds sending end " + format_g9(send_mag) + " MW");
    }
    double loss = std::max(0.0, send_mag - recv_mag);
    if (loss > 0.0) out.line_loss[line_id] += loss;
    f.recv.reset();
  }
  (void)net;
  return out;
}

// ---------------------------------------------------------------------------
// Adjacency and invariants
// ---------------------------------------------------------------------------

void build_adjacency(DirectedFlowGraph& g) {
  const int n = g.node_count();
  const int m = static_cast<int>(g.edges.size());
  g.in_off.assign(n + 1, 0);
  g.out_off.assign(n + 1, 0);
  for (const FlowEdge& e : g.edges) {
    ++g.in_off[e.dst + 1];
    ++g.out_off[e.src + 1];
  }
  for (int v = 0; v < n; ++v) {
    g.in_off[v + 1] += g.in_off[v];
    g.out_off[v + 1] += g.out_off[v];
  }
  g.in_edge.assign(m, 0);
  g.out_edge.assign(m, 0);
  g.in_src.assign(m, 0);
  g.out_dst.assign(m, 0);
  std::vector<int> in_pos(g.in_off.begin(), g.in_off.end() - 1);
  std::vector<int> out_pos(g.out_off.begin(), g.out_off.end() - 1);
  for (int e = 0; e < m; ++e) {
    const int ip = in_pos[g.edges[e].dst]++;
    const int op = out_pos[g.edges[e].src]++;
    g.in_edge[ip] = e;
    g.out_edge[op] = e;
    g.in_src[ip] = g.edges[e].src;
    g.out_dst[op] = g.edges[e].dst;
  }
}

void check_flow_invariants(const DirectedFlowGraph& g, double balance_eps) {
  for (const FlowEdge& e : g.edges) {
    if (!(e.flow_mw > 0.0)) {
      fail(ErrorKind::Internal, "flow graph edge with non-positive flow");
    }
    if (e.src < 0 || e.src >= g.node_count() || e.dst < 0 || e.dst >= g.node_count()) {
      fail(ErrorKind::Internal, "flow graph edge with out-of-range endpoint");
    }
  }
  size_t in_total = 0, out_total = 0;
  for (int v = 0; v < g.node_count(); ++v) {
    in_total += g.in_edges(v).size();
    out_total += g.out_edges(v).size();
    for (int e : g.in_edges(v)) {
      if (g.edges[e].dst != v) fail(ErrorKind::Internal, "in-adjacency mismatch");
    }
    for (int e : g.out_edges(v)) {
      if (g.edges[e].src != v) fail(ErrorKind::Internal, "out-adjacency mismatch");
    }
    if (g.is_source_node(v)) {
      if (g.in_degree(v) != 0) fail(ErrorKind::Internal, "source node with inflow");
      if (g.demand[v] != 0.0) fail(ErrorKind::Internal, "source node with demand");
    } else {
      double gap = g.total_inflow(v) - g.total_outflow(v) - g.demand[v];
      if (std::abs(gap) > balance_eps) {
        fail(ErrorKind::Internal, "node \"" + g.node_ids[v] + "\" balance gap " +
                                      format_g9(gap) + " MW");
      }
      if (g.demand[v] < 0.0) fail(ErrorKind::Internal, "negative demand");
    }
  }
  if (in_total != g.edges.size() || out_total != g.edges.size()) {
    fail(ErrorKind::Internal, "adjacency tables do not cover the edge list");
  }
}

void settle_exact_demand(DirectedFlowGraph& g) {
  // Per-node sums accumulated in edge-index order, which matches the CSR
  // gather order, so the final demand is bit-identical to what the balance
  // check recomputes.
  const int n = g.node_count();
  std::vector<double> in_sum(n), out_sum(n);
  auto sweep = [&] {
    std::fill(in_sum.begin(), in_sum.end(), 0.0);
    std::fill(out_sum.begin(), out_sum.end(), 0.0);
    for (const FlowEdge& e : g.edges) {
      out_sum[e.src] += e.flow_mw;
      in_sum[e.dst] += e.flow_mw;
    }
  };
  sweep();

  // Scale down the outflows of any bus whose inflow fell short (solver dust,
  // dropped edges) until inflow >= outflow holds everywhere.
  bool any_zeroed = false;
  for (int pass = 0;; ++pass) {
    bool dirty = false;
    for (int v = 0; v < g.n_buses; ++v) {
      if (out_sum[v] <= in_sum[v] || g.out_degree(v) == 0) continue;
      double s = in_sum[v] <= 0.0 ? 0.0 : in_sum[v] / out_sum[v];
      for (int e : g.out_edges(v)) {
        g.edges[e].flow_mw *= s;
        if (g.edges[e].flow_mw == 0.0) any_zeroed = true;
      }
      dirty = true;
    }
    if (!dirty) break;
    if (pass == 63) fail(ErrorKind::Internal, "dust reconciliation did not converge");
    sweep();
  }
  if (any_zeroed) {
    std::vector<FlowEdge> kept;
    kept.reserve(g.edges.size());
    for (const FlowEdge& e : g.edges) {
      if (e.flow_mw > 0.0) kept.push_back(e);
    }
    g.edges = std::move(kept);
    build_adjacency(g);
    sweep();
  }
  if (g.demand.size() != static_cast<size_t>(g.node_count())) {
    g.demand.assign(n, 0.0);
  }
  for (int v = 0; v < n; ++v) {
    g.demand[v] = g.is_source_node(v) ? 0.0 : std::max(0.0, in_sum[v] - out_sum[v]);
  }
}

// ---------------------------------------------------------------------------
// Orientation
// ---------------------------------------------------------------------------

DirectedFlowGraph orient(const Network& net, const Snapshot& snap, double eps_mw,
                         const LossPolicy& policy, const Tolerance& tol) {
  const Snapshot* use = &snap;
  Snapshot reconciled;
  for (const auto& [id, f] : snap.flows) {
    if (f.recv) {
      reconciled = reconcile_dual_end_flows(net, snap, tol);
      use = &reconciled;
      break;
    }
  }
  const Snapshot& s = *use;
  const int n_buses = static_cast<int>(net.buses.size());

  DirectedFlowGraph g;
  g.n_buses = n_buses;
  g.node_ids.reserve(n_buses);
  for (const Bus& b : net.buses) g.node_ids.push_back(b.id);

  // Snapshot maps iterate in id order and the network vectors are id-sorted,
  // so references resolve by lockstep scan instead of per-element hashing.
  const auto lockstep = [](auto& cursor, int limit, auto id_at, const std::string& id,
                           const char* what) {
    while (cursor < limit && id_at(cursor) < id) ++cursor;
    if (cursor >= limit || id_at(cursor) != id) {
      fail(ErrorKind::Validation,
           std::string(what) + " references unknown id \"" + id + "\"");
    }
    return cursor;
  };
  const auto line_id_at = [&](int i) -> const std::string& { return net.lines[i].id; };
  const auto bus_id_at = [&](int i) -> const std::string& { return net.buses[i].id; };
  const auto gen_id_at = [&](int i) -> const std::string& { return net.generators[i].id; };
  const int n_lines = static_cast<int>(net.lines.size());
  const int n_gens = static_cast<int>(net.generators.size());

  // Physical edges, oriented positive. snap.flows iterates in line-id order,
  // so this run is already sorted by origin id.
  std::vector<FlowEdge> physical;
  physical.reserve(s.flows.size());
  std::vector<double> line_in(n_buses, 0.0), line_out(n_buses, 0.0);
  int line_cursor = 0;
  for (const auto& [line_id, f] : s.flows) {
    double mag = std::abs(f.send);
    if (mag < eps_mw) continue;
    int li = lockstep(line_cursor, n_lines, line_id_at, line_id, "flow");
    int from = net.line_from_idx[li];
    int to = net.line_to_idx[li];
    FlowEdge e;
    e.src = f.send >= 0.0 ? from : to;
    e.dst = f.send >= 0.0 ? to : from;
    e.flow_mw = mag;
    e.line = li;
    physical.push_back(e);
    line_out[e.src] += mag;
    line_in[e.dst] += mag;
  }

  // Baseline demand: load plus loss charged at the receiving bus.
  std::vector<double> base_demand(n_buses, 0.0);
  int bus_cursor = 0;
  for (const auto& [bus_id, mw] : s.loads) {
    base_demand[lockstep(bus_cursor, n_buses, bus_id_at, bus_id, "load")] += mw;
  }
  line_cursor = 0;
  for (const auto& [line_id, loss] : s.line_loss) {
    int li = lockstep(line_cursor, n_lines, line_id_at, line_id, "loss");
    auto it = s.flows.find(line_id);
    bool forward = it == s.flows.end() || it->second.send >= 0.0;
    base_demand[forward ? net.line_to_idx[li] : net.line_from_idx[li]] += loss;
  }

  // Virtual sources from dispatch and extra sources.
  std::vector<SourceInfo> sources;
  sources.reserve(s.dispatch.size() + s.extra_sources.size());
  std::vector<double> gen_in(n_buses, 0.0);
  int gen_cursor = 0;
  for (const auto& [gen_id, p] : s.dispatch) {
    if (p <= 0.0) continue;
    int gi = lockstep(gen_cursor, n_gens, gen_id_at, gen_id, "dispatch");
    const Generator& gen = net.generators[gi];
    SourceInfo src;
    src.id = gen_id;
    src.bus = net.gen_bus_idx[gi];
    src.p_mw = p;
    src.fuel = gen.fuel;
    src.rate_override = gen.rate_override;
    src.kind = SourceKind::Generator;
    gen_in[src.bus] += p;
    sources.push_back(std::move(src));
  }
  for (const ExtraSource& ex : s.extra_sources) {
    if (ex.p_mw <= 0.0) continue;
    SourceInfo src;
    src.id = ex.id;
    src.bus = net.bus_of(ex.bus_id);
    if (src.bus < 0) fail(ErrorKind::Validation, "extra source references unknown bus \"" + ex.bus_id + "\"");
    src.p_mw = ex.p_mw;
    src.fuel = ex.fuel;
    src.kind = SourceKind::NegativeLoad;
    gen_in[src.bus] += ex.p_mw;
    sources.push_back(std::move(src));
  }

  // Residual pass: decide, per bus, what the loss policy does with the
  // imbalance that remains after edge drops.
  for (int v = 0; v < n_buses; ++v) {
    double inflow = line_in[v] + gen_in[v];
    double outflow = line_out[v] + base_demand[v];
    double r = inflow - outflow;
    double thr = tol.threshold(inflow, outflow);
    if (r < -thr) {
      if (policy.kind == LossPolicyKind::SlackSource) {
        SourceInfo src;
        src.id = "~slack:" + net.buses[v].id;
        src.bus = v;
        src.p_mw = -r;
        src.fuel = policy.slack_fuel;
        src.kind = SourceKind::Slack;
        sources.push_back(std::move(src));
      } else if (inflow == 0.0 && base_demand[v] > 0.0) {
        fail(ErrorKind::Infeasible, "bus \"" + net.buses[v].id +
                                        "\" has demand but no inflow and no generation");
      } else {
        fail(ErrorKind::Infeasible,
             "bus \"" + net.buses[v].id + "\" imbalance " + format_g9(r) +
                 " MW exceeds tolerance under " + to_string(policy.kind) + " policy");
      }
    } else if (r > thr && policy.kind == LossPolicyKind::Strict) {
      fail(ErrorKind::Infeasible, "bus \"" + net.buses[v].id + "\" imbalance " +
                                      format_g9(r) + " MW exceeds tolerance under strict policy");
    }
    // Within tolerance, or positive under absorb/slack: folded into demand below.
  }

  // Finalize nodes: sources sorted by id, appended after buses.
  std::sort(sources.begin(), sources.end(),
            [](const SourceInfo& a, const SourceInfo& b) { return a.id < b.id; });
  for (size_t i = 1; i < sources.size(); ++i) {
    if (sources[i].id == sources[i - 1].id) {
      fail(ErrorKind::Validation, "duplicate source id \"" + sources[i].id + "\"");
    }
  }
  std::vector<FlowEdge> virtual_edges;
  virtual_edges.reserve(sources.size());
  for (int si = 0; si < static_cast<int>(sources.size()); ++si) {
    sources[si].node = n_buses + si;
    g.node_ids.push_back("vg:" + sources[si].id);
    FlowEdge e;
    e.src = sources[si].node;
    e.dst = sources[si].bus;
    e.flow_mw = sources[si].p_mw;
    e.source = si;
    virtual_edges.push_back(e);
  }
  g.sources = std::move(sources);

  // Merge the two origin-sorted runs into one edge list sorted by origin id,
  // comparing via key arrays so the hot loop never chases into the structs.
  std::vector<std::string_view> phys_key, virt_key;
  phys_key.reserve(physical.size());
  for (const FlowEdge& e : physical) phys_key.emplace_back(net.lines[e.line].id);
  virt_key.reserve(virtual_edges.size());
  for (const FlowEdge& e : virtual_edges) virt_key.emplace_back(g.sources[e.source].id);

  g.edges.reserve(physical.size() + virtual_edges.size());
  size_t pi = 0, vi = 0;
  while (pi < phys_key.size() && vi < virt_key.size()) {
    // Lines win ties, matching a plain sort by (origin id, kind).
    if (phys_key[pi] <= virt_key[vi]) {
      g.edges.push_back(physical[pi++]);
    } else {
      g.edges.push_back(virtual_edges[vi++]);
    }
  }
  for (; pi < phys_key.size(); ++pi) g.edges.push_back(physical[pi]);
  for (; vi < virt_key.size(); ++vi) g.edges.push_back(virtual_edges[vi]);

  g.demand.assign(g.node_count(), 0.0);
  build_adjacency(g);

  // Exact balance: demand is inflow minus outflow, with dust handled by
  // outflow scaling when the difference is (sub-tolerance) negative.
  settle_exact_demand(g);

  for (int v = 0; v < n_buses; ++v) {
    if (g.demand[v] > 0.0 && g.in_degree(v) == 0) {
      fail(ErrorKind::Infeasible, "bus \"" + net.buses[v].id +
                                      "\" has demand but no inflow and no generation");
    }
  }
  return g;
}

std::map<std::string, std::pair<int, int>> degree_tables(const DirectedFlowGraph& g) {
  std::map<std::string, std::pair<int, int>> table;
  for (int v = 0; v < g.node_count(); ++v) {
    table[g.node_ids[v]] = {g.in_degree(v), g.out_degree(v)};
  }
  return table;
}

void write_dot(const DirectedFlowGraph& g, const Network& net, std::ostream& out) {
  out << "digraph flow {\n  rankdir=LR;\n";
  for (int v = 0; v < g.node_count(); ++v) {
    out << "  \"" << g.node_ids[v] << "\"";
    if (g.is_source_node(v)) {
      out << " [shape=invtriangle]";
    } else if (g.demand[v] > 0.0) {
      out << " [label=\"" << g.node_ids[v] << "\\nd=" << format_g9(g.demand[v]) << "\"]";
    }
    out << ";\n";
  }
  for (const FlowEdge& e : g.edges) {
    out << "  \"" << g.node_ids[e.src] << "\" -> \"" << g.node_ids[e.dst]
        << "\" [label=\"" << g.origin_id(net, e) << ": " << format_g9(e.flow_mw)
        << "\"];\n";
  }
  out << "}\n";
}

}  // namespace gridcarbon
