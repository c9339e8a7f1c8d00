#include "testutil.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "gridcarbon/error.hpp"

namespace gridcarbon::testutil {

DirectedFlowGraph make_graph(int n_buses,
                             const std::vector<std::pair<int, double>>& source_at_bus,
                             const std::vector<EdgeSpec>& bus_edges,
                             const std::vector<FuelType>& source_fuels) {
  DirectedFlowGraph g;
  g.n_buses = n_buses;
  for (int i = 0; i < n_buses; ++i) g.node_ids.push_back("n" + std::to_string(i));
  for (size_t s = 0; s < source_at_bus.size(); ++s) {
    SourceInfo src;
    src.id = "s" + std::to_string(s);
    src.node = n_buses + static_cast<int>(s);
    src.bus = source_at_bus[s].first;
    src.p_mw = source_at_bus[s].second;
    src.fuel = s < source_fuels.size() ? source_fuels[s] : FuelType::NaturalGas;
    g.node_ids.push_back("vg:" + src.id);
    g.sources.push_back(src);
  }
  for (const EdgeSpec& e : bus_edges) {
    g.edges.push_back(FlowEdge{e.src, e.dst, e.flow, -1, -1});
  }
  for (size_t s = 0; s < g.sources.size(); ++s) {
    g.edges.push_back(FlowEdge{g.sources[s].node, g.sources[s].bus,
                               g.sources[s].p_mw, -1, static_cast<int>(s)});
  }
  g.demand.assign(g.node_count(), 0.0);
  build_adjacency(g);
  settle_exact_demand(g);
  return g;
}

DirectedFlowGraph random_flow_dag(Rng& rng, int n_buses, int n_sources) {
  // Route injections forward through the index order; whatever a bus does not
  // forward becomes its demand.
  std::vector<std::pair<int, double>> sources;
  for (int s = 0; s < n_sources; ++s) {
    sources.emplace_back(static_cast<int>(rng.index(n_buses)), rng.uniform(10.0, 100.0));
  }
  std::vector<double> avail(n_buses, 0.0);
  for (auto& [bus, mw] : sources) avail[bus] += mw;

  std::vector<EdgeSpec> edges;
  std::vector<char> used(n_buses, 0);
  for (int i = 0; i < n_buses; ++i) {
    if (avail[i] <= 0.0) continue;
    if (i == n_buses - 1) continue;  // last bus absorbs everything
    int max_fanout = std::min(3, n_buses - 1 - i);
    int fanout = static_cast<int>(rng.index(max_fanout + 1));
    double budget = 0.9 * rng.u01();  // forwarded share, rest is demand
    std::fill(used.begin(), used.end(), 0);
    for (int k = 0; k < fanout; ++k) {
      int dst = i + 1 + static_cast<int>(rng.index(n_buses - 1 - i));
      if (used[dst]) continue;  // keep the graph free of parallel edges
      used[dst] = 1;
      double share = budget * rng.u01();
      budget -= share;
      double flow = avail[i] * share;
      if (flow <= 1e-9) continue;
      edges.push_back(EdgeSpec{i, dst, flow});
      avail[dst] += flow;
    }
  }
  return make_graph(n_buses, sources, edges);
}

DirectedFlowGraph random_digraph(Rng& rng, int n_nodes, double edge_prob) {
  DirectedFlowGraph g;
  g.n_buses = n_nodes;
  for (int i = 0; i < n_nodes; ++i) g.node_ids.push_back("n" + std::to_string(i));
  for (int i = 0; i < n_nodes; ++i) {
    for (int j = 0; j < n_nodes; ++j) {
      if (i != j && rng.u01() < edge_prob) {
        g.edges.push_back(FlowEdge{i, j, rng.uniform(0.1, 10.0), -1, -1});
      }
    }
  }
  g.demand.assign(n_nodes, 0.0);
  build_adjacency(g);
  return g;
}

bool inject_cycle(DirectedFlowGraph& g, Rng& rng, double c) {
  // Random walk along existing edges to find a directed path between buses.
  for (int attempt = 0; attempt < 50; ++attempt) {
    int start = static_cast<int>(rng.index(g.n_buses));
    std::vector<int> path_edges;
    std::vector<char> visited(g.node_count(), 0);
    int v = start;
    visited[v] = 1;
    while (true) {
      auto out = g.out_edges(v);
      if (out.empty()) break;
      int e = out[rng.index(out.size())];
      int w = g.edges[e].dst;
      if (visited[w]) break;
      path_edges.push_back(e);
      visited[w] = 1;
      v = w;
      if (rng.u01() < 0.3) break;
    }
    if (path_edges.empty() || v == start) continue;
    for (int e : path_edges) g.edges[e].flow_mw += c;
    g.edges.push_back(FlowEdge{v, start, c, -1, -1});
    build_adjacency(g);
    return true;
  }
  return false;
}

std::vector<std::map<int, double>> oracle_gndf(const DirectedFlowGraph& g) {
  std::vector<double> total_in(g.node_count(), 0.0);
  for (const FlowEdge& e : g.edges) total_in[e.dst] += e.flow_mw;

  std::vector<std::map<int, double>> result(g.node_count());
  std::function<void(int, int, double)> walk = [&](int source_idx, int v, double product) {
    for (int e : g.out_edges(v)) {
      const FlowEdge& edge = g.edges[e];
      double p = product * edge.flow_mw / total_in[edge.dst];
      result[edge.dst][source_idx] += p;
      walk(source_idx, edge.dst, p);
    }
  };
  for (size_t s = 0; s < g.sources.size(); ++s) {
    result[g.sources[s].node][static_cast<int>(s)] = 1.0;
    walk(static_cast<int>(s), g.sources[s].node, 1.0);
  }
  return result;
}

std::vector<std::vector<int>> oracle_sccs(const DirectedFlowGraph& g) {
  const int n = g.node_count();
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (int v = 0; v < n; ++v) reach[v][v] = 1;
  for (const FlowEdge& e : g.edges) reach[e.src][e.dst] = 1;
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      if (!reach[i][k]) continue;
      for (int j = 0; j < n; ++j) {
        if (reach[k][j]) reach[i][j] = 1;
      }
    }
  }
  std::vector<std::vector<int>> members(n);
  for (int v = 0; v < n; ++v) {
    for (int w = 0; w < n; ++w) {
      if (reach[v][w] && reach[w][v]) members[v].push_back(w);
    }
  }
  return members;
}

std::map<std::string, double> oracle_tree_flow(
    const Network& net, const std::map<std::string, double>& injections) {
  const int n = static_cast<int>(net.buses.size());
  if (static_cast<int>(net.lines.size()) != n - 1) {
    fail(ErrorKind::Usage, "tree-flow oracle needs a radial network");
  }
  std::vector<double> inj(n, 0.0);
  for (const auto& [bus, mw] : injections) inj[net.bus_of(bus)] += mw;

  std::vector<int> degree(n, 0);
  std::vector<char> line_done(net.lines.size(), 0);
  for (const Line& l : net.lines) {
    ++degree[net.bus_of(l.from_bus)];
    ++degree[net.bus_of(l.to_bus)];
  }
  std::map<std::string, double> flows;
  std::vector<char> removed(n, 0);
  for (int round = 0; round < n; ++round) {
    for (int v = 0; v < n; ++v) {
      if (removed[v] || degree[v] != 1) continue;
      for (size_t li = 0; li < net.lines.size(); ++li) {
        if (line_done[li]) continue;
        const Line& l = net.lines[li];
        int a = net.bus_of(l.from_bus), b = net.bus_of(l.to_bus);
        if (a != v && b != v) continue;
        // Leaf's whole net injection leaves over its only line.
        double f = a == v ? inj[v] : -inj[v];
        flows[l.id] = f;
        int other = a == v ? b : a;
        inj[other] += inj[v];
        inj[v] = 0.0;
        line_done[li] = 1;
        removed[v] = 1;
        --degree[other];
        degree[v] = 0;
        break;
      }
    }
  }
  return flows;
}

double oracle_min_dispatch_cost(const std::vector<double>& caps,
                                const std::vector<double>& costs, double load) {
  // The LP optimum sits at a vertex: some subset runs at full capacity and at
  // most one unit runs partially. Enumerate all of them.
  const size_t n = caps.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    double cap_sum = 0.0, cost_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        cap_sum += caps[i];
        cost_sum += caps[i] * costs[i];
      }
    }
    double partial = load - cap_sum;
    if (std::abs(partial) < 1e-12 * std::max(1.0, load)) {
      best = std::min(best, cost_sum);
      continue;
    }
    if (partial < 0.0) continue;
    for (size_t j = 0; j < n; ++j) {
      if ((mask & (1u << j)) == 0 && partial <= caps[j]) {
        best = std::min(best, cost_sum + partial * costs[j]);
      }
    }
  }
  return best;
}

}  // namespace gridcarbon::testutil
