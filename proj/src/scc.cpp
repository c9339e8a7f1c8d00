#include "gridcarbon/scc.hpp"

#include <algorithm>
#include <unordered_map>

#include "gridcarbon/util.hpp"

namespace gridcarbon {

// ---------------------------------------------------------------------------
// Tarjan
// ---------------------------------------------------------------------------

SccPartition find_sccs(const DirectedFlowGraph& g) {
  const int n = g.node_count();
  constexpr int kUnvisited = -1;

  std::vector<int> index(n, kUnvisited);
  std::vector<int> lowlink(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<int> scc_stack;
  std::vector<int> raw_component(n, -1);
  int next_index = 0;
  int raw_count = 0;

  // Explicit DFS frames: node plus position within its out-edge list.
  struct Frame {
    int node;
    int edge_pos;
  };
  std::vector<Frame> work;

  for (int root = 0; root < n; ++root) {
    if (index[root] != kUnvisited) continue;
    work.push_back({root, 0});
    index[root] = lowlink[root] = next_index++;
    scc_stack.push_back(root);
    on_stack[root] = true;

    while (!work.empty()) {
      Frame& f = work.back();
      const int v = f.node;
      const int out_begin = g.out_off[v];
      const int out_end = g.out_off[v + 1];
      if (out_begin + f.edge_pos < out_end) {
        const int w = g.out_dst[out_begin + f.edge_pos];
        ++f.edge_pos;
        if (index[w] == kUnvisited) {
          index[w] = lowlink[w] = next_index++;
          scc_stack.push_back(w);
          on_stack[w] = true;
          work.push_back({w, 0});
        } else if (on_stack[w]) {
          lowlink[v] = std::min(lowlink[v], index[w]);
        }
      } else {
        if (lowlink[v] == index[v]) {
          int member;
          do {
            member = scc_stack.back();
            scc_stack.pop_back();
            on_stack[member] = false;
            raw_component[member] = raw_count;
          } while (member != v);
          ++raw_count;
        }
        work.pop_back();
        if (!work.empty()) {
          lowlink[work.back().node] = std::min(lowlink[work.back().node], lowlink[v]);
        }
      }
    }
  }

  // Canonicalize: components ordered by their smallest member node index.
  std::vector<int> min_member(raw_count, n);
  for (int v = 0; v < n; ++v) {
    min_member[raw_component[v]] = std::min(min_member[raw_component[v]], v);
  }
  std::vector<int> order(raw_count);
  for (int c = 0; c < raw_count; ++c) order[c] = c;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return min_member[a] < min_member[b]; });
  std::vector<int> remap(raw_count);
  for (int rank = 0; rank < raw_count; ++rank) remap[order[rank]] = rank;

  SccPartition p;
  p.component.resize(n);
  p.member_off.assign(raw_count + 1, 0);
  for (int v = 0; v < n; ++v) {
    p.component[v] = remap[raw_component[v]];
    ++p.member_off[p.component[v] + 1];
  }
  for (int c = 0; c < raw_count; ++c) p.member_off[c + 1] += p.member_off[c];
  p.member_node.resize(n);
  std::vector<int> fill(p.member_off.begin(), p.member_off.end() - 1);
  for (int v = 0; v < n; ++v) {
    p.member_node[fill[p.component[v]]++] = v;  // ascending since v ascends
  }
  return p;
}

// ---------------------------------------------------------------------------
// Condensation
// ---------------------------------------------------------------------------

CondensedGraph condense(const DirectedFlowGraph& g, const SccPartition& p) {
  const int n = g.node_count();
  if (static_cast<int>(p.component.size()) != n) {
    fail(ErrorKind::Internal, "partition does not match graph");
  }
  const int n_comp = p.count();

  CondensedGraph cg;
  cg.node_to_super = p.component;
  cg.original_ids = g.node_ids;
  cg.original_demand = g.demand;
  cg.original_n_buses = g.n_buses;

  // Bus components first (smallest member is a bus), source singletons after;
  // the canonical partition ordering already guarantees that layout.
  int n_super_buses = 0;
  for (int c = 0; c < n_comp; ++c) {
    auto mem = p.members_of(c);
    if (mem.front() < g.n_buses) {
      ++n_super_buses;
    } else if (mem.size() != 1) {
      fail(ErrorKind::Internal, "virtual source inside a multi-node component");
    }
  }

  DirectedFlowGraph& out = cg.graph;
  out.n_buses = n_super_buses;
  out.node_ids.resize(n_comp);
  for (int c = 0; c < n_comp; ++c) {
    auto mem = p.members_of(c);
    if (c < n_super_buses) {
      out.node_ids[c] = mem.size() == 1 ? g.node_ids[mem.front()]
                                        : "scc:" + g.node_ids[mem.front()];
    } else {
      out.node_ids[c] = g.node_ids[mem.front()];
    }
  }
  // Bus components occupy a prefix of the flat member arrays.
  cg.member_off.assign(p.member_off.begin(), p.member_off.begin() + n_super_buses + 1);
  cg.member_node.assign(p.member_node.begin(),
                        p.member_node.begin() + cg.member_off.back());

  out.sources = g.sources;
  for (SourceInfo& s : out.sources) {
    s.node = p.component[s.node];
    s.bus = p.component[s.bus];
    if (s.node < n_super_buses) {
      fail(ErrorKind::Internal, "source component ordered among bus components");
    }
  }

  // Merge parallel inter-component edges; first encounter wins for the
  // representative origin (edges arrive sorted by origin id). When the input
  // graph itself has no parallel edges, pairs can only collide through a
  // multi-node component, so edges between singletons skip the bookkeeping.
  bool input_has_parallel = false;
  {
    std::vector<int> seen_at(n, -1);
    for (int v = 0; v < n && !input_has_parallel; ++v) {
      for (int pos = g.out_off[v]; pos < g.out_off[v + 1]; ++pos) {
        if (seen_at[g.out_dst[pos]] == v) {
          input_has_parallel = true;
          break;
        }
        seen_at[g.out_dst[pos]] = v;
      }
    }
  }
  std::vector<char> multi(n_comp, input_has_parallel ? 1 : 0);
  if (!input_has_parallel) {
    for (int c = 0; c < n_comp; ++c) {
      multi[c] = p.member_off[c + 1] - p.member_off[c] > 1;
    }
  }
  std::unordered_map<std::uint64_t, int> merged;
  out.edges.reserve(g.edges.size());
  for (const FlowEdge& e : g.edges) {
    int cu = p.component[e.src];
    int cv = p.component[e.dst];
    if (cu == cv) continue;  // intra-SCC circulation vanishes
    FlowEdge ne = e;
    ne.src = cu;
    ne.dst = cv;
    if (!multi[cu] && !multi[cv]) {
      out.edges.push_back(ne);
      continue;
    }
    std::uint64_t key = (static_cast<std::uint64_t>(cu) << 32) | static_cast<std::uint32_t>(cv);
    auto [it, inserted] = merged.emplace(key, static_cast<int>(out.edges.size()));
    if (inserted) {
      out.edges.push_back(ne);
    } else {
      out.edges[it->second].flow_mw += e.flow_mw;
    }
  }

  out.demand.assign(n_comp, 0.0);
  build_adjacency(out);
  settle_exact_demand(out);

  // Aggregated demand must reconcile with the members' total.
  for (int c = 0; c < n_super_buses; ++c) {
    double member_sum = 0.0;
    for (int v : cg.members_of(c)) member_sum += g.demand[v];
    double scale = std::max(1.0, std::max(out.demand[c], member_sum));
    if (std::abs(out.demand[c] - member_sum) > 1e-9 * scale) {
      fail(ErrorKind::Internal, "supernode \"" + out.node_ids[c] +
                                    "\" demand mismatch: " + format_g9(out.demand[c]) +
                                    " vs member sum " + format_g9(member_sum));
    }
  }

  AcyclicWitness w = assert_acyclic(out);
  if (!w.acyclic) {
    fail(ErrorKind::Internal, "cycle detected post-condensation (" +
                                  std::to_string(w.leftover.size()) + " nodes)");
  }
  return cg;
}

AcyclicWitness assert_acyclic(const DirectedFlowGraph& g) {
  const int n = g.node_count();
  std::vector<int> indeg(n);
  for (int v = 0; v < n; ++v) indeg[v] = g.in_degree(v);

  std::vector<int> queue;
  queue.reserve(n);
  for (int v = 0; v < n; ++v) {
    if (indeg[v] == 0) queue.push_back(v);
  }
  size_t head = 0;
  int consumed = 0;
  while (head < queue.size()) {
    int v = queue[head++];
    ++consumed;
    for (int pos = g.out_off[v]; pos < g.out_off[v + 1]; ++pos) {
      int w = g.out_dst[pos];
      if (--indeg[w] == 0) queue.push_back(w);
    }
  }

  AcyclicWitness w;
  w.acyclic = consumed == n;
  if (!w.acyclic) {
    for (int v = 0; v < n; ++v) {
      if (indeg[v] > 0) w.leftover.push_back(v);
    }
  }
  return w;
}

}  // namespace gridcarbon
