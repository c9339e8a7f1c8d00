#include "gridcarbon/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gridcarbon/util.hpp"

namespace gridcarbon {

const char* to_string(RateStatus s) {
  switch (s) {
    case RateStatus::Defined: return "defined";
    case RateStatus::ZeroDemandMix: return "zero_demand_mix";
    case RateStatus::Undefined: return "undefined";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Core propagation
// ---------------------------------------------------------------------------

TraceResult trace(const CondensedGraph& cg, const EmissionTable& table,
                  const TraceOptions& opts) {
  const DirectedFlowGraph& g = cg.graph;
  const int n = g.node_count();
  const int n_sources = static_cast<int>(g.sources.size());

  TraceResult t;
  t.gamma.resize(n_sources);
  for (int s = 0; s < n_sources; ++s) {
    const SourceInfo& src = g.sources[s];
    t.gamma[s] = src.rate_override ? *src.rate_override : table.rate(src.fuel);
  }

  t.row_off.assign(n, 0);
  t.row_len.assign(n, 0);
  t.delta.assign(n, 0.0);
  t.status.assign(n, RateStatus::Undefined);

  // Kahn seed: in-degree-0 nodes in node-id order.
  std::vector<int> indeg(n);
  std::vector<int> ready;
  ready.reserve(n);
  for (int v = 0; v < n; ++v) {
    indeg[v] = g.in_degree(v);
    if (indeg[v] == 0) ready.push_back(v);
  }
  std::sort(ready.begin(), ready.end(),
            [&](int a, int b) { return g.node_ids[a] < g.node_ids[b]; });

  std::optional<std::mt19937_64> pop_rng;
  if (opts.pop_order_seed) pop_rng.emplace(*opts.pop_order_seed);

  // Rows stay sorted by source index, so combining inflows is a sequence of
  // sorted merge-adds; contributions accumulate in inflow-edge order, which
  // keeps the arithmetic independent of the pop order.
  std::vector<std::uint32_t> cur_src, nxt_src;
  std::vector<double> cur_frac, nxt_frac;

  // Flow values aligned with the in-edge CSR positions; one scattered pass
  // here buys sequential reads in the hot loop.
  std::vector<double> in_flow(g.in_edge.size());
  for (size_t pos = 0; pos < g.in_edge.size(); ++pos) {
    in_flow[pos] = g.edges[g.in_edge[pos]].flow_mw;
  }

  size_t head = 0;
  int processed = 0;
  while (head < ready.size()) {
    if (pop_rng) {
      size_t pick = head + (*pop_rng)() % (ready.size() - head);
      std::swap(ready[head], ready[pick]);
    }
    const int v = ready[head++];
    ++processed;

    t.row_off[v] = t.row_source.size();
    if (g.is_source_node(v)) {
      const int s = v - g.n_buses;
      t.row_source.push_back(static_cast<std::uint32_t>(s));
      t.row_frac.push_back(1.0);
      t.row_len[v] = 1;
      t.delta[v] = t.gamma[s];
      t.status[v] = RateStatus::Defined;
    } else {
      const int in_begin = g.in_off[v];
      const int in_end = g.in_off[v + 1];
      double total_in = 0.0;
      for (int pos = in_begin; pos < in_end; ++pos) total_in += in_flow[pos];
      if (in_begin == in_end || total_in <= 0.0) {
        if (g.demand[v] > 0.0) {
          fail(ErrorKind::Infeasible, "node \"" + g.node_ids[v] +
                                          "\" has demand but no inflow");
        }
        // Isolated: empty row, undefined rate.
      } else if (in_end - in_begin == 1) {
        // Single inflow: the node inherits the tail row verbatim, so it can
        // share the tail's arena range outright.
        const int u = g.in_src[in_begin];
        if (t.row_len[u] == 0) {
          fail(ErrorKind::Infeasible, "node \"" + g.node_ids[v] +
                                          "\" inflow attribution sums to 0");
        }
        t.row_off[v] = t.row_off[u];
        t.row_len[v] = t.row_len[u];
        t.delta[v] = t.delta[u];
        t.status[v] = g.demand[v] > 0.0 ? RateStatus::Defined : RateStatus::ZeroDemandMix;
      } else {
        cur_src.clear();
        cur_frac.clear();
        for (int pos = in_begin; pos < in_end; ++pos) {
          const double w = in_flow[pos] / total_in;
          const int u = g.in_src[pos];
          const std::uint32_t* usrc = t.row_source.data() + t.row_off[u];
          const double* ufrac = t.row_frac.data() + t.row_off[u];
          const std::size_t ulen = t.row_len[u];
          if (cur_src.empty()) {
            cur_src.assign(usrc, usrc + ulen);
            cur_frac.resize(ulen);
            for (std::size_t k = 0; k < ulen; ++k) cur_frac[k] = w * ufrac[k];
            continue;
          }
          nxt_src.clear();
          nxt_frac.clear();
          std::size_t i = 0, k = 0;
          while (i < cur_src.size() && k < ulen) {
            if (cur_src[i] < usrc[k]) {
              nxt_src.push_back(cur_src[i]);
              nxt_frac.push_back(cur_frac[i]);
              ++i;
            } else if (cur_src[i] > usrc[k]) {
              nxt_src.push_back(usrc[k]);
              nxt_frac.push_back(w * ufrac[k]);
              ++k;
            } else {
              nxt_src.push_back(cur_src[i]);
              nxt_frac.push_back(cur_frac[i] + w * ufrac[k]);
              ++i;
              ++k;
            }
          }
          for (; i < cur_src.size(); ++i) {
            nxt_src.push_back(cur_src[i]);
            nxt_frac.push_back(cur_frac[i]);
          }
          for (; k < ulen; ++k) {
            nxt_src.push_back(usrc[k]);
            nxt_frac.push_back(w * ufrac[k]);
          }
          cur_src.swap(nxt_src);
          cur_frac.swap(nxt_frac);
        }

        double pre_sum = 0.0;
        for (double f : cur_frac) pre_sum += f;
        if (std::abs(pre_sum - 1.0) > 1e-6) {
          // Every inflow must itself be fully attributed; a gap means the
          // graph feeds this node from an unserved ancestor.
          fail(ErrorKind::Infeasible, "node \"" + g.node_ids[v] +
                                          "\" inflow attribution sums to " +
                                          format_g9(pre_sum));
        }
        double kept_sum = 0.0;
        for (double f : cur_frac) {
          if (f >= opts.prune) kept_sum += f;
        }
        double rate = 0.0;
        for (std::size_t k = 0; k < cur_src.size(); ++k) {
          if (cur_frac[k] >= opts.prune) {
            const double frac = cur_frac[k] / kept_sum;
            t.row_source.push_back(cur_src[k]);
            t.row_frac.push_back(frac);
            rate += frac * t.gamma[cur_src[k]];
          }
        }
        t.row_len[v] = t.row_source.size() - t.row_off[v];
        t.delta[v] = rate;
        t.status[v] = g.demand[v] > 0.0 ? RateStatus::Defined : RateStatus::ZeroDemandMix;
      }
    }

    for (int pos = g.out_off[v]; pos < g.out_off[v + 1]; ++pos) {
      const int w = g.out_dst[pos];
      if (--indeg[w] == 0) ready.push_back(w);
    }
  }

  if (processed != n) {
    fail(ErrorKind::Internal,
         "trace ran on a cyclic graph: " + std::to_string(n - processed) +
             " nodes left unprocessed (condense first)");
  }

  return t;
}

// ---------------------------------------------------------------------------
// Rate accessors
// ---------------------------------------------------------------------------

namespace {

LaeEntry entry_for_node(const TraceResult& t, int node) {
  return LaeEntry{t.delta[node], t.status[node]};
}

}  // namespace

LaeEntry lae(const TraceResult& t, const CondensedGraph& cg, const Network& net,
             const std::string& bus_id) {
  int b = net.bus_of(bus_id);
  if (b < 0 || b >= cg.original_n_buses) {
    fail(ErrorKind::Validation, "unknown bus \"" + bus_id + "\"");
  }
  return entry_for_node(t, cg.node_to_super[b]);
}

std::map<std::string, LaeEntry> lae_vector(const TraceResult& t, const CondensedGraph& cg) {
  std::map<std::string, LaeEntry> out;
  for (int v = 0; v < cg.graph.n_buses; ++v) {
    out[cg.graph.node_ids[v]] = entry_for_node(t, v);
  }
  return out;
}

std::map<std::string, LaeEntry> expand_scc(const TraceResult& t, const CondensedGraph& cg) {
  if (t.node_count() != cg.graph.node_count()) {
    fail(ErrorKind::Validation, "trace result does not match the condensed graph");
  }
  std::map<std::string, LaeEntry> out;
  for (int b = 0; b < cg.original_n_buses; ++b) {
    out[cg.original_ids[b]] = entry_for_node(t, cg.node_to_super[b]);
  }
  return out;
}

std::vector<std::pair<std::string, double>> bus_contributions_mw(
    const TraceResult& t, const CondensedGraph& cg, const Network& net,
    const std::string& bus_id) {
  int b = net.bus_of(bus_id);
  if (b < 0 || b >= cg.original_n_buses) {
    fail(ErrorKind::Validation, "unknown bus \"" + bus_id + "\"");
  }
  const int v = cg.node_to_super[b];
  const double d = cg.original_demand[b];
  std::vector<std::pair<std::string, double>> out;
  auto srcs = t.row_sources(v);
  auto fracs = t.row_fractions(v);
  out.reserve(srcs.size());
  for (size_t k = 0; k < srcs.size(); ++k) {
    out.emplace_back(cg.graph.sources[srcs[k]].id, fracs[k] * d);
  }
  return out;
}

std::map<std::string, double> line_gldf(const TraceResult& t, const CondensedGraph& cg,
                                        const DirectedFlowGraph& original, int edge_index) {
  const FlowEdge& e = original.edges.at(edge_index);
  const int super = cg.node_to_super.at(e.src);
  std::map<std::string, double> row;
  auto srcs = t.row_sources(super);
  auto fracs = t.row_fractions(super);
  for (size_t k = 0; k < srcs.size(); ++k) {
    row[cg.graph.sources[srcs[k]].id] = fracs[k];
  }
  return row;
}

// ---------------------------------------------------------------------------
// LME
// ---------------------------------------------------------------------------

double snapshot_emissions(const Network& net, const EmissionTable& table,
                          const Snapshot& snap) {
  double total = 0.0;
  for (const auto& [gen_id, p] : snap.dispatch) {
    int gi = net.gen_of(gen_id);
    if (gi < 0) fail(ErrorKind::Validation, "unknown generator \"" + gen_id + "\"");
    total += emission_rate(table, net.generators[gi]) * p;
  }
  for (const ExtraSource& s : snap.extra_sources) {
    total += table.rate(s.fuel) * s.p_mw;
  }
  return total;
}

LmeResult lme(const Network& net, const EmissionTable& table, const Snapshot& base,
              const Snapshot& perturbed, const std::string& bus_id, bool allow_multi) {
  if (net.bus_of(bus_id) < 0) {
    fail(ErrorKind::Validation, "unknown bus \"" + bus_id + "\"");
  }

  double delta_at_bus = perturbed.load(bus_id) - base.load(bus_id);
  double delta_total = 0.0;
  std::vector<std::string> other_perturbed;
  for (const Bus& b : net.buses) {
    double d = perturbed.load(b.id) - base.load(b.id);
    delta_total += d;
    if (d != 0.0 && b.id != bus_id) other_perturbed.push_back(b.id);
  }
  if (!other_perturbed.empty() && !allow_multi) {
    fail(ErrorKind::Degenerate,
         "load differs at " + std::to_string(other_perturbed.size() + (delta_at_bus != 0.0)) +
             " buses (first extra: \"" + other_perturbed.front() +
             "\"); pass --allow-multi for an aggregate sensitivity");
  }
  double denom = allow_multi ? delta_total : delta_at_bus;
  if (denom == 0.0) {
    fail(ErrorKind::Degenerate, "degenerate perturbation: load change at \"" +
                                    bus_id + "\" is zero");
  }

  LmeResult r;
  r.bus_id = bus_id;
  r.delta_mw = denom;
  r.base_emissions_t = snapshot_emissions(net, table, base);
  r.perturbed_emissions_t = snapshot_emissions(net, table, perturbed);
  r.mu = (r.perturbed_emissions_t - r.base_emissions_t) / denom;
  if (!std::isfinite(r.mu)) {
    fail(ErrorKind::Degenerate, "non-finite marginal rate");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

json trace_to_json(const TraceResult& t, const CondensedGraph& cg, const Network& net,
                   const Snapshot& snap, const DirectedFlowGraph& original,
                   const TraceJsonOptions& opts) {
  json doc;
  doc["metadata"] = json{
      {"timestamp", snap.timestamp},
      {"loss_policy", opts.loss_policy},
      {"eps_mw", opts.eps_mw},
      {"n_buses", cg.original_n_buses},
      {"n_sources", cg.graph.sources.size()},
      {"n_supernodes", cg.graph.n_buses},
  };

  json jlae = json::object();
  json jflags = json::object();
  json jundef = json::array();
  for (int b = 0; b < cg.original_n_buses; ++b) {
    const int v = cg.node_to_super[b];
    const std::string& id = cg.original_ids[b];
    switch (t.status[v]) {
      case RateStatus::Defined:
        jlae[id] = round9(t.delta[v]);
        break;
      case RateStatus::ZeroDemandMix:
        jlae[id] = round9(t.delta[v]);
        jflags[id] = to_string(RateStatus::ZeroDemandMix);
        break;
      case RateStatus::Undefined:
        jundef.push_back(id);
        break;
    }
  }
  doc["lae"] = std::move(jlae);
  if (!jflags.empty()) doc["lae_flags"] = std::move(jflags);
  if (!jundef.empty()) doc["undefined_buses"] = std::move(jundef);

  json jgndf = json::object();
  for (int b = 0; b < cg.original_n_buses; ++b) {
    const int v = cg.node_to_super[b];
    auto srcs = t.row_sources(v);
    auto fracs = t.row_fractions(v);
    if (srcs.empty()) continue;
    json row = json::object();
    for (size_t k = 0; k < srcs.size(); ++k) {
      if (fracs[k] >= opts.gndf_min_fraction) {
        row[cg.graph.sources[srcs[k]].id] = round9(fracs[k]);
      }
    }
    jgndf[cg.original_ids[b]] = std::move(row);
  }
  doc["gndf"] = std::move(jgndf);

  if (opts.include_gldf) {
    json jgldf = json::object();
    for (int e = 0; e < static_cast<int>(original.edges.size()); ++e) {
      if (original.edges[e].line < 0) continue;  // virtual edges are identity rows
      json row = json::object();
      for (const auto& [src_id, frac] : line_gldf(t, cg, original, e)) {
        if (frac >= opts.gndf_min_fraction) row[src_id] = round9(frac);
      }
      jgldf[net.lines[original.edges[e].line].id] = std::move(row);
    }
    doc["gldf"] = std::move(jgldf);
  }
  return doc;
}

json sccs_to_json(const CondensedGraph& cg) {
  json comps = json::object();
  int multi = 0;
  for (int v = 0; v < cg.graph.n_buses; ++v) {
    json members = json::array();
    for (int m : cg.members_of(v)) members.push_back(cg.original_ids[m]);
    if (cg.is_scc(v)) ++multi;
    comps[cg.graph.node_ids[v]] = std::move(members);
  }
  return json{{"components", std::move(comps)},
              {"n_components", cg.graph.n_buses},
              {"n_multi_node", multi}};
}

}  // namespace gridcarbon
