#pragma once

#include <string>
#include <vector>

#include "gridcarbon/flowgraph.hpp"

namespace gridcarbon {

/// Partition of the flow graph's nodes into strongly connected components.
/// Component ids are canonical: ordered by smallest member node index, so
/// identical graphs always yield identical partitions. Membership is stored
/// flat (offsets + node list, ascending within each component).
struct SccPartition {
  std::vector<int> component;    // node index -> component id
  std::vector<int> member_off;   // count()+1 offsets into member_node
  std::vector<int> member_node;

  int count() const { return static_cast<int>(member_off.size()) - 1; }
  std::span<const int> members_of(int c) const {
    return {member_node.data() + member_off[c],
            static_cast<size_t>(member_off[c + 1] - member_off[c])};
  }
};

/// Tarjan's algorithm with an explicit work stack; single DFS pass, O(N+L).
SccPartition find_sccs(const DirectedFlowGraph& g);

/// Condensation of a flow graph: every SCC becomes one supernode with the
/// members' aggregate demand, inter-component parallel edges are merged by
/// summing flow, intra-component edges vanish. Always acyclic.
struct CondensedGraph {
  DirectedFlowGraph graph;  // supernodes first, then the source nodes

  // Back-maps into the graph the partition was computed on. Membership of
  // the bus supernodes is stored flat, like SccPartition.
  std::vector<int> node_to_super;  // original node -> condensed node
  std::vector<int> member_off;     // graph.n_buses+1 offsets
  std::vector<int> member_node;    // original node indices
  std::vector<std::string> original_ids;
  std::vector<double> original_demand;
  int original_n_buses = 0;

  std::span<const int> members_of(int super) const {
    return {member_node.data() + member_off[super],
            static_cast<size_t>(member_off[super + 1] - member_off[super])};
  }
  bool is_scc(int super) const { return member_off[super + 1] - member_off[super] > 1; }
};

CondensedGraph condense(const DirectedFlowGraph& g, const SccPartition& p);

/// Kahn's algorithm as an acyclicity witness: true iff every node is
/// consumed; otherwise `leftover` holds the nodes of the residual sub-graph
/// (every directed cycle lives inside it).
struct AcyclicWitness {
  bool acyclic = true;
  std::vector<int> leftover;
};

AcyclicWitness assert_acyclic(const DirectedFlowGraph& g);

}  // namespace gridcarbon
