#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gridcarbon/model.hpp"

namespace gridcarbon {

// ---------------------------------------------------------------------------
// Lossless DC power flow
// ---------------------------------------------------------------------------

/// Solves the weighted-Laplacian system B*theta = p with the first bus as
/// angle reference and returns per-line flows (theta_from - theta_to) / x.
/// Any method meeting ||B*theta - p||_inf < 1e-9 * ||p||_inf conforms; this
/// implementation refines to ~1e-12 relative.
/// Requires reactance on every line, a connected network, and injections
/// summing to zero within 1e-9 (relative to total absolute injection).
std::map<std::string, double> dc_flow(const Network& net,
                                      const std::map<std::string, double>& injections_mw);

// ---------------------------------------------------------------------------
// Merit-order dispatch
// ---------------------------------------------------------------------------

struct DispatchUnit {
  std::string gen_id;
  double capacity_mw = 0.0;
  double cost = 0.0;  // $/MWh
};

struct DispatchProblem {
  std::map<std::string, double> loads;  // bus -> MW
  std::vector<DispatchUnit> units;

  double total_load() const {
    double t = 0.0;
    for (const auto& [_, mw] : loads) t += mw;
    return t;
  }
};

/// Fills units in ascending (cost, id) order until dispatch covers load; the
/// last unit runs partially. Network limits are ignored. Throws with the
/// deficit when capacity cannot cover load.
std::map<std::string, double> merit_dispatch(const DispatchProblem& problem);

// ---------------------------------------------------------------------------
// Snapshot synthesis
// ---------------------------------------------------------------------------

/// Merit dispatch + DC flow on net injections. The result validates with
/// zero residuals by construction.
Snapshot make_snapshot(const Network& net, const std::map<std::string, double>& loads,
                       const std::map<std::string, double>& costs,
                       const std::string& timestamp = "synthetic");

/// Same loads except one bus shifted by delta_mw, re-dispatched and re-solved;
/// pairs with the base snapshot for marginal-rate runs.
Snapshot make_perturbed_snapshot(const Network& net,
                                 const std::map<std::string, double>& loads,
                                 const std::map<std::string, double>& costs,
                                 const std::string& bus_id, double delta_mw,
                                 const std::string& timestamp = "synthetic+d");

// ---------------------------------------------------------------------------
// Random grids
// ---------------------------------------------------------------------------

struct RandomGrid {
  Network net;
  std::map<std::string, double> loads;  // bus -> MW
  std::map<std::string, double> costs;  // gen -> $/MWh
};

/// Deterministic for a given seed: random recursive spanning tree plus random
/// chords up to ~avg_degree, reactances U[0.01, 0.1] pu, loads U[1, 50] MW,
/// generator capacity ~2.2x total load with renewables priced below fossil.
RandomGrid random_grid(int n_buses, int n_gens, double avg_degree, std::uint64_t seed);

/// 200-bus, three-region demo fixture: a self-balanced coal region, a gas
/// region exporting a small surplus, and a solar region importing it at one
/// bus. Regional average rates end up over two orders of magnitude apart.
RandomGrid make_region_demo();

}  // namespace gridcarbon
