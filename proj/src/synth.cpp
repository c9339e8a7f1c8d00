#include "gridcarbon/synth.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "gridcarbon/util.hpp"

namespace gridcarbon {

// ---------------------------------------------------------------------------
// DC flow
// ---------------------------------------------------------------------------

std::map<std::string, double> dc_flow(const Network& net,
                                      const std::map<std::string, double>& injections_mw) {
  const int n = static_cast<int>(net.buses.size());
  if (n == 0) return {};

  double sum = 0.0, abs_sum = 0.0;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  for (const auto& [bus_id, mw] : injections_mw) {
    int b = net.bus_of(bus_id);
    if (b < 0) fail(ErrorKind::Validation, "injection references unknown bus \"" + bus_id + "\"");
    p[b] += mw;
  }
  for (int b = 0; b < n; ++b) {
    sum += p[b];
    abs_sum += std::abs(p[b]);
  }
  if (std::abs(sum) > 1e-9 * std::max(1.0, abs_sum)) {
    fail(ErrorKind::Validation,
         "injections sum to " + format_g9(sum) + " MW, expected zero");
  }

  // Connectivity check doubles as the singular-system guard.
  {
    std::vector<std::vector<int>> adj(n);
    for (const Line& l : net.lines) {
      int a = net.bus_of(l.from_bus), b = net.bus_of(l.to_bus);
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int w : adj[v]) {
        if (!seen[w]) {
          seen[w] = 1;
          ++reached;
          stack.push_back(w);
        }
      }
    }
    if (reached != n) {
      for (int b = 0; b < n; ++b) {
        if (!seen[b]) {
          fail(ErrorKind::Infeasible, "network is disconnected: bus \"" +
                                          net.buses[b].id + "\" unreachable from \"" +
                                          net.buses[0].id + "\"");
        }
      }
    }
  }

  if (abs_sum == 0.0) {
    std::map<std::string, double> zero;
    for (const Line& l : net.lines) zero[l.id] = 0.0;
    return zero;
  }

  using SpMat = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(net.lines.size() * 4 + 1);
  for (const Line& l : net.lines) {
    if (!l.reactance_pu) {
      fail(ErrorKind::Validation, "line \"" + l.id + "\" missing reactance for DC solve");
    }
    double w = 1.0 / *l.reactance_pu;
    int a = net.bus_of(l.from_bus), b = net.bus_of(l.to_bus);
    trips.emplace_back(a, a, w);
    trips.emplace_back(b, b, w);
    trips.emplace_back(a, b, -w);
    trips.emplace_back(b, a, -w);
  }
  // Grounding the reference bus makes the Laplacian positive definite; with
  // balanced injections the solution has theta[0] = 0 and B*theta = p.
  trips.emplace_back(0, 0, 1.0);
  SpMat B(n, n);
  B.setFromTriplets(trips.begin(), trips.end());

  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper,
                           Eigen::IncompleteCholesky<double>>
      cg;
  cg.setTolerance(1e-13);
  cg.compute(B);
  if (cg.info() != Eigen::Success) {
    fail(ErrorKind::Internal, "DC flow preconditioner failed");
  }
  Eigen::VectorXd theta = cg.solve(p);

  const double p_inf = p.lpNorm<Eigen::Infinity>();
  Eigen::VectorXd r = p - B * theta;
  for (int pass = 0; pass < 4 && r.lpNorm<Eigen::Infinity>() > 1e-12 * std::max(1.0, p_inf);
       ++pass) {
    theta += cg.solve(r);
    r = p - B * theta;
  }
  if (r.lpNorm<Eigen::Infinity>() >= 1e-9 * p_inf) {
    fail(ErrorKind::Internal, "DC flow residual " + format_g9(r.lpNorm<Eigen::Infinity>()) +
                                  " exceeds the 1e-9 relative contract");
  }

  std::map<std::string, double> flows;
  auto hint = flows.begin();
  for (const Line& l : net.lines) {
    int a = net.bus_of(l.from_bus), b = net.bus_of(l.to_bus);
    hint = flows.emplace_hint(hint, l.id, (theta[a] - theta[b]) / *l.reactance_pu);
  }
  return flows;
}

// ---------------------------------------------------------------------------
// Merit dispatch
// ---------------------------------------------------------------------------

std::map<std::string, double> merit_dispatch(const DispatchProblem& problem) {
  double load = problem.total_load();
  double capacity = 0.0;
  for (const DispatchUnit& u : problem.units) capacity += u.capacity_mw;
  if (capacity < load) {
    fail(ErrorKind::Infeasible, "dispatch shortfall: capacity " + format_g9(capacity) +
                                    " MW cannot cover load " + format_g9(load) +
                                    " MW (deficit " + format_g9(load - capacity) + " MW)");
  }

  std::vector<const DispatchUnit*> order;
  order.reserve(problem.units.size());
  for (const DispatchUnit& u : problem.units) order.push_back(&u);
  std::sort(order.begin(), order.end(), [](const DispatchUnit* a, const DispatchUnit* b) {
    if (a->cost != b->cost) return a->cost < b->cost;
    return a->gen_id < b->gen_id;
  });

  std::map<std::string, double> dispatch;
  double filled = 0.0;
  for (const DispatchUnit* u : order) {
    double take = std::min(u->capacity_mw, load - filled);
    if (take < 0.0) take = 0.0;
    dispatch[u->gen_id] = take;
    filled += take;
  }
  return dispatch;
}

// ---------------------------------------------------------------------------
// Snapshot synthesis
// ---------------------------------------------------------------------------

Snapshot make_snapshot(const Network& net, const std::map<std::string, double>& loads,
                       const std::map<std::string, double>& costs,
                       const std::string& timestamp) {
  DispatchProblem problem;
  problem.loads = loads;
  problem.units.reserve(net.generators.size());
  for (const Generator& g : net.generators) {
    auto it = costs.find(g.id);
    if (it == costs.end()) {
      fail(ErrorKind::Validation, "no cost given for generator \"" + g.id + "\"");
    }
    problem.units.push_back(DispatchUnit{g.id, g.capacity_mw, it->second});
  }
  std::map<std::string, double> dispatch = merit_dispatch(problem);

  std::map<std::string, double> injections;
  for (const Bus& b : net.buses) injections[b.id] = 0.0;
  for (const auto& [gen_id, p] : dispatch) {
    injections[net.generators[net.gen_of(gen_id)].bus_id] += p;
  }
  for (const auto& [bus_id, mw] : loads) {
    auto it = injections.find(bus_id);
    if (it == injections.end()) {
      fail(ErrorKind::Validation, "load references unknown bus \"" + bus_id + "\"");
    }
    it->second -= mw;
  }

  Snapshot snap;
  snap.timestamp = timestamp;
  snap.loads = loads;
  snap.dispatch = std::move(dispatch);
  for (auto& [line_id, f] : dc_flow(net, injections)) {
    snap.flows[line_id] = LineFlow{f, std::nullopt};
  }
  return snap;
}

Snapshot make_perturbed_snapshot(const Network& net,
                                 const std::map<std::string, double>& loads,
                                 const std::map<std::string, double>& costs,
                                 const std::string& bus_id, double delta_mw,
                                 const std::string& timestamp) {
  if (net.bus_of(bus_id) < 0) {
    fail(ErrorKind::Validation, "unknown bus \"" + bus_id + "\"");
  }
  std::map<std::string, double> perturbed = loads;
  perturbed[bus_id] += delta_mw;
  if (perturbed[bus_id] < 0.0) {
    fail(ErrorKind::Validation, "perturbation drives load at \"" + bus_id + "\" negative");
  }
  return make_snapshot(net, perturbed, costs, timestamp);
}

// ---------------------------------------------------------------------------
// Random grids
// ---------------------------------------------------------------------------

namespace {

// Hand-rolled mappings keep output identical across standard libraries.
struct Rng {
  std::uint64_t s;

  explicit Rng(std::uint64_t seed) : s(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next() {  // splitmix64
    s += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }
  std::uint64_t index(std::uint64_t n) { return next() % n; }
};

std::string padded_id(char prefix, int value, int width) {
  std::string digits = std::to_string(value);
  std::string out(1, prefix);
  out.append(width > static_cast<int>(digits.size()) ? width - digits.size() : 0, '0');
  out += digits;
  return out;
}

struct FuelProfile {
  FuelType fuel;
  double weight;
  double cost_lo, cost_hi;
};

// Renewables bid below fossil so merit order dispatches them first.
constexpr FuelProfile kFuelProfiles[] = {
    {FuelType::Solar, 0.20, 1.0, 8.0},
    {FuelType::Wind, 0.15, 2.0, 9.0},
    {FuelType::Hydro, 0.10, 3.0, 10.0},
    {FuelType::Nuclear, 0.05, 8.0, 15.0},
    {FuelType::Geothermal, 0.05, 6.0, 12.0},
    {FuelType::Biomass, 0.05, 12.0, 20.0},
    {FuelType::NaturalGas, 0.25, 15.0, 35.0},
    {FuelType::Coal, 0.10, 20.0, 40.0},
    {FuelType::PetroleumLiquids, 0.03, 30.0, 50.0},
    {FuelType::OtherImport, 0.02, 25.0, 45.0},
};

const FuelProfile& pick_fuel(Rng& rng) {
  double total = 0.0;
  for (const FuelProfile& f : kFuelProfiles) total += f.weight;
  double x = rng.u01() * total;
  for (const FuelProfile& f : kFuelProfiles) {
    if (x < f.weight) return f;
    x -= f.weight;
  }
  return kFuelProfiles[std::size(kFuelProfiles) - 1];
}

int id_width(int n) { return static_cast<int>(std::to_string(n).size()); }

}  // namespace

RandomGrid random_grid(int n_buses, int n_gens, double avg_degree, std::uint64_t seed) {
  if (n_buses < 2) fail(ErrorKind::Usage, "random_grid needs at least 2 buses");
  if (n_gens < 1) fail(ErrorKind::Usage, "random_grid needs at least 1 generator");
  if (avg_degree < 0.0) fail(ErrorKind::Usage, "average degree must be non-negative");

  Rng rng(seed);
  const int bus_w = id_width(n_buses);

  std::vector<Bus> buses;
  buses.reserve(n_buses);
  for (int i = 0; i < n_buses; ++i) {
    buses.push_back(Bus{padded_id('b', i + 1, bus_w), std::nullopt, std::nullopt});
  }

  // Random recursive spanning tree, then chords up to the requested degree.
  std::vector<std::pair<int, int>> pairs;
  std::unordered_set<std::uint64_t> seen;
  auto key = [](int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
  };
  pairs.reserve(static_cast<size_t>(std::max<double>(n_buses - 1, avg_degree * n_buses / 2)));
  for (int i = 1; i < n_buses; ++i) {
    int parent = static_cast<int>(rng.index(i));
    pairs.emplace_back(parent, i);
    seen.insert(key(parent, i));
  }
  long long chords =
      std::llround(avg_degree * n_buses / 2.0) - static_cast<long long>(n_buses - 1);
  long long max_pairs = static_cast<long long>(n_buses) * (n_buses - 1) / 2;
  chords = std::min(chords, max_pairs - (n_buses - 1));
  long long attempts_left = chords * 64 + 64;
  while (chords > 0 && attempts_left-- > 0) {
    int a = static_cast<int>(rng.index(n_buses));
    int b = static_cast<int>(rng.index(n_buses));
    if (a == b || !seen.insert(key(a, b)).second) continue;
    pairs.emplace_back(a, b);
    --chords;
  }

  std::vector<Line> lines;
  lines.reserve(pairs.size());
  const int line_w = id_width(static_cast<int>(pairs.size()));
  for (size_t i = 0; i < pairs.size(); ++i) {
    Line l;
    l.id = padded_id('l', static_cast<int>(i) + 1, line_w);
    l.from_bus = buses[pairs[i].first].id;
    l.to_bus = buses[pairs[i].second].id;
    l.reactance_pu = rng.uniform(0.01, 0.1);
    lines.push_back(std::move(l));
  }

  RandomGrid grid;
  double total_load = 0.0;
  for (const Bus& b : buses) {
    double mw = rng.uniform(1.0, 50.0);
    grid.loads[b.id] = mw;
    total_load += mw;
  }

  std::vector<Generator> gens;
  gens.reserve(n_gens);
  const int gen_w = id_width(n_gens);
  const double cap_share = 2.2 * total_load / n_gens;
  for (int i = 0; i < n_gens; ++i) {
    const FuelProfile& fp = pick_fuel(rng);
    Generator g;
    g.id = padded_id('g', i + 1, gen_w);
    g.bus_id = buses[rng.index(n_buses)].id;
    g.fuel = fp.fuel;
    g.capacity_mw = cap_share * rng.uniform(0.5, 1.5);
    grid.costs[g.id] = rng.uniform(fp.cost_lo, fp.cost_hi);
    gens.push_back(std::move(g));
  }

  grid.net = make_network(std::move(buses), std::move(gens), std::move(lines));
  return grid;
}

// ---------------------------------------------------------------------------
// Region demo
// ---------------------------------------------------------------------------

RandomGrid make_region_demo() {
  // coal_belt: 66 self-balanced buses. gas_corridor: 67 buses, one unit holds
  // 4 MW of spare capacity. solar_coast: 67 buses, the last one has a 4 MW
  // load and no local generation, so it imports the gas surplus.
  struct RegionSpec {
    const char* name;
    char prefix;
    int count;
    FuelType fuel;
    double cost;
  };
  const RegionSpec specs[] = {
      {"coal_belt", 'c', 66, FuelType::Coal, 40.0},
      {"gas_corridor", 'g', 67, FuelType::NaturalGas, 20.0},
      {"solar_coast", 's', 67, FuelType::Solar, 1.0},
  };

  RandomGrid grid;
  std::vector<Bus> buses;
  std::vector<Generator> gens;
  std::vector<Line> lines;
  Rng rng(20190617);

  int line_no = 0;
  auto add_line = [&](const std::string& a, const std::string& b) {
    Line l;
    l.id = padded_id('l', ++line_no, 3);
    l.from_bus = a;
    l.to_bus = b;
    l.reactance_pu = 0.05;
    lines.push_back(std::move(l));
  };

  std::string prev_region_tail;
  for (const RegionSpec& spec : specs) {
    std::string first, prev;
    for (int i = 0; i < spec.count; ++i) {
      Bus b;
      b.id = padded_id(spec.prefix, i, 2);
      b.region = spec.name;
      b.population = 1000 + 37 * static_cast<std::uint64_t>(rng.index(200));
      const bool import_bus = spec.prefix == 's' && i == spec.count - 1;
      double load = import_bus ? 4.0 : 10.0;
      grid.loads[b.id] = load;
      if (!import_bus) {
        Generator g;
        g.id = "u" + b.id;
        g.bus_id = b.id;
        g.fuel = spec.fuel;
        g.capacity_mw = (spec.prefix == 'g' && i == 0) ? 14.0 : 10.0;
        grid.costs[g.id] = spec.cost + 1e-4 * i;  // unique costs, stable order
        gens.push_back(std::move(g));
      }
      if (i > 0) add_line(prev, b.id);
      if (i == 0) first = b.id;
      prev = b.id;
      buses.push_back(std::move(b));
    }
    if (!prev_region_tail.empty()) add_line(prev_region_tail, first);
    prev_region_tail = prev;
  }

  grid.net = make_network(std::move(buses), std::move(gens), std::move(lines));
  return grid;
}

}  // namespace gridcarbon
