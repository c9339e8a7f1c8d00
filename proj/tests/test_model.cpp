#include "doctest.h"

#include <cmath>
#include <fstream>

#include "gridcarbon/model.hpp"
#include "gridcarbon/synth.hpp"
#include "testutil.hpp"

using namespace gridcarbon;

namespace {

json three_bus_doc() {
  return json::parse(R"({
    "buses": [{"id": "b1"}, {"id": "b2", "region": "west"}, {"id": "b3", "population": 1200}],
    "generators": [
      {"id": "g1", "bus": "b1", "fuel": "coal", "capacity_mw": 50},
      {"id": "g2", "bus": "b2", "fuel": "solar", "capacity_mw": 80, "rate_override": 0.01}
    ],
    "lines": [
      {"id": "l1", "from": "b1", "to": "b3", "x_pu": 0.1},
      {"id": "l2", "from": "b2", "to": "b3", "x_pu": 0.2, "limit_mw": 120}
    ]
  })");
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("parse_network round-trips declared counts") {
  Network net = parse_network(three_bus_doc());
  CHECK(net.buses.size() == 3);
  CHECK(net.lines.size() == 2);
  CHECK(net.generators.size() == 2);
  CHECK(net.bus_of("b2") == 1);
  CHECK(net.generators[net.gen_of("g2")].rate_override == 0.01);
}

TEST_CASE("duplicate bus id names the offender") {
  json doc = three_bus_doc();
  doc["buses"].push_back({{"id", "b1"}});
  CHECK_THROWS_WITH_AS(parse_network(doc), doctest::Contains("b1"), Error);
}

TEST_CASE("self-loop line rejected") {
  json doc = three_bus_doc();
  doc["lines"].push_back({{"id", "l3"}, {"from", "b2"}, {"to", "b2"}});
  CHECK_THROWS_WITH_AS(parse_network(doc), doctest::Contains("self-loop"), Error);
}

TEST_CASE("duplicate unordered bus pair rejected") {
  json doc = three_bus_doc();
  doc["lines"].push_back({{"id", "l3"}, {"from", "b3"}, {"to", "b1"}});
  CHECK_THROWS_AS(parse_network(doc), Error);
}

TEST_CASE("line endpoints must exist and generators must sit on buses") {
  json doc = three_bus_doc();
  doc["lines"][0]["to"] = "nope";
  CHECK_THROWS_WITH_AS(parse_network(doc), doctest::Contains("nope"), Error);
  doc = three_bus_doc();
  doc["generators"][0]["bus"] = "ghost";
  CHECK_THROWS_WITH_AS(parse_network(doc), doctest::Contains("ghost"), Error);
}

TEST_CASE("parse_snapshot cross-references and defaults") {
  Network net = parse_network(three_bus_doc());

  SUBCASE("unknown line id") {
    json doc = {{"timestamp", "t0"}, {"flows", {{"l9", 5.0}}}};
    CHECK_THROWS_WITH_AS(parse_snapshot(doc, net), doctest::Contains("l9"), Error);
  }
  SUBCASE("missing load defaults to zero") {
    json doc = {{"timestamp", "t0"}, {"loads", {{"b1", 7.0}}}};
    Snapshot snap = parse_snapshot(doc, net);
    CHECK(snap.load("b2") == 0.0);
    CHECK(snap.load("b1") == 7.0);
  }
  SUBCASE("negative dispatch rejected") {
    json doc = {{"timestamp", "t0"}, {"dispatch", {{"g1", -3.0}}}};
    CHECK_THROWS_AS(parse_snapshot(doc, net), Error);
  }
  SUBCASE("negative load rejected unless converted") {
    json doc = {{"timestamp", "t0"}, {"loads", {{"b1", -4.0}}}};
    CHECK_THROWS_AS(parse_snapshot(doc, net), Error);
    SnapshotOptions opts;
    opts.allow_negative_loads = true;
    Snapshot snap = parse_snapshot(doc, net, opts);
    CHECK(snap.load("b1") == 0.0);
    REQUIRE(snap.extra_sources.size() == 1);
    CHECK(snap.extra_sources[0].p_mw == 4.0);
    CHECK(snap.extra_sources[0].fuel == FuelType::Solar);
  }
  SUBCASE("dual-end pair and q fields accepted") {
    json doc = {{"timestamp", "t0"},
                {"flows", {{"l1", json::array({100.0, 98.0})}, {"l2", {{"p", 5.0}, {"q", 1.0}}}}}};
    Snapshot snap = parse_snapshot(doc, net);
    CHECK(snap.flows.at("l1").recv == 98.0);
    CHECK(snap.flows.at("l2").send == 5.0);
  }
}

TEST_CASE("emission table matches the built-in fuel rates") {
  EmissionTable table = EmissionTable::defaults();
  CHECK(table.rate(FuelType::Coal) == 0.82);
  CHECK(table.rate(FuelType::PetroleumLiquids) == 0.656);
  CHECK(table.rate(FuelType::NaturalGas) == 0.44);
  CHECK(table.rate(FuelType::Nuclear) == 0.0);
  CHECK(table.rate(FuelType::Hydro) == 0.0);
  CHECK(table.rate(FuelType::Biomass) == 0.23);
  CHECK(table.rate(FuelType::Wind) == 0.0);
  CHECK(table.rate(FuelType::Solar) == 0.0);
  CHECK(table.rate(FuelType::Geothermal) == 0.038);
  CHECK(table.rate(FuelType::OtherImport) == 0.43);
  CHECK(table.rates.size() == 10);
}

TEST_CASE("emission_rate prefers the override") {
  EmissionTable table = EmissionTable::defaults();
  Network net = parse_network(three_bus_doc());
  CHECK(emission_rate(table, net.generators[net.gen_of("g1")]) == 0.82);
  CHECK(emission_rate(table, net.generators[net.gen_of("g2")]) == 0.01);
  Generator orphan{"gx", "b1", FuelType::Wind, 1.0, std::nullopt};
  EmissionTable empty;
  CHECK_THROWS_AS(emission_rate(empty, orphan), Error);
}

TEST_CASE("fuel names parse with aliases, unknown names throw") {
  CHECK(fuel_from_string("Natural Gas") == FuelType::NaturalGas);
  CHECK(fuel_from_string("Other/Import") == FuelType::OtherImport);
  CHECK(fuel_from_string("SOLAR") == FuelType::Solar);
  CHECK_THROWS_AS(fuel_from_string("antimatter"), Error);
  for (int f = 0; f < kNumFuelTypes; ++f) {
    auto fuel = static_cast<FuelType>(f);
    CHECK(fuel_from_string(to_string(fuel)) == fuel);
  }
}

TEST_CASE("validate_snapshot flags the hand-computed imbalance") {
  Network net = make_network(
      {Bus{"b1", {}, {}}, Bus{"b2", {}, {}}},
      {Generator{"g1", "b1", FuelType::NaturalGas, 200.0, {}}},
      {Line{"l1", "b1", "b2", 0.1, {}}});
  Snapshot snap;
  snap.timestamp = "t";
  snap.dispatch["g1"] = 100.0;
  snap.loads["b2"] = 100.0;

  SUBCASE("exact balance") {
    snap.flows["l1"] = LineFlow{100.0, {}};
    ValidationReport r = validate_snapshot(net, snap);
    CHECK(r.ok());
    CHECK(r.max_abs_residual == 0.0);
  }
  SUBCASE("2 MW short") {
    snap.flows["l1"] = LineFlow{98.0, {}};
    ValidationReport r = validate_snapshot(net, snap);
    CHECK_FALSE(r.ok());
    CHECK(r.residuals[0].residual_mw == doctest::Approx(2.0));
    CHECK(r.residuals[1].residual_mw == doctest::Approx(-2.0));
    CHECK(r.violations.size() == 2);
  }
}

TEST_CASE("empty snapshot over empty network yields an empty report") {
  Network net = make_network({}, {}, {});
  ValidationReport r = validate_snapshot(net, Snapshot{});
  CHECK(r.residuals.empty());
  CHECK(r.ok());
}

TEST_CASE("residuals sum to gen - load - loss") {
  testutil::Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    RandomGrid grid = random_grid(2 + static_cast<int>(rng.index(30)),
                                  1 + static_cast<int>(rng.index(5)), 2.5, rng.next());
    Snapshot snap = make_snapshot(grid.net, grid.loads, grid.costs);
    // Mangle some flows so residuals are non-trivial; add losses on a few.
    for (auto& [id, f] : snap.flows) {
      if (rng.u01() < 0.2) f.send *= rng.uniform(0.8, 1.2);
      if (rng.u01() < 0.2 && std::abs(f.send) > 1.0) {
        f.recv = f.send * (f.send >= 0 ? 0.97 : 0.97);
      }
    }
    double gen = 0.0, load = 0.0, loss = 0.0;
    for (auto& [_, p] : snap.dispatch) gen += p;
    for (auto& [_, d] : snap.loads) load += d;
    for (auto& [_, f] : snap.flows) {
      if (f.recv) loss += std::abs(f.send) - std::abs(*f.recv);
    }
    ValidationReport r = validate_snapshot(grid.net, snap);
    double residual_sum = 0.0;
    for (const BusResidual& br : r.residuals) residual_sum += br.residual_mw;
    double expect = gen - load - loss;
    double scale = std::max({1.0, std::abs(gen), std::abs(load)});
    CHECK(std::abs(residual_sum - expect) < 1e-12 * scale);
  }
}

TEST_CASE("parse -> serialize -> parse is the identity") {
  testutil::Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    RandomGrid grid = random_grid(2 + static_cast<int>(rng.index(20)),
                                  1 + static_cast<int>(rng.index(4)), 3.0, rng.next());
    Network reparsed = parse_network(network_to_json(grid.net));
    CHECK(reparsed == grid.net);

    Snapshot snap = make_snapshot(grid.net, grid.loads, grid.costs);
    if (trial % 3 == 0 && !snap.flows.empty()) {
      auto& f = snap.flows.begin()->second;
      f.recv = f.send * 0.99;
    }
    Snapshot reparsed_snap = parse_snapshot(snapshot_to_json(snap), grid.net);
    CHECK(reparsed_snap == snap);
    Snapshot third = parse_snapshot(snapshot_to_json(reparsed_snap), grid.net);
    CHECK(third == reparsed_snap);
  }
}

TEST_CASE("csv snapshot rows parse to the same snapshot as json") {
  Network net = parse_network(three_bus_doc());
  auto dir = std::filesystem::temp_directory_path() / "gridcarbon_test_snapcsv";
  std::filesystem::create_directories(dir);
  auto path = dir / "snapshot.csv";
  {
    std::ofstream out(path);
    out << "# fixture\n"
        << "timestamp,t1\n"
        << "load,b3,100\n"
        << "dispatch,g1,30\n"
        << "dispatch,g2,70\n"
        << "flow,l1,30\n"
        << "flow,l2,70,69.5\n";
  }
  Snapshot snap = parse_snapshot_file(path, net);
  json doc = {{"timestamp", "t1"},
              {"loads", {{"b3", 100.0}}},
              {"dispatch", {{"g1", 30.0}, {"g2", 70.0}}},
              {"flows", {{"l1", 30.0}, {"l2", json::array({70.0, 69.5})}}}};
  CHECK(snap == parse_snapshot(doc, net));

  {
    std::ofstream out(path);
    out << "flow,l9,5\n";
  }
  CHECK_THROWS_WITH_AS(parse_snapshot_file(path, net), doctest::Contains("l9"), Error);
  {
    std::ofstream out(path);
    out << "widget,b1,5\n";
  }
  CHECK_THROWS_AS(parse_snapshot_file(path, net), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("emissions csv merges onto defaults") {
  auto dir = std::filesystem::temp_directory_path() / "gridcarbon_test_csv";
  std::filesystem::create_directories(dir);
  auto path = dir / "emissions.csv";
  {
    std::ofstream out(path);
    out << "fuel,rate_t_per_mwh\ncoal,0.9\nBiomass,0.2\n";
  }
  EmissionTable t = parse_emission_table(path);
  CHECK(t.rate(FuelType::Coal) == 0.9);
  CHECK(t.rate(FuelType::Biomass) == 0.2);
  CHECK(t.rate(FuelType::NaturalGas) == 0.44);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
