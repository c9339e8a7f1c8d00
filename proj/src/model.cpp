#include "gridcarbon/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gridcarbon/util.hpp"

namespace gridcarbon {

// ---------------------------------------------------------------------------
// Fuel types
// ---------------------------------------------------------------------------

const char* to_string(FuelType fuel) {
  switch (fuel) {
    case FuelType::Coal: return "coal";
    case FuelType::PetroleumLiquids: return "petroleum_liquids";
    case FuelType::NaturalGas: return "natural_gas";
    case FuelType::Nuclear: return "nuclear";
    case FuelType::Hydro: return "hydro";
    case FuelType::Biomass: return "biomass";
    case FuelType::Wind: return "wind";
    case FuelType::Solar: return "solar";
    case FuelType::Geothermal: return "geothermal";
    case FuelType::OtherImport: return "other_import";
  }
  return "unknown";
}

FuelType fuel_from_string(std::string_view name) {
  std::string key;
  key.reserve(name.size());
  for (char c : name) {
    if (c == ' ' || c == '/' || c == '-') {
      key.push_back('_');
    } else {
      key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  static const std::unordered_map<std::string, FuelType> kNames = {
      {"coal", FuelType::Coal},
      {"petroleum_liquids", FuelType::PetroleumLiquids},
      {"petroleum", FuelType::PetroleumLiquids},
      {"oil", FuelType::PetroleumLiquids},
      {"natural_gas", FuelType::NaturalGas},
      {"gas", FuelType::NaturalGas},
      {"nuclear", FuelType::Nuclear},
      {"hydro", FuelType::Hydro},
      {"biomass", FuelType::Biomass},
      {"wind", FuelType::Wind},
      {"solar", FuelType::Solar},
      {"geothermal", FuelType::Geothermal},
      {"other_import", FuelType::OtherImport},
      {"other", FuelType::OtherImport},
      {"import", FuelType::OtherImport},
  };
  auto it = kNames.find(key);
  if (it == kNames.end()) {
    fail(ErrorKind::Parse, "unknown fuel type: \"" + std::string(name) + "\"");
  }
  return it->second;
}

FuelCategory fuel_category(FuelType fuel) {
  switch (fuel) {
    case FuelType::Coal:
    case FuelType::PetroleumLiquids:
    case FuelType::NaturalGas:
      return FuelCategory::Fossil;
    case FuelType::Nuclear:
      return FuelCategory::LowCarbon;
    case FuelType::Hydro:
    case FuelType::Biomass:
    case FuelType::Wind:
    case FuelType::Solar:
    case FuelType::Geothermal:
      return FuelCategory::Renewable;
    case FuelType::OtherImport:
      return FuelCategory::Mix;
  }
  return FuelCategory::Mix;
}

bool is_renewable(FuelType fuel) {
  return fuel_category(fuel) == FuelCategory::Renewable;
}

EmissionTable EmissionTable::defaults() {
  EmissionTable t;
  t.rates = {
      {FuelType::Coal, 0.82},
      {FuelType::PetroleumLiquids, 0.656},
      {FuelType::NaturalGas, 0.44},
      {FuelType::Nuclear, 0.0},
      {FuelType::Hydro, 0.0},
      {FuelType::Biomass, 0.23},
      {FuelType::Wind, 0.0},
      {FuelType::Solar, 0.0},
      {FuelType::Geothermal, 0.038},
      {FuelType::OtherImport, 0.43},
  };
  return t;
}

double EmissionTable::rate(FuelType fuel) const {
  auto it = rates.find(fuel);
  if (it == rates.end()) {
    fail(ErrorKind::Validation,
         std::string("no emission rate for fuel type \"") + to_string(fuel) + "\"");
  }
  return it->second;
}

EmissionTable parse_emission_table(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) {
    fail(ErrorKind::Io, "cannot open emissions csv: " + csv_path.string());
  }
  EmissionTable table = EmissionTable::defaults();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) {
      fail(ErrorKind::Parse, csv_path.string() + ":" + std::to_string(lineno) +
                                 ": expected `fuel,rate_t_per_mwh`");
    }
    std::string fuel_str = line.substr(0, comma);
    std::string rate_str = line.substr(comma + 1);
    if (lineno == 1 && fuel_str == "fuel") continue;  // header row
    double rate = 0.0;
    try {
      size_t pos = 0;
      rate = std::stod(rate_str, &pos);
      while (pos < rate_str.size() && std::isspace(static_cast<unsigned char>(rate_str[pos]))) ++pos;
      if (pos != rate_str.size()) throw std::invalid_argument(rate_str);
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, csv_path.string() + ":" + std::to_string(lineno) +
                                 ": malformed rate \"" + rate_str + "\"");
    }
    if (rate < 0.0) {
      fail(ErrorKind::Validation, csv_path.string() + ":" + std::to_string(lineno) +
                                      ": negative emission rate");
    }
    table.rates[fuel_from_string(fuel_str)] = rate;
  }
  return table;
}

double emission_rate(const EmissionTable& table, const Generator& gen) {
  if (gen.rate_override) return *gen.rate_override;
  return table.rate(gen.fuel);
}

// ---------------------------------------------------------------------------
// Network construction
// ---------------------------------------------------------------------------

Network make_network(std::vector<Bus> buses, std::vector<Generator> generators,
                     std::vector<Line> lines) {
  Network net;
  net.buses = std::move(buses);
  net.generators = std::move(generators);
  net.lines = std::move(lines);

  auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
  std::sort(net.buses.begin(), net.buses.end(), by_id);
  std::sort(net.generators.begin(), net.generators.end(), by_id);
  std::sort(net.lines.begin(), net.lines.end(), by_id);

  net.bus_index.reserve(net.buses.size());
  for (int i = 0; i < static_cast<int>(net.buses.size()); ++i) {
    if (!net.bus_index.emplace(net.buses[i].id, i).second) {
      fail(ErrorKind::Validation, "duplicate bus id \"" + net.buses[i].id + "\"");
    }
  }
  net.gen_index.reserve(net.generators.size());
  for (int i = 0; i < static_cast<int>(net.generators.size()); ++i) {
    const Generator& g = net.generators[i];
    if (!net.gen_index.emplace(g.id, i).second) {
      fail(ErrorKind::Validation, "duplicate generator id \"" + g.id + "\"");
    }
    if (net.bus_of(g.bus_id) < 0) {
      fail(ErrorKind::Validation, "generator \"" + g.id +
                                      "\" references unknown bus \"" + g.bus_id + "\"");
    }
    if (g.capacity_mw < 0.0) {
      fail(ErrorKind::Validation, "generator \"" + g.id + "\" has negative capacity");
    }
    if (g.rate_override && *g.rate_override < 0.0) {
      fail(ErrorKind::Validation, "generator \"" + g.id + "\" has negative rate override");
    }
  }
  net.line_index.reserve(net.lines.size());
  std::unordered_map<std::string, std::string> seen_pairs;
  for (int i = 0; i < static_cast<int>(net.lines.size()); ++i) {
    const Line& l = net.lines[i];
    if (!net.line_index.emplace(l.id, i).second) {
      fail(ErrorKind::Validation, "duplicate line id \"" + l.id + "\"");
    }
    if (net.bus_of(l.from_bus) < 0) {
      fail(ErrorKind::Validation,
           "line \"" + l.id + "\" references unknown bus \"" + l.from_bus + "\"");
    }
    if (net.bus_of(l.to_bus) < 0) {
      fail(ErrorKind::Validation,
           "line \"" + l.id + "\" references unknown bus \"" + l.to_bus + "\"");
    }
    if (l.from_bus == l.to_bus) {
      fail(ErrorKind::Validation, "line \"" + l.id + "\" is a self-loop at bus \"" +
                                      l.from_bus + "\"");
    }
    if (l.reactance_pu && *l.reactance_pu <= 0.0) {
      fail(ErrorKind::Validation, "line \"" + l.id + "\" has non-positive reactance");
    }
    if (l.flow_limit_mw && *l.flow_limit_mw <= 0.0) {
      fail(ErrorKind::Validation, "line \"" + l.id + "\" has non-positive flow limit");
    }
    std::string key = l.from_bus < l.to_bus ? l.from_bus + "\x1f" + l.to_bus
                                            : l.to_bus + "\x1f" + l.from_bus;
    auto [it, inserted] = seen_pairs.emplace(std::move(key), l.id);
    if (!inserted) {
      fail(ErrorKind::Validation, "lines \"" + it->second + "\" and \"" + l.id +
                                      "\" duplicate the bus pair (" + l.from_bus +
                                      ", " + l.to_bus + ")");
    }
  }
  net.line_from_idx.reserve(net.lines.size());
  net.line_to_idx.reserve(net.lines.size());
  for (const Line& l : net.lines) {
    net.line_from_idx.push_back(net.bus_of(l.from_bus));
    net.line_to_idx.push_back(net.bus_of(l.to_bus));
  }
  net.gen_bus_idx.reserve(net.generators.size());
  for (const Generator& g : net.generators) {
    net.gen_bus_idx.push_back(net.bus_of(g.bus_id));
  }
  return net;
}

// ---------------------------------------------------------------------------
// JSON parsing helpers
// ---------------------------------------------------------------------------

namespace {

const json& require_field(const json& obj, const char* key, const std::string& ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    fail(ErrorKind::Parse, ctx + ": missing field \"" + key + "\"");
  }
  return *it;
}

double as_number(const json& v, const std::string& ctx) {
  if (!v.is_number()) {
    fail(ErrorKind::Parse, ctx + ": expected a number, got " + v.dump());
  }
  return v.get<double>();
}

std::string as_string(const json& v, const std::string& ctx) {
  if (!v.is_string()) {
    fail(ErrorKind::Parse, ctx + ": expected a string, got " + v.dump());
  }
  return v.get<std::string>();
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorKind::Io, "cannot open file: " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

}  // namespace

Network parse_network(const json& doc, const std::string& context) {
  if (!doc.is_object()) {
    fail(ErrorKind::Parse, context + ": top level must be an object");
  }
  std::vector<Bus> buses;
  std::vector<Generator> gens;
  std::vector<Line> lines;

  const json& jbuses = require_field(doc, "buses", context);
  for (size_t i = 0; i < jbuses.size(); ++i) {
    const json& jb = jbuses[i];
    std::string ctx = context + ": buses[" + std::to_string(i) + "]";
    Bus b;
    b.id = as_string(require_field(jb, "id", ctx), ctx + ".id");
    if (jb.contains("region") && !jb["region"].is_null()) {
      b.region = as_string(jb["region"], ctx + ".region");
    }
    if (jb.contains("population") && !jb["population"].is_null()) {
      double p = as_number(jb["population"], ctx + ".population");
      if (p < 0.0) fail(ErrorKind::Validation, ctx + ": negative population");
      b.population = static_cast<std::uint64_t>(p);
    }
    buses.push_back(std::move(b));
  }

  const json& jgens = require_field(doc, "generators", context);
  for (size_t i = 0; i < jgens.size(); ++i) {
    const json& jg = jgens[i];
    std::string ctx = context + ": generators[" + std::to_string(i) + "]";
    Generator g;
    g.id = as_string(require_field(jg, "id", ctx), ctx + ".id");
    g.bus_id = as_string(require_field(jg, "bus", ctx), ctx + ".bus");
    g.fuel = fuel_from_string(as_string(require_field(jg, "fuel", ctx), ctx + ".fuel"));
    g.capacity_mw = as_number(require_field(jg, "capacity_mw", ctx), ctx + ".capacity_mw");
    if (jg.contains("rate_override") && !jg["rate_override"].is_null()) {
      g.rate_override = as_number(jg["rate_override"], ctx + ".rate_override");
    }
    gens.push_back(std::move(g));
  }

  const json& jlines = require_field(doc, "lines", context);
  for (size_t i = 0; i < jlines.size(); ++i) {
    const json& jl = jlines[i];
    std::string ctx = context + ": lines[" + std::to_string(i) + "]";
    Line l;
    l.id = as_string(require_field(jl, "id", ctx), ctx + ".id");
    l.from_bus = as_string(require_field(jl, "from", ctx), ctx + ".from");
    l.to_bus = as_string(require_field(jl, "to", ctx), ctx + ".to");
    if (jl.contains("x_pu") && !jl["x_pu"].is_null()) {
      l.reactance_pu = as_number(jl["x_pu"], ctx + ".x_pu");
    }
    if (jl.contains("limit_mw") && !jl["limit_mw"].is_null()) {
      l.flow_limit_mw = as_number(jl["limit_mw"], ctx + ".limit_mw");
    }
    lines.push_back(std::move(l));
  }

  return make_network(std::move(buses), std::move(gens), std::move(lines));
}

Network parse_network_file(const std::filesystem::path& path) {
  return parse_network(load_json(path), path.string());
}

namespace {

// Accepts MW | [send, recv] | {"p": ...}; reactive fields are ignored.
LineFlow parse_flow_value(const json& v, const std::string& ctx) {
  if (v.is_number()) {
    return LineFlow{v.get<double>(), std::nullopt};
  }
  if (v.is_array()) {
    if (v.size() != 2) {
      fail(ErrorKind::Parse, ctx + ": flow pair must be [send, recv]");
    }
    return LineFlow{as_number(v[0], ctx + "[0]"), as_number(v[1], ctx + "[1]")};
  }
  if (v.is_object() && v.contains("p")) {
    return parse_flow_value(v["p"], ctx + ".p");
  }
  fail(ErrorKind::Parse, ctx + ": expected a number or [send, recv] pair");
}

double parse_load_value(const json& v, const std::string& ctx) {
  if (v.is_object() && v.contains("p")) {
    return as_number(v["p"], ctx + ".p");
  }
  return as_number(v, ctx);
}

}  // namespace

Snapshot parse_snapshot(const json& doc, const Network& net,
                        const SnapshotOptions& opts, const std::string& context) {
  if (!doc.is_object()) {
    fail(ErrorKind::Parse, context + ": top level must be an object");
  }
  Snapshot snap;
  snap.timestamp = as_string(require_field(doc, "timestamp", context), context + ".timestamp");

  if (doc.contains("loads")) {
    for (const auto& [bus_id, v] : doc["loads"].items()) {
      std::string ctx = context + ": loads[\"" + bus_id + "\"]";
      if (net.bus_of(bus_id) < 0) {
        fail(ErrorKind::Validation, ctx + ": unknown bus id");
      }
      double mw = parse_load_value(v, ctx);
      if (mw < 0.0) {
        if (!opts.allow_negative_loads) {
          fail(ErrorKind::Validation,
               ctx + ": negative load " + format_g9(mw) +
                   " (pass --allow-negative-loads to convert it to a virtual source)");
        }
        snap.extra_sources.push_back(ExtraSource{
            "~negload:" + bus_id, bus_id, -mw, opts.negative_load_fuel});
        mw = 0.0;
      }
      snap.loads[bus_id] = mw;
    }
  }

  if (doc.contains("dispatch")) {
    for (const auto& [gen_id, v] : doc["dispatch"].items()) {
      std::string ctx = context + ": dispatch[\"" + gen_id + "\"]";
      if (net.gen_of(gen_id) < 0) {
        fail(ErrorKind::Validation, ctx + ": unknown generator id");
      }
      double mw = as_number(v, ctx);
      if (mw < 0.0) {
        fail(ErrorKind::Validation, ctx + ": dispatch must be >= 0, got " + format_g9(mw));
      }
      snap.dispatch[gen_id] = mw;
    }
  }

  if (doc.contains("flows")) {
    for (const auto& [line_id, v] : doc["flows"].items()) {
      std::string ctx = context + ": flows[\"" + line_id + "\"]";
      if (net.line_of(line_id) < 0) {
        fail(ErrorKind::Validation, ctx + ": unknown line id");
      }
      snap.flows[line_id] = parse_flow_value(v, ctx);
    }
  }

  if (doc.contains("line_losses")) {
    for (const auto& [line_id, v] : doc["line_losses"].items()) {
      std::string ctx = context + ": line_losses[\"" + line_id + "\"]";
      if (net.line_of(line_id) < 0) {
        fail(ErrorKind::Validation, ctx + ": unknown line id");
      }
      snap.line_loss[line_id] = as_number(v, ctx);
    }
  }

  if (doc.contains("x_sources")) {
    for (size_t i = 0; i < doc["x_sources"].size(); ++i) {
      const json& js = doc["x_sources"][i];
      std::string ctx = context + ": x_sources[" + std::to_string(i) + "]";
      ExtraSource s;
      s.id = as_string(require_field(js, "id", ctx), ctx + ".id");
      s.bus_id = as_string(require_field(js, "bus", ctx), ctx + ".bus");
      if (net.bus_of(s.bus_id) < 0) {
        fail(ErrorKind::Validation, ctx + ": unknown bus id \"" + s.bus_id + "\"");
      }
      s.p_mw = as_number(require_field(js, "p_mw", ctx), ctx + ".p_mw");
      s.fuel = fuel_from_string(as_string(require_field(js, "fuel", ctx), ctx + ".fuel"));
      snap.extra_sources.push_back(std::move(s));
    }
  }

  return snap;
}

Snapshot parse_snapshot_csv(const std::filesystem::path& path, const Network& net,
                            const SnapshotOptions& opts) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open file: " + path.string());

  Snapshot snap;
  std::string line;
  int lineno = 0;
  auto where = [&] { return path.string() + ":" + std::to_string(lineno); };
  auto to_number = [&](const std::string& cell) {
    try {
      size_t pos = 0;
      double v = std::stod(cell, &pos);
      while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
      if (pos != cell.size()) throw std::invalid_argument(cell);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, where() + ": malformed number \"" + cell + "\"");
    }
  };

  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) {
      fail(ErrorKind::Parse, where() + ": expected `kind,id,value`");
    }
    const std::string& kind = cells[0];
    if (kind == "timestamp") {
      snap.timestamp = cells[1];
      continue;
    }
    if (cells.size() < 3) {
      fail(ErrorKind::Parse, where() + ": expected `" + kind + ",<id>,<value>`");
    }
    const std::string& id = cells[1];
    if (kind == "load") {
      if (net.bus_of(id) < 0) fail(ErrorKind::Validation, where() + ": unknown bus \"" + id + "\"");
      double mw = to_number(cells[2]);
      if (mw < 0.0) {
        if (!opts.allow_negative_loads) {
          fail(ErrorKind::Validation, where() + ": negative load at \"" + id + "\"");
        }
        snap.extra_sources.push_back(
            ExtraSource{"~negload:" + id, id, -mw, opts.negative_load_fuel});
        mw = 0.0;
      }
      snap.loads[id] = mw;
    } else if (kind == "dispatch") {
      if (net.gen_of(id) < 0) fail(ErrorKind::Validation, where() + ": unknown generator \"" + id + "\"");
      double mw = to_number(cells[2]);
      if (mw < 0.0) fail(ErrorKind::Validation, where() + ": dispatch must be >= 0");
      snap.dispatch[id] = mw;
    } else if (kind == "flow") {
      if (net.line_of(id) < 0) fail(ErrorKind::Validation, where() + ": unknown line \"" + id + "\"");
      LineFlow f{to_number(cells[2]), std::nullopt};
      if (cells.size() > 3) f.recv = to_number(cells[3]);
      snap.flows[id] = f;
    } else {
      fail(ErrorKind::Parse, where() + ": unknown row kind \"" + kind + "\"");
    }
  }
  return snap;
}

Snapshot parse_snapshot_file(const std::filesystem::path& path, const Network& net,
                             const SnapshotOptions& opts) {
  if (path.extension() == ".csv") {
    return parse_snapshot_csv(path, net, opts);
  }
  return parse_snapshot(load_json(path), net, opts, path.string());
}

// ---------------------------------------------------------------------------
// Serialization (canonical order: vectors already sorted, std::map sorted)
// ---------------------------------------------------------------------------

json network_to_json(const Network& net) {
  json doc;
  json jbuses = json::array();
  for (const Bus& b : net.buses) {
    json jb{{"id", b.id}};
    if (b.region) jb["region"] = *b.region;
    if (b.population) jb["population"] = *b.population;
    jbuses.push_back(std::move(jb));
  }
  doc["buses"] = std::move(jbuses);

  json jgens = json::array();
  for (const Generator& g : net.generators) {
    json jg{{"id", g.id}, {"bus", g.bus_id}, {"fuel", to_string(g.fuel)},
            {"capacity_mw", g.capacity_mw}};
    if (g.rate_override) jg["rate_override"] = *g.rate_override;
    jgens.push_back(std::move(jg));
  }
  doc["generators"] = std::move(jgens);

  json jlines = json::array();
  for (const Line& l : net.lines) {
    json jl{{"id", l.id}, {"from", l.from_bus}, {"to", l.to_bus}};
    if (l.reactance_pu) jl["x_pu"] = *l.reactance_pu;
    if (l.flow_limit_mw) jl["limit_mw"] = *l.flow_limit_mw;
    jlines.push_back(std::move(jl));
  }
  doc["lines"] = std::move(jlines);
  return doc;
}

json snapshot_to_json(const Snapshot& snap) {
  json doc;
  doc["timestamp"] = snap.timestamp;
  json jloads = json::object();
  for (const auto& [bus, mw] : snap.loads) jloads[bus] = mw;
  doc["loads"] = std::move(jloads);
  json jdisp = json::object();
  for (const auto& [gen, mw] : snap.dispatch) jdisp[gen] = mw;
  doc["dispatch"] = std::move(jdisp);
  json jflows = json::object();
  for (const auto& [line, f] : snap.flows) {
    if (f.recv) {
      jflows[line] = json::array({f.send, *f.recv});
    } else {
      jflows[line] = f.send;
    }
  }
  doc["flows"] = std::move(jflows);
  if (!snap.line_loss.empty()) {
    json jl = json::object();
    for (const auto& [line, mw] : snap.line_loss) jl[line] = mw;
    doc["line_losses"] = std::move(jl);
  }
  if (!snap.extra_sources.empty()) {
    json js = json::array();
    for (const ExtraSource& s : snap.extra_sources) {
      js.push_back(json{{"id", s.id}, {"bus", s.bus_id}, {"p_mw", s.p_mw},
                        {"fuel", to_string(s.fuel)}});
    }
    doc["x_sources"] = std::move(js);
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

ValidationReport validate_snapshot(const Network& net, const Snapshot& snap,
                                   const Tolerance& tol) {
  const int n = static_cast<int>(net.buses.size());
  std::vector<double> line_in(n, 0.0), line_out(n, 0.0);
  std::vector<double> gen_in(n, 0.0), load_out(n, 0.0);

  for (const auto& [line_id, f] : snap.flows) {
    int li = net.line_of(line_id);
    if (li < 0) fail(ErrorKind::Validation, "flow references unknown line \"" + line_id + "\"");
    int from = net.line_from_idx[li];
    int to = net.line_to_idx[li];
    double send_mag = std::abs(f.send);
    double arrive_mag = f.recv ? std::abs(*f.recv) : send_mag;
    if (f.send >= 0.0) {
      line_out[from] += send_mag;
      line_in[to] += arrive_mag;
    } else {
      line_out[to] += send_mag;
      line_in[from] += arrive_mag;
    }
  }
  for (const auto& [gen_id, mw] : snap.dispatch) {
    int gi = net.gen_of(gen_id);
    if (gi < 0) fail(ErrorKind::Validation, "dispatch references unknown generator \"" + gen_id + "\"");
    gen_in[net.gen_bus_idx[gi]] += mw;
  }
  for (const ExtraSource& s : snap.extra_sources) {
    int b = net.bus_of(s.bus_id);
    if (b < 0) fail(ErrorKind::Validation, "source references unknown bus \"" + s.bus_id + "\"");
    gen_in[b] += s.p_mw;
  }
  for (const auto& [bus_id, mw] : snap.loads) {
    int b = net.bus_of(bus_id);
    if (b < 0) fail(ErrorKind::Validation, "load references unknown bus \"" + bus_id + "\"");
    load_out[b] += mw;
  }
  for (const auto& [line_id, loss] : snap.line_loss) {
    int li = net.line_of(line_id);
    if (li < 0) fail(ErrorKind::Validation, "loss references unknown line \"" + line_id + "\"");
    auto it = snap.flows.find(line_id);
    bool forward = it == snap.flows.end() || it->second.send >= 0.0;
    load_out[forward ? net.line_to_idx[li] : net.line_from_idx[li]] += loss;
  }

  ValidationReport report;
  report.residuals.reserve(n);
  for (int i = 0; i < n; ++i) {
    double inflow = line_in[i] + gen_in[i];
    double outflow = line_out[i] + load_out[i];
    BusResidual r;
    r.bus_id = net.buses[i].id;
    r.residual_mw = inflow - outflow;
    r.flagged = std::abs(r.residual_mw) > tol.threshold(inflow, outflow);
    report.max_abs_residual = std::max(report.max_abs_residual, std::abs(r.residual_mw));
    if (r.flagged) report.violations.push_back(r.bus_id);
    report.residuals.push_back(std::move(r));
  }
  return report;
}

json validation_report_to_json(const ValidationReport& report) {
  json doc;
  doc["max_abs_residual_mw"] = round9(report.max_abs_residual);
  doc["violations"] = report.violations;
  json jr = json::object();
  for (const BusResidual& r : report.residuals) {
    jr[r.bus_id] = json{{"residual_mw", round9(r.residual_mw)}, {"flagged", r.flagged}};
  }
  doc["residuals"] = std::move(jr);
  doc["ok"] = report.ok();
  return doc;
}

}  // namespace gridcarbon
