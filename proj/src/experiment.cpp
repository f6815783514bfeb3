#include "cim/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "cim/observables.hpp"

#ifndef CIM_VERSION
#define CIM_VERSION "0.0.0"
#endif

namespace cim {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

std::string child(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

std::string index_path(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// Collects violations while walking the document.
class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& message) { errors.push_back(path + ": " + message); }

  bool object(const json& node, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!node.is_object()) {
      fail(path, "expected an object");
      return false;
    }
    for (const auto& [key, value] : node.items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
        fail(child(path, key), "unknown key");
    }
    return true;
  }

  std::optional<double> number(const json& node, const std::string& path) {
    if (!node.is_number()) {
      fail(path, "expected a number");
      return std::nullopt;
    }
    const double v = node.get<double>();
    if (!std::isfinite(v)) {
      fail(path, "must be finite");
      return std::nullopt;
    }
    return v;
  }

  std::optional<long long> integer(const json& node, const std::string& path) {
    if (!node.is_number_integer()) {
      fail(path, "expected an integer");
      return std::nullopt;
    }
    if (node.is_number_unsigned() && node.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
      fail(path, "integer out of range");
      return std::nullopt;
    }
    return node.get<long long>();
  }

  template <class T>
  void read_int(const json& obj, const char* key, const std::string& path, T& out, long long min,
                long long max = INT32_MAX) {
    if (!obj.contains(key)) return;
    const auto p = child(path, key);
    if (auto v = integer(obj.at(key), p)) {
      if (*v < min || *v > max)
        fail(p, "must be in [" + std::to_string(min) + ", " + std::to_string(max) + "], got " + std::to_string(*v));
      else
        out = static_cast<T>(*v);
    }
  }
};

const std::set<std::string> kObservables{"success", "purity", "photon", "sign"};

std::string kind_name(Schedule::Kind k) {
  switch (k) {
    case Schedule::Kind::constant: return "constant";
    case Schedule::Kind::linear: return "linear";
    case Schedule::Kind::tanh_ramp: return "tanh";
  }
  return "constant";
}

std::string initial_name(InitialKind k) {
  switch (k) {
    case InitialKind::vacuum: return "vacuum";
    case InitialKind::coherent: return "coherent";
    case InitialKind::cat_product: return "cat-product";
    case InitialKind::entangled_cat: return "entangled-cat";
  }
  return "vacuum";
}

ParameterSpec read_parameter(Reader& r, const json& node, const std::string& path, ParameterSpec fallback) {
  constexpr double min_value = 0.0;
  ParameterSpec spec = fallback;
  if (node.is_number()) {
    if (auto v = r.number(node, path)) spec = ParameterSpec::constant(*v);
  } else if (r.object(node, path, {"kind", "value", "start", "end", "sharpness"})) {
    const auto kind = node.contains("kind") && node.at("kind").is_string() ? node.at("kind").get<std::string>() : "";
    if (kind == "constant") {
      for (const char* k : {"start", "end", "sharpness"})
        if (node.contains(k)) r.fail(child(path, k), "not allowed for a constant parameter");
      if (!node.contains("value"))
        r.fail(child(path, "value"), "required");
      else if (auto v = r.number(node.at("value"), child(path, "value")))
        spec = ParameterSpec::constant(*v);
    } else if (kind == "linear" || kind == "tanh") {
      spec.kind = kind == "linear" ? Schedule::Kind::linear : Schedule::Kind::tanh_ramp;
      spec.sharpness = 3.0;
      if (node.contains("value")) r.fail(child(path, "value"), "not allowed for a ramp");
      for (const char* k : {"start", "end"}) {
        if (!node.contains(k)) {
          r.fail(child(path, k), "required");
          continue;
        }
        if (auto v = r.number(node.at(k), child(path, k))) (std::string(k) == "start" ? spec.start : spec.end) = *v;
      }
      if (node.contains("sharpness")) {
        if (kind == "linear")
          r.fail(child(path, "sharpness"), "only used by tanh ramps");
        else if (auto v = r.number(node.at("sharpness"), child(path, "sharpness"))) {
          if (*v <= 0.0) r.fail(child(path, "sharpness"), "must be positive");
          spec.sharpness = *v;
        }
      }
    } else {
      r.fail(child(path, "kind"), "expected one of constant, linear, tanh");
    }
  }
  if (std::min(spec.start, spec.end) < min_value) r.fail(path, "must be non-negative");
  return spec;
}

json write_parameter(const ParameterSpec& p) {
  if (p.kind == Schedule::Kind::constant) return p.start;
  json j{{"kind", kind_name(p.kind)}, {"start", p.start}, {"end", p.end}};
  if (p.kind == Schedule::Kind::tanh_ramp) j["sharpness"] = p.sharpness;
  return j;
}

bool has_observable(const ExperimentConfig& c, const std::string& name) {
  return std::find(c.observables.begin(), c.observables.end(), name) != c.observables.end();
}

int mode_count(const ProblemSpec& p) {
  if (p.kind == ProblemSpec::Kind::builtin) {
    for (const auto& e : builtin_instances())
      if (e.name == p.name) return e.make().modes();
    return 0;
  }
  return p.size;
}

void read_problem(Reader& r, const json& node, ProblemSpec& p) {
  const std::string path = "problem";
  const auto builtin_ok = [&](const std::string& name, const std::string& at) {
    const auto& cat = builtin_instances();
    if (std::none_of(cat.begin(), cat.end(), [&](const CatalogEntry& e) { return e.name == name; }))
      r.fail(at, "unknown built-in instance '" + name + "'");
  };
  if (node.is_string()) {
    p = ProblemSpec{};
    p.name = node.get<std::string>();
    builtin_ok(p.name, path);
    return;
  }
  if (!r.object(node, path, {"builtin", "j12", "matrix", "nodes", "edges"})) return;
  const int forms = node.contains("builtin") + node.contains("matrix") + node.contains("edges");
  if (forms != 1) {
    r.fail(path, "exactly one of builtin, matrix, edges is required");
    return;
  }
  p = ProblemSpec{};
  if (node.contains("builtin")) {
    if (node.contains("nodes")) r.fail(child(path, "nodes"), "only used with edges");
    if (!node.at("builtin").is_string()) {
      r.fail(child(path, "builtin"), "expected a string");
      return;
    }
    p.name = node.at("builtin").get<std::string>();
    builtin_ok(p.name, child(path, "builtin"));
    if (node.contains("j12")) {
      if (p.name != "frustrated4" && p.name != "ferro-weighted")
        r.fail(child(path, "j12"), "only frustrated4 and ferro-weighted take j12");
      else
        p.j12 = r.number(node.at("j12"), child(path, "j12"));
    }
    return;
  }
  if (node.contains("j12")) r.fail(child(path, "j12"), "only used with builtin instances");
  if (node.contains("matrix")) {
    if (node.contains("nodes")) r.fail(child(path, "nodes"), "only used with edges");
    p.kind = ProblemSpec::Kind::matrix;
    p.name = "matrix";
    const auto& m = node.at("matrix");
    const auto mp = child(path, "matrix");
    if (!m.is_array() || m.empty()) {
      r.fail(mp, "expected a non-empty array of rows");
      return;
    }
    p.size = static_cast<int>(m.size());
    p.matrix.assign(static_cast<std::size_t>(p.size) * p.size, 0.0);
    bool shape_ok = true;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!m[i].is_array() || m[i].size() != m.size()) {
        r.fail(index_path(mp, i), "row length must equal the row count");
        shape_ok = false;
        continue;
      }
      for (std::size_t j = 0; j < m.size(); ++j)
        if (auto v = r.number(m[i][j], index_path(index_path(mp, i), j))) p.matrix[i * p.size + j] = *v;
    }
    if (!shape_ok) return;
    for (int i = 0; i < p.size; ++i) {
      if (p.matrix[i * p.size + i] != 0.0) r.fail(index_path(index_path(mp, i), i), "diagonal must be zero");
      for (int j = i + 1; j < p.size; ++j)
        if (p.matrix[i * p.size + j] != p.matrix[j * p.size + i])
          r.fail(index_path(index_path(mp, i), j), "matrix must be symmetric");
    }
    return;
  }
  p.kind = ProblemSpec::Kind::edges;
  p.name = "graph";
  if (!node.contains("nodes")) {
    r.fail(child(path, "nodes"), "required with edges");
    return;
  }
  r.read_int(node, "nodes", path, p.size, 1, kMaxBruteForceModes);
  const auto& e = node.at("edges");
  const auto ep = child(path, "edges");
  if (!e.is_array()) {
    r.fail(ep, "expected an array of [u, v] or [u, v, weight]");
    return;
  }
  std::set<std::pair<int, int>> seen;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const auto at = index_path(ep, k);
    if (!e[k].is_array() || e[k].size() < 2 || e[k].size() > 3) {
      r.fail(at, "expected [u, v] or [u, v, weight]");
      continue;
    }
    WeightedEdge w{0, 0, 1.0};
    const auto u = r.integer(e[k][0], index_path(at, 0));
    const auto v = r.integer(e[k][1], index_path(at, 1));
    if (e[k].size() == 3)
      if (auto x = r.number(e[k][2], index_path(at, 2))) w.weight = *x;
    if (!u || !v) continue;
    if (*u < 0 || *v < 0 || *u >= p.size || *v >= p.size) {
      r.fail(at, "endpoint out of range [0, " + std::to_string(p.size) + ")");
      continue;
    }
    if (*u == *v) {
      r.fail(at, "self-loops are not allowed");
      continue;
    }
    if (!seen.insert({std::min(*u, *v), std::max(*u, *v)}).second) r.fail(at, "duplicate edge");
    w.u = static_cast<int>(*u);
    w.v = static_cast<int>(*v);
    p.edges.push_back(w);
  }
}

json write_problem(const ProblemSpec& p) {
  switch (p.kind) {
    case ProblemSpec::Kind::builtin: {
      json j{{"builtin", p.name}};
      if (p.j12) j["j12"] = *p.j12;
      return j;
    }
    case ProblemSpec::Kind::matrix: {
      json rows = json::array();
      for (int i = 0; i < p.size; ++i) {
        json row = json::array();
        for (int j = 0; j < p.size; ++j) row.push_back(p.matrix[static_cast<std::size_t>(i) * p.size + j]);
        rows.push_back(row);
      }
      return json{{"matrix", rows}};
    }
    case ProblemSpec::Kind::edges: {
      json edges = json::array();
      for (const auto& e : p.edges) edges.push_back(json::array({e.u, e.v, e.weight}));
      return json{{"nodes", p.size}, {"edges", edges}};
    }
  }
  return {};
}

// Sets a dotted path, creating intermediate objects.
void set_path(json& doc, const std::string& path, const json& value) {
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw std::invalid_argument("empty component in sweep path '" + path + "'");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

std::string point_dir(const std::string& base, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "point_%03zu", i);
  return (std::filesystem::path(base) / buf).string();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::size_t> purity_checkpoints(const ExperimentConfig& c, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < count; k += static_cast<std::size_t>(c.purity_every)) idx.push_back(k);
  if (idx.back() != count - 1) idx.push_back(count - 1);
  return idx;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::invalid_argument("invalid configuration: " + join(violations, "; ")), violations_(std::move(violations)) {}

Schedule ParameterSpec::schedule(double horizon) const {
  switch (kind) {
    case Schedule::Kind::constant: return Schedule::constant(start);
    case Schedule::Kind::linear: return Schedule::linear(start, end, horizon);
    case Schedule::Kind::tanh_ramp: return Schedule::tanh_ramp(start, end, horizon, sharpness);
  }
  return Schedule::constant(start);
}

ExperimentConfig parse_config(const json& doc) {
  Reader r;
  ExperimentConfig c;
  if (!r.object(doc, "config", {"problem", "model", "cutoff", "initial", "grid", "ensemble", "observables", "purity",
                                "errors", "output", "sweep"}))
    throw ConfigError(r.errors);

  if (doc.contains("problem")) read_problem(r, doc.at("problem"), c.problem);

  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    if (r.object(m, "model", {"pump", "gamma", "g", "coupling_gain", "detuning", "alpha_lock"})) {
      if (m.contains("pump")) c.pump = read_parameter(r, m.at("pump"), "model.pump", c.pump);
      if (m.contains("gamma")) c.gamma = read_parameter(r, m.at("gamma"), "model.gamma", c.gamma);
      if (m.contains("g")) c.g = read_parameter(r, m.at("g"), "model.g", c.g);
      if (m.contains("coupling_gain"))
        c.coupling_gain = read_parameter(r, m.at("coupling_gain"), "model.coupling_gain", c.coupling_gain);
      if (m.contains("detuning")) {
        const auto& d = m.at("detuning");
        if (!d.is_array())
          r.fail("model.detuning", "expected an array");
        else
          for (std::size_t i = 0; i < d.size(); ++i)
            if (auto v = r.number(d[i], index_path("model.detuning", i))) c.detuning.push_back(*v);
      }
      if (m.contains("alpha_lock")) {
        c.alpha_lock = r.number(m.at("alpha_lock"), "model.alpha_lock");
        if (c.alpha_lock && *c.alpha_lock <= 0.0) r.fail("model.alpha_lock", "must be positive");
      }
    }
  }

  r.read_int(doc, "cutoff", "", c.cutoff, 2, 4096);

  if (doc.contains("initial")) {
    const auto& n = doc.at("initial");
    if (r.object(n, "initial", {"kind", "alpha"})) {
      if (n.contains("kind")) {
        const auto k = n.at("kind").is_string() ? n.at("kind").get<std::string>() : std::string();
        if (k == "vacuum") c.initial = InitialKind::vacuum;
        else if (k == "coherent") c.initial = InitialKind::coherent;
        else if (k == "cat-product") c.initial = InitialKind::cat_product;
        else if (k == "entangled-cat") c.initial = InitialKind::entangled_cat;
        else r.fail("initial.kind", "expected one of vacuum, coherent, cat-product, entangled-cat");
      }
      if (n.contains("alpha")) c.alpha = r.number(n.at("alpha"), "initial.alpha");
    }
  }

  if (doc.contains("grid")) {
    const auto& g = doc.at("grid");
    if (r.object(g, "grid", {"t_max", "steps", "stride", "jumps"})) {
      if (g.contains("t_max"))
        if (auto v = r.number(g.at("t_max"), "grid.t_max")) {
          if (*v <= 0.0) r.fail("grid.t_max", "must be positive");
          c.t_max = *v;
        }
      r.read_int(g, "steps", "grid", c.steps, 1);
      r.read_int(g, "stride", "grid", c.stride, 1);
      if (g.contains("jumps")) {
        const auto k = g.at("jumps").is_string() ? g.at("jumps").get<std::string>() : std::string();
        if (k == "interpolated") c.jumps = JumpPlacement::interpolated;
        else if (k == "boundary") c.jumps = JumpPlacement::boundary;
        else r.fail("grid.jumps", "expected interpolated or boundary");
      }
    }
  }

  if (doc.contains("ensemble")) {
    const auto& e = doc.at("ensemble");
    if (r.object(e, "ensemble", {"trajectories", "seed", "workers"})) {
      r.read_int(e, "trajectories", "ensemble", c.trajectories, 1, INT64_MAX);
      if (e.contains("seed")) {
        const auto& seed = e.at("seed");
        // Documents built in code hold small integers as signed values.
        if (seed.is_number_unsigned() || (seed.is_number_integer() && seed.get<std::int64_t>() >= 0))
          c.seed = seed.get<std::uint64_t>();
        else
          r.fail("ensemble.seed", "expected a non-negative integer");
      }
      r.read_int(e, "workers", "ensemble", c.workers, 0, 4096);
    }
  }

  if (doc.contains("observables")) {
    const auto& o = doc.at("observables");
    c.observables.clear();
    if (!o.is_array()) {
      r.fail("observables", "expected an array of names");
    } else {
      for (std::size_t i = 0; i < o.size(); ++i) {
        const auto at = index_path("observables", i);
        if (!o[i].is_string() || !kObservables.count(o[i].get<std::string>())) {
          r.fail(at, "expected one of success, purity, photon, sign");
          continue;
        }
        const auto name = o[i].get<std::string>();
        if (has_observable(c, name))
          r.fail(at, "duplicate observable '" + name + "'");
        else
          c.observables.push_back(name);
      }
    }
  }

  if (doc.contains("purity")) {
    const auto& p = doc.at("purity");
    if (r.object(p, "purity", {"every", "pair_budget", "exact_limit"})) {
      r.read_int(p, "every", "purity", c.purity_every, 1);
      r.read_int(p, "pair_budget", "purity", c.pair_budget, 2, INT64_MAX);
      r.read_int(p, "exact_limit", "purity", c.exact_limit, 1, INT64_MAX);
    }
  }

  if (doc.contains("errors")) {
    const auto& e = doc.at("errors");
    if (r.object(e, "errors", {"timestep"}) && e.contains("timestep")) {
      if (e.at("timestep").is_boolean())
        c.timestep_error = e.at("timestep").get<bool>();
      else
        r.fail("errors.timestep", "expected a boolean");
    }
  }

  if (doc.contains("output")) {
    const auto& o = doc.at("output");
    if (r.object(o, "output", {"dir"}) && o.contains("dir")) {
      if (o.at("dir").is_string() && !o.at("dir").get<std::string>().empty())
        c.output_dir = o.at("dir").get<std::string>();
      else
        r.fail("output.dir", "expected a non-empty string");
    }
  }

  if (doc.contains("sweep")) {
    const auto& s = doc.at("sweep");
    if (r.object(s, "sweep", {"path", "values"})) {
      if (!s.contains("path") || !s.at("path").is_string() || s.at("path").get<std::string>().empty())
        r.fail("sweep.path", "expected a dotted key such as problem.j12");
      else
        c.sweep_path = s.at("path").get<std::string>();
      if (!s.contains("values") || !s.at("values").is_array() || s.at("values").empty())
        r.fail("sweep.values", "expected a non-empty array");
      else
        c.sweep_values.assign(s.at("values").begin(), s.at("values").end());
      if (c.sweep_path && c.sweep_path->rfind("sweep", 0) == 0) r.fail("sweep.path", "cannot sweep the sweep itself");
    }
  }

  // Cross-field invariants, only once the fields themselves parsed.
  if (r.errors.empty()) {
    const int M = mode_count(c.problem);
    if (!c.detuning.empty() && c.detuning.size() != static_cast<std::size_t>(M))
      r.fail("model.detuning", "expected " + std::to_string(M) + " entries, one per mode");
    if (c.initial == InitialKind::entangled_cat && M < 2) r.fail("initial.kind", "entangled-cat needs at least 2 modes");
    if (c.initial != InitialKind::vacuum && !c.alpha && !c.alpha_lock && c.g.start <= 0.0)
      r.fail("initial.alpha", "required when model.g starts at zero");
    if (c.alpha_lock && std::min(c.g.start, c.g.end) <= 0.0)
      r.fail("model.alpha_lock", "requires model.g > 0");
    const double digits = M * std::log2(static_cast<double>(c.cutoff));
    if (digits > 40.0) {
      r.fail("cutoff", "dimension cutoff^modes is far beyond any memory budget");
    } else {
      const auto need_mb = estimated_bytes(c) >> 20;
      if (need_mb > memory_budget_mb())
        r.fail("cutoff", "run needs about " + std::to_string(need_mb) + " MiB, budget is " +
                             std::to_string(memory_budget_mb()) + " MiB (CIM_MEMORY_BUDGET_MB)");
    }
  }

  if (r.errors.empty() && c.sweep_path) {
    try {
      (void)expand_sweep(c);
    } catch (const ConfigError& e) {
      for (const auto& v : e.violations()) r.errors.push_back("sweep." + v);
    }
  }

  if (!r.errors.empty()) throw ConfigError(r.errors);
  return c;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("config: malformed JSON: ") + e.what()});
  }
  return parse_config(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json serialize_config(const ExperimentConfig& c) {
  json model{{"pump", write_parameter(c.pump)},
             {"gamma", write_parameter(c.gamma)},
             {"g", write_parameter(c.g)},
             {"coupling_gain", write_parameter(c.coupling_gain)},
             {"detuning", c.detuning}};
  if (c.alpha_lock) model["alpha_lock"] = *c.alpha_lock;
  json initial{{"kind", initial_name(c.initial)}};
  if (c.alpha) initial["alpha"] = *c.alpha;
  json doc{{"problem", write_problem(c.problem)},
           {"model", model},
           {"cutoff", c.cutoff},
           {"initial", initial},
           {"grid",
            {{"t_max", c.t_max},
             {"steps", c.steps},
             {"stride", c.stride},
             {"jumps", c.jumps == JumpPlacement::boundary ? "boundary" : "interpolated"}}},
           {"ensemble", {{"trajectories", c.trajectories}, {"seed", c.seed}, {"workers", c.workers}}},
           {"observables", c.observables},
           {"purity", {{"every", c.purity_every}, {"pair_budget", c.pair_budget}, {"exact_limit", c.exact_limit}}},
           {"errors", {{"timestep", c.timestep_error}}},
           {"output", {{"dir", c.output_dir}}}};
  if (c.sweep_path) doc["sweep"] = {{"path", *c.sweep_path}, {"values", c.sweep_values}};
  return doc;
}

json experiment_document(const ExperimentConfig& config) {
  json doc = serialize_config(config);
  doc["ensemble"].erase("workers");
  doc.erase("output");
  return doc;
}

std::size_t memory_budget_mb() {
  if (const char* env = std::getenv("CIM_MEMORY_BUDGET_MB")) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 4096;
}

std::size_t estimated_bytes(const ExperimentConfig& c) {
  const int M = std::max(mode_count(c.problem), 1);
  double dim = std::pow(static_cast<double>(c.cutoff), M);
  const double state = dim * sizeof(cplx);
  const int workers = c.workers > 0 ? c.workers : omp_get_max_threads();
  const std::size_t checkpoints = static_cast<std::size_t>(c.steps) / c.stride + 2;
  double stored = 0.0;
  if (has_observable(c, "purity")) {
    const std::size_t every = static_cast<std::size_t>(c.purity_every);
    const auto sample = purity_sample_size(c.trajectories, {c.exact_limit, c.pair_budget});
    stored = static_cast<double>((checkpoints + every - 1) / every + 1) * static_cast<double>(sample);
  }
  // Eight integrator buffers per worker plus the master copy and stored states.
  const double bytes = state * (8.0 * workers + 2.0 + stored) +
                       static_cast<double>(c.trajectories) * checkpoints * (2.0 * M + 2.0) * sizeof(double);
  return bytes > 1e18 ? static_cast<std::size_t>(1e18) : static_cast<std::size_t>(bytes);
}

ProblemInstance build_problem(const ProblemSpec& spec) {
  switch (spec.kind) {
    case ProblemSpec::Kind::builtin:
      if (spec.j12 && spec.name == "frustrated4") return frustrated4_instance(*spec.j12);
      if (spec.j12 && spec.name == "ferro-weighted") return ferro_weighted_instance(*spec.j12);
      return builtin_instance(spec.name);
    case ProblemSpec::Kind::matrix: {
      ProblemInstance p{CouplingMatrix(spec.size, spec.matrix), {}, "matrix", {}, 0.0};
      p.J.validate();
      return solve(p);
    }
    case ProblemSpec::Kind::edges: return maxcut_to_ising(spec.size, spec.edges, "graph").instance;
  }
  throw std::invalid_argument("unknown problem kind");
}

NetworkModel build_model(const ExperimentConfig& c, const ProblemInstance& problem) {
  NetworkModel m{FockGeometry(problem.modes(), c.cutoff), problem.J, {}, {}, {}, {}, {}, std::nullopt};
  m.pump = c.pump.schedule(c.t_max);
  m.gamma = c.gamma.schedule(c.t_max);
  m.two_photon = c.g.schedule(c.t_max);
  m.coupling_gain = c.coupling_gain.schedule(c.t_max);
  m.detuning = c.detuning;
  m.alpha_lock = c.alpha_lock;
  m.validate();
  return m;
}

TimeGrid build_grid(const ExperimentConfig& c) { return TimeGrid(c.t_max, c.steps, c.stride); }

double default_alpha(const ExperimentConfig& c) {
  if (c.alpha) return *c.alpha;
  if (c.alpha_lock) return *c.alpha_lock;
  return alpha_from(c.pump.start, c.g.start);
}

PreparedState build_entangled_cat(int modes, double alpha, int cutoff) {
  if (modes < 2) throw std::invalid_argument("entangled cat needs at least 2 modes");
  const FockGeometry geo(modes, cutoff);
  const auto plus = coherent_state(alpha, cutoff);
  const auto minus = coherent_state(-alpha, cutoff);
  std::vector<cplx> cat(static_cast<std::size_t>(cutoff));
  for (int n = 0; n < cutoff; ++n) cat[n] = plus.amplitudes[n] + minus.amplitudes[n];
  std::vector<cplx> vac(static_cast<std::size_t>(cutoff), 0.0);
  vac[0] = 1.0;
  std::vector<cplx> sum(geo.dimension(), 0.0);
  for (int i = 0; i < modes; ++i) {
    std::vector<std::vector<cplx>> factors(static_cast<std::size_t>(modes), vac);
    factors[i] = cat;
    const auto term = product_state(std::span<const std::vector<cplx>>(factors));
    const auto amps = term.amplitudes();
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += amps[k];
  }
  MultiModeState state(geo, std::move(sum));
  state.normalize();
  return {std::move(state), cat_state(alpha, cutoff).leakage};
}

PreparedState prepare_initial_state(const ExperimentConfig& c, const FockGeometry& geo) {
  const int M = geo.modes();
  switch (c.initial) {
    case InitialKind::vacuum: return {MultiModeState::vacuum(geo), 0.0};
    case InitialKind::coherent:
    case InitialKind::cat_product: {
      const double a = default_alpha(c);
      const auto single = c.initial == InitialKind::coherent ? coherent_state(a, c.cutoff) : cat_state(a, c.cutoff);
      const std::vector<SingleModeVector> factors(static_cast<std::size_t>(M), single);
      auto state = product_state(std::span<const SingleModeVector>(factors));
      state.normalize();
      return {std::move(state), single.leakage};
    }
    case InitialKind::entangled_cat: return build_entangled_cat(M, default_alpha(c), c.cutoff);
  }
  throw std::invalid_argument("unknown initial state");
}

const ColumnSeries& RunRecord::column(const std::string& name) const {
  for (const auto& c : columns)
    if (c.name == name) return c;
  throw std::out_of_range("no column '" + name + "'");
}

ExperimentConfig apply_overrides(ExperimentConfig c, const RunOverrides& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.output_dir) c.output_dir = *o.output_dir;
  return c;
}

RunRecord run_experiment(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const auto need_mb = estimated_bytes(config) >> 20;
  if (need_mb > memory_budget_mb())
    throw ConfigError({"cutoff: run needs about " + std::to_string(need_mb) + " MiB, budget is " +
                       std::to_string(memory_budget_mb()) + " MiB"});

  const auto problem = build_problem(config.problem);
  const auto model = build_model(config, problem);
  const auto grid = build_grid(config);
  const auto prepared = prepare_initial_state(config, model.geometry);
  const int M = problem.modes();
  if (prepared.leakage_warning())
    std::cerr << "warning: initial state loses " << prepared.leakage << " of its norm to the photon cutoff\n";

  const auto& table = hermite_half_table(config.cutoff);
  std::vector<Observable> observables;
  for (const auto& name : config.observables) {
    if (name == "success") {
      observables.push_back({"success", [&](const MultiModeState& s) {
                               return success_rate(s, problem.ground_set, table);
                             }});
    } else if (name == "photon") {
      for (int i = 0; i < M; ++i)
        observables.push_back({"n_" + std::to_string(i), [i](const MultiModeState& s) { return mean_photon(s, i); }});
    } else if (name == "sign") {
      for (int i = 0; i < M; ++i)
        observables.push_back(
            {"p_" + std::to_string(i), [i, &table](const MultiModeState& s) { return sign_probability(s, i, table); }});
    }
  }

  EnsembleOptions options;
  options.trajectories = config.trajectories;
  options.seed = config.seed;
  options.workers = config.workers;
  options.control.placement = config.jumps;
  const bool want_purity = has_observable(config, "purity");
  const auto purity_at = purity_checkpoints(config, grid.checkpoint_count());
  const PurityOptions purity_options{config.exact_limit, config.pair_budget};
  if (want_purity) {
    options.store_checkpoints = purity_at;
    options.store_limit = purity_sample_size(config.trajectories, purity_options);
  }

  auto stats = run_ensemble(prepared.state, model, grid, observables, options);
  std::optional<TimestepError> step_error;
  if (config.timestep_error) {
    auto fine_options = options;
    fine_options.store_checkpoints.clear();
    auto fine = run_ensemble(prepared.state, model, grid.refined(), observables, fine_options);
    auto stored = std::move(stats.stored_states);
    step_error = compare_ensembles(std::move(stats), std::move(fine));
    stats = std::move(step_error->coarse);
    stats.stored_states = std::move(stored);
  }

  RunRecord rec;
  rec.times = stats.times;
  const std::size_t K = rec.times.size();
  json sampling = json::object();
  for (std::size_t o = 0; o < stats.names.size(); ++o) {
    ColumnSeries col{stats.names[o], {}, {}};
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const auto& s = stats.stats[o][k];
      col.mean.push_back(s.mean);
      col.standard_error.push_back(s.standard_error());
      if (auto se = s.standard_error(); se && std::abs(s.mean) > 1e-12) {
        sum += (*se / s.mean) * (*se / s.mean);
        ++n;
      }
    }
    sampling[col.name] = n ? json(std::sqrt(sum / static_cast<double>(n))) : json(nullptr);
    rec.columns.push_back(std::move(col));
  }

  if (want_purity) {
    ColumnSeries col{"purity", std::vector<std::optional<double>>(K), std::vector<std::optional<double>>(K)};
    for (std::size_t s = 0; s < stats.stored_checkpoints.size(); ++s) {
      const auto est = purity(stats.stored_states[s], stats.trajectories, purity_options);
      const auto k = stats.stored_checkpoints[s];
      col.mean[k] = est.value;
      col.standard_error[k] = est.exact ? std::optional<double>(0.0) : est.standard_error;
    }
    // Keep the configured column order.
    const auto pos = std::find(config.observables.begin(), config.observables.end(), "purity") -
                     config.observables.begin();
    std::size_t insert_at = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(pos); ++i) {
      const auto& name = config.observables[i];
      insert_at += name == "success" ? 1 : (name == "photon" || name == "sign") ? M : 0;
    }
    rec.columns.insert(rec.columns.begin() + static_cast<std::ptrdiff_t>(insert_at), std::move(col));
  }

  json ground = json::array();
  for (const auto& g : problem.ground_set) ground.push_back(g);
  json timestep = nullptr;
  if (step_error) {
    timestep = json::object();
    for (std::size_t o = 0; o < step_error->names.size(); ++o) timestep[step_error->names[o]] = step_error->rms[o];
  }
  json columns = json::array();
  for (const auto& c : rec.columns) columns.push_back(c.name);
  rec.metadata = {
      {"format_version", 1},
      {"config", experiment_document(config)},
      {"config_hash", config_hash(config)},
      {"seed", config.seed},
      {"trajectories", config.trajectories},
      {"rng", "philox4x32-10, stream = trajectory index"},
      {"versions", {{"cim", CIM_VERSION}, {"compiler", __VERSION__}, {"cplusplus", __cplusplus}}},
      {"geometry", {{"modes", M}, {"cutoff", config.cutoff}, {"dimension", model.geometry.dimension()}}},
      {"problem",
       {{"label", problem.label},
        {"ground_energy", problem.ground_energy},
        {"degeneracy", problem.ground_set.size()},
        {"ground_set", ground}}},
      {"initial_state",
       {{"kind", initial_name(config.initial)},
        {"alpha", config.initial == InitialKind::vacuum ? json(nullptr) : json(default_alpha(config))},
        {"leakage", prepared.leakage},
        {"leakage_warning", prepared.leakage_warning()}}},
      {"jumps",
       {{"mean_per_trajectory", stats.jumps_per_trajectory.mean},
        {"standard_error", stats.jumps_per_trajectory.standard_error().value_or(0.0)},
        {"max_step_loss", stats.max_step_loss},
        {"loss_warnings", stats.loss_warnings}}},
      {"errors", {{"sampling", sampling}, {"timestep", timestep}}},
      {"columns", columns},
      {"checkpoints", K},
      {"purity_checkpoints", want_purity ? json(purity_at) : json::array()},
  };
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::string timeseries_csv(const RunRecord& rec) {
  std::string out = "time";
  for (const auto& c : rec.columns) out += "," + c.name + "_mean," + c.name + "_se";
  out += "\n";
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    out += format_double(rec.times[k]);
    for (const auto& c : rec.columns) {
      out += ",";
      if (c.mean[k]) out += format_double(*c.mean[k]);
      out += ",";
      if (c.standard_error[k]) out += format_double(*c.standard_error[k]);
    }
    out += "\n";
  }
  return out;
}

void write_record(const RunRecord& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  write("timeseries.csv", timeseries_csv(rec));
  write("metadata.json", rec.metadata.dump(2) + "\n");
  write("timing.json", json{{"wall_seconds", rec.wall_seconds}}.dump(2) + "\n");
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& config) {
  if (!config.sweep_path) return {config};
  json base = serialize_config(config);
  base.erase("sweep");
  std::vector<ExperimentConfig> points;
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < config.sweep_values.size(); ++i) {
    json doc = base;
    try {
      set_path(doc, *config.sweep_path, config.sweep_values[i]);
      doc["output"]["dir"] = point_dir(config.output_dir, i);
      points.push_back(parse_config(doc));
    } catch (const ConfigError& e) {
      for (const auto& v : e.violations()) errors.push_back("values[" + std::to_string(i) + "]: " + v);
    } catch (const std::exception& e) {
      errors.push_back("values[" + std::to_string(i) + "]: " + e.what());
    }
  }
  if (!errors.empty()) throw ConfigError(errors);
  return points;
}

std::vector<RunRecord> run_sweep(const ExperimentConfig& config) {
  if (!config.sweep_path) throw ConfigError({"sweep: no sweep section"});
  const auto points = expand_sweep(config);
  std::vector<RunRecord> records;
  for (const auto& p : points) {
    records.push_back(run_experiment(p));
    write_record(records.back(), p.output_dir);
  }
  std::string csv = "index,value";
  for (const auto& c : records.front().columns)
    csv += "," + c.name + "_final_mean," + c.name + "_final_se," + c.name + "_max_mean," + c.name + "_max_se," +
           c.name + "_max_time";
  csv += "\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::string value = config.sweep_values[i].dump();
    if (value.find_first_of(",\"") != std::string::npos) {
      std::string quoted = "\"";
      for (char ch : value) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      value = quoted + "\"";
    }
    csv += std::to_string(i) + "," + value;
    const auto& rec = records[i];
    for (const auto& c : rec.columns) {
      std::optional<std::size_t> last, best;
      for (std::size_t k = 0; k < rec.times.size(); ++k) {
        if (!c.mean[k]) continue;
        last = k;
        if (!best || *c.mean[k] > *c.mean[*best]) best = k;
      }
      const auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
      csv += "," + cell(last ? c.mean[*last] : std::nullopt) + "," + cell(last ? c.standard_error[*last] : std::nullopt);
      csv += "," + cell(best ? c.mean[*best] : std::nullopt) + "," + cell(best ? c.standard_error[*best] : std::nullopt);
      csv += "," + (best ? format_double(rec.times[*best]) : std::string());
    }
    csv += "\n";
  }
  std::filesystem::create_directories(config.output_dir);
  std::ofstream(std::filesystem::path(config.output_dir) / "sweep_summary.csv", std::ios::binary) << csv;
  return records;
}

std::string config_hash(const ExperimentConfig& config) {
  // FNV-1a over the canonical serialization without execution settings.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : experiment_document(config).dump()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cim
