#include "config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "cbgopt/errors.hpp"

namespace cbgopt::app {

namespace {

namespace fs = std::filesystem;

const std::set<std::string> kCommands = {"optimize", "robustness", "robust-optimize",
                                         "verify",   "capacitor",  "toy-eval"};

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(fmt::format("{} must be an object", where));
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw ConfigError(fmt::format("unknown key '{}' in {}", k, where));
  }
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(fmt::format("{} must be a number", where));
  return v.get<double>();
}

double positive(const json& v, const std::string& where) {
  const double x = number(v, where);
  if (!(x > 0.0)) throw ConfigError(fmt::format("{} must be positive, got {}", where, x));
  return x;
}

std::size_t count(const json& v, const std::string& where, std::size_t min = 1) {
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
    throw ConfigError(fmt::format("{} must be an integer >= {}", where, min));
  }
  return v.get<std::size_t>();
}

template <class F>
void maybe(const json& obj, const char* key, F&& f) {
  if (obj.contains(key)) f(obj.at(key));
}

// Per-parameter values given as {"R": 10, ...} (all seven) or a 7-array.
std::vector<double> per_parameter(const json& v, const std::string& where) {
  std::vector<double> out(DesignPoint::kDim);
  if (v.is_array()) {
    if (v.size() != DesignPoint::kDim) throw ConfigError(fmt::format("{} needs 7 entries", where));
    for (std::size_t i = 0; i < DesignPoint::kDim; ++i) {
      out[i] = positive(v[i], fmt::format("{}[{}]", where, i));
    }
    return out;
  }
  if (!v.is_object()) throw ConfigError(fmt::format("{} must be an object or array", where));
  for (const auto& [k, x] : v.items()) {
    if (DesignPoint::index_of(k) < 0) throw ConfigError(fmt::format("unknown parameter '{}' in {}", k, where));
  }
  for (std::size_t i = 0; i < DesignPoint::kDim; ++i) {
    const std::string name(DesignPoint::kNames[i]);
    if (!v.contains(name)) throw ConfigError(fmt::format("{} is missing '{}'", where, name));
    out[i] = positive(v.at(name), where + "." + name);
  }
  return out;
}

DesignSpace parse_space(const json& j) {
  if (!j.is_object()) throw ConfigError("domain must be an object");
  DesignSpace s;
  s.slot.fill(-1);
  for (const auto& [k, v] : j.items()) {
    if (k != "t_Au" && k != "t_HSQ-t_CBG" && DesignPoint::index_of(k) < 0) {
      throw ConfigError(fmt::format("unknown domain parameter '{}'", k));
    }
  }
  if (j.contains("t_HSQ") && j.contains("t_HSQ-t_CBG")) {
    throw ConfigError("domain gives both t_HSQ and t_HSQ-t_CBG");
  }
  s.hsq_offset = j.contains("t_HSQ-t_CBG");
  for (std::size_t i = 0; i < DesignPoint::kDim; ++i) {
    std::string key(DesignPoint::kNames[i]);
    if (i == 5 && s.hsq_offset) key = "t_HSQ-t_CBG";
    if (!j.contains(key)) throw ConfigError(fmt::format("domain is missing '{}'", key));
    const auto& v = j.at(key);
    if (v.is_number()) {
      s.fixed[i] = number(v, "domain." + key);
      continue;
    }
    if (!v.is_array() || v.size() != 2) {
      throw ConfigError(fmt::format("domain.{} must be a number or [lower, upper]", key));
    }
    const double lo = number(v[0], "domain." + key), hi = number(v[1], "domain." + key);
    if (!(lo < hi)) throw ConfigError(fmt::format("domain.{} needs lower < upper", key));
    s.slot[i] = static_cast<int>(s.names.size());
    s.names.push_back(key);
    s.lower.push_back(lo);
    s.upper.push_back(hi);
  }
  if (s.names.empty()) throw ConfigError("domain has no free parameters");
  // t_Au is accepted for completeness but is not a model parameter.
  if (j.contains("t_Au")) number(j.at("t_Au"), "domain.t_Au");
  return s;
}

objective::ObjectiveSpec parse_objective(const json& j) {
  allow_keys(j, "objective", {"lambda_des", "fp_des", "w1", "w2", "w3", "sigmoid_a", "sigmoid_b",
                              "parabola_c", "mode_window"});
  objective::ObjectiveSpec s;
  maybe(j, "lambda_des", [&](const json& v) { s.lambda_des = positive(v, "objective.lambda_des"); });
  maybe(j, "fp_des", [&](const json& v) { s.fp_des = positive(v, "objective.fp_des"); });
  maybe(j, "w1", [&](const json& v) { s.w1 = number(v, "objective.w1"); });
  maybe(j, "w2", [&](const json& v) { s.w2 = number(v, "objective.w2"); });
  maybe(j, "w3", [&](const json& v) { s.w3 = number(v, "objective.w3"); });
  maybe(j, "sigmoid_a", [&](const json& v) { s.sigmoid_a = number(v, "objective.sigmoid_a"); });
  maybe(j, "sigmoid_b", [&](const json& v) { s.sigmoid_b = number(v, "objective.sigmoid_b"); });
  maybe(j, "parabola_c", [&](const json& v) { s.parabola_c = number(v, "objective.parabola_c"); });
  maybe(j, "mode_window", [&](const json& v) { s.mode_window = positive(v, "objective.mode_window"); });
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("objective: ") + e.what());
  }
  return s;
}

OracleConfig parse_oracle(const json& j, const fs::path& base) {
  allow_keys(j, "oracle", {"type", "path", "two_peak"});
  OracleConfig o;
  if (!j.contains("type") || !j.at("type").is_string()) throw ConfigError("oracle.type is required");
  o.type = j.at("type").get<std::string>();
  if (o.type == "external-table") {
    if (!j.contains("path") || !j.at("path").is_string()) {
      throw ConfigError("external-table oracle needs oracle.path");
    }
    const fs::path p = base / j.at("path").get<std::string>();
    if (!fs::exists(p)) throw ConfigError(fmt::format("oracle table {} does not exist", p.string()));
    o.table_path = p.string();
  } else if (o.type == "two-peak") {
    maybe(j, "two_peak", [&](const json& t) {
      allow_keys(t, "oracle.two_peak", {"narrow_offset", "narrow_width", "narrow_height",
                                        "broad_offset", "broad_width", "broad_height", "floor"});
      auto& c = o.two_peak;
      maybe(t, "narrow_offset", [&](const json& v) { c.narrow_offset = number(v, "narrow_offset"); });
      maybe(t, "narrow_width", [&](const json& v) { c.narrow_width = positive(v, "narrow_width"); });
      maybe(t, "narrow_height", [&](const json& v) { c.narrow_height = positive(v, "narrow_height"); });
      maybe(t, "broad_offset", [&](const json& v) { c.broad_offset = number(v, "broad_offset"); });
      maybe(t, "broad_width", [&](const json& v) { c.broad_width = positive(v, "broad_width"); });
      maybe(t, "broad_height", [&](const json& v) { c.broad_height = positive(v, "broad_height"); });
      maybe(t, "floor", [&](const json& v) { c.floor = positive(v, "floor"); });
    });
  } else if (o.type != "toy-cavity") {
    throw ConfigError(fmt::format("unknown oracle type '{}'", o.type));
  }
  if (o.type != "two-peak" && j.contains("two_peak")) {
    throw ConfigError("oracle.two_peak only applies to the two-peak oracle");
  }
  return o;
}

void parse_capacitor(const json& j, CapacitorConfig& c) {
  allow_keys(j, "capacitor", {"design", "material", "radius_um", "grid", "volts", "map_volts",
                              "map_r_max"});
  c.design = designs::nir_i();
  maybe(j, "design", [&](const json& v) { c.design = parse_design(v); });
  maybe(j, "material", [&](const json& v) {
    if (v.is_string()) {
      const auto m = v.get<std::string>();
      if (m == "gaas") c.eps = device::Permittivities::gaas();
      else if (m == "inp") c.eps = device::Permittivities::inp();
      else throw ConfigError(fmt::format("unknown material '{}'", m));
      return;
    }
    allow_keys(v, "capacitor.material", {"slab", "sio2", "hsq"});
    maybe(v, "slab", [&](const json& x) { c.eps.slab = positive(x, "material.slab"); });
    maybe(v, "sio2", [&](const json& x) { c.eps.sio2 = positive(x, "material.sio2"); });
    maybe(v, "hsq", [&](const json& x) { c.eps.hsq = positive(x, "material.hsq"); });
  });
  maybe(j, "radius_um", [&](const json& v) { c.radius_um = positive(v, "capacitor.radius_um"); });
  maybe(j, "grid", [&](const json& g) {
    allow_keys(g, "capacitor.grid", {"h_fine", "h_coarse", "growth", "rings", "grading"});
    maybe(g, "h_fine", [&](const json& v) { c.grid.h_fine = positive(v, "grid.h_fine"); });
    maybe(g, "h_coarse", [&](const json& v) { c.grid.h_coarse = positive(v, "grid.h_coarse"); });
    maybe(g, "growth", [&](const json& v) { c.grid.growth = positive(v, "grid.growth"); });
    maybe(g, "rings", [&](const json& v) { c.grid.rings = static_cast<int>(count(v, "grid.rings", 0)); });
    maybe(g, "grading", [&](const json& v) { c.grid.grading = positive(v, "grid.grading"); });
    if (c.grid.growth <= 1.0) throw ConfigError("grid.growth must exceed 1");
    if (c.grid.grading < 1.0) throw ConfigError("grid.grading must be >= 1");
  });
  c.volts.clear();
  if (j.contains("volts")) {
    const auto& v = j.at("volts");
    if (v.is_array()) {
      for (const auto& x : v) c.volts.push_back(number(x, "capacitor.volts"));
    } else {
      allow_keys(v, "capacitor.volts", {"start", "stop", "step"});
      const double start = number(v.value("start", json(0.0)), "volts.start");
      const double stop = number(v.value("stop", json(40.0)), "volts.stop");
      const double step = positive(v.value("step", json(0.5)), "volts.step");
      const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
      for (std::size_t i = 0; i <= n; ++i) c.volts.push_back(start + static_cast<double>(i) * step);
    }
  } else {
    for (int i = 0; i <= 80; ++i) c.volts.push_back(0.5 * i);
  }
  if (c.volts.empty()) throw ConfigError("capacitor.volts is empty");
  maybe(j, "map_volts", [&](const json& v) { c.map_volts = number(v, "capacitor.map_volts"); });
  maybe(j, "map_r_max", [&](const json& v) { c.map_r_max = positive(v, "capacitor.map_r_max"); });
  try {
    c.design.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("capacitor.design: ") + e.what());
  }
}

std::vector<double> training_scale(const json& v) {
  return per_parameter(v, "training.scale");
}

}  // namespace

BoxDomain DesignSpace::box() const {
  BoxDomain b;
  b.lower = lower;
  b.upper = upper;
  b.names = names;
  return b;
}

DesignPoint DesignSpace::to_design(std::span<const double> x) const {
  std::array<double, DesignPoint::kDim> v = fixed;
  for (std::size_t i = 0; i < DesignPoint::kDim; ++i) {
    if (slot[i] >= 0) v[i] = x[static_cast<std::size_t>(slot[i])];
  }
  if (hsq_offset) v[5] += v[3];
  return DesignPoint::from_span(v);
}

ExternalTable ExternalTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read oracle table {}", path));
  std::vector<std::string> expected(DesignPoint::kNames.begin(), DesignPoint::kNames.end());
  for (const char* q : {"lambda_c", "fp", "eta_smf"}) expected.emplace_back(q);

  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return cells;
  };

  ExternalTable t;
  std::string line;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line);
    if (header.empty()) {
      header = cells;
      if (header.size() < expected.size() ||
          !std::equal(expected.begin(), expected.end(), header.begin())) {
        throw ConfigError(fmt::format("{}: header must start with {}", path,
                                      fmt::join(expected, ",")));
      }
      continue;
    }
    if (cells.size() != header.size()) {
      throw ConfigError(fmt::format("{}:{}: expected {} columns", path, line_no, header.size()));
    }
    std::array<double, DesignPoint::kDim + 3> v{};
    for (std::size_t i = 0; i < v.size(); ++i) {
      try {
        std::size_t used = 0;
        v[i] = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError(fmt::format("{}:{}: bad number '{}'", path, line_no, cells[i]));
      }
    }
    std::array<double, DesignPoint::kDim> key{};
    std::copy_n(v.begin(), DesignPoint::kDim, key.begin());
    if (!t.index_.emplace(key, t.rows_.size()).second) {
      throw ConfigError(fmt::format("{}:{}: duplicate parameter row", path, line_no));
    }
    t.rows_.push_back(DesignPoint::from_span(key));
    t.outputs_.push_back({v[7], v[8], v[9]});
  }
  if (t.rows_.empty()) throw ConfigError(fmt::format("{} has no rows", path));
  return t;
}

std::optional<robust::OracleOutput> ExternalTable::lookup(const DesignPoint& p) const {
  const auto it = index_.find(p.to_array());
  if (it == index_.end()) return std::nullopt;
  return outputs_[it->second];
}

BoxDomain training_box(const RunConfig& c) {
  return c.training.scale.empty()
             ? sampling::training_domain(c.center, c.tolerances)
             : sampling::training_domain(c.center, c.tolerances, c.training.scale);
}

std::string RunConfig::tag() const { return fmt::format("config_hash={:016x} seed={}", hash, seed); }

std::uint64_t config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

DesignPoint parse_design(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "nir_i") return designs::nir_i();
    if (name == "nir_ii") return designs::nir_ii();
    if (name == "ob_i") return designs::ob_i();
    if (name == "cb_i") return designs::cb_i();
    throw ConfigError(fmt::format("unknown design '{}'", name));
  }
  return DesignPoint::from_span(per_parameter(j, "design"));
}

RunConfig parse_config(const json& j_in, const std::string& command,
                       std::optional<std::uint64_t> seed_override, const std::string& base_dir) {
  if (!kCommands.count(command)) throw ConfigError(fmt::format("unknown command '{}'", command));
  allow_keys(j_in, "config",
             {"description", "seed", "output_dir", "oracle", "objective", "domain", "optimize",
              "tolerances", "center", "training", "analyze", "robust_optimize", "verify",
              "capacitor", "toy_eval"});
  json j = j_in;
  if (seed_override) j["seed"] = *seed_override;
  if (!j.contains("seed")) throw ConfigError("seed is required (config or --seed)");
  if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0)) {
    throw ConfigError("seed must be a non-negative integer");
  }
  const fs::path base = base_dir.empty() ? fs::path(".") : fs::path(base_dir);

  RunConfig c;
  c.raw = j;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.hash = config_hash(j);
  c.output_dir = j.value("output_dir", std::string("cbgopt-") + command);
  maybe(j, "objective", [&](const json& v) { c.objective = parse_objective(v); });
  if (command != "capacitor") {
    if (!j.contains("oracle")) throw ConfigError("oracle section is required");
    c.oracle = parse_oracle(j.at("oracle"), base);
  }

  if (command == "optimize") {
    if (!j.contains("domain")) throw ConfigError("optimize needs a domain section");
    OptimizeConfig o;
    o.space = parse_space(j.at("domain"));
    maybe(j, "optimize", [&](const json& v) {
      allow_keys(v, "optimize", {"budget", "init_count", "refit_every", "acquisition_starts"});
      maybe(v, "budget", [&](const json& x) { o.budget = count(x, "optimize.budget"); });
      maybe(v, "init_count", [&](const json& x) { o.init_count = count(x, "optimize.init_count"); });
      maybe(v, "refit_every", [&](const json& x) { o.refit_every = count(x, "optimize.refit_every"); });
      maybe(v, "acquisition_starts",
            [&](const json& x) { o.acquisition_starts = count(x, "optimize.acquisition_starts"); });
    });
    if (o.init_count < o.space.names.size() + 1) {
      throw ConfigError(fmt::format("optimize.init_count must be at least {}", o.space.names.size() + 1));
    }
    if (o.budget <= o.init_count) throw ConfigError("optimize.budget must exceed init_count");
    c.optimize = o;
  }

  const bool robust_cmd = command == "robustness" || command == "robust-optimize" || command == "verify";
  if (robust_cmd) {
    c.tolerances = ToleranceSpec::fabrication_default();
    maybe(j, "tolerances", [&](const json& v) { c.tolerances.sigma = per_parameter(v, "tolerances"); });
    if (!j.contains("center")) throw ConfigError(fmt::format("{} needs a center design", command));
    c.center = parse_design(j.at("center"));
    maybe(j, "training", [&](const json& v) {
      allow_keys(v, "training", {"count", "scale", "load", "gp_starts"});
      maybe(v, "count", [&](const json& x) { c.training.count = count(x, "training.count", 64); });
      maybe(v, "scale", [&](const json& x) { c.training.scale = training_scale(x); });
      maybe(v, "gp_starts", [&](const json& x) { c.training.gp_starts = static_cast<int>(count(x, "training.gp_starts")); });
      maybe(v, "load", [&](const json& x) {
        if (!x.is_string()) throw ConfigError("training.load must be a path");
        const fs::path p = base / x.get<std::string>();
        if (!fs::exists(p)) throw ConfigError(fmt::format("model file {} does not exist", p.string()));
        c.training.load = p.string();
      });
    });
    const auto n = c.training.count;
    if ((n & (n - 1)) != 0) throw ConfigError("training.count must be a power of two");

    // 3-sigma rule against the training box, before any compute. A loaded model is
    // checked against its stored domain once it is read.
    if (c.training.load.empty() && command != "robust-optimize") {
      robust::check_inside(training_box(c), c.center, c.tolerances);
    }
  }
  if (command == "robustness") {
    maybe(j, "analyze", [&](const json& v) {
      allow_keys(v, "analyze", {"n_samples", "bootstrap", "bins"});
      maybe(v, "n_samples", [&](const json& x) { c.analyze.n_samples = count(x, "analyze.n_samples", 2); });
      maybe(v, "bootstrap", [&](const json& x) { c.analyze.bootstrap = count(x, "analyze.bootstrap", 2); });
      maybe(v, "bins", [&](const json& x) { c.analyze.bins = count(x, "analyze.bins"); });
    });
  }
  if (command == "robust-optimize") {
    maybe(j, "robust_optimize", [&](const json& v) {
      allow_keys(v, "robust_optimize", {"n_samples", "budget", "init_count", "mu_bounds_sigma"});
      maybe(v, "n_samples", [&](const json& x) { c.robust.n_samples = count(x, "robust_optimize.n_samples"); });
      maybe(v, "budget", [&](const json& x) { c.robust.budget = count(x, "robust_optimize.budget"); });
      maybe(v, "init_count", [&](const json& x) { c.robust.init_count = count(x, "robust_optimize.init_count", 8); });
      maybe(v, "mu_bounds_sigma",
            [&](const json& x) { c.robust.mu_bounds_sigma = per_parameter(x, "robust_optimize.mu_bounds_sigma"); });
    });
    if (c.robust.budget <= c.robust.init_count) {
      throw ConfigError("robust_optimize.budget must exceed init_count");
    }
    if (c.training.load.empty()) {
      robust::robust_mean_domain(training_box(c), c.tolerances, c.robust.mu_bounds_sigma);
    }
  }
  if (command == "verify") {
    maybe(j, "verify", [&](const json& v) {
      allow_keys(v, "verify", {"count"});
      maybe(v, "count", [&](const json& x) { c.verify_count = count(x, "verify.count"); });
    });
  }
  if (command == "capacitor") {
    parse_capacitor(j.value("capacitor", json::object()), c.capacitor);
  }
  if (command == "toy-eval") {
    const json t = j.value("toy_eval", json::object());
    allow_keys(t, "toy_eval", {"designs", "sobol", "center", "tolerances"});
    maybe(t, "designs", [&](const json& v) {
      if (!v.is_array()) throw ConfigError("toy_eval.designs must be an array");
      for (const auto& d : v) c.toy_points.push_back(parse_design(d));
    });
    maybe(t, "sobol", [&](const json& v) { c.toy_sobol = count(v, "toy_eval.sobol"); });
    c.center = designs::nir_i();
    c.tolerances = ToleranceSpec::fabrication_default();
    maybe(t, "center", [&](const json& v) { c.center = parse_design(v); });
    maybe(t, "tolerances", [&](const json& v) { c.tolerances.sigma = per_parameter(v, "toy_eval.tolerances"); });
    if (c.toy_points.empty() && c.toy_sobol == 0) {
      c.toy_points = {designs::nir_i(), designs::nir_ii(), designs::ob_i(), designs::cb_i()};
    }
  }
  return c;
}

RunConfig load_config(const std::string& path, const std::string& command,
                      std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path));
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
  return parse_config(j, command, seed_override, fs::path(path).parent_path().string());
}

}  // namespace cbgopt::app
