#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <fmt/format.h>

#include "cbgopt/bayes_opt.hpp"
#include "cbgopt/errors.hpp"
#include "cbgopt/io.hpp"

namespace cbgopt::app {

namespace {

namespace fs = std::filesystem;

std::string num(double v) { return fmt::format("{:.17g}", v); }

class CsvFile {
 public:
  CsvFile(const fs::path& path, const RunConfig& c) : out_(path, std::ios::trunc) {
    if (!out_) throw Error(fmt::format("cannot write {}", path.string()));
    out_ << "# " << c.tag() << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

void write_json(const fs::path& path, json j, const RunConfig& c) {
  j["config_hash"] = fmt::format("{:016x}", c.hash);
  j["seed"] = c.seed;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << "\n";
}

json design_json(const DesignPoint& p) {
  json j = json::object();
  const auto a = p.to_array();
  for (std::size_t i = 0; i < DesignPoint::kDim; ++i) j[std::string(DesignPoint::kNames[i])] = a[i];
  return j;
}

json per_parameter_json(const std::vector<double>& v) {
  json j = json::object();
  for (std::size_t i = 0; i < DesignPoint::kDim; ++i) j[std::string(DesignPoint::kNames[i])] = v[i];
  return j;
}

json domain_json(const BoxDomain& d) {
  json j = json::object();
  for (std::size_t i = 0; i < d.dim(); ++i) {
    const std::string name = i < d.names.size() ? d.names[i] : fmt::format("x{}", i);
    j[name] = {d.lower[i], d.upper[i]};
  }
  return j;
}

json outputs_json(const robust::OracleOutput& o) {
  return {{"lambda_c", o.lambda_c}, {"fp", o.fp}, {"eta_smf", o.eta_smf}};
}

std::vector<std::string> design_header() {
  return {DesignPoint::kNames.begin(), DesignPoint::kNames.end()};
}

std::vector<std::string> design_cells(const DesignPoint& p) {
  std::vector<std::string> out;
  for (double v : p.to_array()) out.push_back(num(v));
  return out;
}

double target_of(const robust::OracleOutput& o, const objective::ObjectiveSpec& spec) {
  objective::ModeResult m;
  m.lambda_c = o.lambda_c;
  m.fp = o.fp;
  m.eta_smf = o.eta_smf;
  return objective::target(m, spec);
}

fs::path prepare_out(const RunConfig& c, const RunOptions& o) {
  fs::path out = o.out_dir.empty() ? fs::path(c.output_dir) : fs::path(o.out_dir);
  fs::create_directories(out);
  return out;
}

robust::SurrogateBundle obtain_bundle(const RunConfig& c, const fs::path& out) {
  if (!c.training.load.empty()) {
    std::cerr << fmt::format("loading surrogates from {}\n", c.training.load);
    return io::load_bundle(c.training.load);
  }
  robust::TrainOptions t;
  t.scale = c.training.scale;
  t.gp_starts = c.training.gp_starts;
  robust::SurrogateBundle bundle = [&] {
    if (c.oracle.type == "external-table") {
      // The table is the training set: keep its rows inside the training box.
      const auto table = ExternalTable::load(c.oracle.table_path);
      const BoxDomain box = training_box(c);
      std::vector<std::vector<double>> rows;
      std::vector<robust::OracleOutput> outputs;
      for (std::size_t i = 0; i < table.rows().size(); ++i) {
        const auto a = table.rows()[i].to_array();
        if (box.contains(a)) {
          rows.emplace_back(a.begin(), a.end());
          outputs.push_back(table.outputs()[i]);
        }
      }
      if (rows.size() < 16) {
        throw ConfigError(fmt::format("oracle table has {} rows inside the training box, need 16",
                                      rows.size()));
      }
      std::cerr << fmt::format("fitting surrogates on {} table rows\n", rows.size());
      Eigen::MatrixXd x(rows.size(), DesignPoint::kDim);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t d = 0; d < DesignPoint::kDim; ++d) x(i, d) = rows[i][d];
      }
      return robust::fit_bundle(x, outputs, box, c.seed, t);
    }
    std::cerr << fmt::format("training surrogates on {} Sobol points\n", c.training.count);
    return robust::train_bundle(make_oracle(c.oracle), c.center, c.tolerances, c.training.count,
                                c.seed, t);
  }();
  io::save_bundle((out / "surrogate.bin").string(), bundle, c.tag());
  return bundle;
}

void cmd_optimize(const RunConfig& c, const fs::path& out) {
  const auto& o = *c.optimize;
  const auto oracle = make_oracle(c.oracle);
  std::vector<std::optional<robust::OracleOutput>> outputs;

  bo::Options opt;
  opt.budget = o.budget;
  opt.init_count = o.init_count;
  opt.refit_every = o.refit_every;
  opt.acquisition_starts = o.acquisition_starts;
  opt.seed = c.seed;
  CsvFile history(out / "history.csv", c);
  auto header = design_header();
  for (const char* h : {"lambda_c", "fp", "eta_smf", "target", "best"}) header.emplace_back(h);
  header.insert(header.begin(), "iteration");
  history.row(header);
  opt.on_evaluation = [&](std::size_t iter, std::span<const double> x, std::optional<double> v,
                          double best) {
    const auto p = o.space.to_design(x);
    std::vector<std::string> cells = {std::to_string(iter)};
    for (auto& s : design_cells(p)) cells.push_back(std::move(s));
    const auto& r = outputs.back();
    for (double q : {r ? r->lambda_c : NAN, r ? r->fp : NAN, r ? r->eta_smf : NAN}) cells.push_back(num(q));
    cells.push_back(num(v ? *v : NAN));
    cells.push_back(num(best));
    history.row(cells);
  };
  const auto state = bo::optimize(
      [&](std::span<const double> x) -> std::optional<double> {
        outputs.emplace_back();
        const auto p = o.space.to_design(x);
        p.validate();
        auto r = oracle(p);
        if (!r) return std::nullopt;
        outputs.back() = r;
        return target_of(*r, c.objective);
      },
      o.space.box(), opt);

  const auto& best = state.best();
  const auto p = o.space.to_design(best.x);
  json j;
  j["best"] = design_json(p);
  j["target"] = best.value;
  if (auto r = oracle(p)) j["outputs"] = outputs_json(*r);
  j["evaluations"] = state.history.size() + state.failed.size();
  j["failures"] = state.failed.size();
  j["domain"] = domain_json(o.space.box());
  write_json(out / "best.json", j, c);
  io::save_gp((out / "surrogate.bin").string(), *state.surrogate, c.tag());
  std::cout << fmt::format("best target {:.6g} at {}\n", best.value, design_json(p).dump());
}

void write_histogram(const fs::path& path, const RunConfig& c, const robust::QuantityStats& s,
                     std::size_t bins) {
  const auto& d = s.distribution;
  double lo = d.front(), hi = d.back();
  if (!(hi > lo)) {
    const double pad = std::max(1e-12, 1e-9 * std::abs(lo));
    lo -= pad;
    hi += pad;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : d) {
    auto k = static_cast<std::size_t>((v - lo) / width);
    counts[std::min(k, bins - 1)] += 1;
  }
  CsvFile csv(path, c);
  csv.row({"bin_lo", "bin_hi", "count", "density"});
  for (std::size_t k = 0; k < bins; ++k) {
    const double a = lo + static_cast<double>(k) * width;
    csv.row({num(a), num(k + 1 == bins ? hi : a + width), std::to_string(counts[k]),
             num(static_cast<double>(counts[k]) / (static_cast<double>(d.size()) * width))});
  }
}

struct Display {
  double scale;
  int precision;
  const char* unit;
};

Display display_of(robust::Quantity q) {
  switch (q) {
    case robust::Quantity::LambdaC: return {1.0, 2, "nm"};
    case robust::Quantity::Purcell: return {1.0, 1, ""};
    case robust::Quantity::Efficiency: return {100.0, 1, "%"};
  }
  return {1.0, 3, ""};
}

void cmd_robustness(const RunConfig& c, const fs::path& out, std::size_t threads) {
  const auto bundle = obtain_bundle(c, out);
  robust::AnalyzeOptions opt;
  opt.bootstrap_resamples = c.analyze.bootstrap;
  opt.threads = threads;
  const auto report = robust::analyze(bundle, c.center, c.tolerances, c.analyze.n_samples, c.seed, opt);

  json j;
  j["mean"] = design_json(c.center);
  j["tolerances"] = per_parameter_json(c.tolerances.sigma);
  j["n_samples"] = c.analyze.n_samples;
  j["bootstrap_resamples"] = c.analyze.bootstrap;
  j["training_domain"] = domain_json(bundle.domain);
  j["training_points"] = bundle.lambda_model.training().count();
  for (auto q : robust::kQuantities) {
    const auto& s = report[q];
    const auto disp = display_of(q);
    j["quantities"][robust::quantity_name(q)] = {
        {"p16", s.p16},
        {"p50", s.median},
        {"p84", s.p84},
        {"sigma_plus", s.sigma_plus},
        {"sigma_minus", s.sigma_minus},
        {"sigma_median", s.sigma_median},
        {"mc_error", s.mc_error},
        {"predictive_sd", s.predictive_sd},
        {"sigma_plus_error", s.sigma_plus_error},
        {"sigma_minus_error", s.sigma_minus_error},
        {"sample_count", s.sample_count},
        {"formatted", robust::format_triple(s, disp.scale, disp.precision, disp.unit)},
    };
    write_histogram(out / fmt::format("hist_{}.csv", robust::quantity_name(q)), c, s,
                    c.analyze.bins);
    std::cout << fmt::format("{:9s} {}\n", robust::quantity_name(q),
                             robust::format_triple(s, disp.scale, disp.precision, disp.unit));
  }
  write_json(out / "robustness_report.json", j, c);
}

void cmd_robust_optimize(const RunConfig& c, const fs::path& out) {
  const auto bundle = obtain_bundle(c, out);
  robust::RobustOptions opt;
  opt.mu_bounds_sigma = c.robust.mu_bounds_sigma;
  opt.n_samples = c.robust.n_samples;
  opt.budget = c.robust.budget;
  opt.init_count = c.robust.init_count;
  opt.seed = c.seed;
  const auto r = robust::robust_optimize(bundle, c.tolerances, c.objective, opt);

  json j;
  j["mu"] = design_json(r.mu);
  j["mu_domain"] = domain_json(r.mu_domain);
  j["mu_bounds_sigma"] = per_parameter_json(
      c.robust.mu_bounds_sigma.empty() ? std::vector<double>{2, 2, 22, 2, 2, 2, 2}
                                       : c.robust.mu_bounds_sigma);
  j["tolerances"] = per_parameter_json(c.tolerances.sigma);
  j["n_samples"] = c.robust.n_samples;
  j["median"] = {{"lambda_c", r.medians[0]},
                 {"fp", r.medians[1]},
                 {"eta_smf", r.medians[2]},
                 {"target", r.target}};
  robust::OracleOutput point{bundle.predict(robust::Quantity::LambdaC, r.mu).median,
                             bundle.predict(robust::Quantity::Purcell, r.mu).median,
                             bundle.predict(robust::Quantity::Efficiency, r.mu).median};
  j["point_surrogate"] = outputs_json(point);
  j["point_surrogate"]["target"] = target_of(point, c.objective);
  if (c.oracle.type != "external-table") {
    if (auto o = make_oracle(c.oracle)(r.mu)) {
      j["point_oracle"] = outputs_json(*o);
      j["point_oracle"]["target"] = target_of(*o, c.objective);
    }
  }
  write_json(out / "robust_best.json", j, c);

  CsvFile trace(out / "robust_history.csv", c);
  trace.row({"iteration", "best_target"});
  for (std::size_t i = 0; i < r.trace.size(); ++i) trace.row({std::to_string(i + 1), num(r.trace[i])});
  std::cout << fmt::format("robust target {:.6g} at {}\n", r.target, design_json(r.mu).dump());
}

void cmd_verify(const RunConfig& c, const fs::path& out) {
  const auto bundle = obtain_bundle(c, out);
  const auto v = robust::verify(bundle, make_oracle(c.oracle), c.center, c.tolerances, c.verify_count, c.seed);
  json j;
  j["mean"] = design_json(c.center);
  j["tolerances"] = per_parameter_json(c.tolerances.sigma);
  j["requested"] = v.requested;
  j["evaluated"] = v.evaluated;
  CsvFile csv(out / "verification_samples.csv", c);
  std::vector<std::string> header = {"sample"};
  for (auto q : robust::kQuantities) {
    const auto& s = v[q];
    const auto name = robust::quantity_name(q);
    j["quantities"][name] = {{"oracle_median", s.oracle_median},
                             {"surrogate_median", s.surrogate_median},
                             {"median_discrepancy", s.median_discrepancy},
                             {"band_coverage", s.band_coverage}};
    header.push_back(name + "_oracle");
    header.push_back(name + "_surrogate");
    std::cout << fmt::format("{:9s} median discrepancy {:.4g}, band coverage {:.3f}\n", name,
                             s.median_discrepancy, s.band_coverage);
  }
  csv.row(header);
  for (std::size_t i = 0; i < v.evaluated; ++i) {
    std::vector<std::string> row = {std::to_string(i)};
    for (auto q : robust::kQuantities) {
      row.push_back(num(v[q].oracle_values[i]));
      row.push_back(num(v[q].surrogate_values[i]));
    }
    csv.row(row);
  }
  write_json(out / "verification.json", j, c);
}

void cmd_capacitor(const RunConfig& c, const fs::path& out) {
  const auto& k = c.capacitor;
  const auto stack = device::planar_stack(k.design, k.eps);
  const double analytic = device::analytic_stack_field(stack, 1, 1.0);

  device::GridSpec planar_grid = k.grid;
  planar_grid.planar = true;
  const auto planar = device::fd_axisym_solve(k.design, k.eps, k.radius_um, 1.0, planar_grid);
  const auto grating = device::fd_axisym_solve(k.design, k.eps, k.radius_um, 1.0, k.grid);
  const auto sweep = device::bias_sweep(grating, k.volts);
  const double planar_error = std::abs(planar.e_abs_probe - analytic) / analytic;

  CsvFile csv(out / "bias_sweep.csv", c);
  csv.row({"volts", "e_abs_kv_cm", "e_planar_fd_kv_cm", "e_planar_analytic_kv_cm"});
  for (const auto& p : sweep.points) {
    csv.row({num(p.volts), num(p.e_abs), num(p.volts * planar.e_abs_probe), num(p.volts * analytic)});
  }

  CsvFile map(out / "field_map.csv", c);
  map.row({"r_nm", "z_nm", "phi_v", "e_r_kv_cm", "e_z_kv_cm", "e_abs_kv_cm"});
  const double s = k.map_volts;
  for (std::size_t jz = 0; jz < grating.z.size(); ++jz) {
    for (std::size_t ir = 0; ir < grating.r.size() && grating.r[ir] <= k.map_r_max; ++ir) {
      const auto a = static_cast<Eigen::Index>(jz), b = static_cast<Eigen::Index>(ir);
      const double er = s * grating.e_r(a, b), ez = s * grating.e_z(a, b);
      map.row({num(grating.r[ir]), num(grating.z[jz]), num(s * grating.phi(a, b)), num(er), num(ez),
               num(std::hypot(er, ez))});
    }
  }

  json j;
  j["design"] = design_json(k.design);
  j["permittivities"] = {{"slab", k.eps.slab}, {"sio2", k.eps.sio2}, {"hsq", k.eps.hsq}};
  j["radius_um"] = k.radius_um;
  j["grid"] = {{"h_fine", k.grid.h_fine},     {"h_coarse", k.grid.h_coarse}, {"growth", k.grid.growth},
               {"rings", k.grid.rings},       {"grading", k.grid.grading}};
  j["probe"] = {{"r_nm", grating.probe_r}, {"z_nm", grating.probe_z}};
  j["field_per_volt_kv_cm"] = sweep.field_per_volt;
  j["planar_fd_per_volt_kv_cm"] = planar.e_abs_probe;
  j["planar_analytic_per_volt_kv_cm"] = analytic;
  j["planar_relative_error"] = planar_error;
  j["volts_at_100_kv_cm"] = sweep.volts_at_100;
  j["volts_at_100_kv_cm_planar"] = 100.0 / analytic;
  write_json(out / "capacitor.json", j, c);
  std::cout << fmt::format("planar FD vs analytic: {:.3g}% ; grating {:.4g} kV/cm per V ; "
                           "100 kV/cm at {:.2f} V (planar {:.2f} V)\n",
                           100.0 * planar_error, sweep.field_per_volt, sweep.volts_at_100,
                           100.0 / analytic);
}

void cmd_toy_eval(const RunConfig& c, const fs::path& out) {
  const auto oracle = make_oracle(c.oracle);
  std::vector<DesignPoint> points = c.toy_points;
  if (c.toy_sobol > 0) {
    for (const auto& x : sampling::sobol(DesignPoint::kDim, c.toy_sobol,
                                         sampling::training_domain(c.center, c.tolerances))) {
      points.push_back(DesignPoint::from_span(x));
    }
  }
  CsvFile csv(out / "toy_eval.csv", c);
  auto header = design_header();
  for (const char* h : {"lambda_c", "fp", "eta_smf", "target"}) header.emplace_back(h);
  csv.row(header);
  for (const auto& p : points) {
    auto cells = design_cells(p);
    const auto r = oracle(p);
    if (!r) throw NumericalError("oracle evaluation failed");
    for (double v : {r->lambda_c, r->fp, r->eta_smf, target_of(*r, c.objective)}) cells.push_back(num(v));
    csv.row(cells);
  }
  std::cout << fmt::format("evaluated {} designs\n", points.size());
}

}  // namespace

robust::Oracle make_oracle(const OracleConfig& config) {
  if (config.type == "toy-cavity") {
    return [toy = config.toy](const DesignPoint& p) -> std::optional<robust::OracleOutput> {
      const auto o = device::toy_cavity(p, toy);
      return robust::OracleOutput{o.lambda_c, o.fp, o.eta_smf};
    };
  }
  if (config.type == "two-peak") {
    return [cfg = config.two_peak](const DesignPoint& p) -> std::optional<robust::OracleOutput> {
      const auto o = device::two_peak(p, cfg);
      return robust::OracleOutput{o.lambda_c, o.fp, o.eta_smf};
    };
  }
  if (config.type == "external-table") {
    auto table = std::make_shared<ExternalTable>(ExternalTable::load(config.table_path));
    return [table](const DesignPoint& p) { return table->lookup(p); };
  }
  throw ConfigError(fmt::format("unknown oracle type '{}'", config.type));
}

void run_command(const std::string& command, const RunConfig& config, const RunOptions& options) {
  const fs::path out = prepare_out(config, options);
  if (command == "optimize") cmd_optimize(config, out);
  else if (command == "robustness") cmd_robustness(config, out, options.threads);
  else if (command == "robust-optimize") cmd_robust_optimize(config, out);
  else if (command == "verify") cmd_verify(config, out);
  else if (command == "capacitor") cmd_capacitor(config, out);
  else if (command == "toy-eval") cmd_toy_eval(config, out);
  else throw ConfigError(fmt::format("unknown command '{}'", command));
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e)) {
    return kConfigError;
  }
  if (dynamic_cast<const ExtrapolationError*>(&e)) return kExtrapolationError;
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DomainError*>(&e)) {
    return kNumericalError;
  }
  return kFailure;
}

}  // namespace cbgopt::app
