#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cbgopt/bayes_opt.hpp"
#include "cbgopt/capacitor.hpp"
#include "cbgopt/errors.hpp"
#include "cbgopt/gp.hpp"
#include "cbgopt/io.hpp"
#include "cbgopt/objective.hpp"
#include "cbgopt/robustness.hpp"
#include "cbgopt/sampling.hpp"
#include "cbgopt/toy_cavity.hpp"
#include "cbgopt/warp.hpp"

namespace py = pybind11;
using namespace cbgopt;

namespace {

using Vec = std::vector<double>;

BoxDomain make_box(Vec lower, Vec upper) {
  BoxDomain b{std::move(lower), std::move(upper), {}};
  b.validate();
  return b;
}

py::dict stats_dict(const robust::QuantityStats& s) {
  py::dict d;
  d["p16"] = s.p16;
  d["p50"] = s.median;
  d["p84"] = s.p84;
  d["sigma_plus"] = s.sigma_plus;
  d["sigma_minus"] = s.sigma_minus;
  d["sigma_median"] = s.sigma_median;
  d["mc_error"] = s.mc_error;
  d["predictive_sd"] = s.predictive_sd;
  d["sample_count"] = s.sample_count;
  return d;
}

}  // namespace

PYBIND11_MODULE(cbgopt, m) {
  m.doc() = "Gaussian-process design optimization and robustness analysis for CBG cavities";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ExtrapolationError>(m, "ExtrapolationError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::class_<DesignPoint>(m, "DesignPoint")
      .def(py::init<>())
      .def(py::init([](double R, double W, double P, double t_cbg, double t_sio2, double t_hsq,
                       double t_ito) { return DesignPoint{R, W, P, t_cbg, t_sio2, t_hsq, t_ito}; }),
           py::arg("R"), py::arg("W"), py::arg("P"), py::arg("t_cbg"), py::arg("t_sio2"),
           py::arg("t_hsq"), py::arg("t_ito"))
      .def_readwrite("R", &DesignPoint::R)
      .def_readwrite("W", &DesignPoint::W)
      .def_readwrite("P", &DesignPoint::P)
      .def_readwrite("t_cbg", &DesignPoint::t_cbg)
      .def_readwrite("t_sio2", &DesignPoint::t_sio2)
      .def_readwrite("t_hsq", &DesignPoint::t_hsq)
      .def_readwrite("t_ito", &DesignPoint::t_ito)
      .def("to_list", &DesignPoint::to_vector)
      .def_static("from_list", [](const Vec& v) { return DesignPoint::from_span(v); })
      .def("validate", &DesignPoint::validate)
      .def(py::self == py::self)
      .def("__repr__", [](const DesignPoint& p) {
        return py::str("DesignPoint(R={}, W={}, P={}, t_cbg={}, t_sio2={}, t_hsq={}, t_ito={})")
            .format(p.R, p.W, p.P, p.t_cbg, p.t_sio2, p.t_hsq, p.t_ito);
      });
  m.attr("PARAMETER_NAMES") = py::cast(std::vector<std::string>(DesignPoint::kNames.begin(),
                                                                DesignPoint::kNames.end()));
  m.def("nir_i", &designs::nir_i);
  m.def("nir_ii", &designs::nir_ii);
  m.def("ob_i", &designs::ob_i);
  m.def("cb_i", &designs::cb_i);

  py::class_<ToleranceSpec>(m, "ToleranceSpec")
      .def(py::init([](Vec sigma) { return ToleranceSpec{std::move(sigma)}; }), py::arg("sigma"))
      .def_readwrite("sigma", &ToleranceSpec::sigma)
      .def("scaled", &ToleranceSpec::scaled)
      .def_static("fabrication_default", &ToleranceSpec::fabrication_default);

  py::class_<BoxDomain>(m, "BoxDomain")
      .def(py::init(&make_box), py::arg("lower"), py::arg("upper"))
      .def_readonly("lower", &BoxDomain::lower)
      .def_readonly("upper", &BoxDomain::upper)
      .def_readonly("names", &BoxDomain::names)
      .def("center", &BoxDomain::center);

  // sampling
  m.def("sobol_unit", &sampling::sobol_unit, py::arg("dim"), py::arg("count"),
        py::arg("include_origin") = false);
  m.def("sobol", [](std::size_t count, const BoxDomain& d) {
    return sampling::sobol(d.dim(), count, d);
  }, py::arg("count"), py::arg("domain"));
  m.def("training_domain",
        py::overload_cast<const DesignPoint&, const ToleranceSpec&>(&sampling::training_domain),
        py::arg("center"), py::arg("tolerances"));
  m.def("mvn_sample", [](const Vec& mean, const Vec& sigma, std::size_t count, std::uint64_t seed) {
    return sampling::mvn_sample(mean, sigma, count, seed);
  }, py::arg("mean"), py::arg("sigma"), py::arg("count"), py::arg("seed"));

  // gp
  py::class_<gp::KernelParams>(m, "KernelParams")
      .def(py::init([](double mu0, double sigma0_sq, Eigen::VectorXd l, double noise_sq) {
             return gp::KernelParams{mu0, sigma0_sq, std::move(l), noise_sq};
           }),
           py::arg("mu0"), py::arg("sigma0_sq"), py::arg("length_scales"),
           py::arg("noise_sq") = 0.0)
      .def_readwrite("mu0", &gp::KernelParams::mu0)
      .def_readwrite("sigma0_sq", &gp::KernelParams::sigma0_sq)
      .def_readwrite("length_scales", &gp::KernelParams::length_scales)
      .def_readwrite("noise_sq", &gp::KernelParams::noise_sq);

  py::class_<gp::GPModel>(m, "GPModel")
      .def(py::init([](Eigen::MatrixXd x, Eigen::VectorXd y, gp::KernelParams p) {
             return gp::GPModel(gp::TrainingSet{std::move(x), std::move(y)}, std::move(p));
           }),
           py::arg("points"), py::arg("values"), py::arg("params"))
      .def_property_readonly("params", &gp::GPModel::params)
      .def_property_readonly("log_likelihood", &gp::GPModel::log_likelihood)
      .def_property_readonly("points", [](const gp::GPModel& g) { return g.training().points; })
      .def_property_readonly("values", [](const gp::GPModel& g) { return g.training().values; })
      .def("predict", [](const gp::GPModel& g, const Vec& x) {
        const auto p = g.predict(x);
        return py::make_tuple(p.mean, p.variance);
      }, py::arg("x"), "(mean, variance) at one point")
      .def("predict_batch", [](const gp::GPModel& g, const Eigen::MatrixXd& x) {
        gp::Vector mean, var;
        g.predict_batch(x, mean, &var);
        return py::make_tuple(mean, var);
      }, py::arg("x"));

  m.def("fit_gp", [](Eigen::MatrixXd x, Eigen::VectorXd y, double noise_sq, int starts,
                     std::uint64_t seed) {
    gp::FitOptions o;
    o.starts = starts;
    o.seed = seed;
    return gp::fit(gp::TrainingSet{std::move(x), std::move(y)}, noise_sq, o);
  }, py::arg("points"), py::arg("values"), py::arg("noise_sq") = 0.0, py::arg("starts") = 8,
        py::arg("seed") = 0);
  m.def("log_marginal_likelihood", [](Eigen::MatrixXd x, Eigen::VectorXd y, const gp::KernelParams& p) {
    return gp::log_marginal_likelihood(gp::TrainingSet{std::move(x), std::move(y)}, p);
  });
  m.def("log_marginal_likelihood_gradient",
        [](Eigen::MatrixXd x, Eigen::VectorXd y, const gp::KernelParams& p) {
          const auto g = gp::log_marginal_likelihood_gradient(
              gp::TrainingSet{std::move(x), std::move(y)}, p);
          return py::make_tuple(g.value, g.gradient);
        });

  // warp
  py::class_<warp::WarpSpec>(m, "WarpSpec")
      .def(py::init<double, double, double, double, double>(), py::arg("lower_bound"),
           py::arg("upper_bound"), py::arg("lower_cutoff"), py::arg("upper_cutoff"),
           py::arg("position") = 0.0)
      .def_property_readonly("lower_bound", &warp::WarpSpec::lower_bound)
      .def_property_readonly("upper_bound", &warp::WarpSpec::upper_bound)
      .def_property_readonly("lower_cutoff", &warp::WarpSpec::lower_cutoff)
      .def_property_readonly("upper_cutoff", &warp::WarpSpec::upper_cutoff)
      .def("inverse", [](const warp::WarpSpec& w, double y) { return warp::inverse_transform(w, y); })
      .def("forward", [](const warp::WarpSpec& w, double y) { return warp::transform(w, y); });
  py::class_<warp::WarpedGPModel>(m, "WarpedGPModel")
      .def_readonly("warp", &warp::WarpedGPModel::warp)
      .def_readonly("gp", &warp::WarpedGPModel::gp)
      .def("predict", [](const warp::WarpedGPModel& w, const Vec& x) {
        const auto p = warp::predict_bounded(w, x);
        return py::make_tuple(p.median, p.p16, p.p84);
      }, py::arg("x"), "(median, p16, p84) at one point");
  m.def("fit_warped_gp", [](Eigen::MatrixXd x, Eigen::VectorXd y, double lower, double upper) {
    return warp::fit_warped_gp(gp::TrainingSet{std::move(x), std::move(y)}, lower, upper);
  }, py::arg("points"), py::arg("values"), py::arg("lower_bound"), py::arg("upper_bound"));

  // acquisition and optimizer
  m.def("expected_improvement",
        py::overload_cast<double, double, double>(&bo::expected_improvement), py::arg("mean"),
        py::arg("variance"), py::arg("f_min"));
  m.def("bayes_optimize", [](const std::function<std::optional<double>(Vec)>& f, Vec lower,
                             Vec upper, std::size_t budget, std::size_t init_count,
                             std::uint64_t seed) {
    bo::Options o;
    o.budget = budget;
    o.init_count = init_count;
    o.seed = seed;
    const auto state = bo::optimize(
        [&](std::span<const double> x) { return f(Vec(x.begin(), x.end())); },
        make_box(std::move(lower), std::move(upper)), o);
    py::list xs, ys;
    for (const auto& h : state.history) {
      xs.append(h.x);
      ys.append(h.value);
    }
    py::dict out;
    out["x"] = xs;
    out["y"] = ys;
    out["best_x"] = state.best().x;
    out["best_y"] = state.best().value;
    out["failed"] = state.failed;
    return out;
  }, py::arg("f"), py::arg("lower"), py::arg("upper"), py::arg("budget"),
        py::arg("init_count"), py::arg("seed"));

  // objective
  py::class_<objective::ObjectiveSpec>(m, "ObjectiveSpec")
      .def(py::init<>())
      .def_readwrite("lambda_des", &objective::ObjectiveSpec::lambda_des)
      .def_readwrite("fp_des", &objective::ObjectiveSpec::fp_des)
      .def_readwrite("w1", &objective::ObjectiveSpec::w1)
      .def_readwrite("w2", &objective::ObjectiveSpec::w2)
      .def_readwrite("w3", &objective::ObjectiveSpec::w3)
      .def_readwrite("parabola_c", &objective::ObjectiveSpec::parabola_c)
      .def_readwrite("mode_window", &objective::ObjectiveSpec::mode_window);
  m.def("target", [](double lambda_c, double fp, double eta, const objective::ObjectiveSpec& s) {
    objective::ModeResult r;
    r.lambda_c = lambda_c;
    r.fp = fp;
    r.eta_smf = eta;
    return objective::target(r, s);
  }, py::arg("lambda_c"), py::arg("fp"), py::arg("eta_smf"),
        py::arg("spec") = objective::ObjectiveSpec{});

  // synthetic oracles
  m.def("toy_cavity", [](const DesignPoint& p) {
    const auto o = device::toy_cavity(p);
    return py::make_tuple(o.lambda_c, o.fp, o.eta_smf);
  }, py::arg("design"), "(lambda_c, fp, eta_smf)");
  m.def("two_peak_eta", [](double R) { return device::two_peak_eta(R, device::TwoPeakConfig{}); });

  // electrostatics
  m.def("planar_field_per_volt", [](const DesignPoint& p) {
    return device::analytic_stack_field(device::planar_stack(p, device::Permittivities::gaas()), 1, 1.0);
  }, py::arg("design"), "kV/cm per volt at the slab of the planar stack");
  m.def("bias_sweep", [](const DesignPoint& p, const Vec& volts, double radius_um, double h_fine,
                         int rings, bool planar) {
    device::GridSpec g;
    g.h_fine = h_fine;
    g.rings = rings;
    g.planar = planar;
    const auto s = device::bias_sweep(p, device::Permittivities::gaas(), radius_um, volts, g);
    Vec e;
    for (const auto& b : s.points) e.push_back(b.e_abs);
    py::dict out;
    out["volts"] = volts;
    out["e_abs"] = e;
    out["field_per_volt"] = s.field_per_volt;
    out["volts_at_100"] = s.volts_at_100;
    return out;
  }, py::arg("design"), py::arg("volts"), py::arg("radius_um") = 7.0, py::arg("h_fine") = 5.0,
        py::arg("rings") = 8, py::arg("planar") = false);

  // robustness
  py::class_<robust::SurrogateBundle>(m, "SurrogateBundle")
      .def_readonly("domain", &robust::SurrogateBundle::domain)
      .def_readonly("lambda_model", &robust::SurrogateBundle::lambda_model)
      .def_readonly("fp_model", &robust::SurrogateBundle::fp_model)
      .def_readonly("eta_model", &robust::SurrogateBundle::eta_model)
      .def("predict", [](const robust::SurrogateBundle& b, const DesignPoint& p) {
        py::dict out;
        for (auto q : robust::kQuantities) {
          const auto r = b.predict(q, p);
          out[py::str(robust::quantity_name(q))] = py::make_tuple(r.median, r.p16, r.p84);
        }
        return out;
      })
      .def("save", [](const robust::SurrogateBundle& b, const std::string& path) {
        io::save_bundle(path, b);
      })
      .def_static("load", [](const std::string& path) { return io::load_bundle(path); });

  m.def("train_bundle", [](const std::function<std::optional<py::tuple>(DesignPoint)>& f,
                           const DesignPoint& center, const ToleranceSpec& tol, std::size_t count,
                           std::uint64_t seed) {
    robust::Oracle oracle = [&](const DesignPoint& p) -> std::optional<robust::OracleOutput> {
      const auto r = f(p);
      if (!r) return std::nullopt;
      return robust::OracleOutput{(*r)[0].cast<double>(), (*r)[1].cast<double>(),
                                  (*r)[2].cast<double>()};
    };
    return robust::train_bundle(oracle, center, tol, count, seed);
  }, py::arg("oracle"), py::arg("center"), py::arg("tolerances"), py::arg("count"),
        py::arg("seed"), "oracle(design) -> (lambda_c, fp, eta_smf) or None");

  m.def("analyze", [](const robust::SurrogateBundle& b, const DesignPoint& mean,
                      const ToleranceSpec& tol, std::size_t n, std::uint64_t seed) {
    const auto r = robust::analyze(b, mean, tol, n, seed);
    py::dict out;
    for (auto q : robust::kQuantities) {
      py::dict d = stats_dict(r[q]);
      const bool eta = q == robust::Quantity::Efficiency;
      d["formatted"] = robust::format_triple(r[q], eta ? 100.0 : 1.0, eta ? 1 : 2, eta ? "%" : "");
      out[py::str(robust::quantity_name(q))] = d;
    }
    return out;
  }, py::arg("bundle"), py::arg("mean"), py::arg("tolerances"), py::arg("n_samples") = 50000,
        py::arg("seed") = 0);

  m.def("robust_optimize", [](const robust::SurrogateBundle& b, const ToleranceSpec& tol,
                              const objective::ObjectiveSpec& spec, std::size_t n_samples,
                              std::size_t budget, std::size_t init_count, std::uint64_t seed,
                              Vec mu_bounds_sigma) {
    robust::RobustOptions o;
    o.n_samples = n_samples;
    o.budget = budget;
    o.init_count = init_count;
    o.seed = seed;
    o.mu_bounds_sigma = std::move(mu_bounds_sigma);
    const auto r = robust::robust_optimize(b, tol, spec, o);
    py::dict out;
    out["mu"] = r.mu;
    out["target"] = r.target;
    out["medians"] = r.medians;
    out["trace"] = r.trace;
    return out;
  }, py::arg("bundle"), py::arg("tolerances"), py::arg("spec") = objective::ObjectiveSpec{},
        py::arg("n_samples") = 5000, py::arg("budget") = 100, py::arg("init_count") = 32,
        py::arg("seed") = 0, py::arg("mu_bounds_sigma") = Vec{});
}
