#include "swle/dataset.hpp"
#include "swle/simlab.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace swle;

namespace {

EdmFamily fam_of(const std::string& f) { return EdmFamily(parse_family(f)); }
LinkSpec link_of(const std::string& f, const std::string& l) {
    FamilyId id = parse_family(f);
    return LinkSpec(id, l.empty() ? (id == FamilyId::Normal ? LinkId::Canonical : LinkId::Log) : parse_link(l));
}

py::dict fit_dict(const FitResult& r) {
    py::dict d;
    d["beta"] = r.params.beta;
    d["phi"] = r.params.phi;
    d["covariance"] = r.covariance;
    d["iterations"] = r.iterations;
    d["final_score_norm"] = r.final_score_norm;
    d["converged"] = r.converged;
    d["trace"] = r.trace;
    return d;
}

FitInput input_of(const py::object& data, const py::object& X) {
    if (X.is_none()) return py::cast<std::vector<ObservationRecord>>(data);
    return GlmData{py::cast<Vec>(data), py::cast<Mat>(X)};
}

}  // namespace

PYBIND11_MODULE(_swle, m) {
    m.doc() = "Score-based weighted likelihood estimation for exponential-dispersion GLMs";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

    py::class_<Interval>(m, "Interval")
        .def(py::init<double, double>(), py::arg("lo"), py::arg("hi"))
        .def_readwrite("lo", &Interval::lo)
        .def_readwrite("hi", &Interval::hi)
        .def("contains", &Interval::contains)
        .def("__repr__", [](const Interval& i) {
            return "Interval(" + std::to_string(i.lo) + ", " + std::to_string(i.hi) + "]";
        });

    py::class_<CensoringScheme>(m, "CensoringScheme")
        .def(py::init([](Interval t, Interval u, std::vector<Interval> c) { return CensoringScheme{t, u, c}; }),
             py::arg("truncation"), py::arg("uncensored"), py::arg("censor_intervals") = std::vector<Interval>{})
        .def_readwrite("truncation", &CensoringScheme::truncation)
        .def_readwrite("uncensored", &CensoringScheme::uncensored)
        .def_readwrite("censor_intervals", &CensoringScheme::censor_intervals)
        .def("validate", &CensoringScheme::validate);

    py::class_<ObservationRecord>(m, "ObservationRecord")
        .def(py::init([](Vec x, CensoringScheme s, std::optional<double> y, int idx) {
                 ObservationRecord r;
                 r.x = std::move(x);
                 r.scheme = std::move(s);
                 r.exact = y.has_value();
                 r.y = y.value_or(0.0);
                 r.censored_index = r.exact ? -1 : idx;
                 return r;
             }),
             py::arg("x"), py::arg("scheme"), py::arg("y") = py::none(), py::arg("censored_index") = 0)
        .def_readwrite("x", &ObservationRecord::x)
        .def_readwrite("scheme", &ObservationRecord::scheme)
        .def_readwrite("exact", &ObservationRecord::exact)
        .def_readwrite("y", &ObservationRecord::y)
        .def_readwrite("censored_index", &ObservationRecord::censored_index);

    py::class_<WeightSpec>(m, "WeightSpec")
        .def_static("mle", &WeightSpec::mle)
        .def_static("weighted", &WeightSpec::weighted, py::arg("beta_tilde"), py::arg("phi_tilde"))
        .def_property_readonly("is_mle", &WeightSpec::is_mle)
        .def_readonly("beta_tilde", &WeightSpec::beta_tilde)
        .def_readonly("phi_tilde", &WeightSpec::phi_tilde)
        .def("__eq__", &WeightSpec::operator==)
        .def("__repr__", [](const WeightSpec& s) { return to_json(s).dump(); });

    m.def("density", [](const std::string& f, double t, double p, double y) { return density(fam_of(f), t, p, y); },
          py::arg("family"), py::arg("theta"), py::arg("phi"), py::arg("y"));
    m.def("cdf", [](const std::string& f, double t, double p, double lo, double hi) {
        return cdf(fam_of(f), t, p, {lo, hi});
    }, py::arg("family"), py::arg("theta"), py::arg("phi"), py::arg("lo"), py::arg("hi"));
    m.def("bias_adjustment", [](const std::string& f, const std::string& l, double t, double p, const WeightSpec& s,
                                const Vec& x) { return bias_adjustment(fam_of(f), link_of(f, l), t, p, s, x); },
          py::arg("family"), py::arg("link"), py::arg("theta"), py::arg("phi"), py::arg("spec"), py::arg("x"));
    m.def("weight", [](const std::string& f, const std::string& l, const WeightSpec& s, double y, const Vec& x) {
        return weight_eval(fam_of(f), link_of(f, l), s, y, x);
    }, py::arg("family"), py::arg("link"), py::arg("spec"), py::arg("y"), py::arg("x"));
    m.def("d_terms", [](const std::string& f, double t, double p, double lo, double hi) {
        DTerms d = d_terms(fam_of(f), t, p, {lo, hi});
        return py::dict(py::arg("F") = d.F, py::arg("d_theta") = d.d_theta, py::arg("d_phi") = d.d_phi,
                        py::arg("d_tt") = d.d_tt, py::arg("d_tp") = d.d_tp, py::arg("d_pp") = d.d_pp);
    }, py::arg("family"), py::arg("theta"), py::arg("phi"), py::arg("lo"), py::arg("hi"));

    m.def("calibrate_complete", [](const std::string& f, const std::string& l, const Vec& beta, double phi,
                                   const Mat& xs, double alpha, double delta, std::uint64_t seed, std::size_t mc) {
        return calibrate_complete(fam_of(f), link_of(f, l), beta, phi, xs, alpha, delta, seed, mc);
    }, py::arg("family"), py::arg("link"), py::arg("beta"), py::arg("phi"), py::arg("x_sample"), py::arg("alpha"),
          py::arg("delta"), py::arg("seed") = 1, py::arg("mc_size") = 1000000);
    m.def("calibrate_censored", [](const std::string& f, const std::string& l, const Vec& beta, double phi,
                                   const std::vector<ObservationRecord>& recs, double alpha, double delta) {
        return calibrate_censored(fam_of(f), link_of(f, l), beta, phi, recs, alpha, delta);
    }, py::arg("family"), py::arg("link"), py::arg("beta"), py::arg("phi"), py::arg("records"), py::arg("alpha"),
          py::arg("delta"));

    m.def("score", [](const std::string& f, const std::string& l, const Vec& beta, double phi, const WeightSpec& s,
                      const Vec& y, const Mat& X) { return score(fam_of(f), link_of(f, l), {beta, phi}, s, {y, X}); },
          py::arg("family"), py::arg("link"), py::arg("beta"), py::arg("phi"), py::arg("spec"), py::arg("y"),
          py::arg("X"));
    m.def("extended_score", [](const std::string& f, const std::string& l, const Vec& beta, double phi,
                               const WeightSpec& s, const std::vector<ObservationRecord>& recs) {
        return extended_score(fam_of(f), link_of(f, l), {beta, phi}, s, recs);
    }, py::arg("family"), py::arg("link"), py::arg("beta"), py::arg("phi"), py::arg("spec"), py::arg("records"));

    m.def("fit", [](const std::string& f, const std::string& l, const WeightSpec& s, const py::object& data,
                    const py::object& X, double tol, int max_iter) {
        FitOptions o;
        o.tol = tol;
        o.max_iter = max_iter;
        FitInput in = input_of(data, X);
        FitResult r;
        {
            py::gil_scoped_release nogil;
            r = fit_any(fam_of(f), link_of(f, l), s, in, o);
        }
        return fit_dict(r);
    }, py::arg("family"), py::arg("link"), py::arg("spec"), py::arg("data"), py::arg("X") = py::none(),
          py::arg("tol") = 1e-6, py::arg("max_iter") = 500,
          "Fit with complete data (y, X) or a list of ObservationRecord (X omitted).");

    m.def("diagnose", [](const std::string& f, const std::string& l, const std::vector<WeightSpec>& specs,
                         const py::object& data, const py::object& X, int k0) {
        FitInput in = input_of(data, X);
        DiagnoseOptions o;
        o.k0 = k0;
        MetaWaldReport rep;
        {
            py::gil_scoped_release nogil;
            rep = diagnose(fam_of(f), link_of(f, l), HyperGrid(specs), in, o);
        }
        py::dict d;
        d["json"] = to_json(rep).dump();
        d["text"] = text_report(rep);
        d["sigma_meta"] = rep.sigma_meta;
        d["meta_statistic"] = rep.meta.value;
        d["meta_df"] = rep.meta.df;
        d["meta_p_value"] = rep.meta.p_value;
        d["residuals"] = rep.residual_matrix;
        py::list fits;
        for (const auto& r : rep.fits) fits.append(fit_dict(r));
        d["fits"] = fits;
        return d;
    }, py::arg("family"), py::arg("link"), py::arg("specs"), py::arg("data"), py::arg("X") = py::none(),
          py::arg("k0") = 0);

    m.def("generate", [](const std::string& design_json, std::uint64_t replication) {
        return generate(design_from_json(nlohmann::json::parse(design_json)), replication);
    }, py::arg("design_json"), py::arg("replication") = 0);
    m.def("simulate", [](const std::string& design_json, std::vector<double> deltas, int B, double alpha,
                         std::size_t mc_size, int jobs) {
        SimDesign d = design_from_json(nlohmann::json::parse(design_json));
        std::string out;
        {
            py::gil_scoped_release nogil;
            StudyGrid g = calibrate_study(d, deltas, alpha, mc_size);
            StudyOptions o;
            o.B = B;
            o.jobs = jobs;
            out = to_json(run_study(d, g, o)).dump();
        }
        return out;
    }, py::arg("design_json"), py::arg("deltas"), py::arg("B") = 10, py::arg("alpha") = 0.99,
          py::arg("mc_size") = 200000, py::arg("jobs") = 1, "Run a replication study; returns the JSON summary.");

    m.def("read_dataset", [](const std::string& path, bool log_response, bool positive) {
        DatasetReadOptions o;
        o.log_response = log_response;
        o.positive_support = positive;
        return read_dataset_file(path, o).records;
    }, py::arg("path"), py::arg("log_response") = false, py::arg("positive_support") = false);
    m.def("write_dataset", &write_dataset_file, py::arg("path"), py::arg("records"));
    m.def("chi_square_sf", &chi_square_sf, py::arg("x"), py::arg("k"));
}
