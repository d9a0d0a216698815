#include "swle/diagnostics.hpp"

#include <iomanip>
#include <sstream>

namespace swle {

HyperGrid::HyperGrid(std::vector<WeightSpec> specs) : specs_(std::move(specs)) {
    if (specs_.empty()) throw DomainError("hyperparameter grid is empty");
    for (std::size_t i = 0; i < specs_.size(); ++i)
        for (std::size_t j = i + 1; j < specs_.size(); ++j)
            if (specs_[i] == specs_[j])
                throw DomainError("hyperparameter grid repeats setting " + std::to_string(i + 1) + " at position " +
                                  std::to_string(j + 1));
}

int input_size(const FitInput& in) {
    if (auto d = std::get_if<GlmData>(&in)) return d->n();
    return static_cast<int>(std::get<std::vector<ObservationRecord>>(in).size());
}

FitResult fit_any(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec, const FitInput& in,
                  const FitOptions& opt) {
    if (auto d = std::get_if<GlmData>(&in)) return fit(fam, link, spec, *d, opt);
    return fit_censtrun(fam, link, spec, std::get<std::vector<ObservationRecord>>(in), opt);
}

Mat covariance_any(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                   const FitInput& in) {
    if (auto d = std::get_if<GlmData>(&in)) return sandwich_covariance(fam, link, p, spec, *d);
    return censtrun_covariance(fam, link, p, spec, std::get<std::vector<ObservationRecord>>(in));
}

Mat meta_covariance(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p,
                    const std::vector<WeightSpec>& specs, const FitInput& in) {
    const int K = static_cast<int>(specs.size()), q = static_cast<int>(p.beta.size()) + 1;
    const auto* d = std::get_if<GlmData>(&in);
    const auto* recs = std::get_if<std::vector<ObservationRecord>>(&in);
    auto gamma = [&](const WeightSpec& s) {
        return d ? gamma_matrix(fam, link, p, s, d->X) : censtrun_gamma_matrix(fam, link, p, s, *recs);
    };
    auto lambda = [&](const WeightSpec& a, const WeightSpec& b) {
        return d ? lambda_matrix(fam, link, p, a, b, d->X) : censtrun_lambda_matrix(fam, link, p, a, b, *recs);
    };
    std::vector<Mat> Gi(K);
    for (int k = 0; k < K; ++k) {
        Gi[k] = checked_inverse(gamma(specs[k]), "score Jacobian for weight setting " + std::to_string(k + 1));
    }
    Mat S(q * K, q * K);
    for (int k = 0; k < K; ++k)
        for (int l = k; l < K; ++l) {
            Mat B = Gi[k] * lambda(specs[k], specs[l]) * Gi[l].transpose();
            S.block(q * k, q * l, q, q) = B;
            S.block(q * l, q * k, q, q) = B.transpose();
        }
    return 0.5 * (S + S.transpose());
}

WaldResult wald_contrast(const Mat& C, const Vec& stacked, const Mat& sigma_meta, int n, double max_condition) {
    Vec d = C * stacked;
    Mat V = C * sigma_meta * C.transpose();
    V = 0.5 * (V + V.transpose());
    double cond = condition_number(V);
    if (!(cond < max_condition)) {
        std::ostringstream os;
        os << "contrast covariance is numerically singular (condition number " << cond << ")";
        throw NumericalError(os.str());
    }
    WaldResult r;
    r.value = std::max(0.0, n * d.dot(V.ldlt().solve(d)));
    r.df = static_cast<int>(C.rows());
    r.p_value = chi_square_sf(r.value, r.df);
    return r;
}

Vec stack_estimates(const std::vector<FitResult>& fits) {
    if (fits.empty()) throw DomainError("no fits");
    const int q = static_cast<int>(fits[0].params.beta.size()) + 1;
    Vec s(q * fits.size());
    for (std::size_t k = 0; k < fits.size(); ++k) s.segment(q * k, q) = fits[k].params.packed();
    return s;
}

namespace {

int width(const std::vector<FitResult>& fits) { return static_cast<int>(fits.at(0).params.beta.size()) + 1; }

void check_pair(int k, int l, int K) {
    if (k < 0 || l < 0 || k >= K || l >= K) throw DomainError("weight setting index out of range");
    if (k == l) throw DomainError("pairwise comparison needs two different weight settings");
}

}  // namespace

WaldResult meta_wald(const std::vector<FitResult>& fits, const Mat& sigma_meta, int n, ContrastBasis basis) {
    const int K = static_cast<int>(fits.size()), q = width(fits);
    if (K < 2) throw DomainError("meta statistic needs at least two weight settings");
    Mat C = Mat::Zero(q * (K - 1), q * K);
    Mat I = Mat::Identity(q, q);
    for (int k = 0; k + 1 < K; ++k) {
        int a = basis == ContrastBasis::Consecutive ? k : 0;
        C.block(q * k, q * a, q, q) += I;
        C.block(q * k, q * (k + 1), q, q) -= I;
    }
    return wald_contrast(C, stack_estimates(fits), sigma_meta, n);
}

WaldResult individual_wald(int k, int l, const std::vector<FitResult>& fits, const Mat& sigma_meta, int n) {
    const int K = static_cast<int>(fits.size()), q = width(fits);
    check_pair(k, l, K);
    Mat C = Mat::Zero(q, q * K);
    C.block(0, q * k, q, q) = Mat::Identity(q, q);
    C.block(0, q * l, q, q) = -Mat::Identity(q, q);
    return wald_contrast(C, stack_estimates(fits), sigma_meta, n);
}

WaldResult param_meta_wald(int p, const std::vector<FitResult>& fits, const Mat& sigma_meta, int n) {
    const int K = static_cast<int>(fits.size()), q = width(fits);
    if (K < 2) throw DomainError("meta statistic needs at least two weight settings");
    if (p < 0 || p >= q) throw DomainError("parameter index out of range");
    Mat C = Mat::Zero(K - 1, q * K);
    for (int k = 0; k + 1 < K; ++k) {
        C(k, q * k + p) = 1.0;
        C(k, q * (k + 1) + p) = -1.0;
    }
    return wald_contrast(C, stack_estimates(fits), sigma_meta, n);
}

WaldResult param_individual_wald(int p, int k, int l, const std::vector<FitResult>& fits, const Mat& sigma_meta,
                                 int n) {
    const int K = static_cast<int>(fits.size()), q = width(fits);
    check_pair(k, l, K);
    if (p < 0 || p >= q) throw DomainError("parameter index out of range");
    Mat C = Mat::Zero(1, q * K);
    C(0, q * k + p) = 1.0;
    C(0, q * l + p) = -1.0;
    return wald_contrast(C, stack_estimates(fits), sigma_meta, n);
}

Mat residuals(const std::vector<FitResult>& fits, int k0, const Vec& se) {
    const int K = static_cast<int>(fits.size()), q = width(fits);
    if (k0 < 0 || k0 >= K) throw DomainError("benchmark index out of range");
    if (se.size() != q) throw DomainError("standard-error vector has the wrong length");
    for (int p = 0; p < q; ++p)
        if (!(se(p) > 0)) throw DomainError("zero standard error for parameter " + std::to_string(p + 1));
    Mat R(q, K);
    Vec base = fits[k0].params.packed();
    for (int k = 0; k < K; ++k) R.col(k) = (fits[k].params.packed() - base).cwiseQuotient(se);
    R.col(k0).setZero();
    return R;
}

MetaWaldReport diagnose(const EdmFamily& fam, const LinkSpec& link, const HyperGrid& grid, const FitInput& in,
                        const DiagnoseOptions& opt) {
    const int K = grid.K();
    if (K < 2) throw DomainError("diagnostics need at least two weight settings");
    MetaWaldReport rep;
    rep.n = input_size(in);
    rep.k0 = opt.k0;
    FitOptions fo = opt.fit;
    fo.compute_covariance = false;
    for (int k = 0; k < K; ++k) {
        rep.fits.push_back(fit_any(fam, link, grid[k], in, fo));
        fo.init = rep.fits.back().params;
    }
    if (!grid[0].is_mle())
        rep.warnings.push_back("first weight setting is not the MLE; meta covariance evaluated at its fit");
    const ParamVector& at = rep.fits[0].params;
    rep.sigma_meta = meta_covariance(fam, link, at, grid.specs(), in);
    const int q = static_cast<int>(at.beta.size()) + 1;
    for (int k = 0; k < K; ++k) rep.fits[k].covariance = covariance_any(fam, link, rep.fits[k].params, grid[k], in);
    rep.meta = meta_wald(rep.fits, rep.sigma_meta, rep.n);
    if (opt.individual) {
        rep.individual.assign(K, std::vector<WaldResult>(K));
        for (int k = 0; k < K; ++k)
            for (int l = 0; l < k; ++l)
                rep.individual[k][l] = rep.individual[l][k] = individual_wald(k, l, rep.fits, rep.sigma_meta, rep.n);
    }
    if (opt.per_parameter) {
        rep.param_individual.assign(q, std::vector<std::vector<WaldResult>>(K, std::vector<WaldResult>(K)));
        for (int p = 0; p < q; ++p) {
            rep.param_meta.push_back(param_meta_wald(p, rep.fits, rep.sigma_meta, rep.n));
            for (int k = 0; k < K; ++k)
                for (int l = 0; l < k; ++l)
                    rep.param_individual[p][k][l] = rep.param_individual[p][l][k] =
                        param_individual_wald(p, k, l, rep.fits, rep.sigma_meta, rep.n);
        }
    }
    if (opt.k0 < 0 || opt.k0 >= K) throw DomainError("benchmark index out of range");
    rep.residual_matrix = residuals(rep.fits, opt.k0, rep.fits[opt.k0].covariance.diagonal().cwiseSqrt());
    return rep;
}

nlohmann::json to_json(const WeightSpec& s) {
    nlohmann::json j;
    if (s.is_mle()) {
        j["mode"] = "mle";
    } else {
        j["mode"] = "weighted";
        j["beta_tilde"] = std::vector<double>(s.beta_tilde.data(), s.beta_tilde.data() + s.beta_tilde.size());
        j["phi_tilde"] = s.phi_tilde;
    }
    return j;
}

namespace {
std::vector<double> to_vec(const Vec& v) { return {v.data(), v.data() + v.size()}; }
nlohmann::json mat_json(const Mat& m) {
    nlohmann::json a = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) a.push_back(to_vec(m.row(i).transpose()));
    return a;
}
nlohmann::json wald_json(const WaldResult& w) { return {{"statistic", w.value}, {"df", w.df}, {"p_value", w.p_value}}; }
}  // namespace

nlohmann::json to_json(const FitResult& f) {
    nlohmann::json j;
    j["beta"] = to_vec(f.params.beta);
    j["phi"] = f.params.phi;
    if (f.covariance.size() > 0) {
        j["covariance"] = mat_json(f.covariance);
        j["se"] = to_vec(f.covariance.diagonal().cwiseMax(0.0).cwiseSqrt());
    }
    j["iterations"] = f.iterations;
    j["final_score_norm"] = f.final_score_norm;
    j["converged"] = f.converged;
    j["spec"] = to_json(f.spec);
    j["trace"] = f.trace;
    return j;
}

nlohmann::json to_json(const MetaWaldReport& r) {
    nlohmann::json j;
    j["n"] = r.n;
    j["k0"] = r.k0 + 1;
    for (const auto& f : r.fits) j["fits"].push_back(to_json(f));
    j["sigma_meta"] = mat_json(r.sigma_meta);
    j["meta"] = wald_json(r.meta);
    const int K = static_cast<int>(r.fits.size());
    for (int k = 0; k < K && !r.individual.empty(); ++k)
        for (int l = k + 1; l < K; ++l)
            j["individual"].push_back({{"k", k + 1}, {"k_prime", l + 1}, {"result", wald_json(r.individual[k][l])}});
    for (std::size_t p = 0; p < r.param_meta.size(); ++p) {
        nlohmann::json e{{"parameter", p + 1}, {"meta", wald_json(r.param_meta[p])}};
        for (int k = 0; k < K; ++k)
            for (int l = k + 1; l < K; ++l)
                e["individual"].push_back(
                    {{"k", k + 1}, {"k_prime", l + 1}, {"result", wald_json(r.param_individual[p][k][l])}});
        j["per_parameter"].push_back(e);
    }
    j["residuals"] = mat_json(r.residual_matrix);
    j["warnings"] = r.warnings;
    return j;
}

std::string triangular_table(const std::vector<std::vector<WaldResult>>& m) {
    const int K = static_cast<int>(m.size());
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    os << std::setw(6) << "k";
    for (int l = 0; l < K; ++l) os << std::setw(11) << l + 1;
    os << '\n';
    for (int k = 0; k < K; ++k) {
        os << std::setw(6) << k + 1;
        for (int l = 0; l < K; ++l) {
            if (k == l) os << std::setw(11) << "-";
            else if (k > l) os << std::setw(11) << m[k][l].value;
            else os << std::setw(11) << m[k][l].p_value;
        }
        os << '\n';
    }
    return os.str();
}

std::string text_report(const MetaWaldReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    const int K = static_cast<int>(r.fits.size());
    const int q = r.fits.empty() ? 0 : static_cast<int>(r.fits[0].params.beta.size()) + 1;
    os << "Estimates (SE)\n" << std::setw(8) << "param";
    for (int k = 0; k < K; ++k) os << std::setw(20) << ("k=" + std::to_string(k + 1));
    os << '\n';
    for (int p = 0; p < q; ++p) {
        os << std::setw(8) << (p + 1 < q ? "beta" + std::to_string(p + 1) : std::string("phi"));
        for (int k = 0; k < K; ++k) {
            double se = r.fits[k].covariance.size() ? std::sqrt(std::max(0.0, r.fits[k].covariance(p, p))) : 0.0;
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(3) << r.fits[k].params.packed()(p) << " (" << se << ")";
            os << std::setw(20) << cell.str();
        }
        os << '\n';
    }
    os << "\nMeta Wald: statistic " << r.meta.value << ", df " << r.meta.df << ", p " << r.meta.p_value << "\n";
    if (!r.individual.empty())
        os << "\nIndividual Wald (statistics lower triangle, p-values upper triangle)\n" << triangular_table(r.individual);
    for (std::size_t p = 0; p < r.param_meta.size(); ++p) {
        os << "\nParameter " << p + 1 << ": meta statistic " << r.param_meta[p].value << ", df " << r.param_meta[p].df
           << ", p " << r.param_meta[p].p_value << "\n"
           << triangular_table(r.param_individual[p]);
    }
    os << "\nStandardized parameter deviance residuals (benchmark k=" << r.k0 + 1 << ")\n";
    for (int p = 0; p < r.residual_matrix.rows(); ++p) {
        for (int k = 0; k < r.residual_matrix.cols(); ++k) os << std::setw(10) << r.residual_matrix(p, k);
        os << '\n';
    }
    for (const auto& w : r.warnings) os << "warning: " << w << '\n';
    return os.str();
}

}  // namespace swle
