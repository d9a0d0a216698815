#include "swle/weighting.hpp"

#include <boost/math/distributions/inverse_gaussian.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <numeric>
#include <sstream>

namespace swle {

WeightSpec WeightSpec::weighted(Vec beta_tilde, double phi_tilde) {
    if (!(phi_tilde > 0) || !std::isfinite(phi_tilde)) throw DomainError("weight dispersion phi_tilde must be positive");
    WeightSpec s;
    s.mode = Mode::Weighted;
    s.beta_tilde = std::move(beta_tilde);
    s.phi_tilde = phi_tilde;
    return s;
}

bool WeightSpec::operator==(const WeightSpec& o) const {
    if (mode != o.mode) return false;
    if (mode == Mode::Mle) return true;
    return phi_tilde == o.phi_tilde && beta_tilde.size() == o.beta_tilde.size() && beta_tilde == o.beta_tilde;
}

Tilt tilt_of(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec, const Vec& x) {
    if (spec.is_mle()) return {};
    if (spec.beta_tilde.size() != x.size()) throw DomainError("weight coefficients and covariates differ in length");
    double th = link.xi(x.dot(spec.beta_tilde));
    return {th / spec.phi_tilde, 1.0 / spec.phi_tilde - fam.c()};
}

Tilted apply_tilt(const EdmFamily& fam, double theta, double phi, const Tilt& t) {
    if (t.zero()) return {theta, phi};
    double inv = 1.0 / phi + t.a_phi;
    if (!(inv > 0)) {
        std::ostringstream os;
        os << "transformed dispersion undefined: 1/phi + 1/phi_tilde - c = " << inv << " <= 0";
        throw CalibrationError(os.str());
    }
    double ps = 1.0 / inv;
    double ts = (theta / phi + t.a_theta) * ps;
    if (!fam.valid_theta(ts)) {
        std::ostringstream os;
        os << "transformed canonical parameter " << ts << " violates theta < 0 for " << fam.name();
        throw CalibrationError(os.str());
    }
    return {ts, ps};
}

TransformedParams transform(const EdmFamily& fam, const LinkSpec& link, double theta, double phi,
                            const WeightSpec& spec, const Vec& x) {
    fam.check(theta, phi);
    Tilt t = tilt_of(fam, link, spec, x);
    Tilted s1 = apply_tilt(fam, theta, phi, t);
    Tilted s2 = apply_tilt(fam, theta, phi, t + t);
    return {s1.theta, s1.phi, s2.theta, s2.phi};
}

double log_bias_adjustment(const EdmFamily& fam, double theta, double phi, const Tilted& t) {
    if (t.theta == theta && t.phi == phi) return 0.0;
    return fam.A(t.theta) / t.phi - fam.b(t.phi) - fam.A(theta) / phi + fam.b(phi);
}

double bias_adjustment(const EdmFamily& fam, const LinkSpec& link, double theta, double phi,
                       const WeightSpec& spec, const Vec& x) {
    fam.check(theta, phi);
    if (spec.is_mle()) return 1.0;
    Tilted s = apply_tilt(fam, theta, phi, tilt_of(fam, link, spec, x));
    double e = log_bias_adjustment(fam, theta, phi, s);
    if (!(e < 700.0) || !std::isfinite(e)) {
        std::ostringstream os;
        os << "bias adjustment overflows: exponent " << e;
        throw NumericalError(os.str());
    }
    return std::exp(e);
}

double log_weight(const EdmFamily& fam, const Tilt& t, double y) {
    if (t.zero()) return 0.0;
    return t.a_theta * y + t.a_phi * fam.g(y);
}

double weight_eval(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec, double y, const Vec& x) {
    if (spec.is_mle()) return 1.0;
    if (!fam.in_support(y)) throw DomainError("response outside the family support");
    return std::exp(log_weight(fam, tilt_of(fam, link, spec, x), y));
}

WeightSpec constant_weight(const LinkSpec& link, int P, double theta_tilde, double phi_tilde) {
    Vec bt = Vec::Zero(P);
    bt(0) = link.inverse(theta_tilde);
    return WeightSpec::weighted(bt, phi_tilde);
}

double quantile(const EdmFamily& fam, double theta, double phi, double u) {
    switch (fam.id()) {
        case FamilyId::Gamma: return boost::math::gamma_p_inv(1.0 / phi, u) * (-phi / theta);
        case FamilyId::Normal: return theta - std::sqrt(2.0 * phi) * boost::math::erfc_inv(2.0 * u);
        default: {
            boost::math::inverse_gaussian_distribution<double> d(1.0 / std::sqrt(-2 * theta), 1.0 / phi);
            return boost::math::quantile(d, u);
        }
    }
}

double tail_weight_ratio(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec,
                         const std::vector<double>& ys, const Mat& xs, double q) {
    if (spec.is_mle()) return 1.0;
    const std::size_t n = ys.size();
    std::vector<double> lw(n);
    double m = -kInf;
    for (std::size_t i = 0; i < n; ++i) {
        lw[i] = log_weight(fam, tilt_of(fam, link, spec, xs.row(i).transpose()), ys[i]);
        m = std::max(m, lw[i]);
    }
    double all = 0.0, tail = 0.0;
    std::size_t nt = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double w = std::exp(lw[i] - m);
        all += w;
        if (ys[i] > q) { tail += w; ++nt; }
    }
    if (nt == 0) throw CalibrationError("no sample points above the tail quantile");
    return (tail / nt) / (all / n);
}

namespace {

struct FreeParam {
    const EdmFamily& fam;
    const LinkSpec& link;
    int P;
    double center, spread;

    // the calibrated hyperparameter as a function of an unconstrained u
    WeightSpec spec(double u) const {
        switch (fam.id()) {
            case FamilyId::Gamma: return constant_weight(link, P, -std::exp(u), 1.0);
            case FamilyId::Normal: return constant_weight(link, P, center, spread * std::exp(u));
            default: return constant_weight(link, P, fixed_theta(), std::exp(u) / center);
        }
    }
    double fixed_theta() const {
        if (fam.id() == FamilyId::Normal) return center;
        if (fam.id() == FamilyId::InverseGaussian) return -0.5 / (center * center);
        return 0.0;
    }
    double free_value(double u) const {
        WeightSpec s = spec(u);
        return fam.id() == FamilyId::Gamma ? -std::exp(u) : s.phi_tilde;
    }
};

WeightSpec solve_ratio(const FreeParam& fp, const std::function<double(const WeightSpec&)>& ratio, double delta,
                       CalibrationInfo* info) {
    auto h = [&](double u) { return ratio(fp.spec(u)) - delta; };
    double lo = -6.0, hi = 6.0;
    const double limit = 40.0;
    double hl = h(lo), hh = h(hi);
    while (hl * hh > 0) {
        if (hi - lo > 2 * limit) {
            std::ostringstream os;
            os << "could not bracket the tail-weight equation for delta=" << delta << " over u in [" << lo << ", "
               << hi << "]";
            throw CalibrationError(os.str());
        }
        lo -= 4.0;
        hi += 4.0;
        hl = h(lo);
        hh = h(hi);
    }
    double u = find_root(h, lo, hi, 1e-12);
    WeightSpec s = fp.spec(u);
    if (info) {
        info->free_parameter = fp.free_value(u);
        info->fixed_theta_tilde = fp.fixed_theta();
        info->achieved_ratio = ratio(s);
    }
    return s;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }
double var_of(const std::vector<double>& v) {
    double m = mean_of(v), s = 0;
    for (double y : v) s += (y - m) * (y - m);
    return s / (v.size() - 1);
}

void check_level(double alpha, double delta) {
    if (!(alpha > 0 && alpha < 1)) throw DomainError("alpha must lie in (0,1)");
    if (!(delta > 0 && delta <= 1)) throw DomainError("delta must lie in (0,1]");
}

}  // namespace

WeightSpec calibrate_from_sample(const EdmFamily& fam, const LinkSpec& link, const std::vector<double>& ys_in,
                                 const Mat& xs_in, double alpha, double delta, CalibrationInfo* info) {
    check_level(alpha, delta);
    std::vector<double> ys;
    std::vector<int> keep;
    for (std::size_t i = 0; i < ys_in.size(); ++i)
        if (fam.in_support(ys_in[i])) { ys.push_back(ys_in[i]); keep.push_back(static_cast<int>(i)); }
    if (ys.size() < 10) throw CalibrationError("too few responses inside the family support");
    Mat xs(ys.size(), xs_in.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) xs.row(i) = xs_in.row(keep[i]);

    double q = quantile_type7(ys, alpha);
    if (info) { info->q_alpha = q; info->sample_size = ys.size(); }
    if (delta == 1.0) {
        if (info) info->achieved_ratio = 1.0;
        return WeightSpec::mle();
    }
    FreeParam fp{fam, link, static_cast<int>(xs.cols()), mean_of(ys), var_of(ys)};
    return solve_ratio(fp, [&](const WeightSpec& s) { return tail_weight_ratio(fam, link, s, ys, xs, q); }, delta,
                       info);
}

std::vector<double> draw_responses(const ResponseModel& model, const Mat& x_sample, std::size_t count,
                                   std::uint64_t seed, Mat* xs_out) {
    EdmFamily fam(model.family);
    LinkSpec link(model.family, model.link);
    Rng rng(seed);
    std::vector<double> ys(count);
    if (xs_out) xs_out->resize(count, x_sample.cols());
    const auto rows = static_cast<std::uint64_t>(x_sample.rows());
    for (std::size_t i = 0; i < count; i += 2) {
        auto j = static_cast<Eigen::Index>(rng.next_u64() % rows);
        double th = link.xi(x_sample.row(j).dot(model.beta));
        double u = rng.uniform();
        u = std::clamp(u, 1e-16, 1 - 1e-16);
        ys[i] = quantile(fam, th, model.phi, u);
        if (xs_out) xs_out->row(i) = x_sample.row(j);
        if (i + 1 < count) {
            ys[i + 1] = quantile(fam, th, model.phi, 1 - u);
            if (xs_out) xs_out->row(i + 1) = x_sample.row(j);
        }
    }
    return ys;
}

WeightSpec calibrate_complete_for(const EdmFamily& fit_fam, const LinkSpec& fit_link, const ResponseModel& truth,
                                  const Mat& x_sample, double alpha, double delta, std::uint64_t seed,
                                  std::size_t mc_size, CalibrationInfo* info) {
    check_level(alpha, delta);
    if (delta == 1.0) {
        if (info) *info = CalibrationInfo{};
        return WeightSpec::mle();
    }
    Mat xs;
    auto ys = draw_responses(truth, x_sample, mc_size, seed, &xs);
    return calibrate_from_sample(fit_fam, fit_link, ys, xs, alpha, delta, info);
}

WeightSpec calibrate_complete(const EdmFamily& fam, const LinkSpec& link, const Vec& beta, double phi,
                              const Mat& x_sample, double alpha, double delta, std::uint64_t seed,
                              std::size_t mc_size, CalibrationInfo* info) {
    ResponseModel truth{fam.id(), link.id(), beta, phi};
    return calibrate_complete_for(fam, link, truth, x_sample, alpha, delta, seed, mc_size, info);
}

double censored_tail_ratio(const EdmFamily& fam, const LinkSpec& link, const Vec& beta, double phi,
                           const std::vector<ObservationRecord>& records, const WeightSpec& spec, double q) {
    if (spec.is_mle()) return 1.0;
    const Interval Q{q, kInf};
    double num = 0.0, den = 0.0;
    std::size_t nn = 0;
    for (const auto& r : records) {
        double th = link.xi(r.x.dot(beta));
        Tilted ts = apply_tilt(fam, th, phi, tilt_of(fam, link, spec, r.x));
        double ll = log_bias_adjustment(fam, th, phi, ts);
        const Interval& T = r.scheme.truncation;
        den += std::exp(ll + log_cdf(fam, ts.theta, ts.phi, T) - log_cdf(fam, th, phi, T));
        Interval QT = Q.intersect(T);
        double lF = log_cdf(fam, th, phi, QT);
        if (QT.empty() || !std::isfinite(lF)) continue;
        num += std::exp(ll + log_cdf(fam, ts.theta, ts.phi, QT) - lF);
        ++nn;
    }
    if (nn == 0) throw CalibrationError("no record can exceed the tail quantile");
    return (num / nn) / (den / records.size());
}

WeightSpec calibrate_censored(const EdmFamily& fam, const LinkSpec& link, const Vec& beta, double phi,
                              const std::vector<ObservationRecord>& records, double alpha, double delta,
                              CalibrationInfo* info) {
    check_level(alpha, delta);
    std::vector<double> ys;
    for (const auto& r : records)
        if (r.exact) ys.push_back(r.y);
    if (ys.size() < 10) throw CalibrationError("too few exactly observed responses");
    double q = quantile_type7(ys, alpha);
    if (info) { *info = CalibrationInfo{}; info->q_alpha = q; info->sample_size = records.size(); }
    if (delta == 1.0) return WeightSpec::mle();
    FreeParam fp{fam, link, static_cast<int>(beta.size()), mean_of(ys), var_of(ys)};
    return solve_ratio(
        fp, [&](const WeightSpec& s) { return censored_tail_ratio(fam, link, beta, phi, records, s, q); }, delta,
        info);
}

}  // namespace swle
