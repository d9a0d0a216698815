#include "swle/censtrun.hpp"

#include <algorithm>
#include <sstream>

namespace swle {

void CensoringScheme::validate() const {
    if (truncation.empty()) throw DomainError("empty truncation region");
    std::vector<Interval> pieces;
    if (!uncensored.empty()) pieces.push_back(uncensored);
    for (const auto& c : censor_intervals) {
        if (c.empty()) throw DomainError("empty censoring interval");
        pieces.push_back(c);
    }
    if (pieces.empty()) throw DomainError("scheme has neither an exact region nor censoring intervals");
    std::sort(pieces.begin(), pieces.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    if (pieces.front().lo != truncation.lo || pieces.back().hi != truncation.hi)
        throw DomainError("exact region and censoring intervals do not cover the truncation region");
    for (std::size_t i = 1; i < pieces.size(); ++i) {
        if (pieces[i].lo < pieces[i - 1].hi) throw DomainError("censoring pieces overlap");
        if (pieces[i].lo > pieces[i - 1].hi) throw DomainError("censoring pieces leave a gap");
    }
}

DTerms d_terms(const EdmFamily& fam, double theta, double phi, const Interval& region) {
    fam.check(theta, phi);
    DTerms out;
    Interval r = region.intersect(fam.support());
    if (r.empty()) return out;
    const double mu = fam.dA(theta), sd = std::sqrt(phi * fam.d2A(theta));
    const double At = fam.A(theta), shift = phi * phi * fam.db(phi);
    const double c = fam.c(), logc = -At / phi + fam.b(phi);
    auto integrand = [&](double y) {
        std::array<double, 6> v{};
        if (!fam.in_support(y)) return v;
        double gy = fam.g(y);
        double f = std::exp(theta * y / phi + (1.0 / phi - c) * gy + fam.a(y) + logc);
        if (!(f > 0)) return v;
        double u1 = y - mu, u2 = theta * y - At + gy - shift;
        v = {f, u1 * f, u2 * f, u1 * u1 * f, u1 * u2 * f, u2 * u2 * f};
        return v;
    };
    QuadOptions opt;
    opt.scale = sd;
    opt.max_subdivisions = 2000;
    // split at the mean so each tail substitution is centred on the mass
    std::vector<Interval> parts;
    if (r.contains(mu) && mu < r.hi) parts = {{r.lo, mu}, {mu, r.hi}};
    else parts = {r};
    std::array<double, 6> acc{};
    for (const auto& pt : parts) {
        auto res = integrate_n<6>(integrand, pt.lo, pt.hi, opt);
        if (!res.converged) {
            std::ostringstream os;
            os << "truncated moment quadrature did not converge on (" << pt.lo << ", " << pt.hi
               << "]: estimate " << res.value[0] << ", error bound " << res.error_estimate[0];
            throw NumericalError(os.str());
        }
        for (int j = 0; j < 6; ++j) acc[j] += res.value[j];
    }
    out = {acc[0], acc[1], acc[2], acc[3], acc[4], acc[5]};
    return out;
}

double truncated_density(const EdmFamily& fam, double theta, double phi, const Interval& truncation, double y) {
    if (!truncation.contains(y) || !fam.in_support(y)) return 0.0;
    double F = cdf(fam, theta, phi, truncation);
    if (!(F > 0)) throw DomainError("truncation region has zero probability");
    return density(fam, theta, phi, y) / F;
}

void validate_records(const EdmFamily& fam, const std::vector<ObservationRecord>& records, int P) {
    if (records.empty()) throw DomainError("no records");
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        auto fail = [&](const std::string& what) {
            throw DomainError("record " + std::to_string(i) + ": " + what);
        };
        if (r.x.size() != P) fail("covariate length differs from the design width");
        try {
            r.scheme.validate();
        } catch (const DomainError& e) {
            fail(e.what());
        }
        if (r.exact) {
            if (!r.scheme.uncensored.contains(r.y)) fail("exact response outside the uncensored region");
            if (!fam.in_support(r.y)) fail("response outside the family support");
        } else if (r.censored_index < 0 || r.censored_index >= static_cast<int>(r.scheme.censor_intervals.size())) {
            fail("censoring index out of range");
        }
    }
}

bool records_complete(const EdmFamily& fam, const std::vector<ObservationRecord>& records) {
    const Interval sup = fam.support();
    for (const auto& r : records)
        if (!r.exact || !(r.scheme.truncation.intersect(sup) == sup)) return false;
    return true;
}

std::vector<ObservationRecord> complete_records(const EdmFamily& fam, const GlmData& data) {
    std::vector<ObservationRecord> out(data.n());
    for (int i = 0; i < data.n(); ++i) {
        out[i].x = data.X.row(i).transpose();
        out[i].scheme = CensoringScheme::complete(fam.support());
        out[i].exact = true;
        out[i].y = data.y(i);
    }
    return out;
}

namespace {

struct RecordLocal {
    double theta, phi, dxi, kappa, lambda;
    Tilt t;
    Tilted s;
};

RecordLocal record_local(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                         const Vec& x) {
    RecordLocal L;
    double eta = x.dot(p.beta);
    L.theta = link.xi(eta);
    L.phi = p.phi;
    fam.check(L.theta, L.phi);
    L.dxi = link.dxi(eta);
    L.t = tilt_of(fam, link, spec, x);
    L.s = apply_tilt(fam, L.theta, L.phi, L.t);
    L.kappa = L.t.a_theta - L.t.a_phi * L.theta;
    L.lambda = spec.is_mle() ? 1.0 : std::exp(log_bias_adjustment(fam, L.theta, L.phi, L.s));
    return L;
}

// d(theta*, phi*)/d(beta, phi), 2 x (P+1)
Mat tilt_jacobian(const RecordLocal& L, const Vec& x) {
    const int P = static_cast<int>(x.size());
    const double r = L.s.phi / L.phi;
    Mat J = Mat::Zero(2, P + 1);
    J.row(0).head(P) = r * L.dxi * x.transpose();
    J(0, P) = r * r * L.kappa;
    J(1, P) = r * r;
    return J;
}

// gradient of log F over a region in the (theta, phi) coordinates
Eigen::Vector2d log_cdf_grad(const EdmFamily& fam, double theta, double phi, const Interval& region,
                             std::size_t idx) {
    CdfGrad g = cdf_grad(fam, theta, phi, region);
    if (!(g.F > 0)) {
        std::ostringstream os;
        os << "record " << idx << ": region (" << region.lo << ", " << region.hi << "] has zero probability";
        throw DomainError(os.str());
    }
    return {g.d_theta / g.F, g.d_phi / g.F};
}

Vec record_score_impl(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                      const ObservationRecord& rec, std::size_t idx) {
    RecordLocal L = record_local(fam, link, p, spec, rec.x);
    const double ts = L.s.theta, ps = L.s.phi;
    Eigen::Vector2d a = log_cdf_grad(fam, ts, ps, rec.scheme.truncation, idx);
    Eigen::Vector2d e;
    double mult;
    if (rec.exact) {
        const double y = rec.y;
        mult = spec.is_mle() ? 1.0 : std::exp(log_weight(fam, L.t, y));
        e << (y - fam.dA(ts)) / ps, -(ts * y - fam.A(ts) + fam.g(y) - ps * ps * fam.db(ps)) / (ps * ps);
    } else {
        const Interval& I = rec.scheme.censor_intervals[rec.censored_index];
        double lFI = log_cdf(fam, L.theta, L.phi, I), lFsI = log_cdf(fam, ts, ps, I);
        if (!std::isfinite(lFI)) {
            std::ostringstream os;
            os << "record " << idx << ": censoring interval has zero probability";
            throw DomainError(os.str());
        }
        mult = L.lambda * std::exp(lFsI - lFI);
        e = log_cdf_grad(fam, ts, ps, I, idx);
    }
    return mult * tilt_jacobian(L, rec.x).transpose() * (e - a);
}

}  // namespace

Vec record_score(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                 const ObservationRecord& rec) {
    return record_score_impl(fam, link, p, spec, rec, 0);
}

Mat extended_score_contributions(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p,
                                 const WeightSpec& spec, const std::vector<ObservationRecord>& records) {
    if (records.empty()) throw DomainError("no records");
    Mat S(records.size(), p.beta.size() + 1);
    for (std::size_t i = 0; i < records.size(); ++i)
        S.row(i) = record_score_impl(fam, link, p, spec, records[i], i).transpose();
    return S;
}

Vec extended_score(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                   const std::vector<ObservationRecord>& records) {
    if (records.empty()) throw DomainError("no records");
    Vec s = Vec::Zero(p.beta.size() + 1);
    for (std::size_t i = 0; i < records.size(); ++i) s += record_score_impl(fam, link, p, spec, records[i], i);
    return s;
}

FitResult fit_censtrun(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec,
                       const std::vector<ObservationRecord>& records, const FitOptions& opt) {
    const int P = static_cast<int>(records.at(0).x.size());
    validate_records(fam, records, P);
    if (static_cast<int>(records.size()) <= P + 1) throw DomainError("need n > P + 1");
    FitResult res;
    res.spec = spec;

    ParamVector p0;
    if (opt.init) {
        p0 = *opt.init;
    } else {
        std::vector<int> idx;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (records[i].exact) idx.push_back(static_cast<int>(i));
        if (static_cast<int>(idx.size()) <= P + 1) throw DomainError("too few exact records for a starting value");
        GlmData d{Vec(idx.size()), Mat(idx.size(), P)};
        for (std::size_t j = 0; j < idx.size(); ++j) {
            d.y(j) = records[idx[j]].y;
            d.X.row(j) = records[idx[j]].x.transpose();
        }
        p0 = mle_start(fam, link, d);
    }

    auto F = [&](const Vec& v) { return extended_score(fam, link, ParamVector::unpack(v), spec, records); };
    auto try_eval = [&](const Vec& v, Vec& out) {
        if (!(v(P) > 0) || !v.allFinite()) return false;
        try {
            out = F(v);
        } catch (const DomainError&) {
            return false;
        }
        return out.allFinite();
    };

    Vec v = p0.packed(), S;
    if (!try_eval(v, S)) throw FitFailure("extended score cannot be evaluated at the starting value", {});
    Mat Jm;
    bool stale = true;
    double norm = S.lpNorm<Eigen::Infinity>();
    for (int it = 1; it <= opt.max_iter; ++it) {
        if (stale) {
            Jm = fd_jacobian(F, v, 1e-6);
            stale = false;
        }
        Vec step = Jm.fullPivLu().solve(-S);
        if (!step.allFinite()) throw FitFailure("singular Jacobian in Newton step", res.trace);
        double t = 1.0;
        Vec vn, Sn;
        bool ok = false;
        for (int h = 0; h < 30; ++h, t *= 0.5) {
            vn = v + t * step;
            if (try_eval(vn, Sn) && Sn.lpNorm<Eigen::Infinity>() < norm) { ok = true; break; }
        }
        if (!ok) {
            // reuse of an old Jacobian can fail; refresh once before giving up
            if (!stale && it > 1) {
                Jm = fd_jacobian(F, v, 1e-6);
                step = Jm.fullPivLu().solve(-S);
                t = 1.0;
                for (int h = 0; h < 30; ++h, t *= 0.5) {
                    vn = v + t * step;
                    if (try_eval(vn, Sn) && Sn.lpNorm<Eigen::Infinity>() < norm) { ok = true; break; }
                }
            }
            if (!ok) {
                res.iterations = it;
                if (norm < opt.tol) break;
                throw FitFailure("Newton line search failed (score norm " + std::to_string(norm) + ")", res.trace);
            }
        }
        double change = (vn - v).lpNorm<Eigen::Infinity>();
        double nn = Sn.lpNorm<Eigen::Infinity>();
        stale = nn > 0.1 * norm;
        v = vn;
        S = Sn;
        norm = nn;
        res.trace.push_back(norm);
        res.iterations = it;
        if (norm < opt.tol && change < opt.param_tol) break;
        if (it == opt.max_iter) {
            std::ostringstream os;
            os << "censored SWLE fit did not converge in " << opt.max_iter << " steps (score norm " << norm << ")";
            throw FitFailure(os.str(), res.trace);
        }
    }
    res.params = ParamVector::unpack(v);
    res.final_score_norm = norm;
    res.converged = norm < opt.tol;
    if (!res.converged) throw FitFailure("censored SWLE fit stalled (score norm " + std::to_string(norm) + ")", res.trace);
    if (opt.compute_covariance) res.covariance = censtrun_covariance(fam, link, res.params, spec, records);
    return res;
}

Mat cross_moment(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec_k,
                 const WeightSpec& spec_l, const ObservationRecord& rec) {
    RecordLocal Lk = record_local(fam, link, p, spec_k, rec.x);
    RecordLocal Ll = record_local(fam, link, p, spec_l, rec.x);
    const double theta = Lk.theta, phi = Lk.phi;
    const Interval& T = rec.scheme.truncation;
    const double FT = cdf(fam, theta, phi, T);
    if (!(FT > 0)) throw DomainError("truncation region has zero probability");

    const double tk = Lk.s.theta, pk = Lk.s.phi, tl = Ll.s.theta, pl = Ll.s.phi;
    Eigen::Vector2d ak = log_cdf_grad(fam, tk, pk, T, 0), al = log_cdf_grad(fam, tl, pl, T, 0);
    Eigen::Matrix2d inner = Eigen::Matrix2d::Zero();

    const Interval U = rec.scheme.uncensored.intersect(fam.support());
    if (!U.empty()) {
        Tilted m = apply_tilt(fam, theta, phi, Lk.t + Ll.t);
        const double lam = std::exp(log_bias_adjustment(fam, theta, phi, m));
        const double tm = m.theta, pm = m.phi, A1 = fam.dA(tm);
        DTerms D = d_terms(fam, tm, pm, U);
        Eigen::Matrix3d Dm;
        Dm << D.F, D.d_theta, D.d_phi, D.d_theta, D.d_tt, D.d_tp, D.d_phi, D.d_tp, D.d_pp;
        // score in tilted coordinates as an affine map of (1, u1, u2) minus the truncation term
        auto affine = [&](double t, double ph, const Eigen::Vector2d& a) {
            double u_th = A1 - fam.dA(t);
            double u_ph = (t - tm) * A1 - (fam.A(t) - fam.A(tm)) - (ph * ph * fam.db(ph) - pm * pm * fam.db(pm));
            Eigen::Matrix<double, 2, 3> M;
            M << u_th / ph - a(0), 1.0 / ph, 0.0,
                -u_ph / (ph * ph) - a(1), -(t - tm) / (ph * ph), -1.0 / (ph * ph);
            return M;
        };
        inner += lam * affine(tk, pk, ak) * Dm * affine(tl, pl, al).transpose();
    }
    for (const auto& I : rec.scheme.censor_intervals) {
        double FI = cdf(fam, theta, phi, I);
        if (!(FI > 0)) continue;
        CdfGrad gk = cdf_grad(fam, tk, pk, I), gl = cdf_grad(fam, tl, pl, I);
        if (!(gk.F > 0) || !(gl.F > 0)) continue;
        Eigen::Vector2d ek(gk.d_theta / gk.F, gk.d_phi / gk.F), el(gl.d_theta / gl.F, gl.d_phi / gl.F);
        double ck = Lk.lambda * gk.F / FI, cl = Ll.lambda * gl.F / FI;
        inner += FI * ck * cl * (ek - ak) * (el - al).transpose();
    }
    inner /= FT;
    return tilt_jacobian(Lk, rec.x).transpose() * inner * tilt_jacobian(Ll, rec.x);
}

Mat censtrun_gamma_matrix(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                          const std::vector<ObservationRecord>& records) {
    const WeightSpec mle = WeightSpec::mle();
    Mat G = Mat::Zero(p.beta.size() + 1, p.beta.size() + 1);
    for (const auto& r : records) G -= cross_moment(fam, link, p, spec, mle, r);
    G /= static_cast<double>(records.size());
    return G;
}

Mat censtrun_lambda_matrix(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p,
                           const WeightSpec& spec_k, const WeightSpec& spec_l,
                           const std::vector<ObservationRecord>& records) {
    Mat L = Mat::Zero(p.beta.size() + 1, p.beta.size() + 1);
    for (const auto& r : records) L += cross_moment(fam, link, p, spec_k, spec_l, r);
    return L / static_cast<double>(records.size());
}

Mat censtrun_covariance(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                        const std::vector<ObservationRecord>& records, LambdaMode mode) {
    const double n = static_cast<double>(records.size());
    Mat G = censtrun_gamma_matrix(fam, link, p, spec, records);
    Mat L;
    if (mode == LambdaMode::Analytic) {
        L = censtrun_lambda_matrix(fam, link, p, spec, spec, records);
    } else {
        Mat S = extended_score_contributions(fam, link, p, spec, records);
        L = S.transpose() * S / n;
    }
    Mat Gi = checked_inverse(G, "score Jacobian");
    Mat C = Gi * L * Gi.transpose() / n;
    return 0.5 * (C + C.transpose());
}

Mat censtrun_covariance(const EdmFamily& fam, const LinkSpec& link, const FitResult& fit,
                        const std::vector<ObservationRecord>& records, LambdaMode mode) {
    return censtrun_covariance(fam, link, fit.params, fit.spec, records, mode);
}

}  // namespace swle
