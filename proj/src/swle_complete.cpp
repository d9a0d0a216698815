#include "swle/swle_complete.hpp"

#include <sstream>

namespace swle {

Vec ParamVector::packed() const {
    Vec v(beta.size() + 1);
    v.head(beta.size()) = beta;
    v(beta.size()) = phi;
    return v;
}

ParamVector ParamVector::unpack(const Vec& v) {
    return {v.head(v.size() - 1), v(v.size() - 1)};
}

Vec linear_thetas(const EdmFamily& fam, const LinkSpec& link, const Mat& X, const ParamVector& p) {
    if (X.cols() != p.beta.size()) throw DomainError("design matrix and coefficient vector differ in width");
    if (!(p.phi > 0) || !std::isfinite(p.phi)) throw DomainError("dispersion phi must be positive");
    Vec eta = X * p.beta;
    Vec th(eta.size());
    for (int i = 0; i < eta.size(); ++i) {
        th(i) = link.xi(eta(i));
        if (!fam.valid_theta(th(i))) {
            std::ostringstream os;
            os << "row " << i << ": theta=" << th(i) << " outside the valid region of " << fam.name();
            throw DomainError(os.str());
        }
    }
    return th;
}

namespace {

// Everything the per-observation formulas need at one covariate row.
struct Local {
    double eta, theta, dxi, kappa;
    Tilted s;
    Tilt t;
};

Local local_at(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
               const Vec& x) {
    Local L;
    L.eta = x.dot(p.beta);
    L.theta = link.xi(L.eta);
    L.dxi = link.dxi(L.eta);
    L.t = tilt_of(fam, link, spec, x);
    L.s = apply_tilt(fam, L.theta, p.phi, L.t);
    L.kappa = L.t.a_theta - L.t.a_phi * L.theta;
    return L;
}

Vec score_row(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
              double y, const Vec& x) {
    const int P = static_cast<int>(x.size());
    Local L = local_at(fam, link, p, spec, x);
    double W = std::exp(log_weight(fam, L.t, y));
    double ts = L.s.theta, ps = L.s.phi, phi = p.phi;
    double r = y - fam.dA(ts);
    Vec s(P + 1);
    s.head(P) = (W / phi) * r * L.dxi * x;
    s(P) = (W / (phi * phi)) * (r * ps * L.kappa - (ts * y - fam.A(ts) + fam.g(y)) + ps * ps * fam.db(ps));
    return s;
}

// Fisher scoring for sum_i W_i (y_i - A'(theta*_i)) d_i x_i = 0 where theta*_i and
// d_i = dtheta*_i/deta_i come from map(); returns the converged coefficients.
using ThetaMap = std::function<bool(int, double, double&, double&)>;

Vec solve_beta(const EdmFamily& fam, const GlmData& data, const Vec& W, const ThetaMap& map, Vec beta) {
    const int n = data.n(), P = data.P();
    Vec ts(n), ds(n);
    auto eval = [&](const Vec& b, Vec& U, Mat* H) {
        Vec eta = data.X * b;
        U.setZero(P);
        if (H) H->setZero(P, P);
        for (int i = 0; i < n; ++i) {
            if (!map(i, eta(i), ts(i), ds(i))) return false;
            double r = data.y(i) - fam.dA(ts(i));
            U += W(i) * r * ds(i) * data.X.row(i).transpose();
            if (H) H->noalias() += (W(i) * fam.d2A(ts(i)) * ds(i) * ds(i)) * data.X.row(i).transpose() * data.X.row(i);
        }
        return U.allFinite();
    };
    Vec U(P);
    Mat H(P, P);
    if (!eval(beta, U, &H)) throw DomainError("starting coefficients give invalid canonical parameters");
    for (int it = 0; it < 200; ++it) {
        Vec step = solve_spd(H, U);
        double u0 = U.lpNorm<Eigen::Infinity>();
        double scale = 1.0;
        Vec trial, Ut(P);
        bool ok = false;
        for (int h = 0; h <= 20; ++h, scale *= 0.5) {
            trial = beta + scale * step;
            if (eval(trial, Ut, nullptr) && Ut.lpNorm<Eigen::Infinity>() <= u0 * (1 + 1e-12)) { ok = true; break; }
        }
        if (!ok) {
            // accept the smallest valid step; Fisher scoring can stall on flat non-canonical surfaces
            trial = beta + scale * step;
            if (!eval(trial, Ut, nullptr)) break;
        }
        double change = (trial - beta).lpNorm<Eigen::Infinity>();
        beta = trial;
        eval(beta, U, &H);
        if (change <= 1e-13 * (1 + beta.lpNorm<Eigen::Infinity>())) break;
    }
    return beta;
}

// Root in u = log(x) of g over [u0 - 6, u0 + 6], pulling endpoints inward
// while g cannot be evaluated there.
double solve_log_scale(const std::function<double(double)>& g, double x0, const char* what) {
    double u0 = std::log(x0);
    auto safe = [&](double u, double& v) {
        try {
            v = g(std::exp(u));
            return std::isfinite(v);
        } catch (const std::exception&) {
            return false;
        }
    };
    double lo = u0 - 6, hi = u0 + 6, glo, ghi, v0;
    if (!safe(u0, v0)) throw FitFailure(std::string(what) + ": start value invalid", {});
    for (int i = 0; i < 60 && !safe(lo, glo); ++i) lo = 0.5 * (lo + u0);
    for (int i = 0; i < 60 && !safe(hi, ghi); ++i) hi = 0.5 * (hi + u0);
    if (!(glo * ghi < 0)) {
        std::ostringstream os;
        os << what << ": root not bracketed in [" << std::exp(lo) << ", " << std::exp(hi) << "]";
        throw FitFailure(os.str(), {});
    }
    return std::exp(find_root([&](double u) { return g(std::exp(u)); }, lo, hi, 1e-12));
}

Vec weights_of(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec, const GlmData& d) {
    Vec W = Vec::Ones(d.n());
    if (spec.is_mle()) return W;
    for (int i = 0; i < d.n(); ++i) {
        Vec x = d.X.row(i).transpose();
        W(i) = std::exp(log_weight(fam, tilt_of(fam, link, spec, x), d.y(i)));
    }
    return W;
}

void check_data(const EdmFamily& fam, const GlmData& d) {
    if (d.n() == 0) throw DomainError("empty data");
    if (d.X.rows() != d.n()) throw DomainError("response and design rows differ");
    for (int i = 0; i < d.n(); ++i)
        if (!fam.in_support(d.y(i))) {
            std::ostringstream os;
            os << "row " << i << ": response " << d.y(i) << " outside the " << fam.name() << " support";
            throw DomainError(os.str());
        }
}

}  // namespace

Vec score(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
          const GlmData& data) {
    return score_contributions(fam, link, p, spec, data).colwise().sum().transpose();
}

Mat score_contributions(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                        const GlmData& data) {
    check_data(fam, data);
    linear_thetas(fam, link, data.X, p);
    Mat S(data.n(), data.P() + 1);
    for (int i = 0; i < data.n(); ++i)
        S.row(i) = score_row(fam, link, p, spec, data.y(i), data.X.row(i).transpose()).transpose();
    return S;
}

double weighted_loglik(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                       const GlmData& data) {
    linear_thetas(fam, link, data.X, p);
    double s = 0.0;
    for (int i = 0; i < data.n(); ++i) {
        Vec x = data.X.row(i).transpose();
        Local L = local_at(fam, link, p, spec, x);
        double W = std::exp(log_weight(fam, L.t, data.y(i)));
        s += W * log_density(fam, L.s.theta, L.s.phi, data.y(i));
    }
    return s;
}

ParamVector mle_start(const EdmFamily& fam, const LinkSpec& link, const GlmData& data) {
    check_data(fam, data);
    const int n = data.n(), P = data.P();
    if (n <= P) throw DomainError("need more observations than coefficients");
    {
        Eigen::ColPivHouseholderQR<Mat> qr(data.X);
        if (qr.rank() < P) throw DomainError("design matrix is rank deficient");
    }
    double ybar = data.y.mean();
    Vec eta0(n);
    for (int i = 0; i < n; ++i) {
        double mu = data.y(i);
        if (fam.id() != FamilyId::Normal || link.id() == LinkId::Log) mu = 0.5 * (mu + ybar);
        eta0(i) = link.inverse(fam.theta_of_mean(mu));
    }
    Vec beta = data.X.colPivHouseholderQr().solve(eta0);
    ParamVector trial{beta, 1.0};
    try {
        linear_thetas(fam, link, data.X, trial);
    } catch (const DomainError&) {
        beta.setZero();
        beta(0) = link.inverse(fam.theta_of_mean(ybar));
    }
    Vec W = Vec::Ones(n);
    ThetaMap map = [&](int, double eta, double& t, double& d) {
        t = link.xi(eta);
        d = link.dxi(eta);
        return fam.valid_theta(t);
    };
    beta = solve_beta(fam, data, W, map, beta);
    Vec th = linear_thetas(fam, link, data.X, {beta, 1.0});
    double pearson = 0.0;
    for (int i = 0; i < n; ++i) {
        double r = data.y(i) - fam.dA(th(i));
        pearson += r * r / fam.d2A(th(i));
    }
    return {beta, pearson / (n - P)};
}

namespace {

double phi_equation(const EdmFamily& fam, const LinkSpec& link, const Vec& beta, double phi, const WeightSpec& spec,
                    const GlmData& d) {
    ParamVector p{beta, phi};
    double s = 0.0;
    for (int i = 0; i < d.n(); ++i) s += score_row(fam, link, p, spec, d.y(i), d.X.row(i).transpose())(d.P());
    return s * phi * phi;
}

ParamVector alternating(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec, const GlmData& d,
                        ParamVector p, const FitOptions& opt, FitResult& res) {
    Vec W = weights_of(fam, link, spec, d);
    std::vector<Tilt> tilts(d.n());
    for (int i = 0; i < d.n(); ++i) tilts[i] = tilt_of(fam, link, spec, d.X.row(i).transpose());
    for (int r = 1; r <= opt.max_iter; ++r) {
        const double phi = p.phi;
        ThetaMap map = [&](int i, double eta, double& t, double& dd) {
            double th = link.xi(eta);
            if (!fam.valid_theta(th)) return false;
            try {
                Tilted s = apply_tilt(fam, th, phi, tilts[i]);
                t = s.theta;
                dd = (s.phi / phi) * link.dxi(eta);
            } catch (const DomainError&) {
                return false;
            }
            return true;
        };
        Vec beta = solve_beta(fam, d, W, map, p.beta);
        double phi_new = solve_log_scale(
            [&](double ph) { return phi_equation(fam, link, beta, ph, spec, d); }, phi, "dispersion equation");
        ParamVector q{beta, phi_new};
        double change = std::max((q.beta - p.beta).lpNorm<Eigen::Infinity>(), std::fabs(q.phi - p.phi));
        p = q;
        double s = score(fam, link, p, spec, d).lpNorm<Eigen::Infinity>();
        res.trace.push_back(s);
        res.iterations = r;
        res.final_score_norm = s;
        if (change < opt.param_tol && s < opt.tol) {
            res.converged = true;
            return p;
        }
    }
    std::ostringstream os;
    os << "SWLE fit did not converge in " << opt.max_iter << " sweeps (score norm " << res.final_score_norm << ")";
    throw FitFailure(os.str(), res.trace);
}

// Transformed-coordinate fit for canonical links followed by reversion.
ParamVector one_shot(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec, const GlmData& d,
                     const ParamVector& p0) {
    Vec W = weights_of(fam, link, spec, d);
    const int P = d.P();
    Vec bt = spec.is_mle() ? Vec::Zero(P) : spec.beta_tilde;
    double a_phi = spec.is_mle() ? 0.0 : 1.0 / spec.phi_tilde - fam.c();
    double inv_phi_tilde = spec.is_mle() ? 0.0 : 1.0 / spec.phi_tilde;
    double ps0 = 1.0 / (1.0 / p0.phi + a_phi);
    if (!(ps0 > 0)) ps0 = p0.phi;
    Vec bstar = (p0.beta / p0.phi + bt * inv_phi_tilde) * ps0;
    ThetaMap map = [&](int, double eta, double& t, double& dd) {
        t = eta;
        dd = 1.0;
        return fam.valid_theta(t);
    };
    bstar = solve_beta(fam, d, W, map, bstar);
    Vec ts = d.X * bstar;
    double sw = W.sum(), rhs = 0.0;
    for (int i = 0; i < d.n(); ++i) rhs += W(i) * (ts(i) * d.y(i) - fam.A(ts(i)) + fam.g(d.y(i)));
    double ps = solve_log_scale([&](double x) { return rhs - x * x * fam.db(x) * sw; }, ps0,
                                "transformed dispersion equation");
    double inv = 1.0 / ps - a_phi;
    if (!(inv > 0)) {
        std::ostringstream os;
        os << "reverted dispersion not positive (1/phi = " << inv << ")";
        throw FitFailure(os.str(), {});
    }
    double phi = 1.0 / inv;
    return {(bstar / ps - bt * inv_phi_tilde) * phi, phi};
}

}  // namespace

FitResult fit(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec, const GlmData& data,
              const FitOptions& opt) {
    check_data(fam, data);
    if (data.n() <= data.P() + 1) throw DomainError("need n > P + 1");
    FitResult res;
    res.spec = spec;
    ParamVector p0 = opt.init ? *opt.init : mle_start(fam, link, data);
    ParamVector p;
    if (link.id() == LinkId::Canonical) {
        p = one_shot(fam, link, spec, data, p0);
        res.iterations = 1;
        res.final_score_norm = score(fam, link, p, spec, data).lpNorm<Eigen::Infinity>();
        res.trace.push_back(res.final_score_norm);
        res.converged = res.final_score_norm < opt.tol;
        if (!res.converged) p = alternating(fam, link, spec, data, p, opt, res);
    } else {
        p = alternating(fam, link, spec, data, p0, opt, res);
    }
    res.params = p;
    if (opt.compute_covariance) res.covariance = sandwich_covariance(fam, link, p, spec, data);
    return res;
}

Mat gamma_block(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                const Vec& x) {
    const int P = static_cast<int>(x.size());
    Local L = local_at(fam, link, p, spec, x);
    double lam = std::exp(log_bias_adjustment(fam, L.theta, p.phi, L.s));
    double phi = p.phi, ps = L.s.phi, a2 = fam.d2A(L.s.theta), k = L.kappa;
    double wtt = -lam * (ps / (phi * phi)) * a2 * L.dxi * L.dxi;
    double wtp = -lam * (ps * ps / (phi * phi * phi)) * a2 * L.dxi * k;
    double wpp = lam * std::pow(ps / phi, 4) * (-a2 * k * k / ps + 2 * fam.db(ps) / ps + fam.d2b(ps));
    Mat G(P + 1, P + 1);
    G.topLeftCorner(P, P) = wtt * x * x.transpose();
    G.topRightCorner(P, 1) = wtp * x;
    G.bottomLeftCorner(1, P) = wtp * x.transpose();
    G(P, P) = wpp;
    return G;
}

Mat lambda_block(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec_k,
                 const WeightSpec& spec_l, const Vec& x) {
    const int P = static_cast<int>(x.size());
    Local Lk = local_at(fam, link, p, spec_k, x);
    Local Ll = local_at(fam, link, p, spec_l, x);
    Tilted m = apply_tilt(fam, Lk.theta, p.phi, Lk.t + Ll.t);
    double lam = std::exp(log_bias_adjustment(fam, Lk.theta, p.phi, m));
    const double phi = p.phi, tk = Lk.s.theta, pk = Lk.s.phi, tl = Ll.s.theta, pl = Ll.s.phi;
    const double tm = m.theta, pm = m.phi;
    const double A2 = fam.d2A(tm), A1 = fam.dA(tm);
    auto u_phi = [&](double t, double ph) {
        return (t - tm) * A1 - (fam.A(t) - fam.A(tm)) - (ph * ph * fam.db(ph) - pm * pm * fam.db(pm));
    };
    const double uk = u_phi(tk, pk), ul = u_phi(tl, pl);
    const double btt = (pm * A2 + (A1 - fam.dA(tk)) * (A1 - fam.dA(tl))) / (pk * pl);
    // E[e_k,theta e_l,phi] and its mirror
    const double btp = -((tl - tm) * pm * A2 - (fam.dA(tk) - A1) * ul) / (pk * pl * pl);
    const double bpt = -((tk - tm) * pm * A2 - (fam.dA(tl) - A1) * uk) / (pl * pk * pk);
    const double bpp = -std::pow(pm, 4) / (pk * pk * pl * pl) * (2 * fam.db(pm) / pm + fam.d2b(pm)) +
                       ((tk - tm) * (tl - tm) * pm * A2 + uk * ul) / (pk * pk * pl * pl);
    const double kk = Lk.kappa, kl = Ll.kappa, dx = Lk.dxi;
    const double vtt = lam * btt * (pk * pl / (phi * phi)) * dx * dx;
    const double vtp = lam * (pk * pl * pl / std::pow(phi, 3)) * (btt * kl + btp) * dx;
    const double vpt = lam * (pk * pk * pl / std::pow(phi, 3)) * (btt * kk + bpt) * dx;
    const double vpp = lam * (pk * pk * pl * pl / std::pow(phi, 4)) * (btt * kk * kl + btp * kk + bpt * kl + bpp);
    Mat V(P + 1, P + 1);
    V.topLeftCorner(P, P) = vtt * x * x.transpose();
    V.topRightCorner(P, 1) = vtp * x;
    V.bottomLeftCorner(1, P) = vpt * x.transpose();
    V(P, P) = vpp;
    return V;
}

Mat gamma_matrix(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                 const Mat& X) {
    Mat G = Mat::Zero(X.cols() + 1, X.cols() + 1);
    for (int i = 0; i < X.rows(); ++i) G += gamma_block(fam, link, p, spec, X.row(i).transpose());
    return G / static_cast<double>(X.rows());
}

Mat lambda_matrix(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec_k,
                  const WeightSpec& spec_l, const Mat& X) {
    Mat L = Mat::Zero(X.cols() + 1, X.cols() + 1);
    for (int i = 0; i < X.rows(); ++i) L += lambda_block(fam, link, p, spec_k, spec_l, X.row(i).transpose());
    return L / static_cast<double>(X.rows());
}

Mat checked_inverse(const Mat& M, const std::string& what, double max_condition) {
    double cond = condition_number(M);
    if (!(cond < max_condition)) {
        std::ostringstream os;
        os << "singular " << what << " (condition number " << cond << ")";
        throw NumericalError(os.str());
    }
    return M.fullPivLu().inverse();
}

Mat sandwich_covariance(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                        const GlmData& data, LambdaMode mode) {
    const double n = data.n();
    Mat G = gamma_matrix(fam, link, p, spec, data.X);
    Mat L;
    if (mode == LambdaMode::Analytic) {
        L = lambda_matrix(fam, link, p, spec, spec, data.X);
    } else {
        Mat S = score_contributions(fam, link, p, spec, data);
        L = S.transpose() * S / n;
    }
    Mat Gi = checked_inverse(G, "score Jacobian");
    Mat C = Gi * L * Gi.transpose() / n;
    return 0.5 * (C + C.transpose());
}

Mat sandwich_covariance(const EdmFamily& fam, const LinkSpec& link, const FitResult& fit, const GlmData& data,
                        LambdaMode mode) {
    return sandwich_covariance(fam, link, fit.params, fit.spec, data, mode);
}

}  // namespace swle
