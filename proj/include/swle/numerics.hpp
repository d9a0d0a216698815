#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace swle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Thrown for invalid parameters, bracketing failures, singular systems.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Half-open interval (lo, hi]; infinite endpoints are open.
struct Interval {
    double lo = -kInf;
    double hi = kInf;

    bool empty() const { return !(hi > lo); }
    bool contains(double y) const { return y > lo && y <= hi; }
    bool operator==(const Interval& o) const { return lo == o.lo && hi == o.hi; }
    Interval intersect(const Interval& o) const {
        return {std::max(lo, o.lo), std::min(hi, o.hi)};
    }
};

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
    int subdivisions = 0;
    bool converged = true;
};

template <int N>
struct QuadratureResultN {
    std::array<double, N> value{};
    std::array<double, N> error_estimate{};
    int subdivisions = 0;
    bool converged = true;
};

struct QuadOptions {
    double rel_tol = 1e-9;
    double abs_tol = 1e-12;
    int max_subdivisions = 400;
    // length scale used by the tail substitution y = a + scale*t/(1-t)
    double scale = 1.0;
};

namespace detail {
// 21-point Kronrod / 10-point Gauss nodes on [-1,1], right half incl. centre.
struct GK21 {
    std::array<double, 11> x;
    std::array<double, 11> wk;
    std::array<double, 11> wg;  // zero on Kronrod-only nodes
};
const GK21& gk21();
}  // namespace detail

// Adaptive Gauss-Kronrod over (lo, hi] for an N-vector integrand. Infinite
// endpoints are mapped onto a finite parameter range. Convergence is judged per
// component against rel_tol times the integral of |f_c|, so cancelling
// components (centred moments) are not held to an unreachable relative target.
template <int N, class F>
QuadratureResultN<N> integrate_n(F&& f, double lo, double hi, const QuadOptions& opt = {});

QuadratureResult integrate(const std::function<double(double)>& f, double lo, double hi,
                           const QuadOptions& opt = {});

// Bracketed root of g on [lo, hi]; throws DomainError without a sign change.
double find_root(const std::function<double(double)>& g, double lo, double hi, double tol = 1e-12,
                 int max_iter = 200);

double chi_square_sf(double x, double k);

// Solve A X = B for symmetric A: Cholesky, then pivoted LU with a condition check.
Mat solve_spd(const Mat& A, const Mat& B, double max_condition = 1e14);
double condition_number(const Mat& A);

// Central difference with one Richardson step.
double richardson_diff(const std::function<double(double)>& f, double x, double h);
Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double rel_step = 1e-6);

// Log of the standard normal upper tail, accurate far into the tail.
double log_normal_sf(double z);
double normal_cdf(double z);
double normal_sf(double z);

// Empirical quantile, type 7 (linear interpolation of order statistics).
double quantile_type7(std::vector<double> v, double p);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    double gamma(double shape, double scale) { return std::gamma_distribution<double>(shape, scale)(eng_); }
    double student_t(double df) { return std::student_t_distribution<double>(df)(eng_); }
    // Michael-Schucany-Haas transform
    double inverse_gaussian(double mu, double lambda);
    std::uint64_t next_u64() { return eng_(); }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

// Counter-based child seed so replication r gets the same stream however it is scheduled.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// ---------------------------------------------------------------------------

template <int N, class F>
QuadratureResultN<N> integrate_n(F&& f, double lo, double hi, const QuadOptions& opt) {
    using Arr = std::array<double, N>;
    QuadratureResultN<N> out;
    if (!(hi > lo)) return out;

    // Map to a finite parameter interval [a, b] with integrand h(t) = f(y(t)) y'(t).
    const double s = opt.scale > 0 ? opt.scale : 1.0;
    int kind = 0;  // 0 finite, 1 (lo,inf), 2 (-inf,hi], 3 whole line
    double a = lo, b = hi;
    if (std::isinf(lo) && std::isinf(hi)) { kind = 3; a = -1.0; b = 1.0; }
    else if (std::isinf(hi)) { kind = 1; a = 0.0; b = 1.0; }
    else if (std::isinf(lo)) { kind = 2; a = 0.0; b = 1.0; }

    auto eval = [&](double t, Arr& v) {
        double y, jac;
        switch (kind) {
            case 1: { double u = 1.0 - t; y = lo + s * t / u; jac = s / (u * u); break; }
            case 2: { double u = 1.0 - t; y = hi - s * t / u; jac = s / (u * u); break; }
            case 3: { double u = 1.0 - t * t; y = s * t / u; jac = s * (1.0 + t * t) / (u * u); break; }
            default: y = t; jac = 1.0;
        }
        if (!std::isfinite(y) || !std::isfinite(jac)) { v.fill(0.0); return; }
        v = f(y);
        for (auto& c : v) {
            c *= jac;
            if (!std::isfinite(c)) c = 0.0;
        }
    };

    struct Seg {
        double a, b;
        Arr val, err, absval;
        double worst;
    };
    const auto& gk = detail::gk21();
    auto rule = [&](double sa, double sb) {
        Seg sg{sa, sb, {}, {}, {}, 0.0};
        double c = 0.5 * (sa + sb), hl = 0.5 * (sb - sa);
        Arr k{}, g{}, ab{}, fv{};
        for (int i = 0; i < 11; ++i) {
            if (i == 10) {
                eval(c, fv);
                for (int j = 0; j < N; ++j) {
                    k[j] += gk.wk[i] * fv[j];
                    g[j] += gk.wg[i] * fv[j];
                    ab[j] += gk.wk[i] * std::fabs(fv[j]);
                }
            } else {
                Arr f1{}, f2{};
                eval(c - hl * gk.x[i], f1);
                eval(c + hl * gk.x[i], f2);
                for (int j = 0; j < N; ++j) {
                    k[j] += gk.wk[i] * (f1[j] + f2[j]);
                    g[j] += gk.wg[i] * (f1[j] + f2[j]);
                    ab[j] += gk.wk[i] * (std::fabs(f1[j]) + std::fabs(f2[j]));
                }
            }
        }
        for (int j = 0; j < N; ++j) {
            sg.val[j] = k[j] * hl;
            sg.err[j] = std::fabs((k[j] - g[j]) * hl);
            sg.absval[j] = ab[j] * std::fabs(hl);
        }
        return sg;
    };

    std::vector<Seg> segs;
    segs.reserve(64);
    segs.push_back(rule(a, b));
    auto totals = [&](Arr& v, Arr& e, Arr& av) {
        v.fill(0); e.fill(0); av.fill(0);
        for (const auto& sg : segs)
            for (int j = 0; j < N; ++j) { v[j] += sg.val[j]; e[j] += sg.err[j]; av[j] += sg.absval[j]; }
    };
    Arr v, e, av;
    for (;;) {
        totals(v, e, av);
        bool ok = true;
        Arr tol;
        for (int j = 0; j < N; ++j) {
            tol[j] = std::max(opt.abs_tol, opt.rel_tol * av[j]);
            if (e[j] > tol[j]) ok = false;
        }
        if (ok) break;
        if (static_cast<int>(segs.size()) >= opt.max_subdivisions) { out.converged = false; break; }
        // bisect the segment contributing most error relative to its tolerance
        std::size_t worst = 0;
        double wv = -1.0;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            double w = 0.0;
            for (int j = 0; j < N; ++j) w = std::max(w, segs[i].err[j] / (tol[j] > 0 ? tol[j] : 1.0));
            if (w > wv) { wv = w; worst = i; }
        }
        Seg sg = segs[worst];
        double mid = 0.5 * (sg.a + sg.b);
        if (!(mid > sg.a && mid < sg.b)) { out.converged = false; break; }
        segs[worst] = rule(sg.a, mid);
        segs.push_back(rule(mid, sg.b));
    }
    out.value = v;
    out.error_estimate = e;
    out.subdivisions = static_cast<int>(segs.size());
    return out;
}

}  // namespace swle
