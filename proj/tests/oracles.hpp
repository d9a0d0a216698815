#pragma once

// Independent reference computations used by the tests. None of these call into
// the library's quadrature, root finder or samplers.

#include "swle/edm.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline double integrate(const std::function<double(double)>& f, double lo, double hi) {
    using namespace boost::math::quadrature;
    if (!(hi > lo)) return 0.0;
    if (std::isinf(lo) && std::isinf(hi)) {
        sinh_sinh<double> q;
        return q.integrate(f, 1e-13);
    }
    if (std::isinf(hi)) {
        exp_sinh<double> q;
        return q.integrate(f, lo, hi, 1e-13);
    }
    if (std::isinf(lo)) {
        exp_sinh<double> q;
        return q.integrate([&](double t) { return f(-t); }, -hi, std::numeric_limits<double>::infinity(), 1e-13);
    }
    tanh_sinh<double> q;
    return q.integrate(f, lo, hi, 1e-13);
}

// Split at interior points so peaked integrands are resolved.
inline double integrate_split(const std::function<double(double)>& f, double lo, double hi,
                              std::vector<double> cuts) {
    std::vector<double> pts{lo};
    std::sort(cuts.begin(), cuts.end());
    for (double c : cuts)
        if (c > lo && c < hi) pts.push_back(c);
    pts.push_back(hi);
    double s = 0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) s += integrate(f, pts[i], pts[i + 1]);
    return s;
}

inline double bisect(const std::function<double(double)>& g, double lo, double hi, int iters = 200) {
    double glo = g(lo);
    for (int i = 0; i < iters; ++i) {
        double mid = 0.5 * (lo + hi);
        double gm = g(mid);
        if ((gm < 0) == (glo < 0)) { lo = mid; glo = gm; } else { hi = mid; }
    }
    return 0.5 * (lo + hi);
}

// Textbook closed-form densities, written out per family.
inline double gamma_pdf(double y, double shape, double rate) {
    return std::exp(shape * std::log(rate) + (shape - 1) * std::log(y) - rate * y - std::lgamma(shape));
}
inline double normal_pdf(double y, double mu, double var) {
    return std::exp(-(y - mu) * (y - mu) / (2 * var)) / std::sqrt(2 * std::numbers::pi * var);
}
inline double ig_pdf(double y, double mu, double lambda) {
    return std::exp(0.5 * std::log(lambda / (2 * std::numbers::pi)) - 1.5 * std::log(y) -
                    lambda * (y - mu) * (y - mu) / (2 * mu * mu * y));
}

// Density at canonical (theta, phi) via the textbook parameterisations.
inline double pdf(swle::FamilyId fam, double theta, double phi, double y) {
    switch (fam) {
        case swle::FamilyId::Gamma: return y > 0 ? gamma_pdf(y, 1 / phi, -theta / phi) : 0.0;
        case swle::FamilyId::Normal: return normal_pdf(y, theta, phi);
        default: return y > 0 ? ig_pdf(y, 1 / std::sqrt(-2 * theta), 1 / phi) : 0.0;
    }
}
inline double mean_of(swle::FamilyId fam, double theta) {
    switch (fam) {
        case swle::FamilyId::Gamma: return -1 / theta;
        case swle::FamilyId::Normal: return theta;
        default: return 1 / std::sqrt(-2 * theta);
    }
}

// Probability of (lo, hi] by quadrature of the textbook density.
inline double prob(swle::FamilyId fam, double theta, double phi, double lo, double hi) {
    if (fam != swle::FamilyId::Normal) lo = std::max(lo, 0.0);
    double m = mean_of(fam, theta);
    return integrate_split([&](double y) { return pdf(fam, theta, phi, y); }, lo, hi, {m});
}

// Nelder-Mead minimiser.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, double step, int max_iter = 20000,
                                       double ftol = 1e-15) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> s(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) s[i + 1][i] += step;
    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i <= n; ++i) fv[i] = f(s[i]);
    for (int it = 0; it < max_iter; ++it) {
        std::vector<std::size_t> idx(n + 1);
        for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
        auto s2 = s;
        auto f2 = fv;
        for (std::size_t i = 0; i <= n; ++i) { s[i] = s2[idx[i]]; fv[i] = f2[idx[i]]; }
        if (std::fabs(fv[n] - fv[0]) <= ftol * (std::fabs(fv[0]) + 1e-300)) {
            double spread = 0;
            for (std::size_t i = 1; i <= n; ++i)
                for (std::size_t j = 0; j < n; ++j) spread = std::max(spread, std::fabs(s[i][j] - s[0][j]));
            if (spread < 1e-11) break;
        }
        std::vector<double> c(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) c[j] += s[i][j] / n;
        auto along = [&](double t) {
            std::vector<double> p(n);
            for (std::size_t j = 0; j < n; ++j) p[j] = c[j] + t * (s[n][j] - c[j]);
            return p;
        };
        auto xr = along(-1.0);
        double fr = f(xr);
        if (fr < fv[0]) {
            auto xe = along(-2.0);
            double fe = f(xe);
            if (fe < fr) { s[n] = xe; fv[n] = fe; } else { s[n] = xr; fv[n] = fr; }
        } else if (fr < fv[n - 1]) {
            s[n] = xr;
            fv[n] = fr;
        } else {
            auto xc = fr < fv[n] ? along(-0.5) : along(0.5);
            double fc = f(xc);
            if (fc < std::min(fr, fv[n])) {
                s[n] = xc;
                fv[n] = fc;
            } else {
                for (std::size_t i = 1; i <= n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) s[i][j] = s[0][j] + 0.5 * (s[i][j] - s[0][j]);
                    fv[i] = f(s[i]);
                }
            }
        }
    }
    std::size_t best = std::min_element(fv.begin(), fv.end()) - fv.begin();
    return s[best];
}

inline double chi2_sf_series(double x, double k) {
    // regularised upper incomplete gamma from the lower-series expansion
    double a = k / 2, z = x / 2;
    if (z <= 0) return 1.0;
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < 2000; ++n) {
        term *= z / (a + n);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return 1.0 - std::exp(-z + a * std::log(z) - std::lgamma(a)) * sum;
}

}  // namespace oracle
