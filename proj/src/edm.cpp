#include "swle/edm.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <sstream>

namespace swle {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

double normal_pdf(double z) { return std::exp(-0.5 * z * z - 0.5 * kLog2Pi); }

// IG distribution function pieces with mu, lambda = 1/phi
double ig_cdf_point(double y, double mu, double lam) {
    if (y <= 0) return 0.0;
    if (std::isinf(y)) return 1.0;
    double r = std::sqrt(lam / y);
    double z1 = r * (y / mu - 1), z2 = r * (y / mu + 1);
    return normal_cdf(z1) + std::exp(2 * lam / mu + log_normal_sf(z2));
}
double ig_sf_point(double y, double mu, double lam) {
    if (y <= 0) return 1.0;
    if (std::isinf(y)) return 0.0;
    double r = std::sqrt(lam / y);
    double z1 = r * (y / mu - 1), z2 = r * (y / mu + 1);
    return std::max(0.0, normal_sf(z1) - std::exp(2 * lam / mu + log_normal_sf(z2)));
}
}  // namespace

std::string EdmFamily::name() const {
    switch (id_) {
        case FamilyId::Gamma: return "gamma";
        case FamilyId::Normal: return "normal";
        default: return "invgauss";
    }
}

Interval EdmFamily::support() const {
    if (id_ == FamilyId::Normal) return {-kInf, kInf};
    return {0.0, kInf};
}

bool EdmFamily::in_support(double y) const {
    if (!std::isfinite(y)) return false;
    return id_ == FamilyId::Normal || y > 0;
}

double EdmFamily::A(double t) const {
    switch (id_) {
        case FamilyId::Gamma: return -std::log(-t);
        case FamilyId::Normal: return 0.5 * t * t;
        default: return -std::sqrt(-2 * t);
    }
}
double EdmFamily::dA(double t) const {
    switch (id_) {
        case FamilyId::Gamma: return -1.0 / t;
        case FamilyId::Normal: return t;
        default: return 1.0 / std::sqrt(-2 * t);
    }
}
double EdmFamily::d2A(double t) const {
    switch (id_) {
        case FamilyId::Gamma: return 1.0 / (t * t);
        case FamilyId::Normal: return 1.0;
        default: return std::pow(-2 * t, -1.5);
    }
}
double EdmFamily::g(double y) const {
    switch (id_) {
        case FamilyId::Gamma: return std::log(y);
        case FamilyId::Normal: return -0.5 * y * y;
        default: return -0.5 / y;
    }
}
double EdmFamily::a(double y) const {
    if (id_ == FamilyId::InverseGaussian) return -0.5 * (kLog2Pi + 3 * std::log(y));
    return 0.0;
}
double EdmFamily::b(double p) const {
    switch (id_) {
        case FamilyId::Gamma: return -std::log(p) / p - std::lgamma(1.0 / p);
        case FamilyId::Normal: return -0.5 * (kLog2Pi + std::log(p));
        default: return -0.5 * std::log(p);
    }
}
double EdmFamily::db(double p) const {
    switch (id_) {
        case FamilyId::Gamma: return (std::log(p) - 1.0 + boost::math::digamma(1.0 / p)) / (p * p);
        default: return -0.5 / p;
    }
}
double EdmFamily::d2b(double p) const {
    switch (id_) {
        case FamilyId::Gamma: {
            double s = 1.0 / p;
            double num = std::log(p) - 1.0 + boost::math::digamma(s);
            return (s - boost::math::trigamma(s) * s * s) / (p * p) - 2 * num / (p * p * p);
        }
        default: return 0.5 / (p * p);
    }
}

bool EdmFamily::valid_theta(double t) const {
    if (!std::isfinite(t)) return false;
    return id_ == FamilyId::Normal || t < 0;
}

void EdmFamily::check(double theta, double phi) const {
    if (!(phi > 0) || !std::isfinite(phi)) {
        std::ostringstream os;
        os << name() << ": dispersion phi=" << phi << " must be positive and finite";
        throw DomainError(os.str());
    }
    if (!valid_theta(theta)) {
        std::ostringstream os;
        os << name() << ": canonical parameter theta=" << theta << " outside valid region"
           << (id_ == FamilyId::Normal ? "" : " (theta < 0)");
        throw DomainError(os.str());
    }
}

double EdmFamily::theta_of_mean(double mu) const {
    switch (id_) {
        case FamilyId::Gamma: return -1.0 / mu;
        case FamilyId::Normal: return mu;
        default: return -0.5 / (mu * mu);
    }
}

LinkSpec::LinkSpec(FamilyId fam, LinkId id) : fam_(fam), id_(id) {}

std::string LinkSpec::name() const { return id_ == LinkId::Canonical ? "canonical" : "log"; }

double LinkSpec::xi(double e) const {
    if (id_ == LinkId::Canonical) return e;
    switch (fam_) {
        case FamilyId::Gamma: return -std::exp(-e);
        case FamilyId::Normal: return std::exp(e);
        default: return -0.5 * std::exp(-2 * e);
    }
}
double LinkSpec::dxi(double e) const {
    if (id_ == LinkId::Canonical) return 1.0;
    switch (fam_) {
        case FamilyId::Gamma: return std::exp(-e);
        case FamilyId::Normal: return std::exp(e);
        default: return std::exp(-2 * e);
    }
}
double LinkSpec::d2xi(double e) const {
    if (id_ == LinkId::Canonical) return 0.0;
    switch (fam_) {
        case FamilyId::Gamma: return -std::exp(-e);
        case FamilyId::Normal: return std::exp(e);
        default: return -2 * std::exp(-2 * e);
    }
}
double LinkSpec::inverse(double t) const {
    if (id_ == LinkId::Canonical) return t;
    switch (fam_) {
        case FamilyId::Gamma: return -std::log(-t);
        case FamilyId::Normal: return std::log(t);
        default: return -0.5 * std::log(-2 * t);
    }
}

FamilyId parse_family(const std::string& s) {
    if (s == "gamma") return FamilyId::Gamma;
    if (s == "normal") return FamilyId::Normal;
    if (s == "invgauss" || s == "inverse_gaussian") return FamilyId::InverseGaussian;
    throw DomainError("unknown family '" + s + "'");
}
LinkId parse_link(const std::string& s) {
    if (s == "canonical") return LinkId::Canonical;
    if (s == "log") return LinkId::Log;
    throw DomainError("unknown link '" + s + "'");
}

double log_density(const EdmFamily& fam, double theta, double phi, double y) {
    fam.check(theta, phi);
    if (!fam.in_support(y)) return -kInf;
    return (theta * y - fam.A(theta)) / phi + (1.0 / phi - fam.c()) * fam.g(y) + fam.a(y) + fam.b(phi);
}

double density(const EdmFamily& fam, double theta, double phi, double y) {
    return std::exp(log_density(fam, theta, phi, y));
}

double cdf(const EdmFamily& fam, double theta, double phi, const Interval& region) {
    fam.check(theta, phi);
    Interval r = region.intersect(fam.support());
    if (r.empty()) return 0.0;
    switch (fam.id()) {
        case FamilyId::Gamma: {
            double a = 1.0 / phi, rate = -theta / phi;
            double xl = r.lo * rate, xh = r.hi * rate;
            if (xl > a) {
                double qh = std::isinf(xh) ? 0.0 : boost::math::gamma_q(a, xh);
                return std::max(0.0, boost::math::gamma_q(a, xl) - qh);
            }
            double ph = std::isinf(xh) ? 1.0 : boost::math::gamma_p(a, xh);
            double pl = xl <= 0 ? 0.0 : boost::math::gamma_p(a, xl);
            return std::max(0.0, ph - pl);
        }
        case FamilyId::Normal: {
            double s = std::sqrt(phi);
            double zl = (r.lo - theta) / s, zh = (r.hi - theta) / s;
            if (zl > 0) return std::max(0.0, normal_sf(zl) - normal_sf(zh));
            return std::max(0.0, normal_cdf(zh) - normal_cdf(zl));
        }
        default: {
            double mu = 1.0 / std::sqrt(-2 * theta), lam = 1.0 / phi;
            if (r.lo > mu) return std::max(0.0, ig_sf_point(r.lo, mu, lam) - ig_sf_point(r.hi, mu, lam));
            return std::max(0.0, ig_cdf_point(r.hi, mu, lam) - ig_cdf_point(r.lo, mu, lam));
        }
    }
}

double log_cdf(const EdmFamily& fam, double theta, double phi, const Interval& region) {
    double F = cdf(fam, theta, phi, region);
    return F > 0 ? std::log(F) : -kInf;
}

CdfGrad cdf_grad(const EdmFamily& fam, double theta, double phi, const Interval& region) {
    CdfGrad out;
    Interval r = region.intersect(fam.support());
    if (r.empty()) return out;
    out.F = cdf(fam, theta, phi, r);
    if (r == fam.support()) return out;

    auto F_of_phi = [&](double p) { return cdf(fam, theta, p, r); };
    auto F_of_theta = [&](double t) { return cdf(fam, t, phi, r); };

    switch (fam.id()) {
        case FamilyId::Normal: {
            double s = std::sqrt(phi);
            double zl = (r.lo - theta) / s, zh = (r.hi - theta) / s;
            double pl = std::isinf(zl) ? 0.0 : normal_pdf(zl), ph = std::isinf(zh) ? 0.0 : normal_pdf(zh);
            double wl = std::isinf(zl) ? 0.0 : pl * zl, wh = std::isinf(zh) ? 0.0 : ph * zh;
            out.d_theta = -(ph - pl) / s;
            out.d_phi = -(wh - wl) / (2 * phi);
            return out;
        }
        case FamilyId::Gamma: {
            double a = 1.0 / phi, rate = -theta / phi;
            auto term = [&](double t) {
                if (t <= 0 || std::isinf(t)) return 0.0;
                return t * boost::math::gamma_p_derivative(a, t * rate);
            };
            out.d_theta = -(term(r.hi) - term(r.lo)) / phi;
            out.d_phi = richardson_diff(F_of_phi, phi, 1e-3 * phi);
            return out;
        }
        default:
            out.d_theta = richardson_diff(F_of_theta, theta, 1e-3 * std::fabs(theta));
            out.d_phi = richardson_diff(F_of_phi, phi, 1e-3 * phi);
            return out;
    }
}

double sample(const EdmFamily& fam, double theta, double phi, Rng& rng) {
    switch (fam.id()) {
        case FamilyId::Gamma: {
            double mu = -1.0 / theta;
            return rng.gamma(1.0 / phi, mu * phi);
        }
        case FamilyId::Normal: return theta + std::sqrt(phi) * rng.normal();
        default: return rng.inverse_gaussian(1.0 / std::sqrt(-2 * theta), 1.0 / phi);
    }
}

}  // namespace swle
