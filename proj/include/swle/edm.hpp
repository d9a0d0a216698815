#pragma once

#include "swle/numerics.hpp"

#include <string>

namespace swle {

enum class FamilyId { Gamma, Normal, InverseGaussian };
enum class LinkId { Canonical, Log };

// Exponential-dispersion family in the form
//   f(y) = exp{(theta*y - A(theta))/phi + (1/phi - c) g(y) + a(y) + b(phi)}.
class EdmFamily {
public:
    explicit EdmFamily(FamilyId id) : id_(id) {}

    FamilyId id() const { return id_; }
    std::string name() const;
    double c() const { return id_ == FamilyId::Gamma ? 1.0 : 0.0; }
    Interval support() const;
    bool in_support(double y) const;

    double A(double theta) const;
    double dA(double theta) const;
    double d2A(double theta) const;
    double g(double y) const;
    double a(double y) const;
    double b(double phi) const;
    double db(double phi) const;
    double d2b(double phi) const;

    bool valid_theta(double theta) const;
    // Throws DomainError naming the offending parameter.
    void check(double theta, double phi) const;

    // theta giving mean mu
    double theta_of_mean(double mu) const;

private:
    FamilyId id_;
};

class LinkSpec {
public:
    LinkSpec(FamilyId fam, LinkId id);
    LinkId id() const { return id_; }
    std::string name() const;
    double xi(double eta) const;
    double dxi(double eta) const;
    double d2xi(double eta) const;
    // eta such that xi(eta) = theta
    double inverse(double theta) const;

private:
    FamilyId fam_;
    LinkId id_;
};

FamilyId parse_family(const std::string& s);
LinkId parse_link(const std::string& s);

double log_density(const EdmFamily& fam, double theta, double phi, double y);
double density(const EdmFamily& fam, double theta, double phi, double y);

// Probability of a region under the family, from closed-form distribution functions.
double cdf(const EdmFamily& fam, double theta, double phi, const Interval& region);
double log_cdf(const EdmFamily& fam, double theta, double phi, const Interval& region);

// F and its first parameter derivatives by Richardson differences of cdf().
struct CdfGrad {
    double F = 0.0, d_theta = 0.0, d_phi = 0.0;
};
CdfGrad cdf_grad(const EdmFamily& fam, double theta, double phi, const Interval& region);

// Draw one response.
double sample(const EdmFamily& fam, double theta, double phi, Rng& rng);

}  // namespace swle
