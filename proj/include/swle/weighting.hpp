#pragma once

#include "swle/edm.hpp"
#include "swle/records.hpp"

#include <cstdint>

namespace swle {

struct CalibrationError : DomainError {
    using DomainError::DomainError;
};

// Weight W(y,x) = exp{theta_t*y/phi_t + (1/phi_t - c) g(y)}, theta_t = xi(x'beta_t),
// with the proportionality constant fixed to one. Mle mode is W == 1 exactly.
struct WeightSpec {
    enum class Mode { Mle, Weighted };
    Mode mode = Mode::Mle;
    Vec beta_tilde;
    double phi_tilde = 1.0;

    static WeightSpec mle() { return {}; }
    static WeightSpec weighted(Vec beta_tilde, double phi_tilde);
    bool is_mle() const { return mode == Mode::Mle; }
    bool operator==(const WeightSpec& o) const;
};

// Natural-parameter increments added by a weight: theta/phi += a_theta, 1/phi += a_phi.
// Products of weights add their increments, which is all the pairwise terms need.
struct Tilt {
    double a_theta = 0.0;
    double a_phi = 0.0;
    Tilt operator+(const Tilt& o) const { return {a_theta + o.a_theta, a_phi + o.a_phi}; }
    bool zero() const { return a_theta == 0.0 && a_phi == 0.0; }
};

Tilt tilt_of(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec, const Vec& x);

// (theta, phi) of f*W / lambda for a given tilt.
struct Tilted {
    double theta, phi;
};
Tilted apply_tilt(const EdmFamily& fam, double theta, double phi, const Tilt& t);

struct TransformedParams {
    double theta_star, phi_star, theta_2star, phi_2star;
};

TransformedParams transform(const EdmFamily& fam, const LinkSpec& link, double theta, double phi,
                            const WeightSpec& spec, const Vec& x);

// log of A(theta_t)/phi_t - b(phi_t) - A(theta)/phi + b(phi)
double log_bias_adjustment(const EdmFamily& fam, double theta, double phi, const Tilted& t);
double bias_adjustment(const EdmFamily& fam, const LinkSpec& link, double theta, double phi,
                       const WeightSpec& spec, const Vec& x);

double log_weight(const EdmFamily& fam, const Tilt& t, double y);
double weight_eval(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec, double y, const Vec& x);

// Weight with a constant tilt parameter theta_t (first coefficient, the rest zero).
WeightSpec constant_weight(const LinkSpec& link, int P, double theta_tilde, double phi_tilde);

struct CalibrationInfo {
    double q_alpha = 0.0;
    double free_parameter = 0.0;  // theta_t for gamma, phi_t otherwise
    double fixed_theta_tilde = 0.0;
    double achieved_ratio = 1.0;
    std::size_t sample_size = 0;
};

// Ratio E[W | Y > q]/E[W] on a response sample (rows of xs align with ys).
double tail_weight_ratio(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec,
                         const std::vector<double>& ys, const Mat& xs, double q);

WeightSpec calibrate_from_sample(const EdmFamily& fam, const LinkSpec& link, const std::vector<double>& ys,
                                 const Mat& xs, double alpha, double delta, CalibrationInfo* info = nullptr);

// Monte-Carlo version of the tail-weight equation against a known model; x rows
// are resampled from x_sample. The response model may differ from the weight
// family (fitting a misspecified class); draws outside the weight family's
// support are discarded.
struct ResponseModel {
    FamilyId family;
    LinkId link;
    Vec beta;
    double phi;
};
std::vector<double> draw_responses(const ResponseModel& model, const Mat& x_sample, std::size_t count,
                                   std::uint64_t seed, Mat* xs_out);

WeightSpec calibrate_complete(const EdmFamily& fam, const LinkSpec& link, const Vec& beta, double phi,
                              const Mat& x_sample, double alpha, double delta, std::uint64_t seed,
                              std::size_t mc_size = 1000000, CalibrationInfo* info = nullptr);

WeightSpec calibrate_complete_for(const EdmFamily& fit_fam, const LinkSpec& fit_link, const ResponseModel& truth,
                                  const Mat& x_sample, double alpha, double delta, std::uint64_t seed,
                                  std::size_t mc_size = 1000000, CalibrationInfo* info = nullptr);

// Semi-analytic calibration on incomplete data at a fitted model.
double censored_tail_ratio(const EdmFamily& fam, const LinkSpec& link, const Vec& beta, double phi,
                           const std::vector<ObservationRecord>& records, const WeightSpec& spec, double q);
WeightSpec calibrate_censored(const EdmFamily& fam, const LinkSpec& link, const Vec& beta, double phi,
                              const std::vector<ObservationRecord>& records, double alpha, double delta,
                              CalibrationInfo* info = nullptr);

// Inverse distribution function (used for antithetic draws).
double quantile(const EdmFamily& fam, double theta, double phi, double u);

}  // namespace swle
