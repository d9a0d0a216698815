#pragma once

#include "swle/swle_complete.hpp"

namespace swle {

// Truncated moment integrals over a region at (theta, phi), with
//   u1 = y - A'(theta),  u2 = theta*y - A(theta) + g(y) - phi^2 b'(phi):
// F = int f, d_theta = int u1 f, d_phi = int u2 f, and the three second moments.
struct DTerms {
    double F = 0.0, d_theta = 0.0, d_phi = 0.0, d_tt = 0.0, d_tp = 0.0, d_pp = 0.0;
};

DTerms d_terms(const EdmFamily& fam, double theta, double phi, const Interval& region);

// f(y)/F(T) on T, zero elsewhere.
double truncated_density(const EdmFamily& fam, double theta, double phi, const Interval& truncation, double y);

// Throws DomainError describing the first bad record.
void validate_records(const EdmFamily& fam, const std::vector<ObservationRecord>& records, int P);

// True when every record is exact and observed on the whole support.
bool records_complete(const EdmFamily& fam, const std::vector<ObservationRecord>& records);

Vec record_score(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                 const ObservationRecord& rec);
Vec extended_score(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                   const std::vector<ObservationRecord>& records);
Mat extended_score_contributions(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p,
                                 const WeightSpec& spec, const std::vector<ObservationRecord>& records);

// Damped Newton on the extended score with a finite-difference Jacobian.
FitResult fit_censtrun(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec,
                       const std::vector<ObservationRecord>& records, const FitOptions& opt = {});

// E[s_k s_l'] for one record under the model at p, where s_k is the extended
// score contribution under spec k. With spec_l = Mle this is minus the
// expected score Jacobian, so one routine yields every sandwich piece.
Mat cross_moment(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec_k,
                 const WeightSpec& spec_l, const ObservationRecord& rec);

Mat censtrun_gamma_matrix(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                          const std::vector<ObservationRecord>& records);
Mat censtrun_lambda_matrix(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p,
                           const WeightSpec& spec_k, const WeightSpec& spec_l,
                           const std::vector<ObservationRecord>& records);

Mat censtrun_covariance(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                        const std::vector<ObservationRecord>& records, LambdaMode mode = LambdaMode::Analytic);
Mat censtrun_covariance(const EdmFamily& fam, const LinkSpec& link, const FitResult& fit,
                        const std::vector<ObservationRecord>& records, LambdaMode mode = LambdaMode::Analytic);

// Complete-data records from a response vector and design.
std::vector<ObservationRecord> complete_records(const EdmFamily& fam, const GlmData& data);

}  // namespace swle
