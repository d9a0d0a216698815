#pragma once

#include "swle/weighting.hpp"

#include <optional>
#include <vector>

namespace swle {

struct GlmData {
    Vec y;
    Mat X;
    int n() const { return static_cast<int>(y.size()); }
    int P() const { return static_cast<int>(X.cols()); }
};

struct ParamVector {
    Vec beta;
    double phi = 1.0;

    Vec packed() const;
    static ParamVector unpack(const Vec& v);
};

struct FitOptions {
    std::optional<ParamVector> init;
    double tol = 1e-6;        // on the infinity norm of the summed score
    double param_tol = 1e-6;  // on the largest parameter change between sweeps
    int max_iter = 500;
    bool compute_covariance = true;
};

struct FitResult {
    ParamVector params;
    Mat covariance;  // (P+1)x(P+1), already divided by n
    int iterations = 0;
    double final_score_norm = 0.0;
    bool converged = false;
    WeightSpec spec;
    std::vector<double> trace;  // score norm after each sweep
};

struct FitFailure : ConvergenceError {
    FitFailure(const std::string& msg, std::vector<double> t) : ConvergenceError(msg), trace(std::move(t)) {}
    std::vector<double> trace;
};

// theta_i = xi(x_i' beta); throws if any row leaves the valid region.
Vec linear_thetas(const EdmFamily& fam, const LinkSpec& link, const Mat& X, const ParamVector& p);

Vec score(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
          const GlmData& data);
// One row per observation.
Mat score_contributions(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                        const GlmData& data);

// sum_i W_i log f*(y_i); its gradient is the score.
double weighted_loglik(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                       const GlmData& data);

// Unweighted IRLS for beta and the Pearson moment estimate for phi.
ParamVector mle_start(const EdmFamily& fam, const LinkSpec& link, const GlmData& data);

FitResult fit(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec, const GlmData& data,
              const FitOptions& opt = {});

// Per-observation element blocks of the sandwich pieces, laid out as
// [[Wtt x x', Wtp x], [Wtp x', Wpp]] (same pattern for the V blocks).
Mat gamma_block(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                const Vec& x);
Mat lambda_block(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec_k,
                 const WeightSpec& spec_l, const Vec& x);

// Sample averages of the blocks.
Mat gamma_matrix(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                 const Mat& X);
Mat lambda_matrix(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec_k,
                  const WeightSpec& spec_l, const Mat& X);

enum class LambdaMode { Analytic, Empirical };

// (1/n) G^{-1} L G^{-T}
Mat sandwich_covariance(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                        const GlmData& data, LambdaMode mode = LambdaMode::Analytic);
Mat sandwich_covariance(const EdmFamily& fam, const LinkSpec& link, const FitResult& fit, const GlmData& data,
                        LambdaMode mode = LambdaMode::Analytic);

// Inverse with a condition-number guard; names the matrix in the error.
Mat checked_inverse(const Mat& M, const std::string& what, double max_condition = 1e12);

}  // namespace swle
