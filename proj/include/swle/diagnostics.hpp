#pragma once

#include "swle/censtrun.hpp"

#include <nlohmann/json.hpp>

#include <variant>

namespace swle {

// Ordered weight settings; spec 1 is conventionally the Mle mode.
class HyperGrid {
public:
    explicit HyperGrid(std::vector<WeightSpec> specs);
    int K() const { return static_cast<int>(specs_.size()); }
    const WeightSpec& operator[](int k) const { return specs_.at(k); }
    const std::vector<WeightSpec>& specs() const { return specs_; }

private:
    std::vector<WeightSpec> specs_;
};

// Either complete (y, X) data or general incomplete records.
using FitInput = std::variant<GlmData, std::vector<ObservationRecord>>;

int input_size(const FitInput& in);
FitResult fit_any(const EdmFamily& fam, const LinkSpec& link, const WeightSpec& spec, const FitInput& in,
                  const FitOptions& opt = {});
Mat covariance_any(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p, const WeightSpec& spec,
                   const FitInput& in);

// Asymptotic covariance of sqrt(n)(Psi^(1), ..., Psi^(K)) at p: blocks
// G_k^{-1} L_kl G_l^{-T}, each (P+1)x(P+1). Accepts repeated specs.
Mat meta_covariance(const EdmFamily& fam, const LinkSpec& link, const ParamVector& p,
                    const std::vector<WeightSpec>& specs, const FitInput& in);

struct WaldResult {
    double value = 0.0;
    int df = 0;
    double p_value = 1.0;
};

// n (C s)' (C S C')^{-1} (C s) for a stacked estimate s; throws when C S C' is
// ill-conditioned.
WaldResult wald_contrast(const Mat& C, const Vec& stacked, const Mat& sigma_meta, int n,
                         double max_condition = 1e12);

Vec stack_estimates(const std::vector<FitResult>& fits);

enum class ContrastBasis { Consecutive, AgainstFirst };

WaldResult meta_wald(const std::vector<FitResult>& fits, const Mat& sigma_meta, int n,
                     ContrastBasis basis = ContrastBasis::Consecutive);
WaldResult individual_wald(int k, int l, const std::vector<FitResult>& fits, const Mat& sigma_meta, int n);
// p is a zero-based parameter index (beta components, then phi)
WaldResult param_meta_wald(int p, const std::vector<FitResult>& fits, const Mat& sigma_meta, int n);
WaldResult param_individual_wald(int p, int k, int l, const std::vector<FitResult>& fits, const Mat& sigma_meta,
                                 int n);

// (P+1) x K matrix of (Psi_p^(k) - Psi_p^(k0)) / se_p
Mat residuals(const std::vector<FitResult>& fits, int k0, const Vec& se);

struct MetaWaldReport {
    std::vector<FitResult> fits;
    Mat sigma_meta;
    int n = 0;
    int k0 = 0;
    WaldResult meta;
    std::vector<std::vector<WaldResult>> individual;  // [k][l], filled for k != l
    std::vector<WaldResult> param_meta;
    std::vector<std::vector<std::vector<WaldResult>>> param_individual;  // [p][k][l]
    Mat residual_matrix;
    std::vector<std::string> warnings;
};

struct DiagnoseOptions {
    int k0 = 0;
    FitOptions fit;
    bool individual = true;
    bool per_parameter = true;
};

MetaWaldReport diagnose(const EdmFamily& fam, const LinkSpec& link, const HyperGrid& grid, const FitInput& in,
                        const DiagnoseOptions& opt = {});

nlohmann::json to_json(const WeightSpec& s);
nlohmann::json to_json(const FitResult& f);
nlohmann::json to_json(const MetaWaldReport& r);
// Statistics below the diagonal, p-values above, three decimals.
std::string triangular_table(const std::vector<std::vector<WaldResult>>& m);
std::string text_report(const MetaWaldReport& r);

}  // namespace swle
