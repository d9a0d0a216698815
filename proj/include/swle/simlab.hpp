#pragma once

#include "swle/diagnostics.hpp"

#include <optional>

namespace swle {

enum class Generator { PlainGlm, ContaminatedLinear, VaryingDispersionGamma };

// Mixture component: Student-t with df degrees of freedom, rescaled to the
// given variance and centred on the linear predictor.
struct Contamination {
    double eps = 0.1;
    double df = 2.5;
    double variance = 0.25;
};

// Left-truncation and right-censoring points, each drawn uniformly from its list.
struct CensoringRule {
    std::vector<double> truncation_points{0.0, 0.5};
    std::vector<double> censoring_points{10.0, 20.0};
    int max_resamples = 10000;
};

struct SimDesign {
    Generator generator = Generator::PlainGlm;
    FamilyId family = FamilyId::Gamma;  // data-generating family
    LinkId link = LinkId::Log;
    FamilyId fit_family = FamilyId::Gamma;  // model being fitted
    LinkId fit_link = LinkId::Log;
    Vec beta = Vec::Zero(2);
    double phi = 1.0;
    int n = 2500;
    std::optional<Contamination> contamination;
    std::optional<Vec> dispersion_reg;  // phi_i = exp(x_i' alpha)
    std::optional<CensoringRule> censoring;
    std::uint64_t seed = 1;
};

// Paper-style designs: study 1 (plain GLM), 2 (contaminated linear), 3 (varying-dispersion
// censored Gamma; case 1 correct, case 2 misspecified).
SimDesign plain_design(FamilyId data_family, FamilyId fit_family, int n, std::uint64_t seed);
SimDesign contaminated_design(int n, std::uint64_t seed);
SimDesign varying_dispersion_design(int which_case, int n, std::uint64_t seed);

// Covariates: intercept and one standard normal column.
Mat draw_covariates(int n, Rng& rng);

// Replication r of the design (deterministic in (seed, r)).
std::vector<ObservationRecord> generate(const SimDesign& design, std::uint64_t replication = 0);

// Drops exact records outside the fitted family's support; returns the count dropped.
int restrict_to_support(const EdmFamily& fam, std::vector<ObservationRecord>& records);

// Complete records as GlmData when possible, records otherwise.
FitInput as_fit_input(const EdmFamily& fam, std::vector<ObservationRecord> records);

// delta grid used for K weight settings
std::vector<double> delta_grid(int K);

struct StudyGrid {
    HyperGrid grid;
    std::vector<double> deltas;
    std::vector<CalibrationInfo> info;
};

// One calibration against the design's known model (uncontaminated core, and
// constant dispersion exp(alpha_1) for the varying-dispersion study).
StudyGrid calibrate_study(const SimDesign& design, const std::vector<double>& deltas, double alpha = 0.99,
                          std::size_t mc_size = 1000000, std::uint64_t seed = 20240101);

struct ReplicationRecord {
    int replication = 0;
    bool ok = false;
    std::string error;
    int dropped = 0;
    std::vector<Vec> estimates;  // per k
    std::vector<Vec> se;         // per k, from the meta covariance diagonal blocks
    std::optional<WaldResult> meta;
    std::vector<std::vector<WaldResult>> individual;
};

struct StudyOptions {
    int B = 100;
    double level = 0.05;
    int jobs = 1;
    bool diagnostics = true;   // meta covariance and Wald statistics
    bool individual = true;
    double max_failure_rate = 0.10;
    FitOptions fit;
};

struct ReplicationSummary {
    int B = 0;
    int failures = 0;
    double level = 0.05;
    std::vector<WeightSpec> specs;
    std::vector<double> deltas;
    std::vector<Vec> mean;     // per k
    std::vector<Vec> sd;       // across replications
    std::vector<Vec> mean_se;  // average plug-in SE
    double meta_rate = 0.0;
    Mat individual_rates;  // K x K
    std::vector<ReplicationRecord> replications;
};

struct StudyFailure : ConvergenceError {
    using ConvergenceError::ConvergenceError;
};

ReplicationRecord run_replication(const SimDesign& design, const HyperGrid& grid, int r, const StudyOptions& opt);
ReplicationSummary run_study(const SimDesign& design, const StudyGrid& grid, const StudyOptions& opt);

nlohmann::json to_json(const SimDesign& d);
SimDesign design_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ReplicationSummary& s);
// One row per (k, statistic).
std::string summary_csv(const ReplicationSummary& s);

}  // namespace swle
