#include "swle/simlab.hpp"

#include <atomic>
#include <iomanip>
#include <sstream>
#include <thread>

namespace swle {

namespace {

Vec beta_1_half() {
    Vec b(2);
    b << 1.0, 0.5;
    return b;
}

LinkId natural_link(FamilyId f) { return f == FamilyId::Normal ? LinkId::Canonical : LinkId::Log; }

double default_phi(FamilyId f) {
    switch (f) {
        case FamilyId::Gamma: return 0.5;
        case FamilyId::Normal: return 0.25;
        default: return 0.1;
    }
}

}  // namespace

SimDesign plain_design(FamilyId data_family, FamilyId fit_family, int n, std::uint64_t seed) {
    SimDesign d;
    d.generator = Generator::PlainGlm;
    d.family = data_family;
    d.link = natural_link(data_family);
    d.fit_family = fit_family;
    d.fit_link = natural_link(fit_family);
    d.beta = beta_1_half();
    d.phi = default_phi(data_family);
    d.n = n;
    d.seed = seed;
    return d;
}

SimDesign contaminated_design(int n, std::uint64_t seed) {
    SimDesign d = plain_design(FamilyId::Normal, FamilyId::Normal, n, seed);
    d.generator = Generator::ContaminatedLinear;
    d.contamination = Contamination{};
    return d;
}

SimDesign varying_dispersion_design(int which_case, int n, std::uint64_t seed) {
    if (which_case != 1 && which_case != 2) throw DomainError("varying-dispersion case must be 1 or 2");
    SimDesign d = plain_design(FamilyId::Gamma, FamilyId::Gamma, n, seed);
    d.generator = Generator::VaryingDispersionGamma;
    Vec a(2);
    a << std::log(0.5), which_case == 1 ? 0.0 : 0.25;
    d.dispersion_reg = a;
    d.censoring = CensoringRule{};
    return d;
}

Mat draw_covariates(int n, Rng& rng) {
    Mat X(n, 2);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = rng.normal();
    }
    return X;
}

std::vector<ObservationRecord> generate(const SimDesign& design, std::uint64_t replication) {
    if (design.n < 1) throw DomainError("design needs n >= 1");
    if (design.contamination && !(design.contamination->eps >= 0 && design.contamination->eps < 1))
        throw DomainError("contamination probability must lie in [0, 1)");
    Rng rng(derive_seed(design.seed, replication));
    const EdmFamily fam(design.family);
    const LinkSpec link(design.family, design.link);
    Mat X = draw_covariates(design.n, rng);
    std::vector<ObservationRecord> out(design.n);
    const CensoringScheme full = CensoringScheme::complete(fam.support());
    for (int i = 0; i < design.n; ++i) {
        Vec x = X.row(i).transpose();
        const double eta = x.dot(design.beta);
        auto& r = out[i];
        r.x = x;
        r.exact = true;
        switch (design.generator) {
            case Generator::PlainGlm:
                r.scheme = full;
                r.y = sample(fam, link.xi(eta), design.phi, rng);
                break;
            case Generator::ContaminatedLinear: {
                r.scheme = CensoringScheme::complete({-kInf, kInf});
                const Contamination& c = *design.contamination;
                // the mixture draw comes first so both branches consume the stream alike
                bool outlier = rng.uniform() < c.eps;
                if (outlier) {
                    double scale = std::sqrt(c.variance * (c.df - 2) / c.df);
                    r.y = eta + scale * rng.student_t(c.df);
                } else {
                    r.y = eta + std::sqrt(design.phi) * rng.normal();
                }
                break;
            }
            case Generator::VaryingDispersionGamma: {
                const Vec& a = *design.dispersion_reg;
                const CensoringRule& cr = *design.censoring;
                const double phi_i = std::exp(x.dot(a));
                const double th = link.xi(eta);
                double T = cr.truncation_points[static_cast<std::size_t>(rng.uniform() * cr.truncation_points.size()) %
                                                cr.truncation_points.size()];
                double C = cr.censoring_points[static_cast<std::size_t>(rng.uniform() * cr.censoring_points.size()) %
                                               cr.censoring_points.size()];
                double y = 0.0;
                int tries = 0;
                do {
                    if (++tries > cr.max_resamples)
                        throw NumericalError("truncated draw exceeded the resample cap at row " + std::to_string(i));
                    y = sample(fam, th, phi_i, rng);
                } while (!(y > T));
                r.scheme = {{T, kInf}, {T, C}, {{C, kInf}}};
                if (y > C) {
                    r.exact = false;
                    r.censored_index = 0;
                } else {
                    r.y = y;
                }
                break;
            }
        }
    }
    return out;
}

int restrict_to_support(const EdmFamily& fam, std::vector<ObservationRecord>& records) {
    const Interval sup = fam.support();
    std::size_t before = records.size();
    std::erase_if(records, [&](const ObservationRecord& r) { return r.exact && !fam.in_support(r.y); });
    for (auto& r : records) {
        r.scheme.truncation = r.scheme.truncation.intersect(sup);
        r.scheme.uncensored = r.scheme.uncensored.intersect(sup);
        for (auto& c : r.scheme.censor_intervals) c = c.intersect(sup);
    }
    return static_cast<int>(before - records.size());
}

FitInput as_fit_input(const EdmFamily& fam, std::vector<ObservationRecord> records) {
    if (!records_complete(fam, records)) return records;
    GlmData d{Vec(records.size()), Mat(records.size(), records.at(0).x.size())};
    for (std::size_t i = 0; i < records.size(); ++i) {
        d.y(i) = records[i].y;
        d.X.row(i) = records[i].x.transpose();
    }
    return d;
}

std::vector<double> delta_grid(int K) {
    switch (K) {
        case 2: return {1.0, 0.001};
        case 3: return {1.0, 0.1, 0.001};
        case 5: return {1.0, 0.5, 0.1, 0.01, 0.001};
        default: throw DomainError("delta grids are defined for K = 2, 3 or 5");
    }
}

StudyGrid calibrate_study(const SimDesign& design, const std::vector<double>& deltas, double alpha,
                          std::size_t mc_size, std::uint64_t seed) {
    const EdmFamily fam(design.fit_family);
    const LinkSpec link(design.fit_family, design.fit_link);
    ResponseModel truth{design.family, design.link, design.beta, design.phi};
    if (design.dispersion_reg) truth.phi = std::exp((*design.dispersion_reg)(0));
    Rng rng(derive_seed(seed, 0xc0ffee));
    Mat xs = draw_covariates(20000, rng);
    std::vector<WeightSpec> specs;
    std::vector<CalibrationInfo> infos;
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        CalibrationInfo info;
        specs.push_back(calibrate_complete_for(fam, link, truth, xs, alpha, deltas[k], derive_seed(seed, k + 1),
                                               mc_size, &info));
        infos.push_back(info);
    }
    return {HyperGrid(specs), deltas, infos};
}

ReplicationRecord run_replication(const SimDesign& design, const HyperGrid& grid, int r, const StudyOptions& opt) {
    ReplicationRecord rec;
    rec.replication = r;
    const EdmFamily fam(design.fit_family);
    const LinkSpec link(design.fit_family, design.fit_link);
    try {
        auto records = generate(design, static_cast<std::uint64_t>(r));
        rec.dropped = restrict_to_support(fam, records);
        FitInput in = as_fit_input(fam, std::move(records));
        FitOptions fo = opt.fit;
        fo.compute_covariance = false;
        std::vector<FitResult> fits;
        for (int k = 0; k < grid.K(); ++k) {
            fits.push_back(fit_any(fam, link, grid[k], in, fo));
            fo.init = fits.back().params;
            rec.estimates.push_back(fits.back().params.packed());
        }
        if (opt.diagnostics && grid.K() >= 2) {
            const int n = input_size(in), q = static_cast<int>(rec.estimates[0].size());
            Mat S = meta_covariance(fam, link, fits[0].params, grid.specs(), in);
            for (int k = 0; k < grid.K(); ++k)
                rec.se.push_back((S.block(q * k, q * k, q, q).diagonal() / n).cwiseMax(0.0).cwiseSqrt());
            rec.meta = meta_wald(fits, S, n);
            if (opt.individual) {
                rec.individual.assign(grid.K(), std::vector<WaldResult>(grid.K()));
                for (int k = 0; k < grid.K(); ++k)
                    for (int l = 0; l < k; ++l)
                        rec.individual[k][l] = rec.individual[l][k] = individual_wald(k, l, fits, S, n);
            }
        }
        rec.ok = true;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    return rec;
}

ReplicationSummary run_study(const SimDesign& design, const StudyGrid& sg, const StudyOptions& opt) {
    if (opt.B < 1) throw DomainError("study needs B >= 1");
    ReplicationSummary s;
    s.B = opt.B;
    s.level = opt.level;
    s.specs = sg.grid.specs();
    s.deltas = sg.deltas;
    s.replications.resize(opt.B);
    const int jobs = std::max(1, opt.jobs);
    if (jobs == 1) {
        for (int r = 0; r < opt.B; ++r) s.replications[r] = run_replication(design, sg.grid, r, opt);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back([&] {
                for (int r; (r = next++) < opt.B;) s.replications[r] = run_replication(design, sg.grid, r, opt);
            });
        for (auto& t : pool) t.join();
    }
    const int K = sg.grid.K();
    int ok = 0, meta_rej = 0, meta_n = 0;
    s.individual_rates = Mat::Zero(K, K);
    Mat ind_n = Mat::Zero(K, K);
    std::vector<Vec> sum(K), sum2(K), sse(K);
    int se_n = 0;
    for (const auto& rec : s.replications) {
        if (!rec.ok) {
            ++s.failures;
            continue;
        }
        ++ok;
        for (int k = 0; k < K; ++k) {
            const Vec& e = rec.estimates[k];
            if (sum[k].size() == 0) {
                sum[k] = sum2[k] = sse[k] = Vec::Zero(e.size());
            }
            sum[k] += e;
            sum2[k] += e.cwiseProduct(e);
            if (!rec.se.empty()) sse[k] += rec.se[k];
        }
        if (!rec.se.empty()) ++se_n;
        if (rec.meta) {
            ++meta_n;
            meta_rej += rec.meta->p_value < opt.level;
        }
        for (int k = 0; k < K && !rec.individual.empty(); ++k)
            for (int l = 0; l < K; ++l)
                if (k != l) {
                    ind_n(k, l) += 1;
                    s.individual_rates(k, l) += rec.individual[k][l].p_value < opt.level;
                }
    }
    if (s.failures > opt.max_failure_rate * opt.B) {
        std::ostringstream os;
        os << s.failures << " of " << opt.B << " replications failed; first error: ";
        for (const auto& rec : s.replications)
            if (!rec.ok) { os << rec.error; break; }
        throw StudyFailure(os.str());
    }
    for (int k = 0; k < K; ++k) {
        Vec m = sum[k] / ok;
        s.mean.push_back(m);
        Vec var = (sum2[k] / ok - m.cwiseProduct(m)) * (ok / std::max(1.0, ok - 1.0));
        s.sd.push_back(var.cwiseMax(0.0).cwiseSqrt());
        s.mean_se.push_back(se_n ? Vec(sse[k] / se_n) : Vec());
    }
    s.meta_rate = meta_n ? static_cast<double>(meta_rej) / meta_n : 0.0;
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < K; ++l)
            if (ind_n(k, l) > 0) s.individual_rates(k, l) /= ind_n(k, l);
    return s;
}

namespace {

std::string family_key(FamilyId f) { return EdmFamily(f).name(); }
std::string link_key(LinkId l) { return l == LinkId::Canonical ? "canonical" : "log"; }
std::string generator_key(Generator g) {
    switch (g) {
        case Generator::PlainGlm: return "plain_glm";
        case Generator::ContaminatedLinear: return "contaminated_linear";
        default: return "varying_dispersion_gamma";
    }
}
std::vector<double> to_vec(const Vec& v) { return {v.data(), v.data() + v.size()}; }
Vec from_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

nlohmann::json to_json(const SimDesign& d) {
    nlohmann::json j{{"generator", generator_key(d.generator)},
                     {"family", family_key(d.family)},
                     {"link", link_key(d.link)},
                     {"fit_family", family_key(d.fit_family)},
                     {"fit_link", link_key(d.fit_link)},
                     {"beta", to_vec(d.beta)},
                     {"phi", d.phi},
                     {"n", d.n},
                     {"seed", d.seed}};
    if (d.contamination)
        j["contamination"] = {{"eps", d.contamination->eps}, {"df", d.contamination->df},
                              {"variance", d.contamination->variance}};
    if (d.dispersion_reg) j["dispersion_reg"] = to_vec(*d.dispersion_reg);
    if (d.censoring)
        j["censoring"] = {{"truncation_points", d.censoring->truncation_points},
                          {"censoring_points", d.censoring->censoring_points},
                          {"max_resamples", d.censoring->max_resamples}};
    return j;
}

SimDesign design_from_json(const nlohmann::json& j) {
    SimDesign d;
    // shorthand: {"study": "sim1"|"sim2"|"sim3", ...}
    if (j.contains("study")) {
        std::string s = j.at("study");
        int n = j.value("n", 0);
        std::uint64_t seed = j.value("seed", std::uint64_t{1});
        if (s == "sim1") {
            d = plain_design(parse_family(j.value("family", "gamma")),
                             parse_family(j.value("fit_family", j.value("family", "gamma"))), n ? n : 2500, seed);
        } else if (s == "sim2") {
            d = contaminated_design(n ? n : 2500, seed);
        } else if (s == "sim3") {
            d = varying_dispersion_design(j.value("case", 1), n ? n : 5000, seed);
        } else {
            throw DomainError("unknown study '" + s + "'");
        }
        return d;
    }
    std::string g = j.at("generator");
    if (g == "plain_glm") d.generator = Generator::PlainGlm;
    else if (g == "contaminated_linear") d.generator = Generator::ContaminatedLinear;
    else if (g == "varying_dispersion_gamma") d.generator = Generator::VaryingDispersionGamma;
    else throw DomainError("unknown generator '" + g + "'");
    d.family = parse_family(j.at("family"));
    d.link = parse_link(j.value("link", link_key(natural_link(d.family))));
    d.fit_family = parse_family(j.value("fit_family", family_key(d.family)));
    d.fit_link = parse_link(j.value("fit_link", link_key(natural_link(d.fit_family))));
    d.beta = from_vec(j.at("beta").get<std::vector<double>>());
    d.phi = j.at("phi");
    d.n = j.at("n");
    d.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("contamination")) {
        const auto& c = j["contamination"];
        d.contamination = Contamination{c.value("eps", 0.1), c.value("df", 2.5), c.value("variance", 0.25)};
    } else if (d.generator == Generator::ContaminatedLinear) {
        d.contamination = Contamination{};
    }
    if (j.contains("dispersion_reg")) d.dispersion_reg = from_vec(j["dispersion_reg"].get<std::vector<double>>());
    if (j.contains("censoring")) {
        const auto& c = j["censoring"];
        CensoringRule r;
        r.truncation_points = c.value("truncation_points", r.truncation_points);
        r.censoring_points = c.value("censoring_points", r.censoring_points);
        r.max_resamples = c.value("max_resamples", r.max_resamples);
        d.censoring = r;
    }
    if (d.generator == Generator::VaryingDispersionGamma) {
        if (d.family != FamilyId::Gamma) throw DomainError("varying-dispersion generator requires the gamma family");
        if (!d.dispersion_reg) throw DomainError("varying-dispersion generator needs dispersion_reg");
        if (!d.censoring) d.censoring = CensoringRule{};
    }
    if (d.n < 1) throw DomainError("design needs n >= 1");
    return d;
}

nlohmann::json to_json(const ReplicationSummary& s) {
    nlohmann::json j;
    j["B"] = s.B;
    j["failures"] = s.failures;
    j["level"] = s.level;
    j["deltas"] = s.deltas;
    for (const auto& sp : s.specs) j["specs"].push_back(to_json(sp));
    for (std::size_t k = 0; k < s.mean.size(); ++k) {
        nlohmann::json e{{"k", k + 1}, {"mean", to_vec(s.mean[k])}, {"sd", to_vec(s.sd[k])}};
        if (s.mean_se[k].size()) e["mean_se"] = to_vec(s.mean_se[k]);
        j["per_k"].push_back(e);
    }
    j["meta_rejection_rate"] = s.meta_rate;
    nlohmann::json rates = nlohmann::json::array();
    for (int k = 0; k < s.individual_rates.rows(); ++k) rates.push_back(to_vec(s.individual_rates.row(k).transpose()));
    j["individual_rejection_rates"] = rates;
    for (const auto& r : s.replications) {
        nlohmann::json e{{"replication", r.replication}, {"ok", r.ok}, {"dropped", r.dropped}};
        if (!r.ok) e["error"] = r.error;
        for (const auto& v : r.estimates) e["estimates"].push_back(to_vec(v));
        if (r.meta) e["meta"] = {{"statistic", r.meta->value}, {"df", r.meta->df}, {"p_value", r.meta->p_value}};
        j["replications"].push_back(e);
    }
    return j;
}

std::string summary_csv(const ReplicationSummary& s) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "k,delta,statistic,parameter,value\n";
    for (std::size_t k = 0; k < s.mean.size(); ++k) {
        double d = k < s.deltas.size() ? s.deltas[k] : 0.0;
        for (int p = 0; p < s.mean[k].size(); ++p) {
            os << k + 1 << ',' << d << ",mean," << p + 1 << ',' << s.mean[k](p) << '\n';
            os << k + 1 << ',' << d << ",sd," << p + 1 << ',' << s.sd[k](p) << '\n';
            if (s.mean_se[k].size()) os << k + 1 << ',' << d << ",mean_se," << p + 1 << ',' << s.mean_se[k](p) << '\n';
        }
    }
    os << ",,meta_rejection_rate,," << s.meta_rate << '\n';
    for (int k = 0; k < s.individual_rates.rows(); ++k)
        for (int l = k + 1; l < s.individual_rates.cols(); ++l)
            os << k + 1 << ',' << l + 1 << ",individual_rejection_rate,," << s.individual_rates(k, l) << '\n';
    os << ",,failures,," << s.failures << '\n';
    return os.str();
}

}  // namespace swle
