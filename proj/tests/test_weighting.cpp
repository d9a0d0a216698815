#include "oracles.hpp"
#include "swle/censtrun.hpp"
#include "swle/simlab.hpp"
#include "swle/weighting.hpp"

#include <doctest.h>

using namespace swle;

namespace {
const EdmFamily kGamma(FamilyId::Gamma), kNormal(FamilyId::Normal), kIG(FamilyId::InverseGaussian);
const LinkSpec kGammaCan(FamilyId::Gamma, LinkId::Canonical), kNormalCan(FamilyId::Normal, LinkId::Canonical),
    kIGCan(FamilyId::InverseGaussian, LinkId::Canonical);
Vec one() { return Vec::Ones(1); }

const EdmFamily& fam_of(FamilyId f) { return f == FamilyId::Gamma ? kGamma : f == FamilyId::Normal ? kNormal : kIG; }
const LinkSpec& can_of(FamilyId f) {
    return f == FamilyId::Gamma ? kGammaCan : f == FamilyId::Normal ? kNormalCan : kIGCan;
}

// integral of f*W over the support by the independent quadrature
double lambda_by_quadrature(FamilyId f, double th, double ph, const WeightSpec& s) {
    const EdmFamily& fam = fam_of(f);
    Interval sup = fam.support();
    auto integrand = [&](double y) { return oracle::pdf(f, th, ph, y) * weight_eval(fam, can_of(f), s, y, one()); };
    return oracle::integrate_split(integrand, sup.lo, sup.hi, {oracle::mean_of(f, th)});
}
}  // namespace

TEST_CASE("transform examples") {
    auto t = transform(kGamma, kGammaCan, -1.0, 0.5, constant_weight(kGammaCan, 1, -0.5, 1.0), one());
    CHECK(t.theta_star == doctest::Approx(-1.25).epsilon(1e-14));
    CHECK(t.phi_star == doctest::Approx(0.5).epsilon(1e-14));
    // the Gamma shift rule theta* = theta + theta_t * phi
    CHECK(t.theta_star == doctest::Approx(-1.0 + (-0.5) * 0.5));
    CHECK(t.phi_2star == doctest::Approx(0.5));
    CHECK(t.theta_2star == doctest::Approx((-2.0 - 1.0) * 0.5));

    t = transform(kNormal, kNormalCan, 0.0, 0.5, constant_weight(kNormalCan, 1, 0.0, 2.0), one());
    CHECK(t.theta_star == doctest::Approx(0.0));
    CHECK(t.phi_star == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(t.phi_2star == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

    t = transform(kIG, kIGCan, -0.7, 0.3, WeightSpec::mle(), one());
    CHECK(t.theta_star == -0.7);
    CHECK(t.phi_star == 0.3);
    CHECK(t.theta_2star == -0.7);
    CHECK(t.phi_2star == 0.3);
}

TEST_CASE("transform rejects tilts that leave the valid region") {
    // positive theta_t pushes theta* above zero for the Gamma
    try {
        transform(kGamma, kGammaCan, -0.1, 1.0, constant_weight(kGammaCan, 1, 0.5, 1.0), one());
        FAIL("expected a calibration error");
    } catch (const CalibrationError& e) {
        CHECK(std::string(e.what()).find("theta < 0") != std::string::npos);
    }
    // phi_t < 0 is refused at construction
    CHECK_THROWS_AS(WeightSpec::weighted(one(), -1.0), DomainError);
}

TEST_CASE("bias adjustment equals the integral of f*W") {
    CHECK(bias_adjustment(kGamma, kGammaCan, -1.0, 0.5, WeightSpec::mle(), one()) == 1.0);
    auto sg = constant_weight(kGammaCan, 1, -0.5, 1.0);
    CHECK(bias_adjustment(kGamma, kGammaCan, -1.0, 0.5, sg, one()) ==
          doctest::Approx(lambda_by_quadrature(FamilyId::Gamma, -1.0, 0.5, sg)).epsilon(1e-8));
    auto sn = constant_weight(kNormalCan, 1, 0.0, 2.0);
    CHECK(bias_adjustment(kNormal, kNormalCan, 0.0, 0.5, sn, one()) ==
          doctest::Approx(lambda_by_quadrature(FamilyId::Normal, 0.0, 0.5, sn)).epsilon(1e-8));
    auto si = constant_weight(kIGCan, 1, -2.0, 1.0);
    CHECK(bias_adjustment(kIG, kIGCan, -0.5, 1.0, si, one()) ==
          doctest::Approx(lambda_by_quadrature(FamilyId::InverseGaussian, -0.5, 1.0, si)).epsilon(1e-8));
    // overflow is reported, not returned as inf
    CHECK_THROWS_AS(bias_adjustment(kNormal, kNormalCan, 0.0, 1.0, constant_weight(kNormalCan, 1, 2000.0, 1.0), one()),
                    NumericalError);
}

TEST_CASE("weight examples") {
    CHECK(weight_eval(kGamma, kGammaCan, WeightSpec::mle(), 123.0, one()) == 1.0);
    CHECK(weight_eval(kGamma, kGammaCan, constant_weight(kGammaCan, 1, -0.5, 1.0), 2.0, one()) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(weight_eval(kIG, kIGCan, constant_weight(kIGCan, 1, -2.0, 1.0), 1.0, one()) ==
          doctest::Approx(std::exp(-2.5)).epsilon(1e-15));
    CHECK(weight_eval(kNormal, kNormalCan, constant_weight(kNormalCan, 1, 1.0, 0.5), 3.0, one()) ==
          doctest::Approx(std::exp(1.0 * 3 / 0.5 - 9.0 / (2 * 0.5))).epsilon(1e-15));
}

TEST_CASE("transformed density integrates to one") {
    struct Case {
        FamilyId f;
        double th, ph, tt, pt;
    };
    for (Case c : {Case{FamilyId::Gamma, -1, 0.5, -0.5, 1.0}, Case{FamilyId::Gamma, -0.3, 1.2, -0.1, 0.8},
                   Case{FamilyId::Normal, 0, 0.5, 0, 2}, Case{FamilyId::Normal, 1.5, 0.2, 1.0, 0.4},
                   Case{FamilyId::InverseGaussian, -0.5, 1, -2, 1}, Case{FamilyId::InverseGaussian, -0.1, 0.2, -0.05, 0.3}}) {
        const EdmFamily& fam = fam_of(c.f);
        auto s = constant_weight(can_of(c.f), 1, c.tt, c.pt);
        double lam = bias_adjustment(fam, can_of(c.f), c.th, c.ph, s, one());
        Interval sup = fam.support();
        double tot = oracle::integrate_split(
            [&](double y) { return oracle::pdf(c.f, c.th, c.ph, y) * weight_eval(fam, can_of(c.f), s, y, one()) / lam; },
            sup.lo, sup.hi, {oracle::mean_of(c.f, c.th)});
        INFO(fam.name() << " theta=" << c.th);
        CHECK(tot == doctest::Approx(1.0).epsilon(1e-8));
        // and it is the family density at the transformed parameters
        auto t = transform(fam, can_of(c.f), c.th, c.ph, s, one());
        for (double y : {0.3, 1.1, 2.5})
            CHECK(density(fam, t.theta_star, t.phi_star, y) ==
                  doctest::Approx(oracle::pdf(c.f, c.th, c.ph, y) * weight_eval(fam, can_of(c.f), s, y, one()) / lam)
                      .epsilon(1e-11));
    }
}

TEST_CASE("canonical link keeps theta* linear in x") {
    Vec beta(3), bt(3), x(3);
    beta << 0.4, -0.2, 0.1;
    bt << 0.1, 0.3, -0.2;
    x << 1.0, 0.7, -1.3;
    const double phi = 0.6, pt = 1.7;
    auto s = WeightSpec::weighted(bt, pt);
    auto t = transform(kNormal, kNormalCan, x.dot(beta), phi, s, x);
    double ps = 1.0 / (1 / phi + 1 / pt);
    Vec bstar = (beta / phi + bt / pt) * ps;
    CHECK(std::fabs(t.phi_star - ps) < 1e-12);
    CHECK(std::fabs(t.theta_star - x.dot(bstar)) < 1e-12);
}

TEST_CASE("weights decay towards the support endpoints") {
    // upper tails for every family and both tails where the weight vanishes there
    auto decays = [](const std::function<double(double)>& h, std::vector<double> ys) {
        double prev = kInf;
        bool mono = true;
        for (double y : ys) {
            double v = h(y);
            if (v > prev) mono = false;
            prev = v;
        }
        return std::pair{mono, prev};
    };
    std::vector<double> up, down;
    for (int k = 1; k <= 12; ++k) up.push_back(10.0 * std::pow(2.0, k + 2));
    for (int k = 1; k <= 40; ++k) down.push_back(std::pow(0.5, k + 2));

    auto gw = constant_weight(kGammaCan, 1, -0.15, 1.0);
    auto nw = constant_weight(kNormalCan, 1, 1.0, 0.66);
    auto iw = constant_weight(kIGCan, 1, -0.05, 0.26);
    auto gam = [&](double y) { return weight_eval(kGamma, kGammaCan, gw, y, one()); };
    auto nor = [&](double y) { return weight_eval(kNormal, kNormalCan, nw, y, one()); };
    auto ig = [&](double y) { return weight_eval(kIG, kIGCan, iw, y, one()); };

    for (auto [h, fam] : {std::pair<std::function<double(double)>, const EdmFamily*>{gam, &kGamma},
                          std::pair<std::function<double(double)>, const EdmFamily*>{ig, &kIG}}) {
        auto [m1, v1] = decays([&](double y) { return h(y) * y; }, up);
        auto [m2, v2] = decays([&](double y) { return h(y) * std::fabs(fam->g(y)); }, up);
        CHECK(m1);
        CHECK(v1 < 1e-12);
        CHECK(m2);
        CHECK(v2 < 1e-12);
    }
    auto [mn, vn] = decays([&](double y) { return nor(y) * std::fabs(y); }, up);
    CHECK(mn);
    CHECK(vn < 1e-12);
    auto [mn2, vn2] = decays([&](double y) { return nor(-y) * 0.5 * y * y; }, up);
    CHECK(mn2);
    CHECK(vn2 < 1e-12);
    auto [mi, vi] = decays([&](double y) { return ig(y) * 0.5 / y; }, down);
    CHECK(mi);
    CHECK(vi < 1e-12);
    // the Gamma weight with phi_t = 1 is flat at zero, so W |log y| grows there
    CHECK(gam(1e-12) * std::fabs(std::log(1e-12)) > 20.0);
}

TEST_CASE("quantile inverts cdf") {
    for (auto [f, th, ph] : {std::tuple{FamilyId::Gamma, -0.5, 0.7}, std::tuple{FamilyId::Normal, 1.0, 0.3},
                             std::tuple{FamilyId::InverseGaussian, -0.2, 0.4}}) {
        const EdmFamily& fam = fam_of(f);
        for (double u : {1e-6, 0.01, 0.5, 0.99, 1 - 1e-6}) {
            double q = quantile(fam, th, ph, u);
            CHECK(cdf(fam, th, ph, {fam.support().lo, q}) == doctest::Approx(u).epsilon(1e-9));
        }
    }
}

TEST_CASE("calibration returns the Mle mode at delta = 1") {
    Mat xs = Mat::Ones(10, 2);
    Vec b(2);
    b << 1, 0.5;
    CHECK(calibrate_complete(kGamma, LinkSpec(FamilyId::Gamma, LinkId::Log), b, 0.5, xs, 0.99, 1.0, 1).is_mle());
    CHECK_THROWS_AS(calibrate_complete(kGamma, LinkSpec(FamilyId::Gamma, LinkId::Log), b, 0.5, xs, 0.99, 0.0, 1),
                    DomainError);
    CHECK_THROWS_AS(calibrate_complete(kGamma, LinkSpec(FamilyId::Gamma, LinkId::Log), b, 0.5, xs, 1.2, 0.5, 1),
                    DomainError);
}

namespace {
// Monte-Carlo oracle for the complete-data tail equation: plain draws with a
// separate generator, quantile by sorting, root by bisection.
struct McSample {
    std::vector<double> y, mu;
    double q, mean, var;
};
McSample mc_sample(FamilyId f, double phi, int n, unsigned seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> z;
    McSample s;
    for (int i = 0; i < n; ++i) {
        double mu = std::exp(1.0 + 0.5 * z(eng));
        double y;
        if (f == FamilyId::Gamma) {
            y = std::gamma_distribution<double>(1 / phi, mu * phi)(eng);
        } else {
            mu = 1.0 + 0.5 * z(eng);  // identity mean for the Normal model
            y = mu + std::sqrt(phi) * z(eng);
        }
        s.y.push_back(y);
        s.mu.push_back(mu);
    }
    std::vector<double> sorted = s.y;
    std::sort(sorted.begin(), sorted.end());
    double h = (n - 1) * 0.99;
    int lo = int(h);
    s.q = sorted[lo] + (h - lo) * (sorted[lo + 1] - sorted[lo]);
    s.mean = std::accumulate(s.y.begin(), s.y.end(), 0.0) / n;
    double v = 0;
    for (double y : s.y) v += (y - s.mean) * (y - s.mean);
    s.var = v / (n - 1);
    return s;
}
double mc_ratio(const McSample& s, const std::function<double(double)>& logw) {
    double all = 0, tail = 0, nt = 0;
    for (double y : s.y) {
        double w = std::exp(logw(y));
        all += w;
        if (y > s.q) { tail += w; nt += 1; }
    }
    return (tail / nt) / (all / s.y.size());
}
}  // namespace

TEST_CASE("Gamma calibration at delta = 0.1 against the Monte-Carlo oracle") {
    // frozen from the oracle below (10^6 draws, seed 5): theta_t = -0.1522 to MC accuracy
    const double golden = -0.1522;
    auto s = mc_sample(FamilyId::Gamma, 0.5, 1000000, 5);
    double oracle_tt =
        oracle::bisect([&](double t) { return mc_ratio(s, [&](double y) { return t * y; }) - 0.1; }, -2.0, -1e-4);
    CHECK(oracle_tt == doctest::Approx(golden).epsilon(0.02));

    auto design = plain_design(FamilyId::Gamma, FamilyId::Gamma, 2500, 1);
    auto g = calibrate_study(design, {1.0, 0.1});
    double lib = g.info[1].free_parameter;
    CHECK(g.grid[1].phi_tilde == 1.0);
    CHECK(lib == doctest::Approx(oracle_tt).epsilon(0.02));
    CHECK(g.info[1].achieved_ratio == doctest::Approx(0.1).epsilon(1e-3));
    // the printed positive 6.53 matches the scale -1/theta_t of this weight
    CHECK(-1.0 / lib == doctest::Approx(6.53).epsilon(0.02));
}

TEST_CASE("Normal calibration at delta = 0.5 against the Monte-Carlo oracle") {
    // frozen golden value of phi_t for the Sim-1 Normal model (theta_t fixed at the sample mean)
    const double golden = 2.225;
    auto s = mc_sample(FamilyId::Normal, 0.25, 1000000, 9);
    double oracle_pt = std::exp(oracle::bisect(
        [&](double lp) {
            double pt = std::exp(lp);
            return mc_ratio(s, [&](double y) { return (s.mean * y - 0.5 * y * y) / pt; }) - 0.5;
        },
        -5, 5));
    CHECK(oracle_pt == doctest::Approx(golden).epsilon(0.03));

    auto design = plain_design(FamilyId::Normal, FamilyId::Normal, 2500, 1);
    auto g = calibrate_study(design, {1.0, 0.5});
    CHECK(g.info[1].free_parameter == doctest::Approx(oracle_pt).epsilon(0.03));
    CHECK(g.info[1].achieved_ratio == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("censored calibration on complete records") {
    // The plug-in equation averages the per-record conditional tail ratio, while the
    // Monte-Carlo calibrator pools the tail; on the same model they share the
    // quantile but not the root.
    Rng rng(17);
    const int n = 100000;
    Mat X = draw_covariates(n, rng);
    Vec beta(2);
    beta << 1.0, 0.5;
    LinkSpec link(FamilyId::Gamma, LinkId::Log);
    std::vector<ObservationRecord> recs(n);
    for (int i = 0; i < n; ++i) {
        recs[i].x = X.row(i).transpose();
        recs[i].scheme = CensoringScheme::complete(kGamma.support());
        recs[i].y = sample(kGamma, link.xi(recs[i].x.dot(beta)), 0.5, rng);
    }
    CHECK(calibrate_censored(kGamma, link, beta, 0.5, recs, 0.99, 1.0).is_mle());
    CalibrationInfo ic, im;
    calibrate_censored(kGamma, link, beta, 0.5, recs, 0.99, 0.1, &ic);
    calibrate_complete(kGamma, link, beta, 0.5, X, 0.99, 0.1, 3, 1000000, &im);
    CHECK(ic.q_alpha == doctest::Approx(im.q_alpha).epsilon(0.01));
    CHECK(ic.free_parameter < im.free_parameter);
    CHECK(ic.achieved_ratio == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("censored calibration solves the plug-in tail equation") {
    auto design = varying_dispersion_design(1, 600, 4);
    auto recs = generate(design, 0);
    LinkSpec link(FamilyId::Gamma, LinkId::Log);
    CalibrationInfo info;
    WeightSpec s = calibrate_censored(kGamma, link, design.beta, 0.5, recs, 0.99, 0.1, &info);
    // independent evaluation: integrals of f*W and f over each record's regions
    double num = 0, den = 0;
    int nn = 0;
    for (const auto& r : recs) {
        double th = link.xi(r.x.dot(design.beta));
        double m = -1 / th;
        auto fw = [&](double y) { return oracle::gamma_pdf(y, 2.0, -th * 2.0) * weight_eval(kGamma, link, s, y, r.x); };
        auto f = [&](double y) { return oracle::gamma_pdf(y, 2.0, -th * 2.0); };
        double T = r.scheme.truncation.lo;
        den += oracle::integrate_split(fw, T, kInf, {m}) / oracle::integrate_split(f, T, kInf, {m});
        double lo = std::max(T, info.q_alpha);
        num += oracle::integrate_split(fw, lo, kInf, {m}) / oracle::integrate_split(f, lo, kInf, {m});
        ++nn;
    }
    double ratio = (num / nn) / (den / recs.size());
    CHECK(ratio == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(info.free_parameter < 0);
}

TEST_CASE("sample-based calibration reports a bracketing failure") {
    // a constant response gives no tail, so the equation cannot be bracketed
    std::vector<double> ys(50, 1.0);
    Mat xs = Mat::Ones(50, 1);
    CHECK_THROWS_AS(calibrate_from_sample(kGamma, kGammaCan, ys, xs, 0.5, 0.1), CalibrationError);
}
