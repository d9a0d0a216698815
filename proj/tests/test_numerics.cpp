#include "oracles.hpp"
#include "swle/numerics.hpp"

#include <doctest.h>

using namespace swle;

TEST_CASE("integrate: closed-form integrals") {
    auto r = integrate([](double y) { return std::exp(-y); }, 0.0, kInf);
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-11));
    CHECK(r.error_estimate >= 0.0);

    r = integrate([](double y) { return oracle::normal_pdf(y, 0, 1); }, -kInf, kInf);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-11));

    // mean of the Gamma with theta=-1, phi=0.5 (shape 2, rate 2)
    r = integrate([](double y) { return y * oracle::gamma_pdf(y, 2.0, 2.0); }, 0.0, kInf);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-10));

    r = integrate([](double y) { return y; }, 3.0, 3.0);
    CHECK(r.value == 0.0);
}

TEST_CASE("integrate: left tail and vector integrands") {
    auto r = integrate([](double y) { return oracle::normal_pdf(y, 0, 1); }, -kInf, 0.0);
    CHECK(r.value == doctest::Approx(0.5).epsilon(1e-11));

    auto v = integrate_n<3>(
        [](double y) {
            double f = oracle::normal_pdf(y, 1.0, 4.0);
            return std::array<double, 3>{f, y * f, y * y * f};
        },
        -kInf, kInf, QuadOptions{1e-10, 1e-13, 400, 2.0});
    CHECK(v.converged);
    CHECK(v.value[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(v.value[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(v.value[2] == doctest::Approx(5.0).epsilon(1e-10));
}

TEST_CASE("integrate: subdivision cap sets the flag") {
    QuadOptions o;
    o.max_subdivisions = 2;
    o.rel_tol = 1e-15;
    o.abs_tol = 0;
    auto r = integrate([](double y) { return std::sin(50 * y) * std::sin(50 * y); }, 0.0, 10.0, o);
    CHECK_FALSE(r.converged);
}

TEST_CASE("find_root") {
    CHECK(find_root([](double x) { return x - 2; }, 0, 5) == doctest::Approx(2.0).epsilon(1e-12));
    auto cubic = [](double x) { return x * x * x - x - 2; };
    double ref = oracle::bisect(cubic, 1, 2);
    CHECK(ref == doctest::Approx(1.52138).epsilon(1e-5));
    CHECK(find_root(cubic, 1, 2) == doctest::Approx(ref).epsilon(1e-12));
    auto q = [](double x) { return (1 - oracle::chi2_sf_series(x, 1)) - 0.95; };
    double ref95 = oracle::bisect(q, 0.1, 20);
    CHECK(ref95 == doctest::Approx(3.841).epsilon(1e-3));
    CHECK(find_root([](double x) { return (1 - chi_square_sf(x, 1)) - 0.95; }, 0.1, 20) ==
          doctest::Approx(ref95).epsilon(1e-10));
    CHECK_THROWS_AS(find_root([](double x) { return x * x + 1; }, -1, 1), DomainError);
}

TEST_CASE("chi_square_sf") {
    CHECK(chi_square_sf(0, 1) == 1.0);
    CHECK(chi_square_sf(0, 7) == 1.0);
    CHECK(chi_square_sf(3.841, 1) == doctest::Approx(0.05).epsilon(1e-3));
    CHECK(chi_square_sf(5.991, 2) == doctest::Approx(0.05).epsilon(1e-3));
    for (double k : {1.0, 2.0, 3.0, 6.0, 12.0})
        for (double x : {0.3, 1.0, 4.0, 9.5, 20.0}) {
            INFO("k=" << k << " x=" << x);
            CHECK(std::fabs(chi_square_sf(x, k) - oracle::chi2_sf_series(x, k)) < 1e-12);
        }
    CHECK(chi_square_sf(4.0, 2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
}

TEST_CASE("solve_spd") {
    Mat B = Mat::Random(3, 2);
    CHECK((solve_spd(Mat::Identity(3, 3), B) - B).norm() < 1e-15);

    Mat A(2, 2);
    A << 2, 1, 1, 2;
    Mat b(2, 1);
    b << 1, 0;
    Mat x = solve_spd(A, b);
    CHECK(x(0, 0) == doctest::Approx(2.0 / 3));
    CHECK(x(1, 0) == doctest::Approx(-1.0 / 3));

    std::srand(11);
    Mat M = Mat::Random(5, 5);
    Mat S = M * M.transpose() + 0.1 * Mat::Identity(5, 5);
    Mat inv = solve_spd(S, Mat::Identity(5, 5));
    CHECK((S * inv - Mat::Identity(5, 5)).norm() < 1e-10);

    // indefinite but regular goes through the LU fallback
    Mat Ind(2, 2);
    Ind << 1, 2, 2, 1;
    CHECK((Ind * solve_spd(Ind, b) - b).norm() < 1e-14);

    Mat Sing = Mat::Ones(3, 3);
    CHECK_THROWS_AS(solve_spd(Sing, B), NumericalError);
}

TEST_CASE("finite differences") {
    CHECK(richardson_diff([](double x) { return std::sin(x); }, 0.7, 1e-2) ==
          doctest::Approx(std::cos(0.7)).epsilon(1e-10));
    Vec x0(2);
    x0 << 0.3, -1.2;
    Mat J = fd_jacobian(
        [](const Vec& v) {
            Vec r(2);
            r << v(0) * v(1), std::exp(v(0));
            return r;
        },
        x0);
    CHECK(J(0, 0) == doctest::Approx(-1.2).epsilon(1e-8));
    CHECK(J(0, 1) == doctest::Approx(0.3).epsilon(1e-8));
    CHECK(J(1, 0) == doctest::Approx(std::exp(0.3)).epsilon(1e-8));
    CHECK(std::fabs(J(1, 1)) < 1e-8);
}

TEST_CASE("normal tail helpers") {
    CHECK(normal_cdf(0) == doctest::Approx(0.5));
    CHECK(normal_sf(1.5) + normal_cdf(1.5) == doctest::Approx(1.0).epsilon(1e-15));
    // far tail: log sf(z) ~ -z^2/2 - log(z sqrt(2 pi))
    double z = 40;
    CHECK(log_normal_sf(z) ==
          doctest::Approx(-0.5 * z * z - std::log(z * std::sqrt(2 * std::numbers::pi)) - 1 / (z * z)).epsilon(1e-6));
}

TEST_CASE("quantile_type7") {
    CHECK(quantile_type7({1, 2, 3, 4, 5}, 0.5) == 3.0);
    CHECK(quantile_type7({1, 2, 3, 4}, 0.5) == 2.5);
    CHECK(quantile_type7({5, 1, 4, 2, 3}, 0.9) == doctest::Approx(4.6));
}

namespace {
struct Moments {
    double mean, var, n;
};
template <class F>
Moments moments(F draw, int n) {
    double s = 0, ss = 0;
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) { v[i] = draw(); s += v[i]; }
    double m = s / n;
    for (double y : v) ss += (y - m) * (y - m);
    return {m, ss / (n - 1), double(n)};
}
// within 4 standard errors for the mean; the variance check uses the fourth moment
// bound through a generous 4 SE with a kurtosis allowance
void check_moments(const Moments& mo, double mean, double var, double kurt) {
    CHECK(std::fabs(mo.mean - mean) < 4 * std::sqrt(var / mo.n));
    CHECK(std::fabs(mo.var - var) < 4 * var * std::sqrt((kurt - 1) / mo.n));
}
}  // namespace

TEST_CASE("samplers match family moments") {
    const int n = 1000000;
    Rng rng(123);
    // Gamma theta=-2, phi=0.5: shape 2, rate 4 -> mean 0.5, var 0.125, kurtosis 3+6/2
    check_moments(moments([&] { return sample(EdmFamily(FamilyId::Gamma), -2.0, 0.5, rng); }, n), 0.5, 0.125, 6.0);
    check_moments(moments([&] { return sample(EdmFamily(FamilyId::Normal), 1.5, 0.25, rng); }, n), 1.5, 0.25, 3.0);
    // IG theta=-0.5 (mu=1), phi=0.1 (lambda=10): var mu^3/lambda, kurtosis 3+15 mu/lambda
    check_moments(moments([&] { return sample(EdmFamily(FamilyId::InverseGaussian), -0.5, 0.1, rng); }, n), 1.0,
                  0.1, 4.5);
}

TEST_CASE("scaled Student-t matches the contamination variance") {
    Rng rng(99);
    const double df = 2.5, scale = std::sqrt(0.25 * (df - 2) / df);
    const int n = 1000000;
    // infinite fourth moment, so compare the median absolute value against the exact t quantile
    std::vector<double> a(n);
    double s = 0;
    for (int i = 0; i < n; ++i) {
        double t = scale * rng.student_t(df);
        a[i] = std::fabs(t);
        s += t;
    }
    CHECK(std::fabs(s / n) < 4 * 0.5 / std::sqrt(n) * 3);
    double med = quantile_type7(a, 0.5) / scale;
    // P(|T| <= m) = 0.5 for t(2.5); reference by quadrature of the t density
    auto tpdf = [&](double x) {
        return std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::numbers::pi) *
               std::pow(1 + x * x / df, -(df + 1) / 2);
    };
    double m = oracle::bisect([&](double c) { return 2 * oracle::integrate(tpdf, 0, c) - 0.5; }, 0.1, 3);
    CHECK(med == doctest::Approx(m).epsilon(5e-3));
}

TEST_CASE("rng streams are reproducible") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        double x = a.normal();
        CHECK(x == b.normal());
    }
    CHECK(Rng(42).next_u64() != c.next_u64());
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
    CHECK(derive_seed(7, 3) != derive_seed(7, 4));
}
