#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "floqnoise/monodromy.hpp"
#include "floqnoise/rng.hpp"
#include "support/oracles.hpp"

using namespace floqnoise;

namespace {

double max_abs_diff(const Mat2& x, const Mat2& y) {
    return std::max(std::max(std::abs(x.a - y.a), std::abs(x.b - y.b)),
                    std::max(std::abs(x.c - y.c), std::abs(x.d - y.d)));
}

} // namespace

TEST_CASE("integrate_period: harmonic oscillator closes to identity", "[monodromy]") {
    DriveSpec d;
    d.omega = 1.0; // T = 2 pi, with omega_k = 1 a full rotation
    Mode m;
    m.k = 1.0;

    for (auto method : {IntegratorMethod::magnus4, IntegratorMethod::rk4}) {
        IntegratorCfg cfg;
        cfg.method = method;
        const Mat2 phi = integrate_period(m, d, cfg);
        CHECK(max_abs_diff(phi, Mat2::identity()) < 1e-8);
    }
}

TEST_CASE("integrate_period: constant-coefficient closed form", "[monodromy]") {
    DriveSpec d;
    d.amplitude = 0.0;
    IntegratorCfg cfg;

    // oracle: independent trig/hyperbolic propagator, both signs of c
    for (double c : {3.7, 0.9, 1e-10, -0.4, -1.3}) {
        for (double omega : {1.0, 2.3}) {
            d.omega = omega;
            const Mat2 got = integrate_period_coeff(c, d, nullptr, cfg);
            const Mat2 want = testing::constant_coefficient_propagator(c, d.period());
            CHECK(max_abs_diff(got, want) < 1e-9);
        }
    }

    // rk4 route converges at 4th order; moderate c stays well inside 1e-8
    cfg.method = IntegratorMethod::rk4;
    d.omega = 2.0;
    const Mat2 got = integrate_period_coeff(0.5, d, nullptr, cfg);
    const Mat2 want = testing::constant_coefficient_propagator(0.5, d.period());
    CHECK(max_abs_diff(got, want) < 1e-8);
}

TEST_CASE("integrate_period: unimodular for random parameter draws", "[monodromy]") {
    IntegratorCfg cfg;
    for (int i = 0; i < 100; ++i) {
        const auto u = [&](int slot) {
            return rng::uniform01(rng::key(77, rng::Stream::draw_pool, static_cast<std::uint64_t>(i),
                                           static_cast<std::uint64_t>(slot)));
        };
        DriveSpec d;
        d.omega = 1.0 + 2.0 * u(0);
        d.amplitude = 2.0 * u(1);
        Mode m;
        m.k = 2.0 * u(2);
        m.m_chi = u(3);
        NoiseSpec n;
        n.sigma = 0.5 * u(4);
        n.distribution = i % 2 == 0 ? NoiseDistribution::uniform : NoiseDistribution::gaussian;
        n.master_seed = 1000 + static_cast<std::uint64_t>(i);
        const NoisePath path = sample_noise(n, 0);
        const Mat2 phi = integrate_period(m, d, &path, cfg);
        CHECK(std::abs(phi.det() - 1.0) < 1e-9);
    }
}

TEST_CASE("integrate_period: rejects bad configs, reports overflow", "[monodromy]") {
    DriveSpec d;
    d.omega = 1.0;
    Mode m;
    m.k = 1.0;

    IntegratorCfg cfg;
    cfg.steps_per_period = 8;
    CHECK_THROWS_AS(integrate_period(m, d, cfg), std::invalid_argument);

    cfg.steps_per_period = 100; // not a multiple of 16 segments
    NoiseSpec n;
    n.sigma = 0.1;
    n.master_seed = 1;
    const NoisePath path = sample_noise(n, 0);
    CHECK_THROWS_AS(integrate_period(m, d, &path, cfg), std::invalid_argument);

    // c = -1e8 overflows cosh within a few steps; the error names the step
    IntegratorCfg ok;
    CHECK_THROWS_WITH(integrate_period_coeff(-1e8, d, nullptr, ok),
                      Catch::Matchers::ContainsSubstring("step"));
}

TEST_CASE("floquet_from_monodromy: classification and rates", "[monodromy]") {
    // rotation by 0.7 over T=1: elliptic, alpha = 0.7
    const double th = 0.7;
    const Mat2 rot{std::cos(th), std::sin(th), -std::sin(th), std::cos(th)};
    FloquetResult f = floquet_from_monodromy(rot, 1.0);
    CHECK(f.regime == StabilityRegime::elliptic);
    CHECK(f.mu == 0.0);
    CHECK(f.alpha == Catch::Approx(0.7).epsilon(1e-12));

    // diag(e^0.3, e^-0.3) over T=1: hyperbolic with mu = 0.3
    const Mat2 hyp{std::exp(0.3), 0.0, 0.0, std::exp(-0.3)};
    f = floquet_from_monodromy(hyp, 1.0);
    CHECK(f.regime == StabilityRegime::hyperbolic);
    CHECK(f.mu == Catch::Approx(0.3).epsilon(1e-12));
    CHECK(f.alpha == 0.0);

    // trace -2.5 over T=2pi: |lambda_max| = 2 by direct eigenvalues, so
    // mu = log(2)/(2 pi); alpha sits at the branch end pi/T
    const Mat2 neg{-0.5, 0.0, 1.0, -2.0}; // trace -2.5, det 1
    f = floquet_from_monodromy(neg, kTwoPi);
    CHECK(f.regime == StabilityRegime::hyperbolic);
    CHECK(f.mu == Catch::Approx(std::log(2.0) / kTwoPi).epsilon(1e-12));
    CHECK(f.alpha == Catch::Approx(0.5).epsilon(1e-12));

    // mu is shared between a matrix and its inverse (eigenvalues lambda, 1/lambda)
    f = floquet_from_monodromy(neg.inverse(), kTwoPi);
    CHECK(f.mu == Catch::Approx(std::log(2.0) / kTwoPi).epsilon(1e-12));

    // far-from-unimodular input is rejected
    const Mat2 bad{2.0, 0.0, 0.0, 1.0};
    CHECK_THROWS_AS(floquet_from_monodromy(bad, 1.0), std::invalid_argument);
}

TEST_CASE("noiseless_exponent: resonance band vs stable band", "[monodromy]") {
    DriveSpec d;
    d.omega = 2.0;
    IntegratorCfg cfg;

    // no drive: elliptic for generic omega_k
    d.amplitude = 0.0;
    Mode m;
    m.k = 0.73;
    CHECK(noiseless_exponent(m, d, cfg).mu == 0.0);

    // first resonance band is centered at omega_k = omega/2
    d.amplitude = 0.2;
    m.k = 1.0;
    const FloquetResult center = noiseless_exponent(m, d, cfg);
    CHECK(center.mu > 0.0);
    CHECK(center.regime == StabilityRegime::hyperbolic);

    // omega_k = 1.5 lies between the first and second tongue: the Hill
    // determinant oracle confirms stability there
    CHECK(testing::hill_exponent(1.5 * 1.5, 0.2, 2.0) == 0.0);
    m.k = 1.5;
    CHECK(noiseless_exponent(m, d, cfg).mu < 1e-6);

    // quantitative agreement with the Hill oracle inside the band
    for (double wk : {0.97, 1.0, 1.02}) {
        m.k = wk;
        CHECK(noiseless_exponent(m, d, cfg).mu ==
              Catch::Approx(testing::hill_exponent(wk * wk, 0.2, 2.0)).margin(1e-6));
    }
}

TEST_CASE("noiseless_exponent: step-halving convergence", "[monodromy]") {
    DriveSpec d;
    d.omega = 2.0;
    d.amplitude = 0.2;
    Mode m;
    IntegratorCfg half, full;
    full.steps_per_period = 1024;
    for (double k : {1.0, 1.3, 0.6}) {
        m.k = k;
        const double mu_half = noiseless_exponent(m, d, half).mu;
        const double mu_full = noiseless_exponent(m, d, full).mu;
        CHECK(std::abs(mu_half - mu_full) < 1e-6);
    }
}

TEST_CASE("compute_chart: zero-amplitude row, tongue location, broad band", "[monodromy]") {
    DriveSpec d;
    d.omega = 2.0;
    Mode m;
    IntegratorCfg cfg;

    // P = 0 row: all stable
    {
        std::vector<double> ks{0.3, 0.8, 1.1, 1.9};
        const auto rows = compute_chart(ks, {0.0}, d, m, cfg);
        for (const auto& r : rows) CHECK(r.mu == 0.0);
    }

    // small-P slice: the unstable interval contains omega/2 and its center
    // lies within 5% of it (P = 0.1 omega^2)
    {
        std::vector<double> ks;
        for (int i = 0; i < 150; ++i) ks.push_back(0.5 + i * (1.5 - 0.5) / 149.0);
        const auto rows = compute_chart(ks, {0.4}, d, m, cfg);
        double lo = 2.0, hi = 0.0;
        for (const auto& r : rows)
            if (r.mu > 0.0) {
                lo = std::min(lo, r.k);
                hi = std::max(hi, r.k);
            }
        REQUIRE(lo < hi);
        CHECK(lo < 1.0);
        CHECK(hi > 1.0);
        CHECK(std::abs(0.5 * (lo + hi) - 1.0) < 0.05);
    }

    // broad band (P = 10 omega^2): nearly every mode below omega/2 is unstable
    {
        std::vector<double> ks;
        for (int i = 0; i < 50; ++i) ks.push_back((i + 0.5) / 50.0);
        const auto rows = compute_chart(ks, {40.0}, d, m, cfg);
        int unstable = 0;
        for (const auto& r : rows)
            if (r.mu > 1e-6) ++unstable;
        CHECK(static_cast<double>(unstable) / static_cast<double>(rows.size()) >= 0.9);
    }

    // grids must be non-empty and ascending
    CHECK_THROWS_AS(compute_chart({}, {1.0}, d, m, cfg), std::invalid_argument);
    CHECK_THROWS_AS(compute_chart({1.0, 0.5}, {1.0}, d, m, cfg), std::invalid_argument);
}

TEST_CASE("chart depends on omega_k^2 only for the cosine drive", "[monodromy]") {
    DriveSpec d;
    d.omega = 2.0;
    d.amplitude = 0.3;
    IntegratorCfg cfg;

    // (k=3, m=4) and (k=5, m=0) give exactly representable equal omega_k^2
    Mode a;
    a.k = 3.0;
    a.m_chi = 4.0;
    Mode b;
    b.k = 5.0;
    b.m_chi = 0.0;
    REQUIRE(a.omega_k_sq() == b.omega_k_sq());
    const FloquetResult fa = noiseless_exponent(a, d, cfg);
    const FloquetResult fb = noiseless_exponent(b, d, cfg);
    CHECK(std::memcmp(&fa.mu, &fb.mu, sizeof(double)) == 0);
    CHECK(std::memcmp(&fa.alpha, &fb.alpha, sizeof(double)) == 0);
}
