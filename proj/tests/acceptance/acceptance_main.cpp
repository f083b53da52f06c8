// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Criteria 1-9 run in-process; criterion 10 shells out to
// the CLI binary (--tool) with the shipped default configs (--configs).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <unistd.h>
#include <string>
#include <vector>

#include "floqnoise/anderson.hpp"
#include "floqnoise/cli.hpp"
#include "floqnoise/lattice.hpp"
#include "floqnoise/randprod.hpp"
#include "support/oracles.hpp"

using namespace floqnoise;
namespace fs = std::filesystem;

namespace {

std::string g_tool;
std::string g_configs;

double urand(std::uint64_t trial, std::uint64_t slot) {
    return rng::uniform01(rng::key(987654321, rng::Stream::draw_pool, trial, slot));
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", x);
    return buf;
}

// ---- criterion 1: unimodularity over random draws ------------------------
bool criterion_unimodularity(std::string& msg) {
    IntegratorCfg cfg;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto t = static_cast<std::uint64_t>(i);
        DriveSpec d;
        d.omega = 1.0 + 2.0 * urand(t, 0);
        d.amplitude = 2.0 * urand(t, 1);
        Mode m;
        m.k = 2.0 * urand(t, 2);
        m.m_chi = urand(t, 3);
        NoiseSpec n;
        n.sigma = 0.5 * urand(t, 4);
        n.distribution = i % 2 == 0 ? NoiseDistribution::uniform : NoiseDistribution::gaussian;
        n.master_seed = 5000 + t;
        const NoisePath path = sample_noise(n, 0);
        const Mat2 phi = integrate_period(m, d, &path, cfg);
        worst = std::max(worst, std::abs(phi.det() - 1.0));
    }
    msg = "max |det-1| = " + fmt(worst) + " over 10^3 draws (tol 1e-9)";
    return worst < 1e-9;
}

// ---- criterion 2: constant-coefficient closed form ------------------------
bool criterion_constant_oracle(std::string& msg) {
    IntegratorCfg cfg;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto t = static_cast<std::uint64_t>(i);
        const double c = -1.5 + 6.5 * urand(t, 10);
        DriveSpec d;
        d.omega = 1.0 + 2.0 * urand(t, 11);
        d.amplitude = 0.0;
        const Mat2 got = integrate_period_coeff(c, d, nullptr, cfg);
        const Mat2 want = testing::constant_coefficient_propagator(c, d.period());
        worst = std::max({worst, std::abs(got.a - want.a), std::abs(got.b - want.b),
                          std::abs(got.c - want.c), std::abs(got.d - want.d)});
    }
    msg = "max elementwise error = " + fmt(worst) + " over 100 coefficients (tol 1e-8)";
    return worst < 1e-8;
}

// ---- criterion 3: first Mathieu tongue location ---------------------------
bool criterion_tongue(std::string& msg) {
    DriveSpec d;
    d.omega = 2.0;
    Mode m;
    IntegratorCfg cfg;
    std::vector<double> ks;
    for (int i = 0; i < 400; ++i) ks.push_back(0.4 + (1.6 - 0.4) * i / 399.0);
    const auto rows = compute_chart(ks, {0.1 * d.omega * d.omega}, d, m, cfg);

    // contiguous unstable run containing omega/2 = 1
    double lo = 0.0, hi = 0.0;
    bool found = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!(rows[i].mu > 0.0)) continue;
        std::size_t j = i;
        while (j + 1 < rows.size() && rows[j + 1].mu > 0.0) ++j;
        if (rows[i].k <= 1.0 && rows[j].k >= 1.0) {
            lo = rows[i].k;
            hi = rows[j].k;
            found = true;
            break;
        }
        i = j;
    }
    if (!found) {
        msg = "no unstable interval containing omega/2";
        return false;
    }
    const double mid = 0.5 * (lo + hi);
    msg = "interval [" + fmt(lo) + ", " + fmt(hi) + "] contains 1, midpoint " + fmt(mid) +
             " (|mid-1| = " + fmt(std::abs(mid - 1.0)) + ", tol 0.05)";
    return std::abs(mid - 1.0) < 0.05;
}

// ---- criterion 4: broad-band regime ---------------------------------------
bool criterion_broad_band(std::string& msg) {
    DriveSpec d;
    d.omega = 2.0;
    d.amplitude = 10.0 * d.omega * d.omega;
    Mode m;
    IntegratorCfg cfg;
    int unstable = 0;
    const int total = 200;
    for (int i = 0; i < total; ++i) {
        m.k = (i + 0.5) / static_cast<double>(total); // omega_k in (0, omega/2)
        if (noiseless_exponent(m, d, cfg).mu > 1e-6) ++unstable;
    }
    const double frac = static_cast<double>(unstable) / total;
    msg = "unstable fraction " + fmt(frac) + " for omega_k in (0, omega/2) (need >= 0.9)";
    return frac >= 0.9;
}

// ---- criterion 5: noise gain at a stable-band point ------------------------
bool criterion_theorem1(std::string& msg) {
    DriveSpec d;
    d.omega = 2.0;
    d.amplitude = 0.2;
    Mode m;
    m.k = 1.5;
    NoiseSpec n;
    n.sigma = 0.5;
    n.master_seed = 20250810;
    const auto rep = theorem1_test(m, d, n, 10000, 20, IntegratorCfg{});
    msg = "mu0 = 0, mean mu(q) = " + fmt(rep.mean_muq) + ", 95% lower bound = " +
             fmt(rep.ci_low) + " (need > 0), exceed fraction " + fmt(rep.fraction_exceeding);
    return rep.mu0 == 0.0 && rep.ci_low > 0.0;
}

// ---- criterion 6: Furstenberg decomposition -------------------------------
bool criterion_furstenberg(std::string& msg) {
    DriveSpec d;
    d.omega = 2.0;
    d.amplitude = 0.2;
    Mode m;
    m.k = 1.5;
    NoiseSpec n;
    n.sigma = 0.5;
    n.master_seed = 20250810;
    IntegratorCfg cfg;
    const auto lyap = estimate_lyapunov(m, d, n, 10000, cfg);
    const auto fur = furstenberg_estimate(m, d, n, 10000, cfg);
    const double comb = std::sqrt(lyap.std_err * lyap.std_err + fur.std_err * fur.std_err);
    const double diff = std::abs(fur.mu_hat - lyap.mu_hat);
    msg = "lambda = " + fmt(fur.mu_hat) + ", mu_hat = " + fmt(lyap.mu_hat) + ", |diff| = " +
             fmt(diff) + " (tol 2*combined = " + fmt(2.0 * comb) + ")";
    return diff < 2.0 * comb;
}

// ---- criterion 7: lattice noiseless reduction and strict gain -------------
bool criterion_lattice(std::string& msg) {
    DriveSpec d;
    d.omega = 2.0;
    d.amplitude = 0.2;
    IntegratorCfg cfg;
    const double m_chi = 0.31; // resonant wave-1 mode at omega_1 = 1.0469

    NoiseSpec nz;
    nz.sigma = 0.0;
    nz.master_seed = 20250810;
    const LatticeSystem sys0 = build_lattice_system(kTwoPi, 3.5, d, m_chi, nz);
    if (sys0.n_modes != 7) {
        msg = "expected 7 retained modes";
        return false;
    }
    // exactly one resonant wavenumber
    int resonant = 0;
    double mu_res = 0.0;
    for (int j = 0; j <= sys0.j_max; ++j) {
        const double k = kTwoPi * j / sys0.box_length;
        const double mu = noiseless_exponent_coeff(k * k + m_chi * m_chi, d, cfg).mu;
        if (mu > 0.0) {
            ++resonant;
            mu_res = mu;
        }
    }
    if (resonant != 1) {
        msg = "system has " + std::to_string(resonant) + " resonant modes, want 1";
        return false;
    }
    const auto noiseless = estimate_lattice_top_exponent(sys0, 1000000, cfg);
    const double noiseless_diff = std::abs(noiseless.mu_hat - mu_res);

    NoiseSpec n5 = nz;
    n5.sigma = 0.5;
    const LatticeSystem sysn = build_lattice_system(kTwoPi, 3.5, d, m_chi, n5);
    const auto noisy = estimate_lattice_top_exponent(sysn, 10000, cfg);
    const double excess = noisy.mu_hat - mu_res;

    msg = "noiseless top vs mode mu: |diff| = " + fmt(noiseless_diff) +
             " (tol 1e-6); sigma=0.5 excess = " + fmt(excess) + " (need > 2se = " +
             fmt(2.0 * noisy.std_err) + ")";
    return noiseless_diff < 1e-6 && excess > 2.0 * noisy.std_err;
}

// ---- criterion 8: Anderson positivity and envelope oracle -----------------
bool criterion_anderson(std::string& msg) {
    SchrodingerParams sp;
    sp.energy = 0.83;
    sp.mass = 0.5;
    sp.periodic_potential.shape = DriveShape::cosine;
    sp.periodic_potential.amplitude = 0.3;
    sp.periodic_potential.omega = 2.0;
    sp.random_potential.sigma = 0.3;
    sp.random_potential.master_seed = 101;
    IntegratorCfg cfg;

    if (classify_energy(sp, cfg) != SpectralClass::band) {
        msg = "E = 0.83 is not in a Bloch band";
        return false;
    }
    const std::int64_t N = 120000;
    const LocalizationResult loc = localization_length(sp, N, cfg);
    const MappedOscillator osc = map_to_oscillator(sp);
    const double fit = testing::envelope_fit_rate(osc.omega_k_sq, osc.drive, osc.noise, N);
    const double rel = std::abs(fit - loc.mu) / loc.mu;
    msg = "mu = " + fmt(loc.mu) + " (mu - 2se = " + fmt(loc.mu - 2.0 * loc.std_err) +
             " > 0), envelope fit " + fmt(fit) + ", rel diff " + fmt(100.0 * rel) +
             "% (tol 10%)";
    return loc.mu - 2.0 * loc.std_err > 0.0 && rel < 0.10;
}

// ---- criterion 9: small-N product oracle -----------------------------------
bool criterion_small_n(std::string& msg) {
    IntegratorCfg cfg;
    DriveSpec d;
    d.omega = 2.0;
    d.amplitude = 0.2;
    Mode m;
    m.k = 1.1;
    NoiseSpec n;
    n.sigma = 0.5;
    n.master_seed = 321;
    double worst = 0.0;

    // 2x2: renormalized accumulation vs the explicit product, N = 1..6
    for (std::int64_t N = 1; N <= 6; ++N) {
        Vec2 v = detail::unit_start_vector(n.master_seed, rng::Stream::start_vector);
        const Vec2 v0 = v;
        double acc = 0.0;
        Mat2 prod = Mat2::identity();
        for (std::int64_t j = 0; j < N; ++j) {
            const NoisePath path = sample_noise(n, j);
            const Mat2 phi = integrate_period(m, d, &path, cfg);
            prod = phi * prod;
            v = phi * v;
            const double r = v.norm();
            v = {v.x / r, v.y / r};
            acc += std::log(r);
        }
        worst = std::max(worst, std::abs(acc - std::log((prod * v0).norm())));
    }

    // the library estimator itself, tied down at its minimum N
    {
        const std::int64_t N = 100;
        const auto est = estimate_lyapunov(m, d, n, N, cfg);
        Mat2 prod = Mat2::identity();
        for (std::int64_t j = 0; j < N; ++j) {
            const NoisePath path = sample_noise(n, j);
            prod = integrate_period(m, d, &path, cfg) * prod;
        }
        const Vec2 v0 = detail::unit_start_vector(n.master_seed, rng::Stream::start_vector);
        const double brute = std::log((prod * v0).norm());
        worst = std::max(worst, std::abs(est.mu_hat * (N * d.period()) - brute));
    }

    // 2n x 2n with n = 3, N <= 5
    {
        const LatticeSystem sys = build_lattice_system(kTwoPi, 1.5, d, 0.3, n);
        for (std::int64_t N = 1; N <= 5; ++N) {
            const std::vector<double> v0 = detail::lattice_start_vector(sys);
            std::vector<double> scratch(v0.size());
            double acc = 0.0;
            detail::LatticeStepper stepper(sys, cfg);
            std::vector<double> w = v0;
            for (std::int64_t j = 0; j < N; ++j) {
                stepper.advance_period(w, j);
                const double r = detail::vec_norm(w);
                for (double& x : w) x /= r;
                acc += std::log(r);
            }
            // explicit product route
            std::vector<double> z = v0;
            for (std::int64_t j = 0; j < N; ++j) {
                const auto mat = detail::lattice_period_matrix(sys, cfg, j);
                detail::matrix_apply(mat, z, scratch);
            }
            worst = std::max(worst, std::abs(acc - std::log(detail::vec_norm(z))));
        }
    }

    msg = "max |accumulation - product log-norm| = " + fmt(worst) + " (tol 1e-9)";
    return worst < 1e-9;
}

// ---- criterion 10: CLI determinism ----------------------------------------
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return "<missing " + p.string() + ">";
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool criterion_cli_determinism(std::string& msg) {
    if (g_tool.empty() || g_configs.empty()) {
        msg = "needs --tool and --configs";
        return false;
    }
    const fs::path tmp =
        fs::temp_directory_path() / ("floqnoise_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(tmp);
    bool all_ok = true;
    std::string failures;
    for (const char* cmd : {"chart", "lyap", "theorem1", "lattice", "anderson", "oracle"}) {
        const std::string config = (fs::path(g_configs) / (std::string(cmd) + ".json")).string();
        const auto out = [&](int i) { return (tmp / (std::string(cmd) + std::to_string(i) + ".csv")).string(); };
        const auto invoke = [&](int i, const char* extra) {
            const std::string c = g_tool + " " + cmd + " --config " + config + " --out " +
                                  out(i) + " " + extra + " > /dev/null 2>&1";
            return std::system(c.c_str());
        };
        if (invoke(1, "") != 0 || invoke(2, "") != 0 || invoke(3, "--workers 2") != 0) {
            failures += std::string(cmd) + " (exit) ";
            all_ok = false;
            continue;
        }
        const std::string a = slurp(out(1));
        if (a != slurp(out(2)) || a != slurp(out(3))) {
            failures += std::string(cmd) + " (bytes) ";
            all_ok = false;
        }
        if (slurp(out(1) + ".meta.json") != slurp(out(2) + ".meta.json")) {
            failures += std::string(cmd) + " (meta) ";
            all_ok = false;
        }
    }
    std::error_code ec;
    fs::remove_all(tmp, ec);
    msg = all_ok ? "byte-identical CSVs across reruns and worker counts for all 6 commands"
                    : "mismatch: " + failures;
    return all_ok;
}

} // namespace

int main(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--tool") g_tool = argv[i + 1];
        else if (flag == "--configs") g_configs = argv[i + 1];
        else {
            std::fprintf(stderr, "usage: acceptance --tool <floquet-noise> --configs <dir>\n");
            return 2;
        }
    }

    struct Criterion {
        const char* name;
        std::function<bool(std::string&)> fn;
    };
    const std::vector<Criterion> criteria{
        {"unimodularity", criterion_unimodularity},
        {"constant-coefficient oracle", criterion_constant_oracle},
        {"Mathieu tongue location", criterion_tongue},
        {"broad-band regime", criterion_broad_band},
        {"stable-band noise gain (theorem1)", criterion_theorem1},
        {"Furstenberg decomposition", criterion_furstenberg},
        {"lattice noiseless reduction and gain", criterion_lattice},
        {"Anderson localization positivity", criterion_anderson},
        {"small-N product oracle", criterion_small_n},
        {"CLI determinism", criterion_cli_determinism},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        std::string info;
        bool ok = false;
        try {
            ok = criteria[i].fn(info);
        } catch (const std::exception& e) {
            info = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s  criterion %2zu  %-38s %s  [%.1fs]\n", ok ? "PASS" : "FAIL", i + 1,
                    criteria[i].name, info.c_str(), secs);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures > 0) std::printf("%d of %zu criteria FAILED\n", failures, criteria.size());
    else std::printf("all %zu criteria passed\n", criteria.size());
    return failures == 0 ? 0 : 1;
}
