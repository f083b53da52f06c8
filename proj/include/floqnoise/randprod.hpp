#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "floqnoise/monodromy.hpp"
#include "floqnoise/rng.hpp"

/**
 * Lyapunov exponents of products of per-period random transfer matrices
 * (homogeneous noise). The top exponent is estimated by propagating a unit
 * vector and renormalizing every period, which keeps the accumulation exact
 * while avoiding overflow; a brute-force matrix product backs it in tests.
 */
namespace floqnoise {

enum class VectorNorm { l2, l1 };

struct LyapunovEstimate {
    double mu_hat = 0.0;  // per unit time
    double std_err = 0.0; // from batch means over disjoint contiguous blocks
    std::int64_t n_periods = 0;
    int n_batches = 0;
    std::uint64_t seed = 0;
};

struct EstimateOptions {
    int n_batches = 10;
    VectorNorm norm = VectorNorm::l2;
};

namespace detail {

inline double vec_norm(const Vec2& v, VectorNorm norm) {
    return norm == VectorNorm::l2 ? v.norm() : v.norm_l1();
}

inline Vec2 unit_start_vector(std::uint64_t seed, rng::Stream stream, std::uint64_t counter = 0) {
    const double angle = kTwoPi * rng::uniform01(rng::key(seed, stream, counter));
    return {std::cos(angle), std::sin(angle)};
}

/// Batch-mean statistics of per-period log increments. mu_hat is the grand
/// mean over all periods; std_err the standard error of the batch means.
struct BatchAccumulator {
    double period_time;
    std::int64_t batch_size;
    std::vector<double> batch_sums;
    double current = 0.0;
    std::int64_t in_batch = 0;

    BatchAccumulator(double T, std::int64_t n_periods, int n_batches)
        : period_time(T), batch_size(n_periods / n_batches) {
        batch_sums.reserve(static_cast<std::size_t>(n_batches));
    }

    void add(double log_increment) {
        current += log_increment;
        if (++in_batch == batch_size) {
            batch_sums.push_back(current);
            current = 0.0;
            in_batch = 0;
        }
    }

    double mu_hat() const {
        double total = 0.0;
        for (double s : batch_sums) total += s;
        return total / (static_cast<double>(batch_sums.size()) * static_cast<double>(batch_size) *
                        period_time);
    }

    double std_err() const {
        const auto nb = static_cast<double>(batch_sums.size());
        const double denom = static_cast<double>(batch_size) * period_time;
        double mean = 0.0;
        for (double s : batch_sums) mean += s / denom;
        mean /= nb;
        double var = 0.0;
        for (double s : batch_sums) {
            const double d = s / denom - mean;
            var += d * d;
        }
        var /= (nb - 1.0);
        return std::sqrt(var / nb);
    }
};

inline void check_estimate_preconditions(std::int64_t n_periods, int n_batches) {
    if (n_periods < 100)
        throw std::invalid_argument("estimate_lyapunov: n_periods must be >= 100");
    if (n_batches < 2) throw std::invalid_argument("estimate_lyapunov: n_batches must be >= 2");
    if (n_periods % n_batches != 0)
        throw std::invalid_argument("estimate_lyapunov: n_batches must divide n_periods");
}

} // namespace detail

/// Top Lyapunov exponent of the per-period transfer-matrix product,
/// mu_hat -> mu(q) = lim (1/NT) log ||prod_j Phi_q(jT,(j-1)T)||.
inline LyapunovEstimate estimate_lyapunov_coeff(double omega_k_sq, const DriveSpec& drive,
                                                const NoiseSpec& noise, std::int64_t n_periods,
                                                const IntegratorCfg& cfg,
                                                const EstimateOptions& opts = {}) {
    detail::check_estimate_preconditions(n_periods, opts.n_batches);
    validate(noise);
    const double T = drive.period();
    detail::BatchAccumulator acc(T, n_periods, opts.n_batches);

    Vec2 v = detail::unit_start_vector(noise.master_seed, rng::Stream::start_vector);
    const bool noiseless = noise.sigma == 0.0;
    const Mat2 fixed =
        noiseless ? integrate_period_coeff(omega_k_sq, drive, nullptr, cfg) : Mat2::identity();

    for (std::int64_t j = 0; j < n_periods; ++j) {
        Mat2 m = fixed;
        if (!noiseless) {
            const NoisePath path = sample_noise(noise, j);
            m = integrate_period_coeff(omega_k_sq, drive, &path, cfg);
        }
        v = m * v;
        const double r = detail::vec_norm(v, opts.norm);
        if (!std::isfinite(r) || r == 0.0)
            throw std::runtime_error("estimate_lyapunov: non-finite accumulation at period " +
                                     std::to_string(j));
        v = {v.x / r, v.y / r};
        acc.add(std::log(r));
    }

    return {acc.mu_hat(), acc.std_err(), n_periods, opts.n_batches, noise.master_seed};
}

inline LyapunovEstimate estimate_lyapunov(const Mode& mode, const DriveSpec& drive,
                                          const NoiseSpec& noise, std::int64_t n_periods,
                                          const IntegratorCfg& cfg,
                                          const EstimateOptions& opts = {}) {
    validate(mode);
    return estimate_lyapunov_coeff(mode.omega_k_sq(), drive, noise, n_periods, cfg, opts);
}

/// Per-period reduced transfer matrix Psi_q(T,0) = Phi_0(T,0)^-1 Phi_q(T,0);
/// the identity matrix when the path carries no noise.
inline Mat2 reduced_matrix(const Mode& mode, const DriveSpec& drive, const NoisePath& path,
                           const IntegratorCfg& cfg) {
    const Mat2 phi0 = integrate_period(mode, drive, nullptr, cfg);
    const Mat2 phiq = integrate_period(mode, drive, &path, cfg);
    return phi0.inverse() * phiq;
}

/// Growth rate of the matrix element <v1, Psi_q(NT,0) v2> of the reduced
/// propagator Psi_q(NT,0) = prod_j Psi_q(jT,(j-1)T) = Phi_0(NT,0)^-1 Phi_q(NT,0).
///
/// Evaluated as <(Phi_0(T,0)^t)^-N v1, Phi_q(NT,0) v2> with per-period
/// rescaling of both vectors. When v1 is the leading eigenvector of the
/// transposed noiseless monodromy (the default in the hyperbolic regime),
/// the dual action reduces to the exact eigenvalue factor exp(-mu(0) T) per
/// period and the estimate satisfies mu(q) = mu(0) + lambda by construction;
/// in the elliptic regime the dual powers stay bounded and lambda -> mu(q).
inline LyapunovEstimate furstenberg_estimate(const Mode& mode, const DriveSpec& drive,
                                             const NoiseSpec& noise, std::int64_t n_periods,
                                             const IntegratorCfg& cfg,
                                             std::optional<Vec2> v1 = std::nullopt,
                                             std::optional<Vec2> v2 = std::nullopt,
                                             const EstimateOptions& opts = {}) {
    detail::check_estimate_preconditions(n_periods, opts.n_batches);
    validate(noise);
    const double T = drive.period();
    const Mat2 phi0 = integrate_period(mode, drive, nullptr, cfg);
    const Mat2 dual = phi0.inverse().transpose(); // (Phi_0^t)^-1

    // Leading eigenpair of Phi_0^t when hyperbolic: |lambda| = exp(mu(0) T).
    const double tr = phi0.trace();
    const bool hyperbolic = std::abs(tr) > 2.0 + kParabolicEps;
    double lead_eigenvalue = 0.0;
    Vec2 lead_eigenvector{};
    if (hyperbolic) {
        const double disc = std::sqrt(tr * tr - 4.0);
        lead_eigenvalue = 0.5 * (tr + (tr > 0.0 ? disc : -disc));
        const Mat2 mt = phi0.transpose();
        // row space of (M^t - lambda I) gives the eigenvector
        Vec2 w{mt.b, lead_eigenvalue - mt.a};
        if (w.norm() < 1e-12 * std::abs(lead_eigenvalue))
            w = {lead_eigenvalue - mt.d, mt.c};
        const double wn = w.norm();
        lead_eigenvector = {w.x / wn, w.y / wn};
    }

    Vec2 u;
    bool eigen_action = false;
    if (v1.has_value()) {
        const double n1 = v1->norm();
        if (n1 == 0.0) throw std::invalid_argument("furstenberg_estimate: v1 must be nonzero");
        u = {v1->x / n1, v1->y / n1};
        if (hyperbolic)
            eigen_action = std::abs(u.x * lead_eigenvector.y - u.y * lead_eigenvector.x) < 1e-12;
    } else if (hyperbolic) {
        u = lead_eigenvector;
        eigen_action = true;
    } else {
        u = detail::unit_start_vector(noise.master_seed, rng::Stream::furstenberg_v2, 1);
    }

    Vec2 z;
    if (v2.has_value()) {
        const double n2 = v2->norm();
        if (n2 == 0.0) throw std::invalid_argument("furstenberg_estimate: v2 must be nonzero");
        z = {v2->x / n2, v2->y / n2};
    } else {
        z = detail::unit_start_vector(noise.master_seed, rng::Stream::furstenberg_v2, 0);
    }

    const bool noiseless = noise.sigma == 0.0;
    const double dual_eigen_log = eigen_action ? -std::log(std::abs(lead_eigenvalue)) : 0.0;
    detail::BatchAccumulator acc(T, n_periods, opts.n_batches);

    for (std::int64_t j = 0; j < n_periods; ++j) {
        Mat2 m = phi0;
        if (!noiseless) {
            const NoisePath path = sample_noise(noise, j);
            m = integrate_period(mode, drive, &path, cfg);
        }
        z = m * z;
        const double rz = z.norm();
        if (!std::isfinite(rz) || rz == 0.0)
            throw std::runtime_error("furstenberg_estimate: non-finite accumulation at period " +
                                     std::to_string(j));
        z = {z.x / rz, z.y / rz};

        double ru_log = dual_eigen_log;
        if (!eigen_action) {
            u = dual * u;
            const double ru = u.norm();
            if (!std::isfinite(ru) || ru == 0.0)
                throw std::runtime_error("furstenberg_estimate: dual vector degenerated at period " +
                                         std::to_string(j));
            u = {u.x / ru, u.y / ru};
            ru_log = std::log(ru);
        }
        acc.add(std::log(rz) + ru_log);
    }

    const double overlap = std::abs(dot(u, z));
    if (!(overlap > 0.0))
        throw std::runtime_error("furstenberg_estimate: propagated vectors became orthogonal");
    // boundary term; vanishes at rate 1/N and is excluded from the batches
    const double lambda =
        acc.mu_hat() + std::log(overlap) / (static_cast<double>(n_periods) * T);
    return {lambda, acc.std_err(), n_periods, opts.n_batches, noise.master_seed};
}

/// Numerical check of the noise-strengthens-instability inequality
/// mu(q) > mu(0) across independent master seeds.
struct Theorem1Report {
    double mu0 = 0.0;
    double mean_muq = 0.0;
    double ci_low = 0.0; // >= 95% lower confidence bound on E[mu(q)]
    double fraction_exceeding = 0.0;
    int n_seeds = 0;
};

inline Theorem1Report theorem1_test(const Mode& mode, const DriveSpec& drive,
                                    const NoiseSpec& noise, std::int64_t n_periods, int n_seeds,
                                    const IntegratorCfg& cfg) {
    if (n_seeds < 20) throw std::invalid_argument("theorem1_test: n_seeds must be >= 20");
    Theorem1Report rep;
    rep.n_seeds = n_seeds;
    rep.mu0 = noiseless_exponent(mode, drive, cfg).mu;

    std::vector<double> mu_hats;
    mu_hats.reserve(static_cast<std::size_t>(n_seeds));
    for (int i = 0; i < n_seeds; ++i) {
        NoiseSpec child = noise;
        child.master_seed = rng::derive_seed(noise.master_seed, static_cast<std::uint64_t>(i));
        mu_hats.push_back(estimate_lyapunov(mode, drive, child, n_periods, cfg).mu_hat);
    }

    double mean = 0.0;
    for (double m : mu_hats) mean += m;
    mean /= static_cast<double>(n_seeds);
    double var = 0.0;
    for (double m : mu_hats) var += (m - mean) * (m - mean);
    var /= static_cast<double>(n_seeds - 1);
    const double se = std::sqrt(var / static_cast<double>(n_seeds));

    rep.mean_muq = mean;
    rep.ci_low = mean - 1.96 * se;
    int exceed = 0;
    for (double m : mu_hats)
        if (m > rep.mu0) ++exceed;
    rep.fraction_exceeding = static_cast<double>(exceed) / static_cast<double>(n_seeds);
    return rep;
}

} // namespace floqnoise
