#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "floqnoise/monodromy.hpp"
#include "floqnoise/randprod.hpp"
#include "floqnoise/rng.hpp"

/**
 * Cutoff Fourier representation of the field equation with spatially
 * inhomogeneous noise on a circle of circumference L:
 *
 *     x_tt - x_xx + (m_chi^2 + p(omega t) + q(x, t)) x = 0,
 *
 * truncated to modes |k| <= Lambda. In the orthonormal real basis
 * {1/sqrt(L), sqrt(2/L) cos(k_j x), sqrt(2/L) sin(k_j x)} the noiseless
 * system is exactly block-diagonal (one 2x2 phase-space block per mode) and
 * the noise field enters as a symmetric coupling matrix; its coefficients
 * are independent piecewise-constant-per-period processes scaled so the
 * field's spatial variance matches the homogeneous process for every n.
 */
namespace floqnoise {

struct LatticeBasisFn {
    int wave = 0; // integer wave index; wavenumber is 2*pi*wave/L
    bool is_sin = false;
};

struct LatticeCouplingEntry {
    int mu = 0, nu = 0; // mu <= nu; symmetric completion implied
    double g = 0.0;
};

struct LatticeSystem {
    double box_length = 0.0; // L
    double cutoff = 0.0;     // Lambda
    int j_max = 0;
    int n_modes = 0; // n = 2*j_max + 1
    double m_chi = 0.0;
    DriveSpec drive;
    NoiseSpec field_noise;

    std::vector<LatticeBasisFn> basis; // index 0: constant; 2j-1: cos_j; 2j: sin_j
    std::vector<double> wavenumbers;   // per mode, k = 2*pi*wave/L
    std::vector<double> omega_sq;      // per mode, k^2 + m_chi^2
    std::vector<std::vector<LatticeCouplingEntry>> coupling; // per noise coefficient rho
    double coeff_scale = 0.0; // sigma * sqrt(L/n): unit draw -> coefficient value

    int dimension() const { return 2 * n_modes; }
};

inline constexpr int kLatticeModeCap = 257;

namespace detail {

/// Exact integral over one circumference of a product of two basis-type
/// trig functions with integer waves >= 0 (cos_0 == 1, sin_0 == 0).
inline double pair_integral(double L, bool sin1, int w1, bool sin2, int w2) {
    if (sin1 != sin2) return 0.0;
    if (sin1) return (w1 == w2 && w1 >= 1) ? 0.5 * L : 0.0;
    if (w1 != w2) return 0.0;
    return w1 == 0 ? L : 0.5 * L;
}

/// Exact integral of e_f1 * e_f2 * e_f3 over [0, L] for the orthonormal
/// basis. The product f2*f3 is reduced to two trig terms, each integrated
/// against f1.
inline double triple_product_integral(double L, const LatticeBasisFn& f1,
                                      const LatticeBasisFn& f2, const LatticeBasisFn& f3) {
    const auto norm = [L](int w) { return w == 0 ? 1.0 / std::sqrt(L) : std::sqrt(2.0 / L); };

    // f2 * f3 = c_plus * T(w2 + w3) + c_minus * T(|w2 - w3|)
    // cos cos -> (cos, cos), sin sin -> (-cos, cos), sin cos / cos sin -> sin terms
    const int wp = f2.wave + f3.wave;
    const int wm = std::abs(f2.wave - f3.wave);
    double acc = 0.0;
    if (!f2.is_sin && !f3.is_sin) {
        acc += 0.5 * pair_integral(L, f1.is_sin, f1.wave, false, wp);
        acc += 0.5 * pair_integral(L, f1.is_sin, f1.wave, false, wm);
    } else if (f2.is_sin && f3.is_sin) {
        acc -= 0.5 * pair_integral(L, f1.is_sin, f1.wave, false, wp);
        acc += 0.5 * pair_integral(L, f1.is_sin, f1.wave, false, wm);
    } else {
        // sin_a cos_b = 1/2 [sin_{a+b} + sin_{a-b}], sin_{-m} = -sin_m
        const int a = f2.is_sin ? f2.wave : f3.wave;
        const int b = f2.is_sin ? f3.wave : f2.wave;
        acc += 0.5 * pair_integral(L, f1.is_sin, f1.wave, true, a + b);
        const double sgn = a >= b ? 1.0 : -1.0;
        acc += sgn * 0.5 * pair_integral(L, f1.is_sin, f1.wave, true, std::abs(a - b));
    }
    return norm(f1.wave) * norm(f2.wave) * norm(f3.wave) * acc;
}

} // namespace detail

inline LatticeSystem build_lattice_system(double box_length, double cutoff,
                                          const DriveSpec& drive, double m_chi,
                                          const NoiseSpec& field_noise) {
    if (!(box_length > 0.0) || !std::isfinite(box_length))
        throw std::invalid_argument("build_lattice_system: box_length must be finite and > 0");
    if (!(cutoff > 0.0) || !std::isfinite(cutoff))
        throw std::invalid_argument("build_lattice_system: cutoff must be finite and > 0");
    if (m_chi < 0.0 || !std::isfinite(m_chi))
        throw std::invalid_argument("build_lattice_system: m_chi must be finite and >= 0");
    validate(drive);
    validate(field_noise);

    LatticeSystem sys;
    sys.box_length = box_length;
    sys.cutoff = cutoff;
    sys.m_chi = m_chi;
    sys.drive = drive;
    sys.field_noise = field_noise;
    sys.j_max = static_cast<int>(std::floor(cutoff * box_length / kTwoPi + 1e-9));
    sys.n_modes = 2 * sys.j_max + 1;
    if (sys.n_modes > kLatticeModeCap)
        throw std::invalid_argument(
            "build_lattice_system: n = " + std::to_string(sys.n_modes) + " retained modes exceeds cap " +
            std::to_string(kLatticeModeCap) + "; reduce cutoff*box_length below " +
            std::to_string((kLatticeModeCap - 1) / 2 * kTwoPi / box_length) + " * box_length");

    sys.basis.push_back({0, false});
    for (int j = 1; j <= sys.j_max; ++j) {
        sys.basis.push_back({j, false});
        sys.basis.push_back({j, true});
    }
    for (const auto& f : sys.basis) {
        const double k = kTwoPi * static_cast<double>(f.wave) / box_length;
        sys.wavenumbers.push_back(k);
        sys.omega_sq.push_back(k * k + m_chi * m_chi);
    }

    const int n = sys.n_modes;
    sys.coupling.resize(static_cast<std::size_t>(n));
    for (int rho = 0; rho < n; ++rho) {
        auto& entries = sys.coupling[static_cast<std::size_t>(rho)];
        for (int mu = 0; mu < n; ++mu) {
            for (int nu = mu; nu < n; ++nu) {
                const double g = detail::triple_product_integral(
                    box_length, sys.basis[static_cast<std::size_t>(rho)],
                    sys.basis[static_cast<std::size_t>(mu)],
                    sys.basis[static_cast<std::size_t>(nu)]);
                if (g != 0.0) entries.push_back({mu, nu, g});
            }
        }
    }

    sys.coeff_scale =
        field_noise.sigma * std::sqrt(box_length / static_cast<double>(n));
    return sys;
}

namespace detail {

/// Unit draw for noise coefficient rho at (period, segment).
inline double lattice_unit_draw(const NoiseSpec& spec, std::int64_t period, int segment,
                                int rho) {
    const std::uint64_t k = rng::key(spec.master_seed, rng::Stream::lattice_coeff,
                                     static_cast<std::uint64_t>(period),
                                     static_cast<std::uint64_t>(segment),
                                     static_cast<std::uint64_t>(rho));
    return spec.distribution == NoiseDistribution::uniform ? rng::uniform_sym(k)
                                                           : rng::gaussian_truncated(k);
}

/// Time stepper for the 2n-dimensional system, RK4 with steps aligned to
/// the noise segments. State layout is interleaved phase-space pairs:
/// y[2j] = x_j, y[2j+1] = x_j'.
class LatticeStepper {
public:
    LatticeStepper(const LatticeSystem& sys, const IntegratorCfg& cfg)
        : sys_(sys), steps_(cfg.steps_per_period),
          segments_(sys.field_noise.sigma == 0.0 ? 1 : sys.field_noise.segments_per_period),
          h_(sys.drive.period() / static_cast<double>(cfg.steps_per_period)),
          qmat_(static_cast<std::size_t>(sys.n_modes) * static_cast<std::size_t>(sys.n_modes), 0.0) {
        validate(cfg);
        if (steps_ % segments_ != 0)
            throw std::invalid_argument(
                "lattice: steps_per_period must be a multiple of segments_per_period");
        const auto dim = static_cast<std::size_t>(sys.dimension());
        k1_.resize(dim);
        k2_.resize(dim);
        k3_.resize(dim);
        k4_.resize(dim);
        tmp_.resize(dim);
    }

    /// Advances y across one period, sampling the field coefficients of
    /// `period_index`. Throws on non-finite state.
    void advance_period(std::vector<double>& y, std::int64_t period_index) {
        const int steps_per_segment = steps_ / segments_;
        for (int seg = 0; seg < segments_; ++seg) {
            assemble_coupling(period_index, seg);
            for (int s = 0; s < steps_per_segment; ++s) {
                const double t0 = static_cast<double>(seg * steps_per_segment + s) * h_;
                rk4_step(y, t0);
            }
        }
        for (double v : y)
            if (!std::isfinite(v))
                throw std::runtime_error("lattice: non-finite state at period " +
                                         std::to_string(period_index));
    }

private:
    void assemble_coupling(std::int64_t period, int segment) {
        const int n = sys_.n_modes;
        std::fill(qmat_.begin(), qmat_.end(), 0.0);
        if (sys_.field_noise.sigma == 0.0) return;
        for (int rho = 0; rho < n; ++rho) {
            const double gamma =
                sys_.coeff_scale * lattice_unit_draw(sys_.field_noise, period, segment, rho);
            if (gamma == 0.0) continue;
            for (const auto& e : sys_.coupling[static_cast<std::size_t>(rho)]) {
                qmat_[static_cast<std::size_t>(e.mu) * static_cast<std::size_t>(n) +
                      static_cast<std::size_t>(e.nu)] += gamma * e.g;
                if (e.mu != e.nu)
                    qmat_[static_cast<std::size_t>(e.nu) * static_cast<std::size_t>(n) +
                          static_cast<std::size_t>(e.mu)] += gamma * e.g;
            }
        }
    }

    // dy[2j] = y[2j+1]; dy[2j+1] = -(omega_sq[j] + p(t)) y[2j] - (Q u)_j
    void rhs(const std::vector<double>& y, double t, std::vector<double>& dy) const {
        const int n = sys_.n_modes;
        const double p = eval_drive(sys_.drive, t);
        for (int j = 0; j < n; ++j) {
            const auto uj = static_cast<std::size_t>(2 * j);
            double accel = -(sys_.omega_sq[static_cast<std::size_t>(j)] + p) * y[uj];
            const double* qrow = qmat_.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(n);
            double mix = 0.0;
            for (int l = 0; l < n; ++l) mix += qrow[l] * y[static_cast<std::size_t>(2 * l)];
            dy[uj] = y[uj + 1];
            dy[uj + 1] = accel - mix;
        }
    }

    void rk4_step(std::vector<double>& y, double t0) {
        const auto dim = y.size();
        rhs(y, t0, k1_);
        for (std::size_t i = 0; i < dim; ++i) tmp_[i] = y[i] + 0.5 * h_ * k1_[i];
        rhs(tmp_, t0 + 0.5 * h_, k2_);
        for (std::size_t i = 0; i < dim; ++i) tmp_[i] = y[i] + 0.5 * h_ * k2_[i];
        rhs(tmp_, t0 + 0.5 * h_, k3_);
        for (std::size_t i = 0; i < dim; ++i) tmp_[i] = y[i] + h_ * k3_[i];
        rhs(tmp_, t0 + h_, k4_);
        const double w = h_ / 6.0;
        for (std::size_t i = 0; i < dim; ++i)
            y[i] += w * (k1_[i] + 2.0 * (k2_[i] + k3_[i]) + k4_[i]);
    }

    const LatticeSystem& sys_;
    int steps_;
    int segments_;
    double h_;
    std::vector<double> qmat_;
    std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

inline std::vector<double> lattice_start_vector(const LatticeSystem& sys) {
    std::vector<double> y(static_cast<std::size_t>(sys.dimension()));
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = rng::gaussian(
            rng::key(sys.field_noise.master_seed, rng::Stream::start_vector, i + 1));
        norm_sq += y[i] * y[i];
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& v : y) v *= inv;
    return y;
}

inline double vec_norm(const std::vector<double>& y) {
    double s = 0.0;
    for (double v : y) s += v * v;
    return std::sqrt(s);
}

/// Full per-period propagator by propagating the 2n basis columns; used by
/// the sigma = 0 fast path and by small-n oracle checks.
inline std::vector<std::vector<double>> lattice_period_matrix(const LatticeSystem& sys,
                                                              const IntegratorCfg& cfg,
                                                              std::int64_t period_index) {
    LatticeStepper stepper(sys, cfg);
    const auto dim = static_cast<std::size_t>(sys.dimension());
    std::vector<std::vector<double>> cols(dim);
    for (std::size_t c = 0; c < dim; ++c) {
        cols[c].assign(dim, 0.0);
        cols[c][c] = 1.0;
        stepper.advance_period(cols[c], period_index);
    }
    return cols;
}

inline void matrix_apply(const std::vector<std::vector<double>>& cols, std::vector<double>& y,
                         std::vector<double>& scratch) {
    const std::size_t dim = y.size();
    std::fill(scratch.begin(), scratch.end(), 0.0);
    for (std::size_t c = 0; c < dim; ++c) {
        const double yc = y[c];
        if (yc == 0.0) continue;
        const auto& col = cols[c];
        for (std::size_t r = 0; r < dim; ++r) scratch[r] += col[r] * yc;
    }
    y.swap(scratch);
}

} // namespace detail

/// Maximum of the noiseless per-mode Floquet exponents over the retained
/// wavenumbers (the noiseless top exponent of the cutoff system).
inline double noiseless_max_exponent(const LatticeSystem& sys, const IntegratorCfg& cfg) {
    double best = 0.0;
    for (int j = 0; j <= sys.j_max; ++j) {
        const double k = kTwoPi * static_cast<double>(j) / sys.box_length;
        const double w2 = k * k + sys.m_chi * sys.m_chi;
        best = std::max(best, noiseless_exponent_coeff(w2, sys.drive, cfg).mu);
    }
    return best;
}

/// Top Lyapunov exponent of the 2n-dimensional per-period propagator
/// product, by single-vector propagation with per-period renormalization.
inline LyapunovEstimate estimate_lattice_top_exponent(const LatticeSystem& sys,
                                                      std::int64_t n_periods,
                                                      const IntegratorCfg& cfg,
                                                      const EstimateOptions& opts = {}) {
    detail::check_estimate_preconditions(n_periods, opts.n_batches);
    const double T = sys.drive.period();
    detail::BatchAccumulator acc(T, n_periods, opts.n_batches);
    std::vector<double> y = detail::lattice_start_vector(sys);

    const bool noiseless = sys.field_noise.sigma == 0.0;
    if (noiseless) {
        const auto m = detail::lattice_period_matrix(sys, cfg, 0);
        std::vector<double> scratch(y.size());
        for (std::int64_t j = 0; j < n_periods; ++j) {
            detail::matrix_apply(m, y, scratch);
            const double r = detail::vec_norm(y);
            if (!std::isfinite(r) || r == 0.0)
                throw std::runtime_error("estimate_lattice_top_exponent: degenerate state at period " +
                                         std::to_string(j));
            for (double& v : y) v /= r;
            acc.add(std::log(r));
        }
    } else {
        detail::LatticeStepper stepper(sys, cfg);
        for (std::int64_t j = 0; j < n_periods; ++j) {
            stepper.advance_period(y, j);
            const double r = detail::vec_norm(y);
            if (!std::isfinite(r) || r == 0.0)
                throw std::runtime_error("estimate_lattice_top_exponent: degenerate state at period " +
                                         std::to_string(j));
            for (double& v : y) v /= r;
            acc.add(std::log(r));
        }
    }
    return {acc.mu_hat(), acc.std_err(), n_periods, opts.n_batches, sys.field_noise.master_seed};
}

/// Growth rate of the phase-space pair of one selected mode along the
/// evolved trajectory (the per-mode restriction of the full evolution).
inline LyapunovEstimate projected_mode_exponent(const LatticeSystem& sys, int mode_index,
                                                std::int64_t n_periods, const IntegratorCfg& cfg,
                                                const EstimateOptions& opts = {}) {
    detail::check_estimate_preconditions(n_periods, opts.n_batches);
    if (mode_index < 0 || mode_index >= sys.n_modes)
        throw std::invalid_argument("projected_mode_exponent: mode_index out of range");
    const double T = sys.drive.period();
    detail::BatchAccumulator acc(T, n_periods, opts.n_batches);
    const auto ix = static_cast<std::size_t>(2 * mode_index);

    if (sys.field_noise.sigma == 0.0) {
        // Block-diagonal: the selected pair evolves on its own 2x2 block.
        const double w2 = sys.omega_sq[static_cast<std::size_t>(mode_index)];
        const Mat2 block = integrate_period_coeff(w2, sys.drive, nullptr, cfg);
        Vec2 v = detail::unit_start_vector(sys.field_noise.master_seed, rng::Stream::start_vector);
        for (std::int64_t j = 0; j < n_periods; ++j) {
            v = block * v;
            const double r = v.norm();
            if (!std::isfinite(r) || r == 0.0)
                throw std::runtime_error("projected_mode_exponent: degenerate pair at period " +
                                         std::to_string(j));
            v = {v.x / r, v.y / r};
            acc.add(std::log(r));
        }
        return {acc.mu_hat(), acc.std_err(), n_periods, opts.n_batches,
                sys.field_noise.master_seed};
    }

    detail::LatticeStepper stepper(sys, cfg);
    std::vector<double> y = detail::lattice_start_vector(sys);
    double pair_prev = std::hypot(y[ix], y[ix + 1]);
    if (pair_prev == 0.0)
        throw std::runtime_error("projected_mode_exponent: start vector has zero pair component");
    for (std::int64_t j = 0; j < n_periods; ++j) {
        stepper.advance_period(y, j);
        const double r = detail::vec_norm(y);
        if (!std::isfinite(r) || r == 0.0)
            throw std::runtime_error("projected_mode_exponent: degenerate state at period " +
                                     std::to_string(j));
        for (double& v : y) v /= r;
        const double pair = std::hypot(y[ix], y[ix + 1]);
        if (pair < 1e-280)
            throw std::runtime_error(
                "projected_mode_exponent: pair magnitude underflow at period " +
                std::to_string(j) + "; reduce n_periods");
        acc.add(std::log(r) + std::log(pair) - std::log(pair_prev));
        pair_prev = pair;
    }
    return {acc.mu_hat(), acc.std_err(), n_periods, opts.n_batches, sys.field_noise.master_seed};
}

struct CutoffScanRow {
    double box_length = 0.0;
    double cutoff = 0.0;
    int n_modes = 0;
    double sigma = 0.0;
    std::int64_t n_periods = 0;
    double mu_hat = 0.0;
    double std_err = 0.0;
    double mu0_max = 0.0;
    std::uint64_t seed = 0;
};

/// Top-exponent estimates across a (L, Lambda) grid for empirical cutoff
/// stabilization checks. Cells share the master seed (common random
/// numbers), so a single-cell scan reproduces the individual estimate.
inline std::vector<CutoffScanRow> cutoff_convergence_scan(
    const std::vector<double>& box_lengths, const std::vector<double>& cutoffs,
    const DriveSpec& drive, double m_chi, const NoiseSpec& field_noise, std::int64_t n_periods,
    const IntegratorCfg& cfg, const EstimateOptions& opts = {}) {
    if (box_lengths.empty() || cutoffs.empty())
        throw std::invalid_argument("cutoff_convergence_scan: lists must be non-empty");
    for (std::size_t i = 1; i < box_lengths.size(); ++i)
        if (!(box_lengths[i] > box_lengths[i - 1]))
            throw std::invalid_argument("cutoff_convergence_scan: box_lengths must ascend");
    for (std::size_t i = 1; i < cutoffs.size(); ++i)
        if (!(cutoffs[i] > cutoffs[i - 1]))
            throw std::invalid_argument("cutoff_convergence_scan: cutoffs must ascend");

    std::vector<CutoffScanRow> rows;
    rows.reserve(box_lengths.size() * cutoffs.size());
    for (double L : box_lengths) {
        for (double Lam : cutoffs) {
            const LatticeSystem sys = build_lattice_system(L, Lam, drive, m_chi, field_noise);
            const LyapunovEstimate est = estimate_lattice_top_exponent(sys, n_periods, cfg, opts);
            rows.push_back({L, Lam, sys.n_modes, field_noise.sigma, n_periods, est.mu_hat,
                            est.std_err, noiseless_max_exponent(sys, cfg),
                            field_noise.master_seed});
        }
    }
    return rows;
}

} // namespace floqnoise
