#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "floqnoise/coeffs.hpp"

/**
 * One-period transfer (monodromy) matrices of
 *
 *     x'' + c(t) x = 0,   c(t) = omega_k^2 + p(omega t) + q(t),
 *
 * and the Floquet data they carry. The phase-space system y' = A(t) y with
 * A = [[0, 1], [-c, 0]] is traceless, so the exact propagator is unimodular
 * (Wronskian conservation); the default stepper preserves that to roundoff.
 */
namespace floqnoise {

/// Real 2x2 matrix, rows (a b; c d). Columns of a propagator are the two
/// fundamental solutions (phi, phi') started from identity data.
struct Mat2 {
    double a = 1.0, b = 0.0;
    double c = 0.0, d = 1.0;

    static Mat2 identity() { return {}; }

    double det() const { return a * d - b * c; }
    double trace() const { return a + d; }

    Mat2 operator*(const Mat2& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
    }

    Mat2 transpose() const { return {a, c, b, d}; }

    Mat2 inverse() const {
        const double dt = det();
        if (dt == 0.0) throw std::invalid_argument("Mat2::inverse: singular matrix");
        return {d / dt, -b / dt, -c / dt, a / dt};
    }

    /// max |entry|
    double max_abs() const {
        return std::max(std::max(std::abs(a), std::abs(b)), std::max(std::abs(c), std::abs(d)));
    }

    bool finite() const {
        return std::isfinite(a) && std::isfinite(b) && std::isfinite(c) && std::isfinite(d);
    }
};

struct Vec2 {
    double x = 0.0, y = 0.0;

    double norm() const { return std::hypot(x, y); }
    double norm_l1() const { return std::abs(x) + std::abs(y); }
};

inline Vec2 operator*(const Mat2& m, const Vec2& v) {
    return {m.a * v.x + m.b * v.y, m.c * v.x + m.d * v.y};
}

inline double dot(const Vec2& u, const Vec2& v) { return u.x * v.x + u.y * v.y; }

enum class IntegratorMethod {
    magnus4, // 4th-order commutator-free Magnus; unimodular to roundoff
    rk4,     // classical fixed-step Runge-Kutta on the matrix system
};

struct IntegratorCfg {
    int steps_per_period = 512; // >= 16, multiple of the noise segment count
    IntegratorMethod method = IntegratorMethod::magnus4;
};

inline void validate(const IntegratorCfg& cfg) {
    if (cfg.steps_per_period < 16)
        throw std::invalid_argument("IntegratorCfg: steps_per_period must be >= 16");
}

namespace detail {

/// exp(B) for traceless B = (d0 b; c -d0), via Cayley-Hamilton: B^2 = -D I
/// with D = det B. Exactly unimodular up to roundoff for either sign of D.
inline Mat2 unimodular_exp(double d0, double b, double c) {
    const double D = -d0 * d0 - b * c;
    double cosf, sincf; // cos(sqrt(D)), sin(sqrt(D))/sqrt(D), continued to D<0
    if (D > 1e-4) {
        const double s = std::sqrt(D);
        cosf = std::cos(s);
        sincf = std::sin(s) / s;
    } else if (D < -1e-4) {
        const double s = std::sqrt(-D);
        cosf = std::cosh(s);
        sincf = std::sinh(s) / s;
    } else {
        cosf = 1.0 + D * (-0.5 + D * (1.0 / 24.0 - D / 720.0));
        sincf = 1.0 + D * (-1.0 / 6.0 + D * (1.0 / 120.0 - D / 5040.0));
    }
    return {cosf + sincf * d0, sincf * b, sincf * c, cosf - sincf * d0};
}

/// Constant-coefficient propagator of x'' + c x = 0 over time t.
inline Mat2 constant_propagator(double c, double t) { return unimodular_exp(0.0, t, -c * t); }

struct CoeffFn {
    double omega_k_sq;
    const DriveSpec* drive;
    const std::vector<double>* segment_values; // may be null (no noise)
    int steps_per_segment = 0;

    /// coefficient at time t within the period; `step` selects the noise
    /// segment so stage times at segment boundaries stay unambiguous
    double operator()(double t, int step) const {
        double c = omega_k_sq + eval_drive(*drive, t);
        if (segment_values)
            c += (*segment_values)[static_cast<std::size_t>(step / steps_per_segment)];
        return c;
    }
};

[[noreturn]] inline void throw_nonfinite(const char* where, int step) {
    throw std::runtime_error(std::string(where) + ": non-finite state at step " +
                             std::to_string(step) + " (coefficient overflow?)");
}

inline Mat2 integrate_period_impl(const CoeffFn& coeff, double T, const IntegratorCfg& cfg) {
    const int S = cfg.steps_per_period;
    const double h = T / static_cast<double>(S);
    Mat2 phi = Mat2::identity();

    if (cfg.method == IntegratorMethod::magnus4) {
        // Two-point Gauss-Legendre Magnus: Omega = h/2 (A1+A2) + sqrt(3)/12 h^2 [A2,A1],
        // which for A_i = [[0,1],[-c_i,0]] is the traceless matrix
        // [[delta, h], [-h*cbar, -delta]], delta = sqrt(3)/12 h^2 (c2 - c1).
        constexpr double gauss_off = 0.28867513459481288225; // sqrt(3)/6
        constexpr double comm_coef = 0.14433756729740644113; // sqrt(3)/12
        for (int i = 0; i < S; ++i) {
            const double t0 = static_cast<double>(i) * h;
            const double c1 = coeff(t0 + (0.5 - gauss_off) * h, i);
            const double c2 = coeff(t0 + (0.5 + gauss_off) * h, i);
            const double delta = comm_coef * h * h * (c2 - c1);
            phi = unimodular_exp(delta, h, -h * 0.5 * (c1 + c2)) * phi;
            if (!phi.finite()) throw_nonfinite("integrate_period", i);
        }
        return phi;
    }

    // Classical RK4 on the matrix system Y' = A(t) Y.
    auto apply_A = [](double c, const Mat2& m) -> Mat2 {
        return {m.c, m.d, -c * m.a, -c * m.b};
    };
    for (int i = 0; i < S; ++i) {
        const double t0 = static_cast<double>(i) * h;
        const double c0 = coeff(t0, i);
        const double cm = coeff(t0 + 0.5 * h, i);
        const double c1 = coeff(t0 + h, i);
        const Mat2 k1 = apply_A(c0, phi);
        const Mat2 k2 = apply_A(cm, {phi.a + 0.5 * h * k1.a, phi.b + 0.5 * h * k1.b,
                                     phi.c + 0.5 * h * k1.c, phi.d + 0.5 * h * k1.d});
        const Mat2 k3 = apply_A(cm, {phi.a + 0.5 * h * k2.a, phi.b + 0.5 * h * k2.b,
                                     phi.c + 0.5 * h * k2.c, phi.d + 0.5 * h * k2.d});
        const Mat2 k4 = apply_A(c1, {phi.a + h * k3.a, phi.b + h * k3.b, phi.c + h * k3.c,
                                     phi.d + h * k3.d});
        const double w = h / 6.0;
        phi = {phi.a + w * (k1.a + 2.0 * (k2.a + k3.a) + k4.a),
               phi.b + w * (k1.b + 2.0 * (k2.b + k3.b) + k4.b),
               phi.c + w * (k1.c + 2.0 * (k2.c + k3.c) + k4.c),
               phi.d + w * (k1.d + 2.0 * (k2.d + k3.d) + k4.d)};
        if (!phi.finite()) throw_nonfinite("integrate_period", i);
    }
    return phi;
}

} // namespace detail

/// Propagator of one drive period with an arbitrary constant offset in the
/// coefficient (the Schrodinger map needs offsets that no Mode can carry).
inline Mat2 integrate_period_coeff(double omega_k_sq, const DriveSpec& drive,
                                   const NoisePath* path, const IntegratorCfg& cfg) {
    validate(drive);
    validate(cfg);
    if (!std::isfinite(omega_k_sq))
        throw std::invalid_argument("integrate_period: omega_k_sq must be finite");
    detail::CoeffFn coeff{omega_k_sq, &drive, nullptr, cfg.steps_per_period};
    if (path && !path->values.empty()) {
        const int M = static_cast<int>(path->values.size());
        if (cfg.steps_per_period % M != 0)
            throw std::invalid_argument(
                "integrate_period: steps_per_period must be a multiple of the noise segment count");
        coeff.segment_values = &path->values;
        coeff.steps_per_segment = cfg.steps_per_period / M;
    }
    return detail::integrate_period_impl(coeff, drive.period(), cfg);
}

/// Phi(T, 0) of one period, from identity initial data.
inline Mat2 integrate_period(const Mode& mode, const DriveSpec& drive, const NoisePath* path,
                             const IntegratorCfg& cfg) {
    validate(mode);
    return integrate_period_coeff(mode.omega_k_sq(), drive, path, cfg);
}

inline Mat2 integrate_period(const Mode& mode, const DriveSpec& drive, const IntegratorCfg& cfg) {
    return integrate_period(mode, drive, nullptr, cfg);
}

enum class StabilityRegime { elliptic, hyperbolic, parabolic };

inline const char* to_string(StabilityRegime r) {
    switch (r) {
    case StabilityRegime::elliptic: return "elliptic";
    case StabilityRegime::hyperbolic: return "hyperbolic";
    case StabilityRegime::parabolic: return "parabolic";
    }
    return "?";
}

/// Floquet data per unit time: solutions scale as exp((mu + i alpha) t).
/// alpha is reported in the principal branch [0, pi/T].
struct FloquetResult {
    double mu = 0.0;    // growth rate >= 0
    double alpha = 0.0; // rotation number
    StabilityRegime regime = StabilityRegime::elliptic;
};

/// |trace| - 2 below this is classified parabolic; below integrator
/// accuracy the distinction is meaningless.
inline constexpr double kParabolicEps = 1e-10;

inline FloquetResult floquet_from_monodromy(const Mat2& m, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("floquet_from_monodromy: T must be > 0");
    if (std::abs(m.det() - 1.0) > 1e-6)
        throw std::invalid_argument("floquet_from_monodromy: |det - 1| = " +
                                    std::to_string(std::abs(m.det() - 1.0)) +
                                    " exceeds 1e-6; not a unimodular monodromy");
    const double tr = m.trace();
    FloquetResult r;
    if (std::abs(tr) > 2.0 + kParabolicEps) {
        r.regime = StabilityRegime::hyperbolic;
        r.mu = std::acosh(0.5 * std::abs(tr)) / T;
        r.alpha = tr > 0.0 ? 0.0 : kTwoPi / (2.0 * T); // pi/T
    } else if (std::abs(tr) < 2.0 - kParabolicEps) {
        r.regime = StabilityRegime::elliptic;
        r.mu = 0.0;
        r.alpha = std::acos(0.5 * tr) / T;
    } else {
        r.regime = StabilityRegime::parabolic;
        r.mu = 0.0;
        r.alpha = tr > 0.0 ? 0.0 : kTwoPi / (2.0 * T);
    }
    return r;
}

inline FloquetResult noiseless_exponent_coeff(double omega_k_sq, const DriveSpec& drive,
                                              const IntegratorCfg& cfg) {
    return floquet_from_monodromy(integrate_period_coeff(omega_k_sq, drive, nullptr, cfg),
                                  drive.period());
}

inline FloquetResult noiseless_exponent(const Mode& mode, const DriveSpec& drive,
                                        const IntegratorCfg& cfg) {
    validate(mode);
    return noiseless_exponent_coeff(mode.omega_k_sq(), drive, cfg);
}

struct ChartRow {
    double k = 0.0;
    double P = 0.0;
    double mu = 0.0;
    double alpha = 0.0;
    StabilityRegime regime = StabilityRegime::elliptic;
};

/// Noiseless stability chart over a (k, P) grid, row-major in k then P.
inline std::vector<ChartRow> compute_chart(const std::vector<double>& k_grid,
                                           const std::vector<double>& p_grid,
                                           const DriveSpec& drive_template,
                                           const Mode& mode_template, const IntegratorCfg& cfg) {
    if (k_grid.empty() || p_grid.empty())
        throw std::invalid_argument("compute_chart: grids must be non-empty");
    for (std::size_t i = 1; i < k_grid.size(); ++i)
        if (!(k_grid[i] > k_grid[i - 1]))
            throw std::invalid_argument("compute_chart: k_grid must be sorted ascending");
    for (std::size_t i = 1; i < p_grid.size(); ++i)
        if (!(p_grid[i] > p_grid[i - 1]))
            throw std::invalid_argument("compute_chart: P_grid must be sorted ascending");

    std::vector<ChartRow> rows;
    rows.reserve(k_grid.size() * p_grid.size());
    for (double k : k_grid) {
        Mode mode = mode_template;
        mode.k = k;
        for (double P : p_grid) {
            DriveSpec drive = drive_template;
            drive.amplitude = P;
            const FloquetResult f = noiseless_exponent(mode, drive, cfg);
            rows.push_back({k, P, f.mu, f.alpha, f.regime});
        }
    }
    return rows;
}

} // namespace floqnoise
