#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "floqnoise/rng.hpp"

/**
 * Coefficient processes of the oscillator equation
 *
 *     x'' + (omega_k^2 + p(omega t) + q(t)) x = 0,
 *
 * a deterministic periodic drive p and a random piecewise-constant noise q.
 * The noise is constant on M equal subintervals of each drive period, with
 * i.i.d. zero-mean values across segments and periods; sampling is a pure
 * function of (master_seed, period index, segment index).
 */
namespace floqnoise {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

enum class DriveShape { cosine, fourier_series };

/// Periodic drive p(omega t) with period T = 2*pi/omega.
/// cosine:         p(theta) = amplitude * cos(theta)
/// fourier_series: p(theta) = amplitude * sum_h [ fc[h-1] cos(h theta) + fs[h-1] sin(h theta) ]
struct DriveSpec {
    DriveShape shape = DriveShape::cosine;
    double amplitude = 0.0; // P >= 0
    double omega = 1.0;     // angular frequency > 0
    std::vector<double> fourier_cos; // harmonic h = index + 1
    std::vector<double> fourier_sin;

    double period() const { return kTwoPi / omega; }
};

inline void validate(const DriveSpec& d) {
    if (!(d.omega > 0.0) || !std::isfinite(d.omega))
        throw std::invalid_argument("DriveSpec: omega must be finite and > 0");
    if (d.amplitude < 0.0 || !std::isfinite(d.amplitude))
        throw std::invalid_argument("DriveSpec: amplitude must be finite and >= 0");
    if (d.shape == DriveShape::cosine && (!d.fourier_cos.empty() || !d.fourier_sin.empty()))
        throw std::invalid_argument("DriveSpec: fourier coefficients given for cosine shape");
}

inline double eval_drive(const DriveSpec& d, double t) {
    const double theta = d.omega * t;
    if (d.shape == DriveShape::cosine) return d.amplitude * std::cos(theta);
    double acc = 0.0;
    for (std::size_t i = 0; i < d.fourier_cos.size(); ++i)
        acc += d.fourier_cos[i] * std::cos(static_cast<double>(i + 1) * theta);
    for (std::size_t i = 0; i < d.fourier_sin.size(); ++i)
        acc += d.fourier_sin[i] * std::sin(static_cast<double>(i + 1) * theta);
    return d.amplitude * acc;
}

/// A single Fourier mode of the field: omega_k^2 = k^2 + m_chi^2.
struct Mode {
    double k = 0.0;     // wavenumber >= 0
    double m_chi = 0.0; // field mass >= 0

    double omega_k_sq() const { return k * k + m_chi * m_chi; }
};

inline void validate(const Mode& m) {
    if (m.k < 0.0 || !std::isfinite(m.k))
        throw std::invalid_argument("Mode: k must be finite and >= 0");
    if (m.m_chi < 0.0 || !std::isfinite(m.m_chi))
        throw std::invalid_argument("Mode: m_chi must be finite and >= 0");
}

enum class NoiseDistribution { uniform, gaussian };

/// Statistical law of the noise process q. Values are i.i.d. zero-mean:
/// uniform on [-sigma, sigma], or gaussian with std dev sigma truncated at
/// 6 sigma (keeps the integrator's coefficients bounded).
struct NoiseSpec {
    double sigma = 0.0;
    NoiseDistribution distribution = NoiseDistribution::uniform;
    int segments_per_period = 16; // M >= 1
    std::uint64_t master_seed = 0;
};

inline void validate(const NoiseSpec& n) {
    if (n.sigma < 0.0 || !std::isfinite(n.sigma))
        throw std::invalid_argument("NoiseSpec: sigma must be finite and >= 0");
    if (n.segments_per_period < 1)
        throw std::invalid_argument("NoiseSpec: segments_per_period must be >= 1");
}

/// Realization of q on one drive period: values[s] holds the constant value
/// on subinterval s of M equal subintervals.
struct NoisePath {
    std::int64_t period_index = 0;
    std::vector<double> values;
};

namespace detail {
inline double noise_value(const NoiseSpec& spec, std::int64_t period_index, int segment) {
    const std::uint64_t k =
        rng::key(spec.master_seed, rng::Stream::noise_segment,
                 static_cast<std::uint64_t>(period_index), static_cast<std::uint64_t>(segment));
    switch (spec.distribution) {
    case NoiseDistribution::uniform:
        return spec.sigma * rng::uniform_sym(k);
    case NoiseDistribution::gaussian:
        return spec.sigma * rng::gaussian_truncated(k);
    }
    return 0.0;
}
} // namespace detail

/// Samples the noise realization for one period. sigma = 0 yields exact
/// zeros regardless of seed or distribution.
inline NoisePath sample_noise(const NoiseSpec& spec, std::int64_t period_index) {
    validate(spec);
    if (period_index < 0) throw std::invalid_argument("sample_noise: period_index must be >= 0");
    NoisePath path;
    path.period_index = period_index;
    path.values.resize(static_cast<std::size_t>(spec.segments_per_period), 0.0);
    if (spec.sigma == 0.0) return path;
    for (int s = 0; s < spec.segments_per_period; ++s)
        path.values[static_cast<std::size_t>(s)] = detail::noise_value(spec, period_index, s);
    return path;
}

/// Evaluates q(t) for a t inside the period covered by `path`.
inline double eval_noise(const NoisePath& path, const NoiseSpec& spec, const DriveSpec& drive,
                         double t) {
    const double T = drive.period();
    const double t0 = static_cast<double>(path.period_index) * T;
    if (t < t0 || t >= t0 + T)
        throw std::invalid_argument("eval_noise: t=" + std::to_string(t) +
                                    " lies outside period " + std::to_string(path.period_index));
    const int M = spec.segments_per_period;
    auto seg = static_cast<std::size_t>(std::floor(static_cast<double>(M) * (t - t0) / T));
    if (seg >= path.values.size()) seg = path.values.size() - 1; // guard rounding at t0 + T
    return path.values[seg];
}

} // namespace floqnoise
