#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "floqnoise/randprod.hpp"

/**
 * Time -> space duality: the oscillator toolkit applied to the 1-D
 * time-independent Schrodinger equation
 *
 *     -psi''/(2m) + (V_p(omega x) + V_R(x)) psi = E psi,
 *
 * by the substitutions t -> x, omega_k^2 -> 2mE, p -> -2m V_p, q -> -2m V_R.
 * The spatial Lyapunov exponent of the mapped transfer-matrix product is the
 * inverse localization length; this module adds no numerics of its own.
 */
namespace floqnoise {

struct SchrodingerParams {
    double energy = 0.0;
    double mass = 0.5; // with m = 1/2, energies equal squared wavenumbers
    DriveSpec periodic_potential; // V_p: amplitude and spatial frequency omega
    NoiseSpec random_potential;   // V_R: amplitude sigma, segments per period, seed
};

inline void validate(const SchrodingerParams& sp) {
    if (!(sp.mass > 0.0) || !std::isfinite(sp.mass))
        throw std::invalid_argument("SchrodingerParams: mass must be finite and > 0");
    if (!std::isfinite(sp.energy))
        throw std::invalid_argument("SchrodingerParams: energy must be finite");
    validate(sp.periodic_potential);
    validate(sp.random_potential);
}

/// Oscillator-side image of a Schrodinger problem. omega_k_sq = 2mE may be
/// negative (evanescent regime: flagged, not rejected). The drive carries
/// p = -2m V_p via negated Fourier coefficients, keeping amplitude >= 0;
/// the noise maps to sigma_osc = 2m sigma_R (the sign flip is absorbed by
/// the symmetry of the zero-mean distributions).
struct MappedOscillator {
    double omega_k_sq = 0.0;
    bool evanescent = false;
    DriveSpec drive;
    NoiseSpec noise;
};

inline MappedOscillator map_to_oscillator(const SchrodingerParams& sp) {
    validate(sp);
    const double two_m = 2.0 * sp.mass;
    MappedOscillator out;
    out.omega_k_sq = two_m * sp.energy;
    out.evanescent = out.omega_k_sq < 0.0;

    const DriveSpec& vp = sp.periodic_potential;
    out.drive.shape = DriveShape::fourier_series;
    out.drive.omega = vp.omega;
    out.drive.amplitude = two_m * vp.amplitude;
    if (vp.shape == DriveShape::cosine) {
        out.drive.fourier_cos = {-1.0};
    } else {
        out.drive.fourier_cos = vp.fourier_cos;
        out.drive.fourier_sin = vp.fourier_sin;
        for (double& c : out.drive.fourier_cos) c = -c;
        for (double& s : out.drive.fourier_sin) s = -s;
    }

    out.noise = sp.random_potential;
    out.noise.sigma = two_m * sp.random_potential.sigma;
    return out;
}

/// Inverse of map_to_oscillator for a given mass. The single-coefficient
/// pattern {-1} is folded back to the cosine shape.
inline SchrodingerParams inverse_map(const MappedOscillator& osc, double mass) {
    if (!(mass > 0.0)) throw std::invalid_argument("inverse_map: mass must be > 0");
    const double two_m = 2.0 * mass;
    SchrodingerParams sp;
    sp.mass = mass;
    sp.energy = osc.omega_k_sq / two_m;

    sp.periodic_potential.omega = osc.drive.omega;
    sp.periodic_potential.amplitude = osc.drive.amplitude / two_m;
    if (osc.drive.fourier_cos == std::vector<double>{-1.0} && osc.drive.fourier_sin.empty()) {
        sp.periodic_potential.shape = DriveShape::cosine;
    } else {
        sp.periodic_potential.shape = DriveShape::fourier_series;
        sp.periodic_potential.fourier_cos = osc.drive.fourier_cos;
        sp.periodic_potential.fourier_sin = osc.drive.fourier_sin;
        for (double& c : sp.periodic_potential.fourier_cos) c = -c;
        for (double& s : sp.periodic_potential.fourier_sin) s = -s;
    }

    sp.random_potential = osc.noise;
    sp.random_potential.sigma = osc.noise.sigma / two_m;
    return sp;
}

/// mu is the inverse localization length per unit length; xi = 1/mu is
/// reported only when mu is statistically resolved away from zero.
struct LocalizationResult {
    double mu = 0.0;
    double std_err = 0.0;
    std::optional<double> xi;
};

inline LocalizationResult localization_length(const SchrodingerParams& sp,
                                              std::int64_t n_periods, const IntegratorCfg& cfg,
                                              const EstimateOptions& opts = {}) {
    if (n_periods < 1000)
        throw std::invalid_argument("localization_length: n_periods must be >= 1000");
    const MappedOscillator osc = map_to_oscillator(sp);
    const LyapunovEstimate est =
        estimate_lyapunov_coeff(osc.omega_k_sq, osc.drive, osc.noise, n_periods, cfg, opts);
    LocalizationResult res;
    res.std_err = est.std_err;
    res.mu = std::max(0.0, est.mu_hat);
    if (est.mu_hat - 2.0 * est.std_err > 0.0) res.xi = 1.0 / est.mu_hat;
    return res;
}

enum class SpectralClass { band, gap, edge };

inline const char* to_string(SpectralClass c) {
    switch (c) {
    case SpectralClass::band: return "band";
    case SpectralClass::gap: return "gap";
    case SpectralClass::edge: return "edge";
    }
    return "?";
}

/// Noiseless band/gap classification by the monodromy-trace criterion:
/// elliptic -> band (oscillatory Bloch states), hyperbolic -> gap.
inline SpectralClass classify_energy(const SchrodingerParams& sp, const IntegratorCfg& cfg) {
    SchrodingerParams noiseless = sp;
    noiseless.random_potential.sigma = 0.0;
    const MappedOscillator osc = map_to_oscillator(noiseless);
    const FloquetResult f = noiseless_exponent_coeff(osc.omega_k_sq, osc.drive, cfg);
    switch (f.regime) {
    case StabilityRegime::elliptic: return SpectralClass::band;
    case StabilityRegime::hyperbolic: return SpectralClass::gap;
    case StabilityRegime::parabolic: return SpectralClass::edge;
    }
    return SpectralClass::edge;
}

struct BandScanRow {
    double energy = 0.0;
    SpectralClass spectral_class = SpectralClass::band;
    double mu_noiseless = 0.0;
    double mu_noisy = 0.0;
    double std_err = 0.0;
    std::optional<double> xi;
    std::uint64_t seed = 0;
};

/// Per-energy classification plus noisy localization over an energy grid.
inline std::vector<BandScanRow> band_scan(const std::vector<double>& energies,
                                          const SchrodingerParams& sp_template,
                                          std::int64_t n_periods, const IntegratorCfg& cfg,
                                          const EstimateOptions& opts = {}) {
    if (energies.empty()) throw std::invalid_argument("band_scan: energy grid must be non-empty");
    for (std::size_t i = 1; i < energies.size(); ++i)
        if (!(energies[i] > energies[i - 1]))
            throw std::invalid_argument("band_scan: energy grid must be sorted ascending");

    std::vector<BandScanRow> rows;
    rows.reserve(energies.size());
    for (double E : energies) {
        SchrodingerParams sp = sp_template;
        sp.energy = E;
        BandScanRow row;
        row.energy = E;
        row.seed = sp.random_potential.master_seed;
        row.spectral_class = classify_energy(sp, cfg);

        SchrodingerParams noiseless = sp;
        noiseless.random_potential.sigma = 0.0;
        const MappedOscillator osc0 = map_to_oscillator(noiseless);
        row.mu_noiseless = noiseless_exponent_coeff(osc0.omega_k_sq, osc0.drive, cfg).mu;

        const LocalizationResult loc = localization_length(sp, n_periods, cfg, opts);
        row.mu_noisy = loc.mu;
        row.std_err = loc.std_err;
        row.xi = loc.xi;
        rows.push_back(row);
    }
    return rows;
}

} // namespace floqnoise
