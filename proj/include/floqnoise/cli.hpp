#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "floqnoise/anderson.hpp"
#include "floqnoise/lattice.hpp"
#include "floqnoise/monodromy.hpp"
#include "floqnoise/randprod.hpp"
#include "floqnoise/version.hpp"

/**
 * Command-line front end: JSON run configuration -> CSV output with a
 * sidecar metadata file. (config bytes) -> (output bytes) is a pure
 * function: cell seeds derive from (master_seed, cell index), workers only
 * partition the cells, and rows are written in cell order with fixed
 * 17-significant-digit formatting.
 */
namespace floqnoise::cli {

enum class Command { chart, lyap, theorem1, lattice, anderson, oracle };

inline const char* to_string(Command c) {
    switch (c) {
    case Command::chart: return "chart";
    case Command::lyap: return "lyap";
    case Command::theorem1: return "theorem1";
    case Command::lattice: return "lattice";
    case Command::anderson: return "anderson";
    case Command::oracle: return "oracle";
    }
    return "?";
}

/// Carries every validation problem found, not just the first.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> errors)
        : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

    const std::vector<std::string>& errors() const { return errors_; }

private:
    static std::string join(const std::vector<std::string>& errors) {
        std::string all = "invalid config:";
        for (const auto& e : errors) {
            all += "\n  ";
            all += e;
        }
        return all;
    }
    std::vector<std::string> errors_;
};

struct ChartParams {
    std::vector<double> k_grid;
    std::vector<double> p_grid;
    DriveSpec drive; // amplitude comes from p_grid rows
    double m_chi = 0.0;
    IntegratorCfg integrator;
};

struct LyapParams {
    std::vector<double> k_values;
    std::vector<double> sigma_values;
    double m_chi = 0.0;
    DriveSpec drive;
    NoiseSpec noise;
    std::int64_t n_periods = 1000;
    int n_batches = 10;
    IntegratorCfg integrator;
};

struct Theorem1Params {
    double k = 0.0;
    double m_chi = 0.0;
    DriveSpec drive;
    NoiseSpec noise;
    std::int64_t n_periods = 1000;
    int n_seeds = 20;
    IntegratorCfg integrator;
};

struct LatticeParams {
    std::vector<double> box_lengths;
    std::vector<double> cutoffs;
    double m_chi = 0.0;
    DriveSpec drive;
    NoiseSpec field_noise;
    std::int64_t n_periods = 1000;
    IntegratorCfg integrator;
};

struct AndersonParams {
    std::vector<double> energies;
    double mass = 0.5;
    DriveSpec periodic_potential;
    NoiseSpec random_potential;
    std::int64_t n_periods = 2000;
    IntegratorCfg integrator;
};

struct OracleParams {
    int n_trials = 100;
    double c_min = -1.5;
    double c_max = 5.0;
    double omega_min = 1.0;
    double omega_max = 3.0;
    IntegratorCfg integrator;
};

struct RunConfig {
    Command command = Command::chart;
    std::uint64_t master_seed = 0;
    std::string output_path;
    int n_workers = 1;
    std::variant<ChartParams, LyapParams, Theorem1Params, LatticeParams, AndersonParams,
                 OracleParams>
        params;
    std::string raw_bytes; // hashed into the sidecar metadata
};

namespace detail {

using nlohmann::json;

/// Collects typed values and validation errors with full key paths.
class Validator {
public:
    bool ok() const { return errors_.empty(); }
    std::vector<std::string>& errors() { return errors_; }

    void fail(const std::string& path, const std::string& msg) { errors_.push_back(path + ": " + msg); }

    void check_keys(const json& j, const std::string& path,
                    const std::vector<const char*>& known) {
        if (!j.is_object()) {
            fail(path, "expected an object");
            return;
        }
        for (const auto& item : j.items()) {
            bool found = false;
            for (const char* k : known)
                if (item.key() == k) {
                    found = true;
                    break;
                }
            if (!found) fail(path + "." + item.key(), "unknown key");
        }
    }

    double number(const json& j, const std::string& path, const char* key, double def,
                  double min_v, double max_v) {
        if (!j.contains(key)) {
            if (def < min_v || def > max_v) fail(path + "." + key, "missing required key");
            return def;
        }
        const auto& v = j.at(key);
        if (!v.is_number()) {
            fail(path + "." + key, "expected a number");
            return def;
        }
        const double x = v.get<double>();
        if (!(x >= min_v) || !(x <= max_v)) {
            fail(path + "." + key,
                 "value " + std::to_string(x) + " outside [" + std::to_string(min_v) + ", " +
                     std::to_string(max_v) + "]");
            return def;
        }
        return x;
    }

    std::int64_t integer(const json& j, const std::string& path, const char* key,
                         std::int64_t def, std::int64_t min_v, std::int64_t max_v) {
        if (!j.contains(key)) {
            if (def < min_v || def > max_v) fail(path + "." + key, "missing required key");
            return def;
        }
        const auto& v = j.at(key);
        if (!v.is_number_integer() && !v.is_number_unsigned()) {
            fail(path + "." + key, "expected an integer");
            return def;
        }
        const auto x = v.get<std::int64_t>();
        if (x < min_v || x > max_v) {
            fail(path + "." + key,
                 "value " + std::to_string(x) + " outside [" + std::to_string(min_v) + ", " +
                     std::to_string(max_v) + "]");
            return def;
        }
        return x;
    }

    std::uint64_t seed(const json& j, const std::string& path, const char* key,
                       std::uint64_t def) {
        if (!j.contains(key)) return def;
        const auto& v = j.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            fail(path + "." + key, "expected a non-negative integer");
            return def;
        }
        return v.get<std::uint64_t>();
    }

    std::string text(const json& j, const std::string& path, const char* key,
                     const std::string& def) {
        if (!j.contains(key)) return def;
        const auto& v = j.at(key);
        if (!v.is_string()) {
            fail(path + "." + key, "expected a string");
            return def;
        }
        return v.get<std::string>();
    }

private:
    std::vector<std::string> errors_;
};

inline DriveSpec parse_drive(Validator& v, const json& j, const std::string& path,
                             bool allow_amplitude = true) {
    DriveSpec d;
    if (!j.is_object()) {
        v.fail(path, "expected an object");
        return d;
    }
    v.check_keys(j, path, {"shape", "amplitude", "omega", "fourier_cos", "fourier_sin"});
    const std::string shape = v.text(j, path, "shape", "cosine");
    if (shape == "cosine") {
        d.shape = DriveShape::cosine;
    } else if (shape == "fourier_series") {
        d.shape = DriveShape::fourier_series;
    } else {
        v.fail(path + ".shape", "must be \"cosine\" or \"fourier_series\"");
    }
    d.omega = v.number(j, path, "omega", 1.0, 1e-9, 1e9);
    d.amplitude = v.number(j, path, "amplitude", 0.0, 0.0, 1e12);
    if (!allow_amplitude && j.contains("amplitude"))
        v.fail(path + ".amplitude", "not allowed here (amplitudes come from p_grid)");
    for (const char* key : {"fourier_cos", "fourier_sin"}) {
        if (!j.contains(key)) continue;
        if (d.shape != DriveShape::fourier_series) {
            v.fail(path + "." + key, "only allowed for shape \"fourier_series\"");
            continue;
        }
        const auto& arr = j.at(key);
        if (!arr.is_array()) {
            v.fail(path + "." + key, "expected an array of numbers");
            continue;
        }
        std::vector<double> coeffs;
        for (const auto& e : arr) {
            if (!e.is_number()) {
                v.fail(path + "." + key, "expected an array of numbers");
                coeffs.clear();
                break;
            }
            coeffs.push_back(e.get<double>());
        }
        (key == std::string_view("fourier_cos") ? d.fourier_cos : d.fourier_sin) =
            std::move(coeffs);
    }
    if (d.shape == DriveShape::fourier_series && d.fourier_cos.empty() && d.fourier_sin.empty())
        v.fail(path, "fourier_series needs fourier_cos and/or fourier_sin");
    return d;
}

inline NoiseSpec parse_noise(Validator& v, const json& j, const std::string& path) {
    NoiseSpec n;
    if (!j.is_object()) {
        v.fail(path, "expected an object");
        return n;
    }
    v.check_keys(j, path, {"sigma", "distribution", "segments_per_period"});
    n.sigma = v.number(j, path, "sigma", 0.0, 0.0, 1e12);
    const std::string dist = v.text(j, path, "distribution", "uniform");
    if (dist == "uniform") {
        n.distribution = NoiseDistribution::uniform;
    } else if (dist == "gaussian") {
        n.distribution = NoiseDistribution::gaussian;
    } else {
        v.fail(path + ".distribution", "must be \"uniform\" or \"gaussian\"");
    }
    n.segments_per_period =
        static_cast<int>(v.integer(j, path, "segments_per_period", 16, 1, 65536));
    return n;
}

inline IntegratorCfg parse_integrator(Validator& v, const json& j, const std::string& path) {
    IntegratorCfg cfg;
    if (j.is_null()) return cfg;
    if (!j.is_object()) {
        v.fail(path, "expected an object");
        return cfg;
    }
    v.check_keys(j, path, {"steps_per_period", "method"});
    cfg.steps_per_period =
        static_cast<int>(v.integer(j, path, "steps_per_period", 512, 16, 1 << 20));
    const std::string method = v.text(j, path, "method", "magnus4");
    if (method == "magnus4") {
        cfg.method = IntegratorMethod::magnus4;
    } else if (method == "rk4") {
        cfg.method = IntegratorMethod::rk4;
    } else {
        v.fail(path + ".method", "must be \"magnus4\" or \"rk4\"");
    }
    return cfg;
}

/// Grid: either an explicit ascending array or {"min": a, "max": b, "count": n}.
inline std::vector<double> parse_grid(Validator& v, const json& j, const std::string& path,
                                      double min_allowed) {
    std::vector<double> grid;
    if (j.is_array()) {
        for (const auto& e : j) {
            if (!e.is_number()) {
                v.fail(path, "expected numbers in the grid array");
                return {};
            }
            grid.push_back(e.get<double>());
        }
    } else if (j.is_object()) {
        v.check_keys(j, path, {"min", "max", "count"});
        for (const char* key : {"min", "max", "count"})
            if (!j.contains(key)) v.fail(path + "." + key, "missing required key");
        if (!v.ok()) return {};
        const double lo = v.number(j, path, "min", 1.0, -1e12, 1e12);
        const double hi = v.number(j, path, "max", 1.0, -1e12, 1e12);
        const auto count = v.integer(j, path, "count", 1, 1, 1000000);
        if (!v.ok()) return {};
        if (count == 1) {
            grid.push_back(lo);
        } else {
            if (!(hi > lo)) {
                v.fail(path, "max must exceed min");
                return {};
            }
            for (std::int64_t i = 0; i < count; ++i)
                grid.push_back(lo + (hi - lo) * static_cast<double>(i) /
                                        static_cast<double>(count - 1));
        }
    } else {
        v.fail(path, "expected an array or {min, max, count}");
        return {};
    }
    if (grid.empty()) v.fail(path, "grid must be non-empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] < min_allowed)
            v.fail(path, "value " + std::to_string(grid[i]) + " below minimum " +
                             std::to_string(min_allowed));
        if (i > 0 && !(grid[i] > grid[i - 1])) {
            v.fail(path, "grid must be strictly ascending");
            break;
        }
    }
    return grid;
}

inline void parse_lyap_preconditions(Validator& v, const std::string& path, std::int64_t n_periods,
                                     int n_batches) {
    if (n_periods % n_batches != 0)
        v.fail(path + ".n_periods", "n_batches (" + std::to_string(n_batches) +
                                        ") must divide n_periods (" + std::to_string(n_periods) +
                                        ")");
}

inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

/// Runs cells[0..n) on up to n_workers threads; each cell must be a pure
/// function of its index. Results land in submission order.
inline std::vector<std::string> run_cells(const std::vector<std::function<std::string()>>& cells,
                                          int n_workers) {
    std::vector<std::string> results(cells.size());
    if (cells.empty()) return results;
    const int workers = std::max(1, std::min<int>(n_workers, static_cast<int>(cells.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) results[i] = cells[i]();
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= cells.size()) return;
                    results[i] = cells[i]();
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

} // namespace detail

/// Parses and fully validates a JSON run configuration. Throws ConfigError
/// carrying every problem found (path-qualified), never just the first.
inline RunConfig parse_config(std::string_view text) {
    detail::Validator v;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError({std::string("malformed JSON: ") + e.what()});
    }
    if (!j.is_object()) throw ConfigError({"top-level: expected an object"});

    RunConfig cfg;
    cfg.raw_bytes.assign(text.begin(), text.end());

    const std::string cmd = v.text(j, "config", "command", "");
    if (cmd == "chart") cfg.command = Command::chart;
    else if (cmd == "lyap") cfg.command = Command::lyap;
    else if (cmd == "theorem1") cfg.command = Command::theorem1;
    else if (cmd == "lattice") cfg.command = Command::lattice;
    else if (cmd == "anderson") cfg.command = Command::anderson;
    else if (cmd == "oracle") cfg.command = Command::oracle;
    else {
        v.fail("config.command", cmd.empty() ? "missing required key"
                                             : "unknown command \"" + cmd + "\"");
        throw ConfigError(std::move(v.errors()));
    }

    cfg.master_seed = v.seed(j, "config", "master_seed", 0);
    cfg.output_path = v.text(j, "config", "output_path", std::string(cmd) + ".csv");
    cfg.n_workers = static_cast<int>(v.integer(j, "config", "n_workers", 1, 1, 4096));

    const auto common_keys = {"command", "master_seed", "output_path", "n_workers"};

    switch (cfg.command) {
    case Command::chart: {
        std::vector<const char*> keys(common_keys);
        for (const char* k : {"drive", "m_chi", "k_grid", "p_grid", "integrator"})
            keys.push_back(k);
        v.check_keys(j, "config", keys);
        ChartParams p;
        p.drive = detail::parse_drive(v, j.value("drive", nlohmann::json::object()), "config.drive",
                                      /*allow_amplitude=*/false);
        p.m_chi = v.number(j, "config", "m_chi", 0.0, 0.0, 1e9);
        if (j.contains("k_grid")) p.k_grid = detail::parse_grid(v, j.at("k_grid"), "config.k_grid", 0.0);
        else v.fail("config.k_grid", "missing required key");
        if (j.contains("p_grid")) p.p_grid = detail::parse_grid(v, j.at("p_grid"), "config.p_grid", 0.0);
        else v.fail("config.p_grid", "missing required key");
        p.integrator =
            detail::parse_integrator(v, j.value("integrator", nlohmann::json()), "config.integrator");
        cfg.params = std::move(p);
        break;
    }
    case Command::lyap: {
        std::vector<const char*> keys(common_keys);
        for (const char* k :
             {"drive", "noise", "m_chi", "k_values", "sigma_values", "n_periods", "n_batches",
              "integrator"})
            keys.push_back(k);
        v.check_keys(j, "config", keys);
        LyapParams p;
        p.drive = detail::parse_drive(v, j.value("drive", nlohmann::json::object()), "config.drive");
        p.noise = detail::parse_noise(v, j.value("noise", nlohmann::json::object()), "config.noise");
        p.m_chi = v.number(j, "config", "m_chi", 0.0, 0.0, 1e9);
        if (j.contains("k_values"))
            p.k_values = detail::parse_grid(v, j.at("k_values"), "config.k_values", 0.0);
        else v.fail("config.k_values", "missing required key");
        if (j.contains("sigma_values"))
            p.sigma_values = detail::parse_grid(v, j.at("sigma_values"), "config.sigma_values", 0.0);
        else p.sigma_values = {p.noise.sigma};
        p.n_periods = v.integer(j, "config", "n_periods", 1000, 100, 100000000);
        p.n_batches = static_cast<int>(v.integer(j, "config", "n_batches", 10, 2, 1000));
        detail::parse_lyap_preconditions(v, "config", p.n_periods, p.n_batches);
        p.integrator =
            detail::parse_integrator(v, j.value("integrator", nlohmann::json()), "config.integrator");
        cfg.params = std::move(p);
        break;
    }
    case Command::theorem1: {
        std::vector<const char*> keys(common_keys);
        for (const char* k : {"drive", "noise", "k", "m_chi", "n_periods", "n_seeds", "integrator"})
            keys.push_back(k);
        v.check_keys(j, "config", keys);
        Theorem1Params p;
        p.drive = detail::parse_drive(v, j.value("drive", nlohmann::json::object()), "config.drive");
        p.noise = detail::parse_noise(v, j.value("noise", nlohmann::json::object()), "config.noise");
        p.k = v.number(j, "config", "k", 0.0, 0.0, 1e9);
        p.m_chi = v.number(j, "config", "m_chi", 0.0, 0.0, 1e9);
        p.n_periods = v.integer(j, "config", "n_periods", 1000, 100, 100000000);
        p.n_seeds = static_cast<int>(v.integer(j, "config", "n_seeds", 20, 20, 100000));
        detail::parse_lyap_preconditions(v, "config", p.n_periods, 10);
        p.integrator =
            detail::parse_integrator(v, j.value("integrator", nlohmann::json()), "config.integrator");
        cfg.params = std::move(p);
        break;
    }
    case Command::lattice: {
        std::vector<const char*> keys(common_keys);
        for (const char* k :
             {"drive", "field_noise", "m_chi", "box_lengths", "cutoffs", "n_periods", "integrator"})
            keys.push_back(k);
        v.check_keys(j, "config", keys);
        LatticeParams p;
        p.drive = detail::parse_drive(v, j.value("drive", nlohmann::json::object()), "config.drive");
        p.field_noise =
            detail::parse_noise(v, j.value("field_noise", nlohmann::json::object()), "config.field_noise");
        p.m_chi = v.number(j, "config", "m_chi", 0.0, 0.0, 1e9);
        if (j.contains("box_lengths"))
            p.box_lengths = detail::parse_grid(v, j.at("box_lengths"), "config.box_lengths", 1e-9);
        else v.fail("config.box_lengths", "missing required key");
        if (j.contains("cutoffs"))
            p.cutoffs = detail::parse_grid(v, j.at("cutoffs"), "config.cutoffs", 1e-9);
        else v.fail("config.cutoffs", "missing required key");
        p.n_periods = v.integer(j, "config", "n_periods", 1000, 100, 100000000);
        detail::parse_lyap_preconditions(v, "config", p.n_periods, 10);
        p.integrator =
            detail::parse_integrator(v, j.value("integrator", nlohmann::json()), "config.integrator");
        // refuse oversized systems before any computation starts
        if (v.ok()) {
            for (double L : p.box_lengths)
                for (double lam : p.cutoffs) {
                    const int n = 2 * static_cast<int>(std::floor(lam * L / kTwoPi + 1e-9)) + 1;
                    if (n > kLatticeModeCap) {
                        v.fail("config.cutoffs", "L=" + std::to_string(L) + ", Lambda=" +
                                                     std::to_string(lam) + " retains n=" +
                                                     std::to_string(n) + " modes > cap " +
                                                     std::to_string(kLatticeModeCap));
                    }
                }
        }
        cfg.params = std::move(p);
        break;
    }
    case Command::anderson: {
        std::vector<const char*> keys(common_keys);
        for (const char* k :
             {"periodic_potential", "random_potential", "mass", "energies", "n_periods",
              "integrator"})
            keys.push_back(k);
        v.check_keys(j, "config", keys);
        AndersonParams p;
        p.periodic_potential = detail::parse_drive(
            v, j.value("periodic_potential", nlohmann::json::object()), "config.periodic_potential");
        p.random_potential = detail::parse_noise(
            v, j.value("random_potential", nlohmann::json::object()), "config.random_potential");
        p.mass = v.number(j, "config", "mass", 0.5, 1e-12, 1e9);
        if (j.contains("energies"))
            p.energies = detail::parse_grid(v, j.at("energies"), "config.energies", -1e12);
        else v.fail("config.energies", "missing required key");
        p.n_periods = v.integer(j, "config", "n_periods", 2000, 1000, 100000000);
        detail::parse_lyap_preconditions(v, "config", p.n_periods, 10);
        p.integrator =
            detail::parse_integrator(v, j.value("integrator", nlohmann::json()), "config.integrator");
        cfg.params = std::move(p);
        break;
    }
    case Command::oracle: {
        std::vector<const char*> keys(common_keys);
        for (const char* k : {"n_trials", "c_min", "c_max", "omega_min", "omega_max", "integrator"})
            keys.push_back(k);
        v.check_keys(j, "config", keys);
        OracleParams p;
        p.n_trials = static_cast<int>(v.integer(j, "config", "n_trials", 100, 1, 1000000));
        p.c_min = v.number(j, "config", "c_min", -1.5, -100.0, 100.0);
        p.c_max = v.number(j, "config", "c_max", 5.0, -100.0, 100.0);
        p.omega_min = v.number(j, "config", "omega_min", 1.0, 1e-3, 1e3);
        p.omega_max = v.number(j, "config", "omega_max", 3.0, 1e-3, 1e3);
        if (v.ok() && !(p.c_max > p.c_min)) v.fail("config.c_max", "must exceed c_min");
        if (v.ok() && !(p.omega_max >= p.omega_min)) v.fail("config.omega_max", "must be >= omega_min");
        p.integrator =
            detail::parse_integrator(v, j.value("integrator", nlohmann::json()), "config.integrator");
        cfg.params = std::move(p);
        break;
    }
    }

    if (!v.ok()) throw ConfigError(std::move(v.errors()));
    return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

namespace detail {

struct RunOutput {
    std::string csv;
    std::size_t n_rows = 0;
    bool oracle_pass = true;
    double oracle_max_err = 0.0;
};

inline RunOutput execute(const RunConfig& cfg) {
    using detail::format_g17;
    RunOutput out;
    std::vector<std::function<std::string()>> cells;
    std::string header;

    if (const auto* p = std::get_if<ChartParams>(&cfg.params)) {
        header = "k,P,mu,alpha,regime\n";
        // one cell per k row keeps parallel chunks balanced
        for (std::size_t ik = 0; ik < p->k_grid.size(); ++ik) {
            cells.emplace_back([p, ik] {
                std::string rows;
                Mode mode;
                mode.m_chi = p->m_chi;
                mode.k = p->k_grid[ik];
                for (double P : p->p_grid) {
                    DriveSpec d = p->drive;
                    d.amplitude = P;
                    const FloquetResult f = noiseless_exponent(mode, d, p->integrator);
                    rows += format_g17(mode.k) + "," + format_g17(P) + "," + format_g17(f.mu) +
                            "," + format_g17(f.alpha) + "," + to_string(f.regime) + "\n";
                }
                return rows;
            });
        }
        out.n_rows = p->k_grid.size() * p->p_grid.size();
    } else if (const auto* p = std::get_if<LyapParams>(&cfg.params)) {
        header = "k,P,sigma,N,mu0,mu_hat,std_err,seed\n";
        const std::size_t n_cells = p->k_values.size() * p->sigma_values.size();
        for (std::size_t cell = 0; cell < n_cells; ++cell) {
            cells.emplace_back([p, cell, seed0 = cfg.master_seed] {
                const std::size_t ik = cell / p->sigma_values.size();
                const std::size_t is = cell % p->sigma_values.size();
                Mode mode;
                mode.m_chi = p->m_chi;
                mode.k = p->k_values[ik];
                NoiseSpec noise = p->noise;
                noise.sigma = p->sigma_values[is];
                noise.master_seed = rng::derive_seed(seed0, cell, rng::Stream::cell_seed);
                EstimateOptions opts;
                opts.n_batches = p->n_batches;
                const double mu0 = noiseless_exponent(mode, p->drive, p->integrator).mu;
                const LyapunovEstimate est =
                    estimate_lyapunov(mode, p->drive, noise, p->n_periods, p->integrator, opts);
                return format_g17(mode.k) + "," + format_g17(p->drive.amplitude) + "," +
                       format_g17(noise.sigma) + "," + std::to_string(p->n_periods) + "," +
                       format_g17(mu0) + "," + format_g17(est.mu_hat) + "," +
                       format_g17(est.std_err) + "," + std::to_string(noise.master_seed) + "\n";
            });
        }
        out.n_rows = n_cells;
    } else if (const auto* p = std::get_if<Theorem1Params>(&cfg.params)) {
        header = "k,P,sigma,N,n_seeds,mu0,mean_muq,ci_low,fraction_exceeding\n";
        cells.emplace_back([p, seed0 = cfg.master_seed] {
            Mode mode;
            mode.k = p->k;
            mode.m_chi = p->m_chi;
            NoiseSpec noise = p->noise;
            noise.master_seed = seed0;
            const Theorem1Report rep =
                theorem1_test(mode, p->drive, noise, p->n_periods, p->n_seeds, p->integrator);
            return format_g17(p->k) + "," + format_g17(p->drive.amplitude) + "," +
                   format_g17(noise.sigma) + "," + std::to_string(p->n_periods) + "," +
                   std::to_string(p->n_seeds) + "," + format_g17(rep.mu0) + "," +
                   format_g17(rep.mean_muq) + "," + format_g17(rep.ci_low) + "," +
                   format_g17(rep.fraction_exceeding) + "\n";
        });
        out.n_rows = 1;
    } else if (const auto* p = std::get_if<LatticeParams>(&cfg.params)) {
        header = "L,Lambda,n,sigma,N,mu_hat,std_err,mu0_max,seed\n";
        const std::size_t n_cells = p->box_lengths.size() * p->cutoffs.size();
        for (std::size_t cell = 0; cell < n_cells; ++cell) {
            cells.emplace_back([p, cell, seed0 = cfg.master_seed] {
                const std::size_t il = cell / p->cutoffs.size();
                const std::size_t ic = cell % p->cutoffs.size();
                NoiseSpec noise = p->field_noise;
                noise.master_seed = rng::derive_seed(seed0, cell, rng::Stream::cell_seed);
                const LatticeSystem sys = build_lattice_system(
                    p->box_lengths[il], p->cutoffs[ic], p->drive, p->m_chi, noise);
                const LyapunovEstimate est =
                    estimate_lattice_top_exponent(sys, p->n_periods, p->integrator);
                const double mu0_max = noiseless_max_exponent(sys, p->integrator);
                return format_g17(sys.box_length) + "," + format_g17(sys.cutoff) + "," +
                       std::to_string(sys.n_modes) + "," + format_g17(noise.sigma) + "," +
                       std::to_string(p->n_periods) + "," + format_g17(est.mu_hat) + "," +
                       format_g17(est.std_err) + "," + format_g17(mu0_max) + "," +
                       std::to_string(noise.master_seed) + "\n";
            });
        }
        out.n_rows = n_cells;
    } else if (const auto* p = std::get_if<AndersonParams>(&cfg.params)) {
        header = "E,band_or_gap,mu_noiseless,mu_noisy,std_err,xi,seed\n";
        for (std::size_t cell = 0; cell < p->energies.size(); ++cell) {
            cells.emplace_back([p, cell, seed0 = cfg.master_seed] {
                SchrodingerParams sp;
                sp.energy = p->energies[cell];
                sp.mass = p->mass;
                sp.periodic_potential = p->periodic_potential;
                sp.random_potential = p->random_potential;
                sp.random_potential.master_seed =
                    rng::derive_seed(seed0, cell, rng::Stream::cell_seed);
                const SpectralClass cls = classify_energy(sp, p->integrator);
                SchrodingerParams noiseless = sp;
                noiseless.random_potential.sigma = 0.0;
                const MappedOscillator osc0 = map_to_oscillator(noiseless);
                const double mu0 =
                    noiseless_exponent_coeff(osc0.omega_k_sq, osc0.drive, p->integrator).mu;
                const LocalizationResult loc =
                    localization_length(sp, p->n_periods, p->integrator);
                return format_g17(sp.energy) + "," + to_string(cls) + "," + format_g17(mu0) +
                       "," + format_g17(loc.mu) + "," + format_g17(loc.std_err) + "," +
                       (loc.xi ? format_g17(*loc.xi) : std::string()) + "," +
                       std::to_string(sp.random_potential.master_seed) + "\n";
            });
        }
        out.n_rows = p->energies.size();
    } else if (const auto* p = std::get_if<OracleParams>(&cfg.params)) {
        header = "trial,c,omega,max_abs_err\n";
        // consistency check: many-step integration vs the one-shot
        // constant-coefficient propagator
        auto max_errs = std::make_shared<std::vector<double>>(
            static_cast<std::size_t>(p->n_trials), 0.0);
        for (int trial = 0; trial < p->n_trials; ++trial) {
            cells.emplace_back([p, trial, seed0 = cfg.master_seed, max_errs] {
                const auto ti = static_cast<std::uint64_t>(trial);
                const double c =
                    p->c_min + (p->c_max - p->c_min) *
                                   rng::uniform01(rng::key(seed0, rng::Stream::draw_pool, ti, 0));
                const double omega =
                    p->omega_min + (p->omega_max - p->omega_min) *
                                       rng::uniform01(rng::key(seed0, rng::Stream::draw_pool, ti, 1));
                DriveSpec d;
                d.omega = omega;
                d.amplitude = 0.0;
                const Mat2 got = integrate_period_coeff(c, d, nullptr, p->integrator);
                const Mat2 want = floqnoise::detail::constant_propagator(c, d.period());
                const double err = std::max(
                    std::max(std::abs(got.a - want.a), std::abs(got.b - want.b)),
                    std::max(std::abs(got.c - want.c), std::abs(got.d - want.d)));
                (*max_errs)[static_cast<std::size_t>(trial)] = err;
                return std::to_string(trial) + "," + format_g17(c) + "," + format_g17(omega) +
                       "," + format_g17(err) + "\n";
            });
        }
        out.n_rows = static_cast<std::size_t>(p->n_trials);
        std::vector<std::string> rows = run_cells(cells, cfg.n_workers);
        out.csv = header;
        for (const auto& r : rows) out.csv += r;
        for (double e : *max_errs) out.oracle_max_err = std::max(out.oracle_max_err, e);
        out.oracle_pass = out.oracle_max_err < 1e-8;
        return out;
    }

    std::vector<std::string> rows = run_cells(cells, cfg.n_workers);
    out.csv = header;
    for (const auto& r : rows) out.csv += r;
    return out;
}

} // namespace detail

/// Executes a validated config: computes, writes the CSV atomically, writes
/// the sidecar <output>.meta.json, and returns the process exit status.
/// Identical configs produce byte-identical outputs for any worker count.
inline int run(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    try {
        const detail::RunOutput result = detail::execute(cfg);
        detail::write_file_atomic(cfg.output_path, result.csv);

        nlohmann::json meta;
        meta["tool"] = std::string(kToolName);
        meta["version"] = std::string(kToolVersion);
        meta["command"] = to_string(cfg.command);
        meta["config_hash"] = "fnv1a64:" + detail::hex64(detail::fnv1a64(cfg.raw_bytes));
        meta["master_seed"] = cfg.master_seed;
        meta["rows"] = result.n_rows;
        if (cfg.command == Command::oracle) {
            meta["oracle_max_abs_err"] = result.oracle_max_err;
            meta["oracle_threshold"] = 1e-8;
            meta["oracle_pass"] = result.oracle_pass;
        }
        detail::write_file_atomic(cfg.output_path + ".meta.json", meta.dump(2) + "\n");

        log << to_string(cfg.command) << ": wrote " << result.n_rows << " rows to "
            << cfg.output_path << "\n";
        if (cfg.command == Command::oracle) {
            log << "oracle: max |error| = " << detail::format_g17(result.oracle_max_err)
                << " (threshold 1e-08): " << (result.oracle_pass ? "PASS" : "FAIL") << "\n";
            if (!result.oracle_pass) return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        err << to_string(cfg.command) << ": error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace floqnoise::cli
