#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace hypo::cli {

struct SimulateConfig {
    std::size_t n = 10;
    double dt = 0.1;
    std::string scheme = "weak2";
    std::size_t substeps = 1;  // fine steps per output step
    std::vector<double> x0;    // empty: zeros

    bool operator==(const SimulateConfig&) const = default;
};

struct AdamSettings {
    double step_size = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t iters = 20000;

    bool operator==(const AdamSettings&) const = default;
};

struct EstimateConfig {
    std::string design;  // fn1..fn3, jr1..jr3; empty uses n, dt, fine_dt
    std::size_t n = 1000;
    double dt = 0.01;
    double fine_dt = 1e-4;
    std::size_t replicates = 10;
    std::vector<std::string> methods{"new", "lg"};
    AdamSettings adam;
    double start_jitter = 0.2;
    std::vector<std::size_t> qv_coords;

    bool operator==(const EstimateConfig&) const = default;
};

struct DensityBiasConfig {
    double Delta = 0.5;
    std::vector<std::size_t> M{2, 4, 8, 16};
    double x = 0.0;
    double y_min = -2.0;
    double y_max = 2.0;
    std::size_t y_count = 81;
    std::size_t grid_points = 801;

    bool operator==(const DensityBiasConfig&) const = default;
};

struct MomentsCheckConfig {
    std::size_t samples = 2000000;
    std::vector<double> deltas{0.5, 1.0};
    std::size_t d_R = 2;
    bool hypo = true;
    double max_z = 5.0;  // pass threshold on |mean - exact| / standard error

    bool operator==(const MomentsCheckConfig&) const = default;
};

struct McmcConfig {
    std::string scheme = "em";
    double dt = 0.05;
    std::size_t iters = 1500;
    std::size_t warmup = 500;
    double step_size = 0.001;
    std::size_t n_leapfrog = 20;
    std::size_t map_iters = 2000;

    bool operator==(const McmcConfig&) const = default;
};

/// @brief Everything a run needs; round-trips through JSON.
struct RunConfig {
    std::string command;
    std::string model = "ou";
    std::map<std::string, double> fixed;  // parameters frozen at these values
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string csv;       // empty: CSV to stdout
    std::string manifest;  // empty: <csv>.manifest.json when csv is set
    SimulateConfig simulate;
    EstimateConfig estimate;
    DensityBiasConfig density_bias;
    MomentsCheckConfig moments_check;
    McmcConfig mcmc;

    bool operator==(const RunConfig&) const = default;
};

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"simulate", "estimate", "density-bias", "moments-check", "mcmc"};
    return c;
}

nlohmann::ordered_json to_json(const RunConfig& c);

/// Strict parse: unknown keys and type mismatches are appended to `errors`.
RunConfig from_json(const nlohmann::json& j, std::vector<std::string>& errors);

/// Every problem with the configuration; empty when it can run.
std::vector<std::string> validate(const RunConfig& c);

/// FNV-1a 64-bit hash of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& c);

/// Defaults for a command (per-command adjustments applied).
RunConfig default_config(const std::string& command);

/// Executes a validated configuration. CSV goes to `out` when c.csv is empty.
/// Returns the exit status; errors are reported as JSON on `err`.
int run(const RunConfig& c, std::ostream& out, std::ostream& err);

/// Command-line entry point: flags, config file, HYPO_SEED, --dump-config.
int main_with_args(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace hypo::cli
