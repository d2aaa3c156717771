#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fde/rates.hpp"

namespace fde {

enum class InitialKind { Stationary, Scaled, Modes, File };

struct ModeAmplitude {
    int k = 1, j = 1;
    double amplitude = 0;
};

enum class Pipeline { Stationary, Spectrum, LinearEvolve, Evolve, Rates };

const char* to_string(Pipeline p);
std::optional<Pipeline> pipeline_from_string(const std::string& s);

struct ExperimentConfig {
    DomainSpec domain = DomainSpec::interval(1.0, 256);

    // Exactly one of p/m and one of c/T is given; the other members are derived.
    std::optional<double> p_in, m_in, c_in, T_in;
    Exponents exps;

    StationaryOptions stationary;
    EigenOptions eigen;
    int modes = 6;
    double gap_tol = 1e-3;

    DtPolicy dt;
    double horizon = 20.0;
    double sample_interval = 0.1;
    bool calibrate = true;
    double converge_tol = 1e-6; // evolve verdict on the final ‖h‖∞

    InitialKind initial = InitialKind::Modes;
    double factor = 1.0;
    std::vector<ModeAmplitude> initial_modes{{2, 1, 0.1}};
    std::string initial_file;

    WindowPolicy window = EntropyBand{};
    double rate_tol = 0.05;

    std::uint64_t seed = 0;
    std::string out_dir = "out";

    // Sweep axes; an axis is active when present in the file.
    std::optional<std::vector<double>> sweep_p;
    std::optional<std::vector<int>> sweep_n;
    std::optional<std::vector<double>> sweep_amplitude;

    std::string source = "<config>";
};

// key = value lines with optional [section] headers; keys may also be dotted.
// '#' starts a comment. Errors carry "source:line: field".
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// Recomputes exps from the p/m and c/T inputs and checks consistency.
void resolve_exponents(ExperimentConfig& cfg);

// Fully resolved config, every default explicit.
std::string manifest_json(const ExperimentConfig& cfg, Pipeline pipeline);

struct RunResult {
    Pipeline pipeline = Pipeline::Stationary;
    std::filesystem::path dir;
    std::string status = "NONE"; // PASS, FAIL, TRIVIAL-FIXED-POINT or NONE
    GapReport gap;
    std::optional<RateVerdict> rate;
    std::optional<EntropyTrace> trace;
    double calibration_scale = 1.0;
    double final_h_inf = 0;
    std::vector<std::string> files;
};

// Runs domain → stationary → spectrum → flow → diagnostics → rates up to the
// stage the pipeline needs and writes the artifacts into `out`.
RunResult run_experiment(const ExperimentConfig& cfg, Pipeline pipeline, const std::filesystem::path& out);
RunResult run_experiment(const std::filesystem::path& config_path, Pipeline pipeline,
                         const std::optional<std::filesystem::path>& out = std::nullopt);

struct SweepRow {
    double p = 0;
    int n = 0;
    double amplitude = 0;
    double lambda_p = 0, lambda_fit = 0, ratio = 0;
    bool h2_ok = false;
    std::string status;
    std::string error;
};

// Runs the rates pipeline on every cell of the sweep grid with up to `jobs`
// threads and writes sweep.csv. Cell failures become rows with an error string.
std::vector<SweepRow> sweep(const ExperimentConfig& cfg, int jobs, const std::filesystem::path& out);

struct ClosedLoopOptions {
    double dt = 2e-3;          // coarsest step of the three Richardson levels
    double tau_horizon = 0;    // 0: 5·T_guess
    double rescaled_horizon = 5.0;
    double rescaled_dt = 1e-2;
    double sample_interval = 0.1;
};

struct ClosedLoopResult {
    std::vector<double> dts, T_levels;
    double T_est = 0;
    double c_est = 0;
    double T_exact = 0; // p/((p-1)c) of the generating profile
    double max_late_entropy = 0;
    double final_entropy = 0;
    EntropyTrace trace;
};

// Original flow from u0 at three steps, Richardson-extrapolated extinction time,
// then the rescaled flow from u0^m with c = p/((p-1)T_est).
ClosedLoopResult closed_loop_extinction(const Grid<>& grid, const Exponents& exps, const Vector& u0,
                                        const ClosedLoopOptions& opts = {});

// Formats doubles for CSV with round-trip precision.
std::string format_double(double x);

} // namespace fde
