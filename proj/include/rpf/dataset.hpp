#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rpf/random.hpp"
#include "rpf/solver.hpp"

namespace rpf {

enum class SamplingMode { feasible, infeasible };

struct SamplingConfig {
    double s_min = 1.0, s_max = 4.0;
    double pf_min = 0.9, pf_max = 1.0;
    double vref_min = 1.0, vref_max = 1.05;
    double gen_scale_min = 1.0, gen_scale_max = 1.08;  // infeasible mode only
    int n_samples = 0;
    std::uint64_t seed = 0;
    SamplingMode mode = SamplingMode::feasible;
    SlackSpec slack = SlackSpec::single(0);
    /// Rescale P_M so that sum P_M equals sum P_load before solving.
    bool lossless_balance = false;
    int threads = 0;  // 0 selects default_thread_count()
    SolverConfig solver;

    void validate(Network const& network) const;
};

struct DatasetRecord {
    ControlVector u;
    VoltageState v_star;
    double rho = 0.0;
    bool feasible = false;

    bool operator==(DatasetRecord const&) const = default;
};

struct GenerationReport {
    int attempted = 0;
    int dropped = 0;
};

struct Dataset {
    std::vector<DatasetRecord> records;
    std::string network_fingerprint;
    std::uint64_t seed = 0;
    std::string config_json;  // echo of the sampling configuration
    GenerationReport report;
    std::string provenance_json;  // optional tool metadata carried in the header
};

std::string to_string(SamplingMode mode);
SamplingMode parse_sampling_mode(std::string const& text);

ControlVector sample_oc(RecordRng& rng, Network const& network, SamplingConfig const& cfg);

/// Scales every P_M by the same factor so total generation equals total load.
ControlVector balance_lossless(Network const& network, ControlVector u);

/// Draws records from streams 0, 1, 2, ... and keeps the first n_samples that
/// solve. Throws GenerationError when more than 5% of n_samples fail.
Dataset generate_dataset(Network const& network, SamplingConfig const& cfg);

std::string sampling_config_json(SamplingConfig const& cfg);
std::vector<std::string> dataset_columns(Network const& network);

std::string dataset_to_csv(Network const& network, Dataset const& dataset);
Dataset dataset_from_csv(std::string const& text, Network const& network);
void save_dataset(Network const& network, Dataset const& dataset, std::string const& path);
Dataset load_dataset(std::string const& path, Network const& network);

}  // namespace rpf
