#include "rpf/dataset.hpp"

#include <cmath>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rpf/errors.hpp"
#include "rpf/io.hpp"
#include "rpf/parallel.hpp"

namespace rpf {

namespace {

constexpr char const* kFormatName = "rpf-dataset";
constexpr int kFormatVersion = 1;

void check_range(double lo, double hi, char const* name) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
        throw ValidationError(std::string("empty sampling range for ") + name);
    }
}

std::vector<double> dirichlet_shares(RecordRng& rng, int n) {
    std::vector<double> shares(n);
    double total = 0.0;
    for (auto& s : shares) total += (s = rng.exponential());
    for (auto& s : shares) s /= total;
    return shares;
}

std::optional<DatasetRecord> attempt_record(Network const& network, SamplingConfig const& cfg, std::uint64_t stream) {
    RecordRng rng(cfg.seed, stream);
    auto u = sample_oc(rng, network, cfg);
    try {
        if (cfg.mode == SamplingMode::feasible) {
            auto sol = solve_feasible(network, u, cfg.slack, cfg.solver);
            if (!sol.feasible()) return std::nullopt;
            return DatasetRecord{sol.u_adjusted, sol.v_star, sol.rho, true};
        }
        auto sol = solve_rpf(network, u, cfg.solver);
        if (!sol.converged) return std::nullopt;
        return DatasetRecord{u, sol.v_star, sol.rho, sol.rho <= cfg.solver.feasibility_tol};
    } catch (DegenerateVoltage const&) {
        return std::nullopt;
    }
}

}  // namespace

void SamplingConfig::validate(Network const& network) const {
    check_range(s_min, s_max, "S");
    check_range(pf_min, pf_max, "power factor");
    check_range(vref_min, vref_max, "V_ref");
    check_range(gen_scale_min, gen_scale_max, "generator scale");
    if (pf_min < 0.0 || pf_max > 1.0) throw ValidationError("power factor range must lie in [0, 1]");
    if (vref_min <= 0.0) throw ValidationError("V_ref range must be positive");
    if (n_samples < 0) throw ValidationError("n_samples must be non-negative");
    if (network.loads.empty() || network.generators.empty()) {
        throw ValidationError("sampling needs at least one load and one generator");
    }
    if (mode == SamplingMode::feasible) slack.validate(static_cast<int>(network.generators.size()));
    solver.validate();
}

std::string to_string(SamplingMode mode) { return mode == SamplingMode::feasible ? "feasible" : "infeasible"; }

SamplingMode parse_sampling_mode(std::string const& text) {
    if (text == "feasible") return SamplingMode::feasible;
    if (text == "infeasible") return SamplingMode::infeasible;
    throw ValidationError("unknown sampling mode '" + text + "'");
}

ControlVector sample_oc(RecordRng& rng, Network const& network, SamplingConfig const& cfg) {
    auto const layout = ControlLayout::of(network);
    ControlVector u{std::vector<double>(layout.size())};

    double const s = rng.uniform(cfg.s_min, cfg.s_max);
    auto const load_shares = dirichlet_shares(rng, layout.n_loads);
    for (int i = 0; i < layout.n_loads; ++i) {
        double const psi = rng.uniform(cfg.pf_min, cfg.pf_max);
        u.entries[layout.load_p(i)] = s * load_shares[i] * psi;
        u.entries[layout.load_q(i)] = s * load_shares[i] * std::sqrt(std::max(0.0, 1.0 - psi * psi));
    }
    auto const gen_shares = dirichlet_shares(rng, layout.n_generators);
    for (int k = 0; k < layout.n_generators; ++k) {
        u.entries[layout.gen_p(k)] = s * gen_shares[k];
        u.entries[layout.gen_v_ref(k)] = rng.uniform(cfg.vref_min, cfg.vref_max);
    }
    if (cfg.mode == SamplingMode::infeasible) {
        double const scale = rng.uniform(cfg.gen_scale_min, cfg.gen_scale_max);
        for (int k = 0; k < layout.n_generators; ++k) u.entries[layout.gen_p(k)] *= scale;
    }
    if (cfg.lossless_balance) u = balance_lossless(network, std::move(u));
    return u;
}

ControlVector balance_lossless(Network const& network, ControlVector u) {
    auto const layout = ControlLayout::of(network);
    double load = 0.0, generation = 0.0;
    for (int i = 0; i < layout.n_loads; ++i) load += u.entries[layout.load_p(i)];
    for (int k = 0; k < layout.n_generators; ++k) generation += u.entries[layout.gen_p(k)];
    if (generation == 0.0) throw ValidationError("cannot balance zero generation");
    for (int k = 0; k < layout.n_generators; ++k) u.entries[layout.gen_p(k)] *= load / generation;
    return u;
}

Dataset generate_dataset(Network const& network, SamplingConfig const& cfg) {
    cfg.validate(network);
    Dataset out;
    out.network_fingerprint = network.fingerprint;
    out.seed = cfg.seed;
    out.config_json = sampling_config_json(cfg);

    auto const n = static_cast<std::size_t>(cfg.n_samples);
    int const allowed_failures = static_cast<int>(std::floor(0.05 * cfg.n_samples));
    int const threads = cfg.threads > 0 ? cfg.threads : default_thread_count();
    std::uint64_t next_stream = 0;
    while (out.records.size() < n) {
        std::size_t const need = n - out.records.size();
        auto batch = parallel_map<std::optional<DatasetRecord>>(
            need, threads, [&](std::size_t i) { return attempt_record(network, cfg, next_stream + i); });
        next_stream += need;
        out.report.attempted += static_cast<int>(need);
        for (auto& rec : batch) {
            if (rec) {
                out.records.push_back(std::move(*rec));
            } else {
                ++out.report.dropped;
            }
        }
        if (out.report.dropped > allowed_failures) {
            throw GenerationError(std::to_string(out.report.dropped) + " of " + std::to_string(out.report.attempted) +
                                  " solves failed, above the 5% budget");
        }
    }
    return out;
}

std::string sampling_config_json(SamplingConfig const& cfg) {
    nlohmann::json slack = nlohmann::json::array();
    for (auto const& [gen, factor] : cfg.slack.targets) slack.push_back({gen, factor});
    nlohmann::json j = {
        {"mode", to_string(cfg.mode)},
        {"n_samples", cfg.n_samples},
        {"seed", cfg.seed},
        {"s_range", {cfg.s_min, cfg.s_max}},
        {"pf_range", {cfg.pf_min, cfg.pf_max}},
        {"vref_range", {cfg.vref_min, cfg.vref_max}},
        {"gen_scale_range", {cfg.gen_scale_min, cfg.gen_scale_max}},
        {"lossless_balance", cfg.lossless_balance},
        {"slack", slack},
        {"solver",
         {{"max_iter", cfg.solver.max_iter},
          {"grad_tol", cfg.solver.grad_tol},
          {"step_tol", cfg.solver.step_tol},
          {"lm_lambda0", cfg.solver.lm_lambda0},
          {"lm_factor", cfg.solver.lm_factor},
          {"feasibility_tol", cfg.solver.feasibility_tol}}},
    };
    return j.dump();
}

std::vector<std::string> dataset_columns(Network const& network) {
    auto cols = ControlLayout::of(network).labels(network);
    auto state = state_labels(network);
    cols.insert(cols.end(), state.begin(), state.end());
    cols.push_back("rho");
    cols.push_back("feasible");
    return cols;
}

std::string dataset_to_csv(Network const& network, Dataset const& dataset) {
    auto const columns = dataset_columns(network);
    nlohmann::json header = {
        {"format", kFormatName},
        {"version", kFormatVersion},
        {"network_fingerprint", dataset.network_fingerprint},
        {"seed", dataset.seed},
        {"config", dataset.config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(dataset.config_json)},
        {"n_records", dataset.records.size()},
        {"report", {{"attempted", dataset.report.attempted}, {"dropped", dataset.report.dropped}}},
    };
    if (!dataset.provenance_json.empty()) header["provenance"] = nlohmann::json::parse(dataset.provenance_json);
    std::string out = "# " + header.dump() + "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
    out += "\n";
    for (auto const& rec : dataset.records) {
        out += io::join_reals(rec.u.entries);
        out += ",";
        out += io::join_reals(rec.v_star.flatten());
        out += "," + io::format_real(rec.rho) + (rec.feasible ? ",1\n" : ",0\n");
    }
    return out;
}

Dataset dataset_from_csv(std::string const& text, Network const& network) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw FormatError("dataset is missing its header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line.substr(2));
    } catch (nlohmann::json::exception const& e) {
        throw FormatError(std::string("dataset header: ") + e.what());
    }
    if (header.value("format", "") != kFormatName || header.value("version", 0) != kFormatVersion) {
        throw FormatError("unsupported dataset format");
    }
    Dataset out;
    out.network_fingerprint = header.value("network_fingerprint", "");
    if (out.network_fingerprint != network.fingerprint) {
        throw FingerprintMismatch("dataset was generated for network " + out.network_fingerprint + ", not " +
                                  network.fingerprint);
    }
    out.seed = header.value("seed", std::uint64_t{0});
    out.config_json = header.value("config", nlohmann::json::object()).dump();
    out.report.attempted = header["report"].value("attempted", 0);
    out.report.dropped = header["report"].value("dropped", 0);
    if (header.contains("provenance")) out.provenance_json = header["provenance"].dump();

    auto const columns = dataset_columns(network);
    if (!std::getline(in, line) || io::split(line, ',') != columns) throw FormatError("dataset column schema mismatch");

    int const m = network.n_controls();
    int const nv = network.n_voltage_vars();
    int row = 2;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto fields = io::split(line, ',');
        if (fields.size() != columns.size()) {
            throw FormatError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) + " fields");
        }
        std::vector<double> values(fields.size() - 1);
        for (std::size_t i = 0; i + 1 < fields.size(); ++i) values[i] = io::parse_real(fields[i]);
        if (fields.back() != "0" && fields.back() != "1") throw FormatError("bad feasible flag on row " + std::to_string(row));

        DatasetRecord rec;
        rec.u.entries.assign(values.begin(), values.begin() + m);
        rec.v_star = VoltageState::from_flat(network, std::span<double const>(values.data() + m, nv));
        rec.rho = values[m + nv];
        rec.feasible = fields.back() == "1";
        double const recomputed = residual_norm(assemble_residual(network, rec.v_star, rec.u));
        if (!(std::abs(recomputed - rec.rho) <= 1e-9 * std::max(1.0, rec.rho))) {
            throw ValidationError("row " + std::to_string(row) + ": stored rho " + io::format_real(rec.rho) +
                                  " does not match recomputed " + io::format_real(recomputed));
        }
        out.records.push_back(std::move(rec));
    }
    if (header.contains("n_records") && header["n_records"].get<std::size_t>() != out.records.size()) {
        throw FormatError("dataset record count does not match its header");
    }
    return out;
}

void save_dataset(Network const& network, Dataset const& dataset, std::string const& path) {
    io::write_file(path, dataset_to_csv(network, dataset));
}

Dataset load_dataset(std::string const& path, Network const& network) {
    return dataset_from_csv(io::read_file(path), network);
}

}  // namespace rpf
