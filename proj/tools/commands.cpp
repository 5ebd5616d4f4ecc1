#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <ostream>
#include <sstream>

#include "rpf/bim.hpp"
#include "rpf/io.hpp"
#include "rpf/parallel.hpp"
#include "rpf/po.hpp"
#include "rpf/stats.hpp"
#include "svg.hpp"

#ifndef RPF_DEFAULT_NETWORK
#define RPF_DEFAULT_NETWORK "data/case9.m"
#endif

namespace rpf::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---- configuration access -------------------------------------------------

std::string str(Context const& ctx, char const* key) { return ctx.cfg.at(key).get<std::string>(); }
double real(Context const& ctx, char const* key) { return ctx.cfg.at(key).get<double>(); }
long long integer(Context const& ctx, char const* key) { return ctx.cfg.at(key).get<long long>(); }
bool flag(Context const& ctx, char const* key) { return ctx.cfg.at(key).get<bool>(); }

std::uint64_t seed(Context const& ctx) { return static_cast<std::uint64_t>(integer(ctx, "seed")); }

/// Independent seed for one purpose of a command.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t purpose) {
    return RecordRng::mix(RecordRng::mix(base) + purpose);
}

int threads(Context const& ctx) {
    auto t = integer(ctx, "threads");
    if (t < 0) throw UsageError("--threads must be non-negative");
    return t > 0 ? static_cast<int>(t) : default_thread_count();
}

int count(Context const& ctx, char const* key) {
    auto n = integer(ctx, key);
    if (n < 0) throw UsageError(std::string("--") + key + " must be non-negative");
    return static_cast<int>(n);
}

void log(Context const& ctx, std::string const& line) {
    if (flag(ctx, "verbose")) ctx.err << line << '\n';
}

// ---- files ----------------------------------------------------------------

fs::path out_dir(Context const& ctx) {
    fs::path dir = str(ctx, "out_dir");
    if (dir.empty()) dir = ".";
    fs::create_directories(dir);
    return dir;
}

/// Explicit path from `key`, else `default_name` inside the output directory.
std::string input_path(Context const& ctx, char const* key, std::string const& default_name) {
    std::string p = str(ctx, key);
    return p.empty() ? (out_dir(ctx) / default_name).string() : p;
}

void require_file(std::string const& path, std::string const& what) {
    if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
}

std::string file_fingerprint(std::string const& path) { return io::hex64(io::fnv1a64(io::read_file(path))); }

Network load_net(Context const& ctx, json& inputs) {
    std::string path = str(ctx, "network");
    require_file(path, "network file");
    std::string inj = str(ctx, "injectors");
    if (!inj.empty()) {
        require_file(inj, "injector config");
    } else {
        fs::path sidecar = fs::path(path).parent_path() / (fs::path(path).stem().string() + "_injectors.json");
        if (fs::exists(sidecar)) inj = sidecar.string();
    }
    Network net = load_network(path, inj);
    inputs["network"] = net.fingerprint;
    return net;
}

void write_table(fs::path const& path, json const& prov, std::string const& header, std::string const& body) {
    io::write_file(path.string(), "# " + prov.dump() + "\n" + header + "\n" + body);
}

void write_json(fs::path const& path, json const& j) { io::write_file(path.string(), j.dump(2) + "\n"); }

std::string csv_text(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
    }
    return s;
}

std::string fmt(double x) { return std::isfinite(x) ? io::format_real(x) : (std::isnan(x) ? "" : io::format_real(x)); }

double median_or_nan(std::vector<double> v) {
    std::erase_if(v, [](double x) { return !std::isfinite(x); });
    return v.empty() ? kNaN : stats::median(v);
}

template <typename F>
auto as_usage(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (ValidationError const& e) {
        throw UsageError(e.what());
    }
}

// ---- models ---------------------------------------------------------------

struct LoadedModel {
    NeuralSolver solver;
    std::string formulation;
    std::string fingerprint;
};

LoadedModel load_model(std::string const& path, Network const& net) {
    require_file(path, "model");
    std::string text = io::read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (json::exception const& e) {
        throw FormatError("model " + path + ": " + e.what());
    }
    std::string fp = j.value("network_fingerprint", std::string());
    if (fp != net.fingerprint) {
        throw FingerprintMismatch("model " + path + " was trained on network " + fp + ", not " + net.fingerprint);
    }
    return {NeuralSolver::from_json(text), j.value("formulation", std::string("rpf")), io::hex64(io::fnv1a64(text))};
}

LoadedModel load_rpf_model(Context const& ctx, Network const& net, json& inputs) {
    auto m = load_model(input_path(ctx, "model", "model.json"), net);
    if (m.formulation != "rpf") throw UsageError("predict-then-optimize needs an rpf model, got " + m.formulation);
    inputs["model"] = m.fingerprint;
    return m;
}

SamplingConfig sampling_from(Context const& ctx) {
    SamplingConfig sc;
    sc.s_min = real(ctx, "s_min");
    sc.s_max = real(ctx, "s_max");
    sc.pf_min = real(ctx, "pf_min");
    sc.pf_max = real(ctx, "pf_max");
    sc.vref_min = real(ctx, "vref_min");
    sc.vref_max = real(ctx, "vref_max");
    sc.gen_scale_min = real(ctx, "gen_scale_min");
    sc.gen_scale_max = real(ctx, "gen_scale_max");
    sc.threads = threads(ctx);
    return sc;
}

json sampling_defaults() {
    return {{"s_min", 1.0},    {"s_max", 4.0},           {"pf_min", 0.9},         {"pf_max", 1.0},
            {"vref_min", 1.0}, {"vref_max", 1.05},       {"gen_scale_min", 1.0}, {"gen_scale_max", 1.08}};
}

std::map<std::string, std::string> sampling_help() {
    return {{"s_min", "lower bound of apparent load power per load (pu)"},
            {"s_max", "upper bound of apparent load power per load (pu)"},
            {"pf_min", "lower bound of the load power factor"},
            {"pf_max", "upper bound of the load power factor"},
            {"vref_min", "lower bound of generator voltage setpoints"},
            {"vref_max", "upper bound of generator voltage setpoints"},
            {"gen_scale_min", "lower bound of the generation scale for infeasible OCs"},
            {"gen_scale_max", "upper bound of the generation scale for infeasible OCs"}};
}

int generator_at_bus(Network const& net, int external_id) {
    int bus = net.bus_index(external_id);
    for (std::size_t k = 0; k < net.generators.size(); ++k) {
        if (net.generators[k].bus == bus) return static_cast<int>(k);
    }
    throw UsageError("no generator at bus " + std::to_string(external_id));
}

SlackSpec parse_slack(Network const& net, std::string const& text) {
    if (text == "distributed") return SlackSpec::equal_share(static_cast<int>(net.generators.size()));
    if (text.rfind("gen", 0) == 0 && text.size() > 3) {
        try {
            return SlackSpec::single(generator_at_bus(net, std::stoi(text.substr(3))));
        } catch (std::logic_error const&) {
        }
    }
    throw UsageError("--slack expects gen<bus id> or distributed, got '" + text + "'");
}

double total_load(Network const& net, ControlVector const& u) {
    auto layout = ControlLayout::of(net);
    double s = 0.0;
    for (int i = 0; i < layout.n_loads; ++i) s += u.entries[layout.load_p(i)];
    return s;
}

}  // namespace

// ---- gen ------------------------------------------------------------------

int cmd_gen(Context const& ctx) {
    json inputs = json::object();
    Network net = load_net(ctx, inputs);
    SamplingConfig base = sampling_from(ctx);
    int n_train = count(ctx, "n_train"), n_test = count(ctx, "n_test");
    struct Target {
        char const* file;
        SamplingMode mode;
        int n;
    };
    Target const targets[] = {{"train.csv", SamplingMode::feasible, n_train},
                              {"train_infeasible.csv", SamplingMode::infeasible, n_train},
                              {"test_feasible.csv", SamplingMode::feasible, n_test},
                              {"test_infeasible.csv", SamplingMode::infeasible, n_test}};
    json prov = provenance(ctx.command, ctx.cfg, inputs);
    json report = {{"provenance", prov}, {"datasets", json::object()}};
    json timing = json::object();
    auto dir = out_dir(ctx);
    for (std::size_t k = 0; k < std::size(targets); ++k) {
        auto const& t = targets[k];
        SamplingConfig sc = base;
        sc.mode = t.mode;
        sc.n_samples = t.n;
        sc.seed = derive_seed(seed(ctx), k + 1);
        as_usage([&] { sc.validate(net); return 0; });
        auto t0 = std::chrono::steady_clock::now();
        Dataset ds = generate_dataset(net, sc);
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ds.provenance_json = prov.dump();
        save_dataset(net, ds, (dir / t.file).string());
        report["datasets"][t.file] = {{"mode", to_string(t.mode)},
                                      {"records", ds.records.size()},
                                      {"attempted", ds.report.attempted},
                                      {"dropped", ds.report.dropped},
                                      {"seed", sc.seed}};
        timing[t.file] = secs;
        ctx.out << t.file << ": " << ds.records.size() << " records, " << ds.report.dropped << " dropped, "
                << secs << " s\n";
    }
    write_json(dir / "gen_report.json", report);
    write_json(dir / "gen_timing.json", timing);
    return 0;
}

// ---- train ----------------------------------------------------------------

int cmd_train(Context const& ctx) {
    json inputs = json::object();
    Network net = load_net(ctx, inputs);
    std::string data_path = input_path(ctx, "data", "train.csv");
    require_file(data_path, "training data");
    inputs["data"] = file_fingerprint(data_path);
    Dataset ds = load_dataset(data_path, net);

    std::string formulation = str(ctx, "formulation");
    TrainingData data;
    if (formulation == "rpf") {
        data = rpf_training_data(ds);
    } else if (formulation == "bim") {
        data = bim_training_data(net, BimEncoding::from_network(net), ds);
    } else {
        throw UsageError("--formulation expects rpf or bim, got '" + formulation + "'");
    }
    if (data.n_samples == 0) throw UsageError("no usable records in " + data_path);

    FeatureKind kind = as_usage([&] { return parse_feature_kind(str(ctx, "features")); });
    std::vector<int> hidden;
    for (auto const& tok : io::split(str(ctx, "hidden"), ',')) {
        try {
            hidden.push_back(std::stoi(tok));
        } catch (std::logic_error const&) {
            throw UsageError("--hidden expects comma-separated layer widths");
        }
    }
    TrainConfig tc;
    tc.max_epochs = count(ctx, "epochs");
    tc.patience = count(ctx, "patience");
    tc.val_fraction = real(ctx, "val_fraction");
    tc.seed = derive_seed(seed(ctx), 22);
    as_usage([&] { tc.validate(); return 0; });
    NeuralSolver solver = as_usage(
        [&] { return NeuralSolver(kind, data.n_inputs, data.n_outputs, hidden, derive_seed(seed(ctx), 21)); });

    log(ctx, "training " + to_string(kind) + " on " + std::to_string(data.n_samples) + " samples");
    auto t0 = std::chrono::steady_clock::now();
    TrainReport rep = train(solver, data, tc);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json prov = provenance(ctx.command, ctx.cfg, inputs);
    json extra = {{"provenance", prov},
                  {"formulation", formulation},
                  {"network_fingerprint", net.fingerprint},
                  {"training",
                   {{"samples", data.n_samples},
                    {"epochs", rep.epochs},
                    {"best_epoch", rep.best_epoch},
                    {"best_val_loss", rep.best_val_loss},
                    {"stop_reason", rep.stop_reason}}}};
    std::string model_path = input_path(ctx, "model", "model.json");
    fs::path mp(model_path);
    if (mp.has_parent_path()) fs::create_directories(mp.parent_path());
    io::write_file(model_path, solver.to_json(extra.dump()));
    std::string curve = str(ctx, "curve");
    if (curve.empty()) curve = (mp.parent_path() / (mp.stem().string() + "_curve.csv")).string();
    io::write_file(curve, "# " + prov.dump() + "\n" + rep.to_csv());

    double train_loss = rep.train_loss.empty() ? rep.linear.loss : rep.train_loss.back();
    double val_loss = rep.val_loss.empty() ? kNaN : rep.val_loss.back();
    ctx.out << "model " << model_path << " (" << to_string(kind) << ", " << formulation << ")\n"
            << "final train loss " << train_loss << ", val loss " << val_loss << ", best val " << rep.best_val_loss
            << " at epoch " << rep.best_epoch << " of " << rep.epochs << " (" << rep.stop_reason << ", " << secs
            << " s)\n";
    return 0;
}

// ---- eval -----------------------------------------------------------------

namespace {

struct EvalSet {
    std::string name;
    Dataset data;
};

struct ModelEval {
    std::string name, formulation, test_set;
    std::size_t n = 0;
    std::vector<double> v_err, angle_err, avg_residual, rho_err;
    std::vector<std::size_t> zero_count{0, 0, 0}, entry_count{0, 0, 0};
};

constexpr double kZeroTol = 1e-12;

ModelEval evaluate_model(Network const& net, std::string const& name, LoadedModel const& m, EvalSet const& set,
                         std::ostringstream& v_rows, std::ostringstream& r_rows, std::ostringstream& rho_rows) {
    ModelEval ev;
    ev.name = name;
    ev.formulation = m.formulation;
    ev.test_set = set.name;
    ev.n = set.data.records.size();
    int const nb = net.n_buses();
    auto const rlabels = residual_labels(net);
    bool const bim = m.formulation == "bim";
    BimEncoding enc = BimEncoding::from_network(net);
    std::size_t const n_zero = bim ? bim_structural_zero_indices(net, enc).size() : 0;
    std::vector<std::string> const vlabels = bim ? enc.target_labels(net) : state_labels(net);
    int const n_theta = nb - 1;

    for (std::size_t i = 0; i < set.data.records.size(); ++i) {
        auto const& rec = set.data.records[i];
        std::string prefix = name + "," + m.formulation + "," + set.name + "," + std::to_string(i) + ",";
        try {
            VoltageState v_hat;
            ControlVector u_eval = rec.u;
            std::vector<double> truth, pred;
            if (bim) {
                auto x = bim_inputs(net, enc, rec.v_star);
                truth = bim_targets(net, enc, rec.v_star);
                pred = m.solver.predict(x);
                auto dec = bim_decode(net, enc, x, pred, rec.u);
                v_hat = dec.v;
                u_eval = dec.u;
            } else {
                v_hat = predict(m.solver, net, rec.u).v;
                truth = rec.v_star.flatten();
                pred = v_hat.flatten();
            }
            for (std::size_t k = 0; k < truth.size(); ++k) {
                double e = std::abs(pred[k] - truth[k]);
                v_rows << prefix << vlabels[k] << ',' << fmt(e) << '\n';
                bool magnitude = bim ? static_cast<int>(k) >= n_theta : static_cast<int>(k) < nb;
                (magnitude ? ev.v_err : ev.angle_err).push_back(e);
            }
            ResidualVector r = assemble_residual(net, v_hat, u_eval);
            for (std::size_t k = 0; k < r.values.size(); ++k) {
                int group = static_cast<int>(k) < nb ? 0 : (static_cast<int>(k) < 2 * nb ? 1 : 2);
                double a = std::abs(r.values[k]);
                ev.entry_count[group]++;
                if (a <= kZeroTol) ev.zero_count[group]++;
                static char const* const names[] = {"re_kcl", "im_kcl", "kvl"};
                r_rows << prefix << names[group] << ',' << rlabels[k] << ',' << fmt(a) << '\n';
            }
            double avg = average_residual(r, n_zero);
            ev.avg_residual.push_back(avg);
            r_rows << prefix << "mean_rho,rho_avg," << fmt(avg) << '\n';
            if (!bim) {
                double rho_hat = residual_norm(r);
                double err = std::abs(rho_hat - rec.rho);
                ev.rho_err.push_back(err);
                rho_rows << name << ',' << set.name << ',' << i << ',' << fmt(rec.rho) << ',' << fmt(rho_hat) << ','
                         << fmt(err) << '\n';
            }
        } catch (Error const& e) {
            r_rows << prefix << "failed,," << '\n';
        }
    }
    return ev;
}

}  // namespace

int cmd_eval(Context const& ctx) {
    json inputs = json::object();
    Network net = load_net(ctx, inputs);

    std::vector<std::pair<std::string, LoadedModel>> models;
    std::string model_path = input_path(ctx, "model", "model.json");
    models.emplace_back("model", load_model(model_path, net));
    inputs["model"] = models.back().second.fingerprint;
    if (auto p = str(ctx, "baseline"); !p.empty()) {
        models.emplace_back("baseline", load_model(p, net));
        inputs["baseline"] = models.back().second.fingerprint;
    }
    if (auto p = str(ctx, "infeasible_model"); !p.empty()) {
        models.emplace_back("infeasible_trained", load_model(p, net));
        inputs["infeasible_model"] = models.back().second.fingerprint;
    }

    std::vector<EvalSet> sets;
    for (auto [key, file] : {std::pair{"test_feasible", "test_feasible.csv"},
                             std::pair{"test_infeasible", "test_infeasible.csv"}}) {
        std::string path = input_path(ctx, key, file);
        if (!fs::exists(path)) {
            if (!str(ctx, key).empty()) throw UsageError(std::string(key) + " data not found: " + path);
            continue;
        }
        inputs[key] = file_fingerprint(path);
        sets.push_back({key, load_dataset(path, net)});
    }
    if (sets.empty()) throw UsageError("no test data found in " + out_dir(ctx).string());

    std::ostringstream v_rows, r_rows, rho_rows;
    std::vector<ModelEval> evals;
    for (auto const& [name, m] : models) {
        for (auto const& set : sets) {
            if (m.formulation == "bim" && set.name != "test_feasible") continue;
            evals.push_back(evaluate_model(net, name, m, set, v_rows, r_rows, rho_rows));
        }
    }

    auto find = [&](std::string const& name, std::string const& set) -> ModelEval const* {
        for (auto const& e : evals) {
            if (e.name == name && e.test_set == set) return &e;
        }
        return nullptr;
    };
    std::ostringstream summary;
    for (auto const& e : evals) {
        double med_v = median_or_nan(e.v_err);
        double ratio = kNaN;
        if (e.name == "baseline") {
            if (auto const* m = find("model", e.test_set)) ratio = med_v / median_or_nan(m->v_err);
        }
        auto share = [&](int g) {
            return e.entry_count[g] ? static_cast<double>(e.zero_count[g]) / static_cast<double>(e.entry_count[g])
                                    : kNaN;
        };
        summary << e.name << ',' << e.formulation << ',' << e.test_set << ',' << e.n << ',' << fmt(med_v) << ','
                << fmt(median_or_nan(e.angle_err)) << ',' << fmt(median_or_nan(e.avg_residual)) << ','
                << fmt(median_or_nan(e.rho_err)) << ',' << fmt(share(0)) << ',' << fmt(share(1)) << ','
                << fmt(share(2)) << ',' << fmt(ratio) << '\n';
        ctx.out << e.name << " (" << e.formulation << ") on " << e.test_set << ": n " << e.n << ", median |V| error "
                << med_v << ", median avg residual " << median_or_nan(e.avg_residual);
        if (!e.rho_err.empty()) ctx.out << ", median rho error " << median_or_nan(e.rho_err);
        if (std::isfinite(ratio)) ctx.out << ", baseline/model ratio " << ratio;
        ctx.out << '\n';
    }
    auto const* fm_inf = find("model", "test_infeasible");
    auto const* im_inf = find("infeasible_trained", "test_infeasible");
    auto const* fm_feas = find("model", "test_feasible");
    auto const* im_feas = find("infeasible_trained", "test_feasible");
    if (fm_inf && im_inf) {
        ctx.out << "infeasible training: rho error reduction on infeasible OCs "
                << median_or_nan(fm_inf->rho_err) / median_or_nan(im_inf->rho_err);
        if (fm_feas && im_feas) {
            ctx.out << ", feasible-test degradation "
                    << median_or_nan(im_feas->rho_err) / median_or_nan(fm_feas->rho_err);
        }
        ctx.out << '\n';
    }

    json prov = provenance(ctx.command, ctx.cfg, inputs);
    auto dir = out_dir(ctx);
    write_table(dir / "errors_voltage.csv", prov, "model,formulation,test_set,record,variable,abs_error",
                v_rows.str());
    write_table(dir / "errors_residuals.csv", prov, "model,formulation,test_set,record,group,label,abs_value",
                r_rows.str());
    write_table(dir / "infeasible_comparison.csv", prov, "model,test_set,record,rho_true,rho_hat,abs_error",
                rho_rows.str());
    write_table(dir / "eval_summary.csv", prov,
                "model,formulation,test_set,n,median_v_error,median_angle_error,median_avg_residual,"
                "median_rho_error,zero_share_re_kcl,zero_share_im_kcl,zero_share_kvl,v_error_ratio_vs_model",
                summary.str());
    if (flag(ctx, "svg")) {
        std::vector<std::pair<std::string, std::vector<double>>> groups;
        std::vector<svg::Series> series;
        for (auto const& e : evals) {
            if (e.test_set == "test_feasible") groups.emplace_back(e.name + " " + e.formulation, e.v_err);
        }
        io::write_file((dir / "errors_voltage.svg").string(),
                       svg::box_summary("Voltage magnitude error, feasible test set", "|V error| (pu)", groups));
        for (auto const& e : evals) {
            if (e.rho_err.empty()) continue;
            svg::Series s{e.name + " " + e.test_set, {}, {}};
            for (auto const& rec : std::find_if(sets.begin(), sets.end(),
                                                [&](EvalSet const& x) { return x.name == e.test_set; })
                                       ->data.records) {
                s.x.push_back(std::log10(std::max(rec.rho, 1e-300)));
            }
            s.y = e.rho_err;
            s.x.resize(s.y.size());
            series.push_back(std::move(s));
        }
        io::write_file((dir / "infeasible_comparison.svg").string(),
                       svg::scatter("Residual norm prediction error", "log10 rho (exact)", "|rho_hat - rho|",
                                    series, true));
    }
    return 0;
}

// ---- pf -------------------------------------------------------------------

namespace {

struct PoRun {
    std::unique_ptr<LoadedModel> model;
    bool oracle = false;
};

PoRun po_setup(Context const& ctx, Network const& net, json& inputs) {
    PoRun run;
    run.oracle = flag(ctx, "oracle");
    if (!run.oracle) run.model = std::make_unique<LoadedModel>(load_rpf_model(ctx, net, inputs));
    return run;
}

/// Fresh predictor per task: the oracle keeps a warm start and is not shareable.
template <typename F>
auto with_predictor(PoRun const& run, Network const& net, F&& f) {
    if (run.oracle) {
        RpfOraclePredictor p(net);
        return f(static_cast<VoltagePredictor const&>(p));
    }
    NeuralPredictor p(run.model->solver, net);
    return f(static_cast<VoltagePredictor const&>(p));
}

std::string failure_row(int index, std::string const& what, int n_cols) {
    std::string row = std::to_string(index) + ",failed: " + csv_text(what);
    for (int k = 2; k < n_cols; ++k) row += ',';
    return row;
}

}  // namespace

int cmd_pf(Context const& ctx) {
    json inputs = json::object();
    Network net = load_net(ctx, inputs);
    PoRun run = po_setup(ctx, net, inputs);
    SlackSpec slack = parse_slack(net, str(ctx, "slack"));
    int n = count(ctx, "n");
    SamplingConfig sc = sampling_from(ctx);
    sc.lossless_balance = true;
    as_usage([&] { sc.validate(net); return 0; });
    std::uint64_t stream_seed = derive_seed(seed(ctx), 31);

    struct Row {
        std::string text;
        double err = kNaN, rho_hat = kNaN;
    };
    auto rows = parallel_map<Row>(static_cast<std::size_t>(n), threads(ctx), [&](std::size_t i) {
        int const idx = static_cast<int>(i);
        try {
            RecordRng rng(stream_seed, i);
            ControlVector u0 = sample_oc(rng, net, sc);
            auto exact = solve_feasible(net, u0, slack);
            if (!exact.feasible()) return Row{failure_row(idx, "reference " + to_string(exact.status), 10)};
            PoResult res = with_predictor(run, net, [&](VoltagePredictor const& p) {
                return solve_po_pf(p, net, u0, slack);
            });
            double err = std::abs(res.scalar - exact.slack_value);
            return Row{po_result_csv_row(idx, res, exact.slack_value, "ok"), err, res.rho_hat};
        } catch (Error const& e) {
            return Row{failure_row(idx, e.what(), 10)};
        }
    });

    std::ostringstream body;
    std::vector<double> errs, rhos;
    for (auto const& r : rows) {
        body << r.text << '\n';
        if (std::isfinite(r.err)) errs.push_back(r.err), rhos.push_back(r.rho_hat);
    }
    json prov = provenance(ctx.command, ctx.cfg, inputs);
    auto dir = out_dir(ctx);
    std::string tag = str(ctx, "slack");
    write_table(dir / ("pf_results_" + tag + ".csv"), prov, po_result_csv_header(), body.str());
    double med = median_or_nan(errs);
    double rank_corr = errs.size() > 2 ? stats::spearman(errs, rhos) : kNaN;
    write_json(dir / ("pf_summary_" + tag + ".json"), {{"provenance", prov},
                                                       {"n", n},
                                                       {"solved", errs.size()},
                                                       {"median_abs_error", med},
                                                       {"spearman_error_rho_hat", rank_corr}});
    ctx.out << "pf (" << tag << (run.oracle ? ", oracle" : "") << "): " << errs.size() << "/" << n
            << " solved, median |u_s error| " << med << ", Spearman(error, rho_hat) " << rank_corr << '\n';
    if (flag(ctx, "svg")) {
        io::write_file((dir / ("pf_results_" + tag + ".svg")).string(),
                       svg::scatter("Slack recovery", "rho_hat at solution", "|u_s error| (pu)",
                                    {{tag, rhos, errs}}, true));
    }
    return n > 0 && errs.empty() ? 2 : 0;
}

// ---- qss ------------------------------------------------------------------

int cmd_qss(Context const& ctx) {
    json inputs = json::object();
    Network net = load_net(ctx, inputs);
    PoRun run = po_setup(ctx, net, inputs);
    DroopConfig droop = DroopConfig::from_network(net, real(ctx, "droop"));
    as_usage([&] { droop.validate(static_cast<int>(net.generators.size())); return 0; });
    int n = count(ctx, "n");
    SamplingConfig sc = sampling_from(ctx);
    sc.mode = SamplingMode::infeasible;
    as_usage([&] { sc.validate(net); return 0; });
    std::uint64_t stream_seed = derive_seed(seed(ctx), 41);

    struct Row {
        std::string text;
        double loading = kNaN, dev = kNaN, dev_exact = kNaN;
        bool ok = false;
    };
    auto rows = parallel_map<Row>(static_cast<std::size_t>(n), threads(ctx), [&](std::size_t i) {
        int const idx = static_cast<int>(i);
        try {
            RecordRng rng(stream_seed, i);
            ControlVector u0 = sample_oc(rng, net, sc);
            double loading = total_load(net, u0);
            double omega_exact = exact_qss_omega(net, u0, droop);
            PoResult res = with_predictor(run, net, [&](VoltagePredictor const& p) {
                return solve_po_qss(p, net, u0, droop);
            });
            double dev = (res.scalar - droop.omega0) / droop.omega0;
            double dev_exact = (omega_exact - droop.omega0) / droop.omega0;
            bool sign_ok = (dev > 0) == (dev_exact > 0) && (dev < 0) == (dev_exact < 0);
            std::ostringstream os;
            os << idx << ",ok," << fmt(loading) << ',' << fmt(res.scalar) << ',' << fmt(omega_exact) << ','
               << fmt(dev) << ',' << fmt(dev_exact) << ',' << fmt(std::abs(res.scalar - omega_exact)) << ','
               << fmt(res.rho_hat) << ',' << res.iterations << ',' << (sign_ok ? 1 : 0);
            return Row{os.str(), loading, dev, dev_exact, sign_ok};
        } catch (Error const& e) {
            return Row{failure_row(idx, e.what(), 11)};
        }
    });

    std::ostringstream body;
    int solved = 0, sign_ok = 0;
    std::vector<double> loading, dev, dev_exact;
    for (auto const& r : rows) {
        body << r.text << '\n';
        if (!std::isfinite(r.dev)) continue;
        ++solved;
        sign_ok += r.ok ? 1 : 0;
        loading.push_back(r.loading);
        dev.push_back(r.dev);
        dev_exact.push_back(r.dev_exact);
    }
    json prov = provenance(ctx.command, ctx.cfg, inputs);
    auto dir = out_dir(ctx);
    write_table(dir / "qss_results.csv", prov,
                "index,status,loading,omega,omega_exact,deviation,deviation_exact,abs_error,rho_hat,iterations,sign_ok",
                body.str());
    double share = solved ? static_cast<double>(sign_ok) / solved : kNaN;
    write_json(dir / "qss_summary.json",
               {{"provenance", prov}, {"n", n}, {"solved", solved}, {"sign_agreement", share}});
    ctx.out << "qss (R " << droop.r << (run.oracle ? ", oracle" : "") << "): " << solved << "/" << n
            << " solved, deviation sign agrees on " << share * 100.0 << "%\n";
    if (flag(ctx, "svg")) {
        io::write_file((dir / "qss_results.svg").string(),
                       svg::scatter("Frequency deviation vs loading", "total load (pu)", "(omega - omega0)/omega0",
                                    {{"predicted", loading, dev}, {"exact", loading, dev_exact}}));
    }
    return n > 0 && solved == 0 ? 2 : 0;
}

// ---- opf ------------------------------------------------------------------

int cmd_opf(Context const& ctx) {
    json inputs = json::object();
    Network net = load_net(ctx, inputs);
    PoRun run = po_setup(ctx, net, inputs);
    auto const layout = ControlLayout::of(net);
    ControlPartition part = as_usage([&] { return ControlPartition::parse(net, str(ctx, "decisions")); });

    ControlVector u0 = ControlVector::nominal(net);
    if (double vref = real(ctx, "vref"); vref > 0.0) {
        for (int k = 0; k < layout.n_generators; ++k) u0.entries[layout.gen_v_ref(k)] = vref;
    }
    OpfSpec spec = OpfSpec::from_network(net, real(ctx, "cost_scale"));
    spec.lambda = real(ctx, "lambda");
    spec.lambda_max = std::max(spec.lambda, real(ctx, "lambda_max"));
    as_usage([&] { spec.validate(net); return 0; });

    PoResult res = with_predictor(run, net, [&](VoltagePredictor const& p) {
        return solve_po_opf(p, net, spec, part, u0);
    });

    auto const labels = layout.labels(net);
    json prov = provenance(ctx.command, ctx.cfg, inputs);
    auto dir = out_dir(ctx);
    std::ostringstream result;
    for (int d : part.decision) result << labels[d] << ',' << fmt(res.u.entries[d]) << '\n';
    result << "cost," << fmt(spec.cost(res.u)) << '\n'
           << "rho_hat," << fmt(res.rho_hat) << '\n'
           << "objective," << fmt(res.objective) << '\n'
           << "max_violation," << fmt(res.violations.max()) << '\n'
           << "iterations," << res.iterations << '\n';
    ctx.out << "opf (" << str(ctx, "decisions") << (run.oracle ? ", oracle" : "") << "):";
    for (int d : part.decision) ctx.out << ' ' << labels[d] << ' ' << res.u.entries[d];
    ctx.out << ", cost " << spec.cost(res.u) << ", rho_hat " << res.rho_hat << ", max violation "
            << res.violations.max() << '\n';

    int points = count(ctx, "grid");
    if (points > 0) {
        if (part.decision.size() > 2) throw UsageError("--grid supports one or two decisions");
        auto axis = [&](int control) {
            GridAxis a{control, spec.u_lower[control], spec.u_upper[control], points};
            if (!std::isfinite(a.lo) || !std::isfinite(a.hi)) {
                throw UsageError("grid axis " + labels[control] + " needs finite bounds");
            }
            return a;
        };
        GridAxis ax = axis(part.decision[0]);
        std::optional<GridAxis> ay;
        if (part.decision.size() == 2) ay = axis(part.decision[1]);
        auto t0 = std::chrono::steady_clock::now();
        GridResult grid = with_predictor(run, net, [&](VoltagePredictor const& p) {
            return grid_search_oracle(net, spec, u0, ax, ay, run.oracle ? nullptr : &p, threads(ctx));
        });
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        io::write_file((dir / "opf_grid.csv").string(), "# " + prov.dump() + "\n" + grid.to_csv(net));
        if (grid.argmin_index >= 0) {
            auto const& best = grid.argmin();
            auto cell = [](GridAxis const& a) { return a.points > 1 ? (a.hi - a.lo) / (a.points - 1) : 1.0; };
            double dist = std::abs(res.u.entries[ax.control] - best.x) / cell(ax);
            if (ay) dist = std::max(dist, std::abs(res.u.entries[ay->control] - best.y) / cell(*ay));
            result << "grid_argmin_" << labels[ax.control] << ',' << fmt(best.x) << '\n';
            if (ay) result << "grid_argmin_" << labels[ay->control] << ',' << fmt(best.y) << '\n';
            result << "grid_argmin_objective," << fmt(best.objective) << '\n'
                   << "cell_distance," << fmt(dist) << '\n';
            ctx.out << "grid " << points << (ay ? "x" + std::to_string(points) : "") << " in " << secs
                    << " s: argmin (" << best.x << (ay ? ", " + io::format_real(best.y) : "") << "), PO optimum "
                    << dist << " cells away\n";
            if (flag(ctx, "svg") && ay) {
                std::vector<double> xs, ys, values;
                for (int i = 0; i < ax.points; ++i) xs.push_back(ax.at(i));
                for (int j = 0; j < ay->points; ++j) ys.push_back(ay->at(j));
                for (auto const& p : grid.points) values.push_back(std::isfinite(p.objective) ? p.objective : kNaN);
                io::write_file((dir / "opf_grid.svg").string(),
                               svg::heat_grid("PO-OPF objective on the exact grid", labels[ax.control],
                                              labels[ay->control], xs, ys, values,
                                              {{best.x, best.y, "grid argmin"},
                                               {res.u.entries[ax.control], res.u.entries[ay->control],
                                                "PO optimum"}}));
            }
        } else {
            ctx.out << "grid: no point solved\n";
        }
    }
    write_table(dir / "opf_result.csv", prov, "quantity,value", result.str());
    return 0;
}

// ---- export ---------------------------------------------------------------

int cmd_export(Context const& ctx) {
    json inputs = json::object();
    std::string kind = str(ctx, "kind");
    auto dir = out_dir(ctx);
    if (kind == "network") {
        std::string path = str(ctx, "network");
        require_file(path, "network file");
        std::string text = io::read_file(path);
        NetworkSpec spec = fs::path(path).extension() == ".json" ? parse_network_json(text) : parse_matpower_case(text);
        io::write_file((dir / "network.json").string(), network_to_json(spec));
        ctx.out << "wrote " << (dir / "network.json").string() << '\n';
        return 0;
    }
    if (kind != "angles") throw UsageError("--kind expects network or angles, got '" + kind + "'");

    Network net = load_net(ctx, inputs);
    std::string data_path = input_path(ctx, "data", "train.csv");
    require_file(data_path, "dataset");
    inputs["data"] = file_fingerprint(data_path);
    Dataset ds = load_dataset(data_path, net);
    auto const layout = ControlLayout::of(net);

    // Branch adjacent to each generator bus, oriented away from it.
    struct GenBranch {
        int branch = -1;
        double sign = 1.0;
    };
    std::vector<GenBranch> gb(net.generators.size());
    for (std::size_t k = 0; k < net.generators.size(); ++k) {
        for (auto const& br : net.branches) {
            if (br.from == net.generators[k].bus || br.to == net.generators[k].bus) {
                gb[k] = {br.index, br.from == net.generators[k].bus ? 1.0 : -1.0};
                break;
            }
        }
    }
    std::ostringstream body;
    std::size_t const ng = net.generators.size();
    std::vector<std::vector<double>> pm(ng), phi(ng), theta(ng);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        auto const& rec = ds.records[i];
        auto bus_angles = reconstruct_bus_angles(net, rec.v_star.branch_angles);
        for (std::size_t k = 0; k < ng; ++k) {
            if (gb[k].branch < 0) continue;
            double p = rec.u.entries[layout.gen_p(static_cast<int>(k))];
            double a = gb[k].sign * rec.v_star.branch_angles[gb[k].branch];
            double t = bus_angles[net.generators[k].bus];
            pm[k].push_back(p);
            phi[k].push_back(a);
            theta[k].push_back(t);
            body << i << ',' << net.buses[net.generators[k].bus].external_id << ',' << fmt(p) << ',' << fmt(a) << ','
                 << fmt(t) << '\n';
        }
    }
    json prov = provenance(ctx.command, ctx.cfg, inputs);
    write_table(dir / "angles.csv", prov, "record,generator_bus,p_m,branch_angle,bus_angle", body.str());
    std::ostringstream summary;
    auto const slabels = state_labels(net);
    for (std::size_t k = 0; k < ng; ++k) {
        if (gb[k].branch < 0 || pm[k].size() < 3) continue;
        double r2_branch = stats::r_squared(pm[k], phi[k]);
        double r2_bus = stats::r_squared(pm[k], theta[k]);
        int ext = net.buses[net.generators[k].bus].external_id;
        summary << ext << ',' << slabels[net.n_buses() + gb[k].branch] << ',' << fmt(r2_branch) << ','
                << fmt(r2_bus) << '\n';
        ctx.out << "generator at bus " << ext << ": R^2 branch angle " << r2_branch << ", bus angle " << r2_bus
                << '\n';
    }
    write_table(dir / "angles_summary.csv", prov, "generator_bus,branch,r2_branch_angle,r2_bus_angle",
                summary.str());
    return 0;
}

// ---- registry -------------------------------------------------------------

json global_defaults() {
    return {{"network", RPF_DEFAULT_NETWORK}, {"injectors", ""}, {"seed", 7},
            {"out_dir", "."},                  {"threads", 0},    {"verbose", false}};
}

std::map<std::string, std::string> global_help() {
    return {{"network", "MATPOWER .m or network .json case"},
            {"injectors", "injector config JSON (default: <case stem>_injectors.json next to the case, if present)"},
            {"seed", "base random seed"},
            {"out_dir", "output directory (env RPF_OUT_DIR)"},
            {"threads", "worker threads, 0 for automatic (env RPF_THREADS)"},
            {"verbose", "progress messages on stderr"}};
}

std::vector<CommandSpec> const& commands() {
    static std::vector<CommandSpec> const specs = [] {
        std::vector<CommandSpec> s;
        json gen = sampling_defaults();
        gen["n_train"] = 2000;
        gen["n_test"] = 1000;
        auto gen_help = sampling_help();
        gen_help["n_train"] = "records per training file";
        gen_help["n_test"] = "records per test file";
        s.push_back({"gen", "Sample operating conditions and solve them into train/test datasets", gen, gen_help,
                     cmd_gen});

        s.push_back({"train", "Fit a neural solver to a dataset",
                     {{"data", ""},
                      {"model", ""},
                      {"curve", ""},
                      {"features", "mlp"},
                      {"formulation", "rpf"},
                      {"epochs", 6000},
                      {"hidden", "100,100"},
                      {"patience", 200},
                      {"val_fraction", 0.1}},
                     {{"data", "training dataset (default: <out-dir>/train.csv)"},
                      {"model", "checkpoint to write (default: <out-dir>/model.json)"},
                      {"curve", "training curve CSV (default: <model stem>_curve.csv)"},
                      {"features", "mlp or linear"},
                      {"formulation", "rpf (controls to voltages) or bim (bus-injection encoding)"},
                      {"epochs", "maximum epochs"},
                      {"hidden", "hidden layer widths"},
                      {"patience", "early-stopping patience in epochs"},
                      {"val_fraction", "validation share of the training data"}},
                     cmd_train});

        s.push_back({"eval", "Error tables for trained solvers on the test sets",
                     {{"model", ""},
                      {"baseline", ""},
                      {"infeasible_model", ""},
                      {"test_feasible", ""},
                      {"test_infeasible", ""},
                      {"svg", false}},
                     {{"model", "checkpoint (default: <out-dir>/model.json)"},
                      {"baseline", "second checkpoint compared against --model"},
                      {"infeasible_model", "checkpoint trained on infeasible OCs"},
                      {"test_feasible", "feasible test set (default: <out-dir>/test_feasible.csv)"},
                      {"test_infeasible", "infeasible test set (default: <out-dir>/test_infeasible.csv)"},
                      {"svg", "also render SVG summaries"}},
                     cmd_eval});

        json pf = sampling_defaults();
        pf.update({{"model", ""}, {"oracle", false}, {"slack", "gen1"}, {"n", 500}, {"svg", false}});
        auto pf_help = sampling_help();
        pf_help.insert({{"model", "rpf checkpoint (default: <out-dir>/model.json)"},
                        {"oracle", "use the exact RPF solution instead of the neural solver"},
                        {"slack", "gen<bus id> or distributed (equal shares)"},
                        {"n", "number of lossless-balanced OCs"},
                        {"svg", "also render an SVG scatter"}});
        s.push_back({"pf", "Recover the slack setpoint by predict-then-optimize", pf, pf_help, cmd_pf});

        json qss = sampling_defaults();
        qss.update({{"model", ""}, {"oracle", false}, {"droop", 0.04}, {"n", 500}, {"svg", false}});
        auto qss_help = sampling_help();
        qss_help.insert({{"model", "rpf checkpoint (default: <out-dir>/model.json)"},
                         {"oracle", "use the exact RPF solution instead of the neural solver"},
                         {"droop", "droop constant R"},
                         {"n", "number of infeasible OCs"},
                         {"svg", "also render an SVG scatter"}});
        s.push_back({"qss", "Quasi-steady-state frequency under generator droop", qss, qss_help, cmd_qss});

        s.push_back({"opf", "AC optimal power flow by predict-then-optimize, with an exact grid oracle",
                     {{"model", ""},
                      {"oracle", false},
                      {"decisions", "P1,P2"},
                      {"grid", 50},
                      {"lambda", 1e3},
                      {"lambda_max", 0.0},
                      {"vref", 1.0},
                      {"cost_scale", 1e-4},
                      {"svg", false}},
                     {{"model", "rpf checkpoint (default: <out-dir>/model.json)"},
                      {"oracle", "use the exact RPF solution instead of the neural solver"},
                      {"decisions", "decision controls, e.g. P1,P2 or V2 or PL5"},
                      {"grid", "grid points per axis for the exact oracle, 0 to skip"},
                      {"lambda", "weight of the residual norm"},
                      {"lambda_max", "continue x10 from --lambda up to this weight, 0 for none"},
                      {"vref", "voltage setpoint for every generator, 0 keeps the case values"},
                      {"cost_scale", "multiplier on the case cost table"},
                      {"svg", "also render the grid as SVG"}},
                     cmd_opf});

        s.push_back({"export", "Export network data or the angle analysis of a dataset",
                     {{"kind", "network"}, {"data", ""}},
                     {{"kind", "network (network.json) or angles (angles.csv)"},
                      {"data", "dataset for --kind angles (default: <out-dir>/train.csv)"}},
                     cmd_export});
        return s;
    }();
    return specs;
}

}  // namespace rpf::cli
