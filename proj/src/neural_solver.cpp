#include "rpf/neural_solver.hpp"

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "rpf/errors.hpp"
#include "rpf/random.hpp"
#include "rpf/simd.hpp"

namespace rpf {

namespace {

constexpr char const* kCheckpointFormat = "rpf-neural-solver";
constexpr int kCheckpointVersion = 1;
constexpr double kScaleFloor = 1e-8;

struct LayerView {
    int in = 0, out = 0;
    std::size_t w = 0, b = 0;  // offsets into the parameter vector
};

std::vector<LayerView> layer_views(int n_inputs, std::vector<int> const& hidden) {
    std::vector<LayerView> out;
    std::size_t offset = 0;
    int in = n_inputs;
    for (int width : hidden) {
        LayerView l{in, width, offset, offset + static_cast<std::size_t>(width) * in};
        offset = l.b + width;
        out.push_back(l);
        in = width;
    }
    return out;
}

// Activations of one batch, kept for the backward pass.
struct Forward {
    int n = 0;
    std::vector<double> xn;                 // standardized inputs
    std::vector<std::vector<double>> act;   // tanh outputs per hidden layer
    std::vector<double> phi_linear;         // [1, xn] for linear features
    std::vector<double> yn;                 // standardized outputs

    double const* phi() const { return act.empty() ? phi_linear.data() : act.back().data(); }
};

}  // namespace

std::string to_string(FeatureKind kind) { return kind == FeatureKind::linear ? "linear" : "mlp"; }

FeatureKind parse_feature_kind(std::string const& text) {
    if (text == "linear") return FeatureKind::linear;
    if (text == "mlp") return FeatureKind::mlp;
    throw ValidationError("unknown feature kind '" + text + "'");
}

TrainingData TrainingData::subset(std::span<int const> rows) const {
    TrainingData out{static_cast<int>(rows.size()), n_inputs, n_outputs, {}, {}};
    out.inputs.reserve(rows.size() * n_inputs);
    out.targets.reserve(rows.size() * n_outputs);
    for (int r : rows) {
        auto in = inputs.begin() + static_cast<std::ptrdiff_t>(r) * n_inputs;
        auto tg = targets.begin() + static_cast<std::ptrdiff_t>(r) * n_outputs;
        out.inputs.insert(out.inputs.end(), in, in + n_inputs);
        out.targets.insert(out.targets.end(), tg, tg + n_outputs);
    }
    return out;
}

TrainingData rpf_training_data(Dataset const& dataset) {
    TrainingData out;
    out.n_samples = static_cast<int>(dataset.records.size());
    if (out.n_samples == 0) return out;
    out.n_inputs = static_cast<int>(dataset.records[0].u.entries.size());
    out.n_outputs = static_cast<int>(dataset.records[0].v_star.flatten().size());
    for (auto const& rec : dataset.records) {
        out.inputs.insert(out.inputs.end(), rec.u.entries.begin(), rec.u.entries.end());
        auto v = rec.v_star.flatten();
        out.targets.insert(out.targets.end(), v.begin(), v.end());
    }
    return out;
}

Normalizer Normalizer::fit(TrainingData const& data) {
    if (data.n_samples == 0) throw ValidationError("cannot fit a normalizer on an empty dataset");
    auto stats = [&](int dim, auto value, std::vector<double>& mean, std::vector<double>& scale) {
        mean.assign(dim, 0.0);
        scale.assign(dim, 0.0);
        for (int i = 0; i < data.n_samples; ++i)
            for (int j = 0; j < dim; ++j) mean[j] += value(i, j);
        for (auto& m : mean) m /= data.n_samples;
        for (int i = 0; i < data.n_samples; ++i)
            for (int j = 0; j < dim; ++j) scale[j] += (value(i, j) - mean[j]) * (value(i, j) - mean[j]);
        for (auto& s : scale) s = std::max(std::sqrt(s / data.n_samples), kScaleFloor);
    };
    Normalizer n;
    stats(data.n_inputs, [&](int i, int j) { return data.input(i, j); }, n.input_mean, n.input_scale);
    stats(data.n_outputs, [&](int i, int j) { return data.target(i, j); }, n.target_mean, n.target_scale);
    return n;
}

Normalizer Normalizer::identity(int n_inputs, int n_outputs) {
    return {std::vector<double>(n_inputs, 0.0), std::vector<double>(n_inputs, 1.0), std::vector<double>(n_outputs, 0.0),
            std::vector<double>(n_outputs, 1.0)};
}

NeuralSolver::NeuralSolver(FeatureKind kind, int n_inputs, int n_outputs, std::vector<int> hidden, std::uint64_t seed)
    : kind_(kind), n_inputs_(n_inputs), n_outputs_(n_outputs), norm_(Normalizer::identity(n_inputs, n_outputs)) {
    if (n_inputs < 1 || n_outputs < 1) throw ValidationError("solver needs at least one input and one output");
    if (kind_ == FeatureKind::mlp) {
        if (hidden.empty()) throw ValidationError("MLP features need at least one hidden layer");
        for (int w : hidden) {
            if (w < 1) throw ValidationError("hidden widths must be positive");
        }
        hidden_ = std::move(hidden);
    }
    params_.assign(output_offset() + static_cast<std::size_t>(n_outputs_) * n_features(), 0.0);
    auto layers = layer_views(n_inputs_, hidden_);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        RecordRng rng(seed, l);
        double const limit = std::sqrt(6.0 / (layers[l].in + layers[l].out));
        for (std::size_t i = 0; i < static_cast<std::size_t>(layers[l].in) * layers[l].out; ++i) {
            params_[layers[l].w + i] = rng.uniform(-limit, limit);
        }
    }
}

int NeuralSolver::n_features() const noexcept {
    return kind_ == FeatureKind::linear ? n_inputs_ + 1 : hidden_.back();
}

std::size_t NeuralSolver::output_offset() const noexcept {
    if (kind_ == FeatureKind::linear) return 0;
    auto layers = layer_views(n_inputs_, hidden_);
    return layers.back().b + layers.back().out;
}

namespace {

void run_forward(NeuralSolver const& s, double const* x, int n, Forward& fw) {
    auto const& norm = s.normalizer();
    int const d = s.n_inputs();
    fw.n = n;
    fw.xn.resize(static_cast<std::size_t>(n) * d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            std::size_t const k = static_cast<std::size_t>(i) * d + j;
            fw.xn[k] = (x[k] - norm.input_mean[j]) / norm.input_scale[j];
        }

    double const* p = s.parameters().data();
    if (s.kind() == FeatureKind::linear) {
        fw.act.clear();
        fw.phi_linear.resize(static_cast<std::size_t>(n) * (d + 1));
        for (int i = 0; i < n; ++i) {
            fw.phi_linear[static_cast<std::size_t>(i) * (d + 1)] = 1.0;
            for (int j = 0; j < d; ++j) fw.phi_linear[static_cast<std::size_t>(i) * (d + 1) + 1 + j] = fw.xn[static_cast<std::size_t>(i) * d + j];
        }
    } else {
        auto layers = layer_views(d, s.hidden());
        fw.act.resize(layers.size());
        double const* in = fw.xn.data();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            auto const& L = layers[l];
            auto& h = fw.act[l];
            h.resize(static_cast<std::size_t>(n) * L.out);
            simd::gemm_nt(n, L.out, L.in, in, L.in, p + L.w, L.in, h.data(), L.out);
            for (int i = 0; i < n; ++i) {
                double* row = h.data() + static_cast<std::size_t>(i) * L.out;
                for (int j = 0; j < L.out; ++j) row[j] = std::tanh(row[j] + p[L.b + j]);
            }
            in = h.data();
        }
    }
    int const f = s.n_features();
    fw.yn.resize(static_cast<std::size_t>(n) * s.n_outputs());
    simd::gemm_nt(n, s.n_outputs(), f, fw.phi(), f, p + s.output_offset(), f, fw.yn.data(), s.n_outputs());
}

}  // namespace

std::vector<double> NeuralSolver::features(std::span<double const> x) const {
    if (static_cast<int>(x.size()) != n_inputs_) throw ValidationError("input has the wrong length");
    Forward fw;
    run_forward(*this, x.data(), 1, fw);
    return {fw.phi(), fw.phi() + n_features()};
}

std::vector<double> NeuralSolver::predict_batch(std::span<double const> x, int n) const {
    if (x.size() != static_cast<std::size_t>(n) * n_inputs_) throw ValidationError("input batch has the wrong size");
    Forward fw;
    run_forward(*this, x.data(), n, fw);
    std::vector<double> out = std::move(fw.yn);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n_outputs_; ++j) {
            double& y = out[static_cast<std::size_t>(i) * n_outputs_ + j];
            y = norm_.target_mean[j] + norm_.target_scale[j] * y;
        }
    return out;
}

std::vector<double> NeuralSolver::predict(std::span<double const> x) const { return predict_batch(x, 1); }

std::vector<double> NeuralSolver::pullback(std::span<double const> x, std::span<double const> g_output) const {
    if (static_cast<int>(g_output.size()) != n_outputs_) throw ValidationError("output gradient has the wrong length");
    Forward fw;
    run_forward(*this, x.data(), 1, fw);
    int const f = n_features();
    std::vector<double> g_yn(n_outputs_);
    for (int j = 0; j < n_outputs_; ++j) g_yn[j] = g_output[j] * norm_.target_scale[j];
    std::vector<double> g_phi(f);
    simd::gemm_nn(1, f, n_outputs_, g_yn.data(), n_outputs_, params_.data() + output_offset(), f, g_phi.data(), f);

    std::vector<double> g_xn;
    if (kind_ == FeatureKind::linear) {
        g_xn.assign(g_phi.begin() + 1, g_phi.end());
    } else {
        auto layers = layer_views(n_inputs_, hidden_);
        std::vector<double> g = std::move(g_phi);
        for (std::size_t l = layers.size(); l-- > 0;) {
            auto const& L = layers[l];
            for (int j = 0; j < L.out; ++j) g[j] *= 1.0 - fw.act[l][j] * fw.act[l][j];
            std::vector<double> g_in(L.in);
            simd::gemm_nn(1, L.in, L.out, g.data(), L.out, params_.data() + L.w, L.in, g_in.data(), L.in);
            g = std::move(g_in);
        }
        g_xn = std::move(g);
    }
    for (int j = 0; j < n_inputs_; ++j) g_xn[j] /= norm_.input_scale[j];
    return g_xn;
}

double NeuralSolver::loss(TrainingData const& data, std::vector<double>* grad) const {
    if (data.n_inputs != n_inputs_ || data.n_outputs != n_outputs_) throw ValidationError("data shape mismatch");
    int const n = data.n_samples;
    if (n == 0) throw ValidationError("loss over an empty dataset");
    Forward fw;
    run_forward(*this, data.inputs.data(), n, fw);

    int const o = n_outputs_;
    std::vector<double> diff(fw.yn.size());
    double total = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < o; ++j) {
            std::size_t const k = static_cast<std::size_t>(i) * o + j;
            diff[k] = fw.yn[k] - (data.targets[k] - norm_.target_mean[j]) / norm_.target_scale[j];
            total += diff[k] * diff[k];
        }
    double const value = total / n;
    if (!grad) return value;

    grad->assign(params_.size(), 0.0);
    for (auto& d : diff) d *= 2.0 / n;  // d loss / d yn
    int const f = n_features();
    double const* p = params_.data();
    double* g = grad->data();
    simd::gemm_tn(o, f, n, diff.data(), o, fw.phi(), f, g + output_offset(), f);
    if (kind_ == FeatureKind::linear) return value;

    auto layers = layer_views(n_inputs_, hidden_);
    std::vector<double> dh(static_cast<std::size_t>(n) * f);
    simd::gemm_nn(n, f, o, diff.data(), o, p + output_offset(), f, dh.data(), f);
    for (std::size_t l = layers.size(); l-- > 0;) {
        auto const& L = layers[l];
        auto const& h = fw.act[l];
        for (std::size_t k = 0; k < dh.size(); ++k) dh[k] *= 1.0 - h[k] * h[k];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < L.out; ++j) g[L.b + j] += dh[static_cast<std::size_t>(i) * L.out + j];
        double const* in = l == 0 ? fw.xn.data() : fw.act[l - 1].data();
        simd::gemm_tn(L.out, L.in, n, dh.data(), L.out, in, L.in, g + L.w, L.in);
        if (l > 0) {
            std::vector<double> prev(static_cast<std::size_t>(n) * L.in);
            simd::gemm_nn(n, L.in, L.out, dh.data(), L.out, p + L.w, L.in, prev.data(), L.in);
            dh = std::move(prev);
        }
    }
    return value;
}

std::string NeuralSolver::to_json(std::string const& extra_json) const {
    nlohmann::json j = {
        {"format", kCheckpointFormat},
        {"version", kCheckpointVersion},
        {"kind", to_string(kind_)},
        {"n_inputs", n_inputs_},
        {"n_outputs", n_outputs_},
        {"hidden", hidden_},
        {"normalizer",
         {{"input_mean", norm_.input_mean},
          {"input_scale", norm_.input_scale},
          {"target_mean", norm_.target_mean},
          {"target_scale", norm_.target_scale}}},
        {"parameters", params_},
    };
    auto extra = nlohmann::json::parse(extra_json);
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j.dump();
}

NeuralSolver NeuralSolver::from_json(std::string const& text) {
    try {
        auto j = nlohmann::json::parse(text);
        if (j.at("format") != kCheckpointFormat || j.at("version") != kCheckpointVersion) {
            throw FormatError("not a neural solver checkpoint");
        }
        NeuralSolver s(parse_feature_kind(j.at("kind")), j.at("n_inputs"), j.at("n_outputs"),
                       j.at("hidden").get<std::vector<int>>());
        auto const& n = j.at("normalizer");
        s.norm_ = {n.at("input_mean"), n.at("input_scale"), n.at("target_mean"), n.at("target_scale")};
        auto params = j.at("parameters").get<std::vector<double>>();
        if (params.size() != s.params_.size() || s.norm_.input_mean.size() != static_cast<std::size_t>(s.n_inputs_) ||
            s.norm_.target_mean.size() != static_cast<std::size_t>(s.n_outputs_)) {
            throw FormatError("checkpoint shapes are inconsistent");
        }
        s.params_ = std::move(params);
        return s;
    } catch (nlohmann::json::exception const& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

Prediction predict(NeuralSolver const& solver, Network const& network, ControlVector const& u) {
    if (solver.n_inputs() != network.n_controls() || solver.n_outputs() != network.n_voltage_vars()) {
        throw ValidationError("solver shape does not match the network");
    }
    auto y = solver.predict(u.entries);
    Prediction out{VoltageState::from_flat(network, y), false};
    for (double v : out.v.magnitudes) out.domain_violation |= !(v > 0.0);
    for (double a : out.v.branch_angles) out.domain_violation |= !(std::abs(a) < std::numbers::pi / 2);
    return out;
}

}  // namespace rpf
