#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpf/dataset.hpp"

namespace rpf {

enum class FeatureKind { linear, mlp };

std::string to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string const& text);

/// Row-major sample matrix pair: inputs (n x n_inputs) and targets (n x n_outputs).
struct TrainingData {
    int n_samples = 0;
    int n_inputs = 0;
    int n_outputs = 0;
    std::vector<double> inputs;
    std::vector<double> targets;

    double input(int i, int j) const { return inputs[static_cast<std::size_t>(i) * n_inputs + j]; }
    double target(int i, int j) const { return targets[static_cast<std::size_t>(i) * n_outputs + j]; }
    TrainingData subset(std::span<int const> rows) const;
};

/// Controls as inputs, flattened voltage states as targets.
TrainingData rpf_training_data(Dataset const& dataset);

struct Normalizer {
    std::vector<double> input_mean, input_scale;
    std::vector<double> target_mean, target_scale;

    static Normalizer fit(TrainingData const& data);
    static Normalizer identity(int n_inputs, int n_outputs);

    bool operator==(Normalizer const&) const = default;
};

/// Phi(x) = A phi(x) on standardized inputs and targets. Parameters live in one
/// flat vector: MLP weights and biases layer by layer (W row-major, out x in),
/// then A (n_outputs x F, row-major).
class NeuralSolver {
  public:
    NeuralSolver() = default;
    /// Glorot-uniform weights from `seed`, zero biases, zero A.
    NeuralSolver(FeatureKind kind, int n_inputs, int n_outputs, std::vector<int> hidden = {100, 100},
                 std::uint64_t seed = 0);

    FeatureKind kind() const noexcept { return kind_; }
    int n_inputs() const noexcept { return n_inputs_; }
    int n_outputs() const noexcept { return n_outputs_; }
    int n_features() const noexcept;
    std::vector<int> const& hidden() const noexcept { return hidden_; }

    std::vector<double>& parameters() noexcept { return params_; }
    std::vector<double> const& parameters() const noexcept { return params_; }
    std::size_t n_parameters() const noexcept { return params_.size(); }
    /// Offset of A inside the parameter vector.
    std::size_t output_offset() const noexcept;

    Normalizer& normalizer() noexcept { return norm_; }
    Normalizer const& normalizer() const noexcept { return norm_; }

    /// Features of one raw input vector.
    std::vector<double> features(std::span<double const> x) const;
    /// Denormalized outputs for a batch of raw inputs (n x n_inputs, row-major).
    std::vector<double> predict_batch(std::span<double const> x, int n) const;
    std::vector<double> predict(std::span<double const> x) const;

    /// Vector-Jacobian product (d output / d x)^T g for one raw input.
    std::vector<double> pullback(std::span<double const> x, std::span<double const> g_output) const;

    /// Mean over samples of the squared error in standardized target space.
    /// Fills `grad` (same length as parameters) when non-null.
    double loss(TrainingData const& data, std::vector<double>* grad = nullptr) const;

    std::string to_json(std::string const& extra_json = "{}") const;
    static NeuralSolver from_json(std::string const& text);

    bool operator==(NeuralSolver const&) const = default;

  private:
    FeatureKind kind_ = FeatureKind::linear;
    int n_inputs_ = 0;
    int n_outputs_ = 0;
    std::vector<int> hidden_;
    std::vector<double> params_;
    Normalizer norm_;
};

struct LinearFitReport {
    int rank = 0;
    int n_features = 0;
    double loss = 0.0;
};

/// Minimum-norm least-squares fit of A on linear features (rank-deficient
/// systems are accepted; the effective rank is reported).
LinearFitReport fit_linear(NeuralSolver& solver, TrainingData const& data);

struct TrainConfig {
    int max_epochs = 6000;
    int lbfgs_history = 10;
    double adam_lr = 1e-3;
    std::uint64_t seed = 0;
    double val_fraction = 0.1;
    int patience = 200;
    bool fit_normalizer = true;

    void validate() const;
};

struct TrainReport {
    std::vector<double> train_loss;  // per epoch, standardized space
    std::vector<double> val_loss;
    int epochs = 0;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    int line_search_restarts = 0;
    bool switched_to_adam = false;
    std::string stop_reason;
    LinearFitReport linear;  // linear features only

    std::string to_csv() const;
};

/// Linear features: closed-form fit. MLP: full-batch L-BFGS with strong-Wolfe
/// line search, Adam fallback, early stopping on the validation split.
TrainReport train(NeuralSolver& solver, TrainingData const& data, TrainConfig const& cfg);

/// Validation split indices (train, validation) drawn from `seed`.
std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double val_fraction, std::uint64_t seed);

// Network-level prediction.

struct Prediction {
    VoltageState v;
    bool domain_violation = false;  // V <= 0 or |phi| >= pi/2 somewhere; values are not clipped
};

Prediction predict(NeuralSolver const& solver, Network const& network, ControlVector const& u);

/// Maps controls to a voltage state and pulls voltage gradients back to controls.
class VoltagePredictor {
  public:
    virtual ~VoltagePredictor() = default;
    virtual VoltageState predict(ControlVector const& u) const = 0;
    /// (d v / d u)^T g_v at u.
    virtual std::vector<double> pullback(ControlVector const& u, std::span<double const> g_v) const = 0;
};

class NeuralPredictor : public VoltagePredictor {
  public:
    NeuralPredictor(NeuralSolver const& solver, Network const& network);
    VoltageState predict(ControlVector const& u) const override;
    std::vector<double> pullback(ControlVector const& u, std::span<double const> g_v) const override;

  private:
    NeuralSolver const& solver_;
    Network const& network_;
};

/// Exact RPF solution as predictor. The pullback uses the Gauss-Newton implicit
/// derivative dv*/du = -(J_v^T W J_v)^-1 J_v^T W J_u, exact at feasible points.
class RpfOraclePredictor : public VoltagePredictor {
  public:
    explicit RpfOraclePredictor(Network const& network, SolverConfig cfg = {});
    VoltageState predict(ControlVector const& u) const override;
    std::vector<double> pullback(ControlVector const& u, std::span<double const> g_v) const override;

  private:
    Network const& network_;
    SolverConfig cfg_;
    mutable std::optional<VoltageState> warm_;
};

struct ResidualPrediction {
    double rho = 0.0;
    std::vector<double> gradient;  // one entry per decision index
    VoltageState v;
};

/// rho_hat(u) = rho(v_hat(u); u) and its gradient over `decision_indices`:
/// J_u^T W r + (d v_hat / d u)^T J_v^T W r.
ResidualPrediction predict_residual_and_grad(VoltagePredictor const& predictor, Network const& network,
                                             ControlVector const& u, std::span<int const> decision_indices);

}  // namespace rpf
