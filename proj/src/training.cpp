#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "rpf/errors.hpp"
#include "rpf/io.hpp"
#include "rpf/neural_solver.hpp"
#include "rpf/random.hpp"

namespace rpf {

namespace {

using Vec = Eigen::VectorXd;

struct Objective {
    NeuralSolver& solver;
    TrainingData const& data;
    int evaluations = 0;

    double operator()(Vec const& theta, Vec& grad) {
        solver.parameters().assign(theta.data(), theta.data() + theta.size());
        std::vector<double> g;
        double f = solver.loss(data, &g);
        grad = Eigen::Map<Vec>(g.data(), g.size());
        ++evaluations;
        return f;
    }
};

struct LineSearchResult {
    bool ok = false;
    double alpha = 0.0;
    double f = 0.0;
    Vec x, g;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), falling back to
// bisection when it is undefined or outside the safeguarded interval.
double cubic_step(double a, double fa, double da, double b, double fb, double db) {
    double const d1 = da + db - 3.0 * (fa - fb) / (a - b);
    double const disc = d1 * d1 - da * db;
    double const lo = std::min(a, b), hi = std::max(a, b), margin = 0.1 * (hi - lo);
    if (disc >= 0.0) {
        double const d2 = std::copysign(std::sqrt(disc), b - a);
        double const t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
        if (std::isfinite(t) && t > lo + margin && t < hi - margin) return t;
    }
    return 0.5 * (a + b);
}

// Strong-Wolfe bracketing and zoom.
LineSearchResult strong_wolfe(Objective& fn, Vec const& x0, double f0, Vec const& g0, Vec const& dir, double alpha0) {
    constexpr double c1 = 1e-4, c2 = 0.9;
    constexpr int max_evals = 30;
    double const d0 = g0.dot(dir);
    LineSearchResult best;
    best.f = f0;

    auto eval = [&](double alpha, double& f, double& d, Vec& x, Vec& g) {
        x = x0 + alpha * dir;
        f = fn(x, g);
        d = g.dot(dir);
        if (std::isfinite(f) && f <= f0 + c1 * alpha * d0 && f < best.f) best = {false, alpha, f, x, g};
    };

    double a_prev = 0.0, f_prev = f0, d_prev = d0;
    double alpha = alpha0;
    int evals = 0;
    double lo = 0, f_lo = f0, d_lo = d0, hi = 0, f_hi = 0, d_hi = 0;
    bool bracketed = false;
    Vec x, g;
    while (evals < max_evals) {
        double f, d;
        eval(alpha, f, d, x, g);
        ++evals;
        if (!std::isfinite(f) || f > f0 + c1 * alpha * d0 || (evals > 1 && f >= f_prev)) {
            lo = a_prev, f_lo = f_prev, d_lo = d_prev;
            hi = alpha, f_hi = std::isfinite(f) ? f : f_prev, d_hi = std::isfinite(d) ? d : -d_prev;
            bracketed = std::isfinite(f);
            if (!bracketed) {
                alpha = 0.5 * (a_prev + alpha);
                continue;
            }
            break;
        }
        if (std::abs(d) <= -c2 * d0) return {true, alpha, f, x, g};
        if (d >= 0.0) {
            lo = alpha, f_lo = f, d_lo = d;
            hi = a_prev, f_hi = f_prev, d_hi = d_prev;
            bracketed = true;
            break;
        }
        a_prev = alpha, f_prev = f, d_prev = d;
        alpha *= 2.0;
    }
    while (bracketed && evals < max_evals) {
        double const a = cubic_step(lo, f_lo, d_lo, hi, f_hi, d_hi);
        double f, d;
        eval(a, f, d, x, g);
        ++evals;
        if (!std::isfinite(f) || f > f0 + c1 * a * d0 || f >= f_lo) {
            hi = a, f_hi = std::isfinite(f) ? f : f_hi, d_hi = std::isfinite(d) ? d : d_hi;
        } else {
            if (std::abs(d) <= -c2 * d0) return {true, a, f, x, g};
            if (d * (hi - lo) >= 0.0) hi = lo, f_hi = f_lo, d_hi = d_lo;
            lo = a, f_lo = f, d_lo = d;
        }
        if (std::abs(hi - lo) <= 1e-16 * std::max(1.0, std::abs(lo))) break;
    }
    return best;  // ok == false; carries the best sufficient-decrease point if any
}

class Lbfgs {
  public:
    explicit Lbfgs(int history) : history_(history) {}

    void reset() {
        s_.clear();
        y_.clear();
        rho_.clear();
    }

    Vec direction(Vec const& g) const {
        Vec q = -g;
        std::vector<double> alpha(s_.size());
        for (std::size_t i = s_.size(); i-- > 0;) {
            alpha[i] = rho_[i] * s_[i].dot(q);
            q -= alpha[i] * y_[i];
        }
        if (!s_.empty()) q *= s_.back().dot(y_.back()) / y_.back().squaredNorm();
        for (std::size_t i = 0; i < s_.size(); ++i) {
            double const beta = rho_[i] * y_[i].dot(q);
            q += (alpha[i] - beta) * s_[i];
        }
        return q;
    }

    void update(Vec s, Vec y) {
        double const sy = s.dot(y);
        if (!(sy > 1e-12 * s.norm() * y.norm())) return;
        if (static_cast<int>(s_.size()) == history_) {
            s_.erase(s_.begin());
            y_.erase(y_.begin());
            rho_.erase(rho_.begin());
        }
        rho_.push_back(1.0 / sy);
        s_.push_back(std::move(s));
        y_.push_back(std::move(y));
    }

    bool empty() const { return s_.empty(); }

  private:
    int history_;
    std::vector<Vec> s_, y_;
    std::vector<double> rho_;
};

}  // namespace

void TrainConfig::validate() const {
    if (max_epochs < 1) throw ValidationError("max_epochs must be at least 1");
    if (lbfgs_history < 1) throw ValidationError("L-BFGS history must be at least 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ValidationError("val_fraction must lie in [0, 1)");
    if (patience < 1) throw ValidationError("patience must be at least 1");
    if (!(adam_lr > 0.0)) throw ValidationError("adam_lr must be positive");
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double val_fraction, std::uint64_t seed) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    RecordRng rng(seed, 0x5eed);
    for (int i = n - 1; i > 0; --i) {
        int const j = std::min(i, static_cast<int>(rng.uniform() * (i + 1)));
        std::swap(order[i], order[j]);
    }
    int const n_val = static_cast<int>(std::floor(val_fraction * n));
    std::vector<int> val(order.begin(), order.begin() + n_val), tr(order.begin() + n_val, order.end());
    std::sort(val.begin(), val.end());
    std::sort(tr.begin(), tr.end());
    return {tr, val};
}

LinearFitReport fit_linear(NeuralSolver& solver, TrainingData const& data) {
    if (solver.kind() != FeatureKind::linear) throw ValidationError("fit_linear needs linear features");
    if (data.n_samples == 0) throw ValidationError("fit_linear on an empty dataset");
    int const n = data.n_samples, d = data.n_inputs, o = data.n_outputs;
    auto const& norm = solver.normalizer();
    Eigen::MatrixXd phi(n, d + 1), targets(n, o);
    for (int i = 0; i < n; ++i) {
        phi(i, 0) = 1.0;
        for (int j = 0; j < d; ++j) phi(i, j + 1) = (data.input(i, j) - norm.input_mean[j]) / norm.input_scale[j];
        for (int j = 0; j < o; ++j) targets(i, j) = (data.target(i, j) - norm.target_mean[j]) / norm.target_scale[j];
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(phi);
    Eigen::MatrixXd at = cod.solve(targets);  // (d + 1) x o, minimum norm
    auto& p = solver.parameters();
    for (int r = 0; r < o; ++r)
        for (int c = 0; c < d + 1; ++c) p[static_cast<std::size_t>(r) * (d + 1) + c] = at(c, r);
    return {static_cast<int>(cod.rank()), d + 1, solver.loss(data)};
}

TrainReport train(NeuralSolver& solver, TrainingData const& data, TrainConfig const& cfg) {
    cfg.validate();
    if (data.n_samples == 0) throw ValidationError("training on an empty dataset");
    auto [train_rows, val_rows] = split_indices(data.n_samples, cfg.val_fraction, cfg.seed);
    auto const train_set = data.subset(train_rows);
    auto const val_set = data.subset(val_rows);
    if (cfg.fit_normalizer) solver.normalizer() = Normalizer::fit(train_set);

    TrainReport report;
    auto val_loss = [&] { return val_set.n_samples > 0 ? solver.loss(val_set) : solver.loss(train_set); };

    if (solver.kind() == FeatureKind::linear) {
        report.linear = fit_linear(solver, train_set);
        report.train_loss.push_back(report.linear.loss);
        report.val_loss.push_back(val_loss());
        report.epochs = report.best_epoch = 1;
        report.best_val_loss = report.val_loss.back();
        report.stop_reason = "closed_form";
        return report;
    }

    Objective fn{solver, train_set};
    Vec x = Eigen::Map<Vec>(solver.parameters().data(), solver.parameters().size());
    Vec g;
    double f = fn(x, g);
    if (!std::isfinite(f)) throw NonFiniteLoss("initial training loss is not finite");

    Vec best_x = x;
    report.best_val_loss = val_loss();
    int since_best = 0;
    Lbfgs memory(cfg.lbfgs_history);
    double initial_step = std::min(1.0, 1.0 / std::max(g.lpNorm<1>(), 1e-12));
    bool use_adam = false;
    Vec adam_m = Vec::Zero(x.size()), adam_v = Vec::Zero(x.size());
    int adam_t = 0;
    int flat_epochs = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        double const f_before = f;
        if (!use_adam) {
            Vec dir = memory.direction(g);
            if (!(dir.dot(g) < 0.0)) {
                memory.reset();
                dir = -g;
            }
            double alpha0 = memory.empty() ? initial_step : 1.0;
            // A point with sufficient decrease is kept even when the curvature
            // condition was not met; only a search without decrease fails.
            auto ls = strong_wolfe(fn, x, f, g, dir, alpha0);
            if (ls.x.size() == 0) {
                ++report.line_search_restarts;
                memory.reset();
                initial_step *= 0.5;
                ls = strong_wolfe(fn, x, f, g, -g, initial_step);
                if (ls.x.size() == 0) {
                    use_adam = true;
                    report.switched_to_adam = true;
                }
            }
            if (ls.x.size() > 0) {
                memory.update(ls.x - x, ls.g - g);
                x = std::move(ls.x);
                g = std::move(ls.g);
                f = ls.f;
            }
        }
        if (use_adam) {
            constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
            ++adam_t;
            adam_m = b1 * adam_m + (1 - b1) * g;
            adam_v = b2 * adam_v + (1 - b2) * g.cwiseProduct(g);
            Vec const m_hat = adam_m / (1 - std::pow(b1, adam_t));
            Vec const v_hat = adam_v / (1 - std::pow(b2, adam_t));
            x -= cfg.adam_lr * m_hat.cwiseQuotient((v_hat.array().sqrt() + eps).matrix());
            f = fn(x, g);
        }
        if (!std::isfinite(f)) throw NonFiniteLoss("training loss became non-finite at epoch " + std::to_string(epoch));

        solver.parameters().assign(x.data(), x.data() + x.size());
        double const vl = val_loss();
        report.train_loss.push_back(f);
        report.val_loss.push_back(vl);
        report.epochs = epoch;
        if (vl < report.best_val_loss) {
            report.best_val_loss = vl;
            report.best_epoch = epoch;
            best_x = x;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            report.stop_reason = "patience";
            break;
        }
        if (g.lpNorm<Eigen::Infinity>() <= 1e-12) {
            report.stop_reason = "gradient";
            break;
        }
        flat_epochs = f_before - f <= 1e-15 * std::max(1.0, std::abs(f)) ? flat_epochs + 1 : 0;
        if (flat_epochs >= 20) {
            report.stop_reason = "stalled";
            break;
        }
    }
    if (report.stop_reason.empty()) report.stop_reason = "max_epochs";
    solver.parameters().assign(best_x.data(), best_x.data() + best_x.size());
    return report;
}

std::string TrainReport::to_csv() const {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t i = 0; i < train_loss.size(); ++i) {
        out << i + 1 << ',' << io::format_real(train_loss[i]) << ',' << io::format_real(val_loss[i]) << '\n';
    }
    return out.str();
}

}  // namespace rpf
