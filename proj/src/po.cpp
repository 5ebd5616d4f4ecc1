#include "rpf/po.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rpf/errors.hpp"
#include "rpf/io.hpp"
#include "rpf/parallel.hpp"

namespace rpf {

namespace {

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

std::string describe_curve(std::vector<std::pair<double, double>> const& curve) {
    std::ostringstream os;
    os << "residual curve:";
    for (auto [x, f] : curve) os << " (" << io::format_real(x) << ", " << io::format_real(f) << ")";
    return os.str();
}

int generator_at_bus(Network const& net, int external_id) {
    int bus = net.bus_index(external_id);
    for (std::size_t k = 0; k < net.generators.size(); ++k) {
        if (net.generators[k].bus == bus) return static_cast<int>(k);
    }
    throw ValidationError("no generator at bus " + std::to_string(external_id));
}

int load_at_bus(Network const& net, int external_id) {
    int bus = net.bus_index(external_id);
    for (std::size_t i = 0; i < net.loads.size(); ++i) {
        if (net.loads[i].bus == bus) return static_cast<int>(i);
    }
    throw ValidationError("no load at bus " + std::to_string(external_id));
}

}  // namespace

// ---------------------------------------------------------------------------
// partition and droop

ControlPartition ControlPartition::from_decisions(Network const& network, std::vector<int> decision) {
    ControlPartition p;
    p.decision = std::move(decision);
    for (int i = 0; i < network.n_controls(); ++i) {
        if (std::find(p.decision.begin(), p.decision.end(), i) == p.decision.end()) p.fixed.push_back(i);
    }
    p.validate(network);
    return p;
}

ControlPartition ControlPartition::parse(Network const& network, std::string const& names) {
    auto const layout = ControlLayout::of(network);
    std::vector<int> decision;
    for (auto const& raw : io::split(names, ',')) {
        std::string name = raw;
        name.erase(std::remove_if(name.begin(), name.end(), ::isspace), name.end());
        if (name.empty()) continue;
        auto number = [&](std::size_t prefix) {
            try {
                std::size_t used = 0;
                int id = std::stoi(name.substr(prefix), &used);
                if (used != name.size() - prefix) throw std::invalid_argument(name);
                return id;
            } catch (std::exception const&) {
                throw ValidationError("bad decision name '" + name + "'");
            }
        };
        if (name.rfind("PL", 0) == 0) decision.push_back(layout.load_p(load_at_bus(network, number(2))));
        else if (name.rfind("QL", 0) == 0) decision.push_back(layout.load_q(load_at_bus(network, number(2))));
        else if (name[0] == 'P') decision.push_back(layout.gen_p(generator_at_bus(network, number(1))));
        else if (name[0] == 'V') decision.push_back(layout.gen_v_ref(generator_at_bus(network, number(1))));
        else throw ValidationError("bad decision name '" + name + "'");
    }
    return from_decisions(network, std::move(decision));
}

void ControlPartition::validate(Network const& network) const {
    int const m = network.n_controls();
    std::vector<int> seen(m, 0);
    for (int i : decision) {
        if (i < 0 || i >= m) throw ValidationError("decision index out of range");
        ++seen[i];
    }
    for (int i : fixed) {
        if (i < 0 || i >= m) throw ValidationError("fixed index out of range");
        ++seen[i];
    }
    for (int c : seen) {
        if (c != 1) throw ValidationError("decision and fixed indices must be disjoint and cover all controls");
    }
    if (decision.empty()) throw ValidationError("no decision variables");
}

DroopConfig DroopConfig::from_network(Network const& network, double r) {
    DroopConfig d;
    d.r = r;
    for (auto const& g : network.generators) d.p_rated.push_back(g.params.p_rated);
    return d;
}

void DroopConfig::validate(int n_generators) const {
    if (!(r > 0.0)) throw ValidationError("droop R must be positive");
    if (!(omega0 > 0.0)) throw ValidationError("nominal frequency must be positive");
    if (static_cast<int>(p_rated.size()) != n_generators) throw ValidationError("one P_rated per generator required");
    for (double p : p_rated) {
        if (!(p > 0.0)) throw ValidationError("P_rated must be positive");
    }
}

std::vector<double> DroopConfig::delta_p(double omega) const {
    std::vector<double> out(p_rated.size());
    double const dev = (omega - omega0) / omega0;
    for (std::size_t k = 0; k < p_rated.size(); ++k) out[k] = -(1.0 / r) * dev * p_rated[k];
    return out;
}

ControlVector DroopConfig::apply(ControlLayout const& layout, ControlVector const& u0, double omega) const {
    ControlVector u = u0;
    auto d = delta_p(omega);
    for (int k = 0; k < layout.n_generators; ++k) u.entries[layout.gen_p(k)] += d[k];
    return u;
}

// ---------------------------------------------------------------------------
// 1-D search

ScalarSearchResult minimize_scalar(std::function<std::pair<double, double>(double)> const& fn, double x0,
                                   ScalarSearchConfig const& cfg) {
    if (!(cfg.initial_step > 0.0) || cfg.max_iter < 1) throw ValidationError("invalid scalar search settings");
    ScalarSearchResult res;
    auto eval = [&](double x) {
        auto [f, g] = fn(x);
        ++res.evaluations;
        res.curve.emplace_back(x, f);
        if (!std::isfinite(f) || !std::isfinite(g)) {
            throw NotConverged("non-finite objective at x = " + io::format_real(x));
        }
        return std::pair{f, g};
    };
    auto accept = [&](double x, double f, double g) {
        if (!res.accepted_f.empty() && f > res.accepted_f.back()) return;
        res.x = x;
        res.f = f;
        res.df = g;
        res.accepted_f.push_back(f);
    };

    auto [fa, ga] = eval(x0);
    double xa = x0;
    accept(xa, fa, ga);
    if (std::abs(ga) <= cfg.grad_tol || ga == 0.0) return res;

    // expand towards descent until f' changes sign
    double const dir = -sign_of(ga);
    double h = cfg.initial_step;
    double xb = 0.0, fb = 0.0, gb = 0.0;
    bool bracketed = false;
    for (int e = 0; e < cfg.max_expansions; ++e) {
        ++res.iterations;
        double const xn = xa + dir * h;
        auto [fn_, gn] = eval(xn);
        if (sign_of(gn) != sign_of(ga)) {
            xb = xn, fb = fn_, gb = gn;
            bracketed = true;
            break;
        }
        if (fn_ > fa) throw NonDescent("objective rises along the descent direction; " + describe_curve(res.curve));
        double next = 2.0 * h;
        if (std::abs(gn) < std::abs(ga)) {
            // secant estimate of the remaining distance to the root of f'
            double remaining = std::abs(gn) * h / (std::abs(ga) - std::abs(gn));
            next = std::clamp(1.5 * remaining, h, 8.0 * h);
        }
        xa = xn, fa = fn_, ga = gn;
        accept(xa, fa, ga);
        h = next;
    }
    if (!bracketed) throw NotConverged("no sign change of the derivative; " + describe_curve(res.curve));
    accept(xb, fb, gb);

    double lo = xa, glo = ga, hi = xb, ghi = gb;
    if (glo > 0.0) std::swap(lo, hi), std::swap(glo, ghi);
    // lo: f' < 0, hi: f' > 0 (either side of the minimum)
    double best_abs_g = std::min(std::abs(glo), std::abs(ghi));
    double best_x = std::abs(glo) <= std::abs(ghi) ? lo : hi;
    int last_side = 0;
    double wlo = glo, whi = ghi;
    for (int it = 0; it < cfg.max_iter; ++it) {
        double const width = std::abs(hi - lo);
        if (width <= cfg.x_tol * (1.0 + std::abs(best_x))) break;
        ++res.iterations;
        double x = lo - wlo * (hi - lo) / (whi - wlo);
        double const margin = 1e-3 * width;
        if (!(x > std::min(lo, hi) + margin && x < std::max(lo, hi) - margin)) x = 0.5 * (lo + hi);
        auto [f, g] = eval(x);
        accept(x, f, g);
        if (std::abs(g) < best_abs_g) best_abs_g = std::abs(g), best_x = x;
        if (std::abs(g) <= cfg.grad_tol || g == 0.0) break;
        if (g < 0.0) {
            lo = x, glo = g, wlo = g;
            if (last_side == -1) whi *= 0.5;
            last_side = -1;
        } else {
            hi = x, ghi = g, whi = g;
            if (last_side == 1) wlo *= 0.5;
            last_side = 1;
        }
        if (it + 1 == cfg.max_iter && std::abs(hi - lo) > 1e-6 * (1.0 + std::abs(best_x))) {
            throw NotConverged("scalar search did not shrink the bracket; " + describe_curve(res.curve));
        }
    }
    // the point with the smallest |f'| is the estimate of the stationary point
    if (best_x != res.x) {
        auto [f, g] = fn(best_x);
        ++res.evaluations;
        res.x = best_x;
        res.f = f;
        res.df = g;
        if (!res.accepted_f.empty() && f <= res.accepted_f.back()) res.accepted_f.push_back(f);
    }
    return res;
}

// ---------------------------------------------------------------------------
// power flow and quasi-steady state

namespace {

PoResult finish(VoltagePredictor const& predictor, Network const& network, ControlVector u, std::string method) {
    PoResult out;
    out.v_hat = predictor.predict(u);
    out.rho_hat = residual_norm(assemble_residual(network, out.v_hat, u));
    out.objective = out.rho_hat;
    out.u = std::move(u);
    out.method = std::move(method);
    return out;
}

}  // namespace

PoResult solve_po_pf(VoltagePredictor const& predictor, Network const& network, ControlVector const& u0,
                     SlackSpec const& slack, ScalarSearchConfig const& cfg) {
    auto const layout = ControlLayout::of(network);
    slack.validate(layout.n_generators);
    if (static_cast<int>(u0.entries.size()) != layout.size()) throw ValidationError("control vector length mismatch");
    auto const dir = slack.direction(layout);
    std::vector<int> idx;
    for (int i = 0; i < layout.size(); ++i) {
        if (dir[i] != 0.0) idx.push_back(i);
    }
    auto at = [&](double s) {
        ControlVector u = u0;
        for (int i : idx) u.entries[i] += s * dir[i];
        return u;
    };
    auto fn = [&](double s) {
        auto rp = predict_residual_and_grad(predictor, network, at(s), idx);
        double g = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) g += rp.gradient[j] * dir[idx[j]];
        return std::pair{rp.rho, g};
    };
    auto search = minimize_scalar(fn, 0.0, cfg);
    auto out = finish(predictor, network, at(search.x), "po-pf");
    out.scalar = search.x;
    out.iterations = search.iterations;
    out.objective_history = std::move(search.accepted_f);
    return out;
}

PoResult solve_po_qss(VoltagePredictor const& predictor, Network const& network, ControlVector const& u0,
                      DroopConfig const& droop, ScalarSearchConfig const& cfg) {
    auto const layout = ControlLayout::of(network);
    droop.validate(layout.n_generators);
    if (static_cast<int>(u0.entries.size()) != layout.size()) throw ValidationError("control vector length mismatch");
    std::vector<int> idx;
    std::vector<double> d_omega;  // d P_M,k / d omega
    for (int k = 0; k < layout.n_generators; ++k) {
        idx.push_back(layout.gen_p(k));
        d_omega.push_back(-droop.p_rated[k] / (droop.r * droop.omega0));
    }
    auto fn = [&](double omega) {
        auto rp = predict_residual_and_grad(predictor, network, droop.apply(layout, u0, omega), idx);
        double g = 0.0;
        for (std::size_t k = 0; k < idx.size(); ++k) g += rp.gradient[k] * d_omega[k];
        return std::pair{rp.rho, g};
    };
    // one unit of initial_step moves total generation by that many pu
    double const total = std::accumulate(droop.p_rated.begin(), droop.p_rated.end(), 0.0);
    ScalarSearchConfig scfg = cfg;
    scfg.initial_step = cfg.initial_step * droop.r * droop.omega0 / total;
    auto search = minimize_scalar(fn, droop.omega0, scfg);
    auto out = finish(predictor, network, droop.apply(layout, u0, search.x), "po-qss");
    out.scalar = search.x;
    out.iterations = search.iterations;
    out.objective_history = std::move(search.accepted_f);
    return out;
}

double exact_qss_omega(Network const& network, ControlVector const& u0, DroopConfig const& droop,
                       SolverConfig const& cfg) {
    int const n_gen = static_cast<int>(network.generators.size());
    droop.validate(n_gen);
    double const total = std::accumulate(droop.p_rated.begin(), droop.p_rated.end(), 0.0);
    std::vector<std::pair<int, double>> targets;
    for (int k = 0; k < n_gen; ++k) targets.emplace_back(k, droop.p_rated[k] / total);
    auto sol = solve_feasible(network, u0, SlackSpec::distributed(std::move(targets)), cfg);
    require_feasible(sol);
    // total delta P = -(1/R) (omega - omega0) / omega0 * sum P_rated
    return droop.omega0 * (1.0 - droop.r * sol.slack_value / total);
}

// ---------------------------------------------------------------------------
// optimal power flow

double ConstraintReport::max() const noexcept { return std::max({u_bounds, voltage, branch_angle, current}); }

OpfSpec OpfSpec::from_network(Network const& network, double cost_scale) {
    if (!(cost_scale > 0.0)) throw ValidationError("cost scale must be positive");
    auto const layout = ControlLayout::of(network);
    int const m = layout.size();
    double const inf = std::numeric_limits<double>::infinity();
    OpfSpec s;
    s.q_mat = Eigen::MatrixXd::Zero(m, m);
    s.q_vec = Eigen::VectorXd::Zero(m);
    s.u_lower.assign(m, -inf);
    s.u_upper.assign(m, inf);
    for (int k = 0; k < layout.n_generators; ++k) {
        auto const& g = network.generators[k];
        int p = layout.gen_p(k);
        s.q_mat(p, p) = cost_scale * g.cost_c2;
        s.q_vec[p] = cost_scale * g.cost_c1;
        s.u_lower[p] = g.p_min;
        s.u_upper[p] = g.p_max;
        s.u_lower[layout.gen_v_ref(k)] = 0.9;
        s.u_upper[layout.gen_v_ref(k)] = 1.1;
    }
    for (auto const& b : network.buses) {
        s.v_min.push_back(b.v_min > 0.0 ? b.v_min : 0.0);
        s.v_max.push_back(b.v_max > 0.0 ? b.v_max : inf);
    }
    for (auto const& br : network.branches) s.current_max.push_back(br.rate > 0.0 ? br.rate : inf);
    return s;
}

void OpfSpec::validate(Network const& network) const {
    int const m = network.n_controls();
    if (q_mat.rows() != m || q_mat.cols() != m || q_vec.size() != m) throw ValidationError("cost has wrong shape");
    if ((q_mat - q_mat.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw ValidationError("cost matrix must be symmetric");
    }
    if (m > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q_mat);
        if (eig.eigenvalues().minCoeff() < -1e-12) throw ValidationError("cost matrix must be positive semidefinite");
    }
    if (!(lambda > 0.0) || lambda_max < lambda) throw ValidationError("penalty weight must be positive");
    if (static_cast<int>(u_lower.size()) != m || static_cast<int>(u_upper.size()) != m) {
        throw ValidationError("control bounds have wrong length");
    }
    for (int i = 0; i < m; ++i) {
        if (u_lower[i] > u_upper[i]) throw ValidationError("control bounds are inverted");
    }
    if (static_cast<int>(v_min.size()) != network.n_buses() || static_cast<int>(v_max.size()) != network.n_buses()) {
        throw ValidationError("voltage bounds need one entry per bus");
    }
    if (static_cast<int>(current_max.size()) != network.n_branches()) {
        throw ValidationError("current limits need one entry per branch");
    }
    if (!(angle_max > 0.0)) throw ValidationError("angle bound must be positive");
    if (!(penalty0 > 0.0) || penalty_max < penalty0) throw ValidationError("invalid penalty schedule");
    if (!(violation_tol > 0.0) || max_iter < 1) throw ValidationError("invalid OPF tolerances");
}

double OpfSpec::cost(ControlVector const& u) const {
    Eigen::Map<Eigen::VectorXd const> x(u.entries.data(), static_cast<Eigen::Index>(u.entries.size()));
    return x.dot(q_mat * x) + q_vec.dot(x);
}

namespace {

/// Exterior penalty sum max(0, g)^2 over state constraints with d/dv; also the report.
struct StatePenalty {
    double value = 0.0;
    Eigen::VectorXd d_v;
    ConstraintReport report;
};

StatePenalty state_penalty(Network const& network, OpfSpec const& spec, VoltageState const& v) {
    int const n = network.n_buses();
    StatePenalty out;
    out.d_v = Eigen::VectorXd::Zero(network.n_voltage_vars());
    auto add = [&](double g, double& worst, auto&& grad) {
        worst = std::max(worst, g);
        if (g <= 0.0) return;
        out.value += g * g;
        grad(2.0 * g);
    };
    for (int b = 0; b < n; ++b) {
        double const vb = v.magnitudes[b];
        add(vb - spec.v_max[b], out.report.voltage, [&](double s) { out.d_v[b] += s; });
        add(spec.v_min[b] - vb, out.report.voltage, [&](double s) { out.d_v[b] -= s; });
    }
    for (auto const& br : network.branches) {
        int const a = n + br.index;
        double const phi = v.branch_angles[br.index];
        if (std::isfinite(spec.angle_max)) {
            add(std::abs(phi) - spec.angle_max, out.report.branch_angle,
                [&](double s) { out.d_v[a] += s * sign_of(phi); });
        }
        double const limit = spec.current_max[br.index];
        if (!std::isfinite(limit)) continue;
        auto pe = branch_partials(br, v.magnitudes[br.from], v.magnitudes[br.to], phi);
        auto one_end = [&](std::complex<double> i, std::array<std::complex<double>, 3> const& d) {
            double const mag = std::abs(i);
            add(mag - limit, out.report.current, [&](double s) {
                if (mag == 0.0) return;
                int const cols[3] = {br.from, br.to, a};
                for (int c = 0; c < 3; ++c) out.d_v[cols[c]] += s * std::real(std::conj(i) * d[c]) / mag;
            });
        };
        one_end(pe.at_from, pe.d_from);
        one_end(pe.at_to, pe.d_to);
    }
    return out;
}

double bound_violation(OpfSpec const& spec, ControlVector const& u, std::vector<int> const& idx) {
    double worst = 0.0;
    for (int i : idx) {
        worst = std::max({worst, spec.u_lower[i] - u.entries[i], u.entries[i] - spec.u_upper[i]});
    }
    return worst;
}

}  // namespace

OpfObjective opf_objective(VoltagePredictor const& predictor, Network const& network, OpfSpec const& spec,
                      std::vector<int> const& idx, ControlVector const& u, double lambda, double mu) {
    auto v = predictor.predict(u);
    auto eval = evaluate_residual(network, v, u);
    auto pen = state_penalty(network, spec, v);
    Eigen::Map<Eigen::VectorXd const> r(eval.r.values.data(), static_cast<Eigen::Index>(eval.r.values.size()));
    Eigen::Map<Eigen::VectorXd const> x(u.entries.data(), static_cast<Eigen::Index>(u.entries.size()));

    OpfObjective out;
    out.rho = residual_norm(eval.r);
    out.report = pen.report;
    out.f = spec.cost(u) + lambda * out.rho + mu * pen.value;

    Eigen::VectorXd g_v = lambda * (eval.d_voltage.transpose() * r) + mu * pen.d_v;
    Eigen::VectorXd direct = lambda * (eval.d_control.transpose() * r) + (spec.q_mat + spec.q_mat.transpose()) * x +
                             spec.q_vec;
    auto through = predictor.pullback(u, std::span<double const>(g_v.data(), static_cast<std::size_t>(g_v.size())));
    out.grad.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.grad[j] = direct[idx[j]] + through[idx[j]];
    return out;
}

ConstraintReport evaluate_constraints(Network const& network, OpfSpec const& spec, VoltageState const& v,
                                      ControlVector const& u) {
    auto report = state_penalty(network, spec, v).report;
    std::vector<int> all(u.entries.size());
    std::iota(all.begin(), all.end(), 0);
    report.u_bounds = std::max(0.0, bound_violation(spec, u, all));
    return report;
}

PoResult solve_po_opf(VoltagePredictor const& predictor, Network const& network, OpfSpec const& spec,
                      ControlPartition const& partition, ControlVector const& u0) {
    spec.validate(network);
    partition.validate(network);
    if (static_cast<int>(u0.entries.size()) != network.n_controls()) {
        throw ValidationError("control vector length mismatch");
    }
    auto const& idx = partition.decision;
    if (bound_violation(spec, u0, idx) > 1e-12) throw InfeasibleStart("initial decision violates its bounds");

    auto project = [&](ControlVector& u) {
        for (int i : idx) u.entries[i] = std::clamp(u.entries[i], spec.u_lower[i], spec.u_upper[i]);
    };

    PoResult out;
    out.method = "po-opf";
    ControlVector u = u0;
    double lambda = spec.lambda;
    double mu = spec.penalty0;
    double alpha = 1e-2;
    bool converged = false;
    for (;;) {
        out.objective_history.clear();
        auto cur = opf_objective(predictor, network, spec, idx, u, lambda, mu);
        out.objective_history.push_back(cur.f);
        converged = false;
        for (int it = 0; it < spec.max_iter; ++it) {
            ++out.iterations;
            // projected-gradient stationarity measure
            double pg = 0.0;
            for (std::size_t j = 0; j < idx.size(); ++j) {
                int i = idx[j];
                double moved = std::clamp(u.entries[i] - cur.grad[j], spec.u_lower[i], spec.u_upper[i]);
                pg = std::max(pg, std::abs(moved - u.entries[i]));
            }
            if (pg <= spec.grad_tol) {
                converged = true;
                break;
            }
            double t = alpha;
            bool accepted = false;
            ControlVector trial;
            OpfObjective next;
            while (t > 1e-20) {
                trial = u;
                for (std::size_t j = 0; j < idx.size(); ++j) trial.entries[idx[j]] -= t * cur.grad[j];
                project(trial);
                double decrease = 0.0;
                for (std::size_t j = 0; j < idx.size(); ++j) {
                    decrease += cur.grad[j] * (u.entries[idx[j]] - trial.entries[idx[j]]);
                }
                next = opf_objective(predictor, network, spec, idx, trial, lambda, mu);
                if (next.f <= cur.f - 1e-4 * decrease) {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) {
                // no decrease representable at this scale
                converged = true;
                break;
            }
            // Barzilai-Borwein estimate for the next trial step
            double ss = 0.0, sy = 0.0;
            for (std::size_t j = 0; j < idx.size(); ++j) {
                double s = trial.entries[idx[j]] - u.entries[idx[j]];
                ss += s * s;
                sy += s * (next.grad[j] - cur.grad[j]);
            }
            alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e6) : std::min(2.0 * t, 1e6);
            double const change = cur.f - next.f;
            u = std::move(trial);
            cur = std::move(next);
            out.objective_history.push_back(cur.f);
            if (ss <= 1e-28 && change <= 1e-15 * (1.0 + std::abs(cur.f))) {
                converged = true;
                break;
            }
        }
        bool const violated = cur.report.max() > spec.violation_tol;
        bool const raise_mu = violated && mu < spec.penalty_max;
        bool const raise_lambda = lambda < spec.lambda_max;
        if (!raise_mu && !raise_lambda) {
            out.objective = cur.f;
            break;
        }
        if (raise_mu) mu = std::min(mu * 10.0, spec.penalty_max);
        if (raise_lambda) lambda = std::min(lambda * 10.0, spec.lambda_max);
    }
    if (!converged) throw NotConverged("projected gradient hit the iteration limit");

    out.v_hat = predictor.predict(u);
    out.rho_hat = residual_norm(assemble_residual(network, out.v_hat, u));
    out.violations = evaluate_constraints(network, spec, out.v_hat, u);
    out.scalar = spec.cost(u);
    out.u = std::move(u);
    return out;
}

// ---------------------------------------------------------------------------
// grid oracle

double GridAxis::at(int i) const {
    if (points <= 1) return 0.5 * (lo + hi);
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
}

GridPoint const& GridResult::argmin() const {
    if (argmin_index < 0) throw NotConverged("no grid point produced a solution");
    return points[argmin_index];
}

std::string GridResult::to_csv(Network const& network) const {
    auto const labels = ControlLayout::of(network).labels(network);
    std::ostringstream os;
    os << "i,j," << labels[ax.control] << ',' << (two_dimensional ? labels[ay.control] : std::string("y"))
       << ",rho,rho_hat,cost,violation,objective,argmin\n";
    auto opt = [](std::optional<double> const& x) { return x ? io::format_real(*x) : std::string(); };
    for (auto const& p : points) {
        os << p.i << ',' << p.j << ',' << io::format_real(p.x) << ',' << io::format_real(p.y) << ',' << opt(p.rho)
           << ',' << opt(p.rho_hat) << ',' << io::format_real(p.cost) << ',' << io::format_real(p.violation) << ','
           << (std::isfinite(p.objective) ? io::format_real(p.objective) : std::string()) << ','
           << (p.argmin ? 1 : 0) << '\n';
    }
    return os.str();
}

GridResult grid_search_oracle(Network const& network, OpfSpec const& spec, ControlVector const& u0, GridAxis ax,
                              std::optional<GridAxis> ay, VoltagePredictor const* predictor, int threads,
                              SolverConfig const& cfg) {
    spec.validate(network);
    int const m = network.n_controls();
    auto check = [&](GridAxis const& a) {
        if (a.control < 0 || a.control >= m) throw ValidationError("grid axis control out of range");
        if (a.points < 1) throw ValidationError("grid axis needs at least one point");
        if (!(a.lo <= a.hi)) throw ValidationError("grid axis range is inverted");
    };
    check(ax);
    GridResult out;
    out.ax = ax;
    if (ay) {
        check(*ay);
        if (ay->control == ax.control) throw ValidationError("grid axes must differ");
        out.ay = *ay;
        out.two_dimensional = true;
    } else {
        out.ay = GridAxis{ax.control, 0.0, 0.0, 1};
    }
    int const nx = ax.points, ny = out.ay.points;
    auto control_at = [&](int i, int j) {
        ControlVector u = u0;
        u.entries[ax.control] = ax.at(i);
        if (ay) u.entries[ay->control] = ay->at(j);
        return u;
    };
    auto const n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    out.points = parallel_map<GridPoint>(n, threads, [&](std::size_t k) {
        GridPoint p;
        p.i = static_cast<int>(k) / ny;
        p.j = static_cast<int>(k) % ny;
        auto u = control_at(p.i, p.j);
        p.x = u.entries[ax.control];
        p.y = ay ? u.entries[ay->control] : 0.0;
        p.cost = spec.cost(u);
        auto sol = solve_rpf(network, u, cfg);
        if (!sol.converged || !std::isfinite(sol.rho)) return p;
        p.rho = sol.rho;
        auto pen = state_penalty(network, spec, sol.v_star);
        p.violation = pen.report.max();
        p.objective = p.cost + spec.lambda_max * sol.rho + spec.penalty_max * pen.value;
        return p;
    });
    if (predictor != nullptr) {
        for (auto& p : out.points) {
            auto u = control_at(p.i, p.j);
            p.rho_hat = residual_norm(assemble_residual(network, predictor->predict(u), u));
        }
    }
    for (std::size_t k = 0; k < out.points.size(); ++k) {
        auto const& p = out.points[k];
        if (!std::isfinite(p.objective)) continue;
        if (out.argmin_index < 0 || p.objective < out.points[out.argmin_index].objective) {
            out.argmin_index = static_cast<int>(k);
        }
    }
    if (out.argmin_index >= 0) out.points[out.argmin_index].argmin = true;
    return out;
}

std::string po_result_csv_header() {
    return "index,status,method,scalar,reference,abs_error,rho_hat,objective,max_violation,iterations";
}

std::string po_result_csv_row(int index, PoResult const& r, double reference, std::string const& status) {
    std::ostringstream os;
    auto num = [](double x) { return std::isfinite(x) ? io::format_real(x) : std::string(); };
    os << index << ',' << status << ',' << r.method << ',' << num(r.scalar) << ',' << num(reference) << ','
       << num(std::abs(r.scalar - reference)) << ',' << num(r.rho_hat) << ',' << num(r.objective) << ','
       << num(r.violations.max()) << ',' << r.iterations;
    return os.str();
}

}  // namespace rpf
