#pragma once

// Numerical integration of Hamiltonian flows (fixed-step classical RK4) and
// quantitative conservation verification: per-invariant drift along
// trajectories and empirical convergence-order estimation.

#include <cmath>
#include <functional>
#include <vector>

#include "phasesym/mechanics.hpp"

namespace phasesym {

struct IntegratorConfig {
    double step = 1e-3;
    double total_time = 10.0;
    // presymplectic gauge choice: coefficients of the declared kernel fields
    // added to the integrated representative
    std::vector<double> kernel_admixture;

    void validate() const {
        if (!(step > 0.0)) throw ValidationError("integrator step must be positive");
        if (!(total_time > 0.0)) throw ValidationError("integrator time must be positive");
        if (total_time / step > 1e7)
            throw ValidationError("T/h exceeds 10^7 steps");
    }
};

struct DriftSummary {
    int k = 0;
    double initial = 0.0;
    double drift = 0.0;  // max |I(t) - I(0)| / (1 + |I(0)|)
};

struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    std::vector<std::vector<double>> invariant_series;  // filled by conservation_drift
    std::vector<DriftSummary> drifts;
};

namespace detail {
using StateFn = std::function<Eigen::VectorXd(const std::vector<double>&)>;

inline Trajectory rk4_integrate(const StateFn& field, const std::vector<double>& x0,
                                const IntegratorConfig& cfg) {
    cfg.validate();
    // land exactly on T: round to the nearest whole number of steps and
    // absorb the remainder into the step size
    const int n_steps =
        std::max(1, static_cast<int>(std::llround(cfg.total_time / cfg.step)));
    const double h = cfg.total_time / n_steps;
    Trajectory traj;
    traj.times.reserve(static_cast<std::size_t>(n_steps) + 1);
    traj.states.reserve(static_cast<std::size_t>(n_steps) + 1);
    std::vector<double> x = x0;
    traj.times.push_back(0.0);
    traj.states.push_back(x);
    const int d = static_cast<int>(x0.size());
    auto axpy = [&](const std::vector<double>& base, double a, const Eigen::VectorXd& k) {
        std::vector<double> out = base;
        for (int i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] += a * k(i);
        return out;
    };
    for (int s = 0; s < n_steps; ++s) {
        Eigen::VectorXd k1, k2, k3, k4;
        try {
            k1 = field(x);
            k2 = field(axpy(x, h / 2, k1));
            k3 = field(axpy(x, h / 2, k2));
            k4 = field(axpy(x, h, k3));
        } catch (const DomainPointError&) {
            // overflow or a singular point reached mid-step: the trajectory
            // has left the evaluable domain
            throw BlowUpError(s * h);
        }
        for (int i = 0; i < d; ++i)
            x[static_cast<std::size_t>(i)] +=
                h / 6.0 * (k1(i) + 2 * k2(i) + 2 * k3(i) + k4(i));
        for (double v : x)
            if (!std::isfinite(v)) throw BlowUpError((s + 1) * h);
        traj.times.push_back((s + 1) * h);
        traj.states.push_back(x);
    }
    return traj;
}
}  // namespace detail

/// X_h (representative) plus the configured kernel admixture, as a compiled
/// state-space field.
inline detail::StateFn flow_field(const PhaseSpaceSystem& sys, const IntegratorConfig& cfg,
                                  Rng& rng, bool negated = false) {
    HamiltonianField xh = hamiltonian_vector_field(sys, rng);
    std::vector<detail::CompiledVectorField> kernels;
    auto slots = sys.slot_map();
    for (const auto& u : sys.kernel_basis) kernels.emplace_back(u, slots);
    std::vector<double> coeffs = cfg.kernel_admixture;
    coeffs.resize(kernels.size(), 0.0);
    auto sysp = std::make_shared<PhaseSpaceSystem>(sys);
    double sign = negated ? -1.0 : 1.0;
    return [xh, kernels, coeffs, sysp, sign](const std::vector<double>& state) {
        Eigen::VectorXd v = xh.pointwise(state);
        std::vector<double> sl = sysp->slots_for(state);
        for (std::size_t i = 0; i < kernels.size(); ++i)
            if (coeffs[i] != 0.0) v += coeffs[i] * kernels[i](sl);
        return Eigen::VectorXd(sign * v);
    };
}

inline Trajectory integrate_flow(const PhaseSpaceSystem& sys, const std::vector<double>& x0,
                                 const IntegratorConfig& cfg, Rng& rng) {
    return detail::rk4_integrate(flow_field(sys, cfg, rng), x0, cfg);
}

/// Per-invariant max relative drift along the trajectory; fills the
/// invariant series as a side effect.
inline std::vector<DriftSummary> conservation_drift(Trajectory& traj, const InvariantSet& inv) {
    traj.invariant_series.assign(inv.entries.size(), {});
    traj.drifts.clear();
    for (std::size_t e = 0; e < inv.entries.size(); ++e) {
        auto& series = traj.invariant_series[e];
        series.reserve(traj.states.size());
        double i0 = 0.0, worst = 0.0;
        for (std::size_t s = 0; s < traj.states.size(); ++s) {
            double v;
            try {
                v = inv.entries[e].value(traj.states[s]);
            } catch (const DomainPointError& err) {
                throw SingularPointError(err.what());
            }
            series.push_back(v);
            if (s == 0) i0 = v;
            worst = std::max(worst, std::abs(v - i0) / (1.0 + std::abs(i0)));
        }
        traj.drifts.push_back({inv.entries[e].k, i0, worst});
    }
    return traj.drifts;
}

struct ConvergenceEstimate {
    bool at_floor = false;   // drift below 1e-13: order not measurable
    double order = 0.0;      // least-squares slope of log drift vs log h
    std::vector<double> drifts;
};

/// Empirical integrator order from drifts at a geometric ladder of steps.
inline ConvergenceEstimate convergence_order(const PhaseSpaceSystem& sys,
                                             const std::vector<double>& x0,
                                             const InvariantEntry& invariant,
                                             const std::vector<double>& steps,
                                             double total_time, Rng& rng) {
    if (steps.size() < 3)
        throw ValidationError("convergence_order needs at least 3 step sizes");
    ConvergenceEstimate out;
    for (double h : steps) {
        IntegratorConfig cfg;
        cfg.step = h;
        cfg.total_time = total_time;
        Trajectory traj = integrate_flow(sys, x0, cfg, rng);
        double i0 = invariant.value(traj.states.front());
        double worst = 0.0;
        for (const auto& s : traj.states)
            worst = std::max(worst, std::abs(invariant.value(s) - i0) / (1.0 + std::abs(i0)));
        out.drifts.push_back(worst);
    }
    for (double dft : out.drifts)
        if (dft < 1e-13) {
            out.at_floor = true;
            return out;
        }
    // least-squares slope
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        double lx = std::log(steps[i]), ly = std::log(out.drifts[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    out.order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return out;
}

/// {I^(k), f} for every entry, with f verified conserved along a trajectory
/// first; each returned bracket is drift-tested along the same flow.
struct BracketDescentResult {
    std::vector<InvariantEntry> brackets;
    std::vector<double> drifts;
};

inline BracketDescentResult bracket_descent(const InvariantSet& inv, const ScalarExpr& f,
                                            const PhaseSpaceSystem& sys,
                                            const std::vector<double>& x0,
                                            const IntegratorConfig& cfg, Rng& rng) {
    validate_symbols(f, sys.declared_names());
    Trajectory traj = integrate_flow(sys, x0, cfg, rng);
    auto slots = sys.slot_map();
    CompiledExpr fc(f, slots);
    auto drift_of = [&](const std::function<double(const std::vector<double>&)>& fn) {
        double v0 = fn(traj.states.front());
        double worst = 0.0;
        for (const auto& s : traj.states)
            worst = std::max(worst, std::abs(fn(s) - v0) / (1.0 + std::abs(v0)));
        return worst;
    };
    double fdrift = drift_of([&](const std::vector<double>& s) { return fc(sys.slots_for(s)); });
    if (fdrift > 1e-6) throw FNotConservedError(fdrift);

    BracketDescentResult out;
    std::optional<MultiVectorField> wsym;
    if (sys.kind != StructureKind::PresymplecticForm) wsym = structure_bivector(sys, rng);
    std::vector<CompiledExpr> fgrads;
    for (const auto& c : sys.chart.coords) fgrads.emplace_back(differentiate(f, c), slots);
    auto sysp = std::make_shared<PhaseSpaceSystem>(sys);

    for (const auto& entry : inv.entries) {
        InvariantEntry b;
        b.k = entry.k;
        if (entry.symbolic && wsym) {
            ScalarExpr bexpr = poisson_bracket(*entry.symbolic, f, *wsym, sys.chart);
            b = detail::symbolic_entry(entry.k, bexpr, sys);
        } else {
            auto grad = entry.gradient;
            b.value = [grad, fgrads, sysp, wsym](const std::vector<double>& state) {
                std::vector<double> sl = sysp->slots_for(state);
                Eigen::VectorXd gi = grad(state);
                Eigen::VectorXd gf(sysp->dim());
                for (int j = 0; j < sysp->dim(); ++j)
                    gf(j) = fgrads[static_cast<std::size_t>(j)](sl);
                Eigen::MatrixXd w;
                if (wsym) {
                    PointTensor wt = evaluate_at(*wsym, sysp->context(state));
                    w = Eigen::MatrixXd::Zero(sysp->dim(), sysp->dim());
                    for (const auto& [I, v] : wt.coefficients()) {
                        w(I[0], I[1]) = v;
                        w(I[1], I[0]) = -v;
                    }
                } else {
                    w = kernel_and_pseudoinverse_at(*sysp, sysp->context(state)).w_matrix;
                }
                return gi.dot(w * gf);
            };
        }
        out.drifts.push_back(drift_of(b.value));
        out.brackets.push_back(std::move(b));
    }
    return out;
}

}  // namespace phasesym
