#pragma once

// Command dispatch and machine-readable reporting for the CLI. Every command
// draws all of its randomness from a single generator seeded by the config
// (or the --seed override), so reruns are byte-identical.

#include <json.hpp>

#include <iomanip>
#include <optional>
#include <sstream>

#include "phasesym/config.hpp"

namespace phasesym {

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<double> tolerance;
    std::optional<double> step;
    std::optional<double> total_time;
    int points = 3;  // trajectories for `verify`, table rows for `invariants`
};

struct RunResult {
    int exit_code = 0;
    std::string text;
    nlohmann::ordered_json report;
};

namespace detail {
inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}
}  // namespace detail

inline RunResult run_command(const std::string& command, const LoadedSystem& loaded,
                             const RunOptions& opt) {
    static const std::set<std::string> kCommands{"check", "invariants", "verify",
                                                 "involution", "report"};
    if (!kCommands.count(command)) throw ValidationError("unknown command '" + command + "'");

    LoadedSystem run = loaded;
    if (opt.seed) run.seed = *opt.seed;
    if (opt.tolerance) run.tolerance = *opt.tolerance;
    if (opt.step) run.integrator.step = *opt.step;
    if (opt.total_time) run.integrator.total_time = *opt.total_time;

    const PhaseSpaceSystem& sys = run.system;
    Rng rng(run.seed);
    RunResult out;
    std::ostringstream text;
    nlohmann::ordered_json& rep = out.report;
    rep["command"] = command;
    rep["seed"] = run.seed;
    rep["tolerance"] = run.tolerance;
    rep["system"] = {{"kind", sys.kind == StructureKind::SymplecticForm ? "symplectic-form"
                              : sys.kind == StructureKind::PresymplecticForm
                                  ? "presymplectic-form"
                                  : "poisson-bivector"},
                     {"dimension", sys.dim()},
                     {"coordinates", sys.chart.coords},
                     {"kernel_rank", sys.kernel_basis.size()}};
    bool math_failed = false;

    const bool want_check = true;  // every command starts from the verdict
    const bool want_invariants =
        command == "invariants" || command == "verify" || command == "report";
    const bool want_verify = command == "verify" || command == "report";
    const bool want_involution = command == "involution" || command == "report";

    // --- structural validation (Poisson) -----------------------------------
    if (sys.kind == StructureKind::PoissonBivector) {
        ResidualCheck rc = validate_poisson(sys, rng);
        rep["poisson_valid"] = {{"ok", rc.ok}, {"residual", rc.residual}};
        text << "jacobi identity [W,W] = 0: " << (rc.ok ? "ok" : "FAILED")
             << " (residual " << detail::fmt(rc.residual) << ")\n";
        if (!rc.ok) math_failed = true;
    }

    // --- symmetry verdict ---------------------------------------------------
    SymmetryVerdict verdict{SymmetryClass::NotASymmetry, MultiVectorField(sys.dim(), 1), 0.0};
    if (want_check && !math_failed) {
        verdict = check_symmetry(sys, run.generator, rng, run.tolerance);
        rep["symmetry"] = {{"class", to_string(verdict.cls)},
                           {"residual", verdict.max_residual}};
        text << "symmetry verdict: " << to_string(verdict.cls) << " (residual "
             << detail::fmt(verdict.max_residual) << ")\n";
        if (verdict.cls == SymmetryClass::NotASymmetry) math_failed = true;
    }

    // --- invariants ----------------------------------------------------------
    std::optional<InvariantSet> inv;
    if (want_invariants && !math_failed) {
        inv = sys.kind == StructureKind::PoissonBivector
                  ? poisson_invariants(sys, run.generator, rng, run.tolerance)
                  : lutzky_invariants(sys, run.generator, rng);
        nlohmann::ordered_json entries = nlohmann::ordered_json::array();
        std::vector<double> ref = sys.random_state(rng);
        text << "invariants (" << to_string(inv->path) << " path, half-rank "
             << inv->half_rank << "):\n";
        for (const auto& e : inv->entries) {
            nlohmann::ordered_json je;
            je["k"] = e.k;
            double refv = e.value(ref);
            je["reference_value"] = refv;
            if (e.symbolic) {
                je["expression"] = to_string(*e.symbolic);
                text << "  I(" << e.k << ") = " << to_string(*e.symbolic) << "\n";
            } else {
                text << "  I(" << e.k << ") = <pointwise evaluator>, I(ref) = "
                     << detail::fmt(refv) << "\n";
            }
            entries.push_back(je);
        }
        if (!inv->entries.empty() && !inv->entries.front().symbolic) {
            text << "  pointwise table (" << opt.points << " sampled points):\n";
            nlohmann::ordered_json table = nlohmann::ordered_json::array();
            for (int t = 0; t < opt.points; ++t) {
                std::vector<double> state = sys.random_state(rng);
                nlohmann::ordered_json row;
                row["state"] = state;
                text << "   ";
                for (const auto& e : inv->entries) {
                    double v = e.value(state);
                    row["I" + std::to_string(e.k)] = v;
                    text << "  I(" << e.k << ") = " << detail::fmt(v);
                }
                text << "\n";
                table.push_back(row);
            }
            rep["invariant_table"] = table;
        }
        rep["invariants"] = {{"path", to_string(inv->path)},
                             {"half_rank", inv->half_rank},
                             {"normalization", inv->normalization_note},
                             {"reference_point", ref},
                             {"entries", entries}};
    }

    // --- drift verification ---------------------------------------------------
    if (want_verify && !math_failed && inv) {
        nlohmann::ordered_json jdrift = nlohmann::ordered_json::array();
        double worst = 0.0;
        text << "conservation drift over T = " << detail::fmt(run.integrator.total_time)
             << ", h = " << detail::fmt(run.integrator.step) << ":\n";
        for (int p = 0; p < opt.points; ++p) {
            std::vector<double> x0 = sys.random_state(rng);
            Trajectory traj = integrate_flow(sys, x0, run.integrator, rng);
            auto drifts = conservation_drift(traj, *inv);
            nlohmann::ordered_json row;
            row["initial_state"] = x0;
            text << "  point " << p << ":";
            for (const auto& ds : drifts) {
                row["I" + std::to_string(ds.k)] = ds.drift;
                worst = std::max(worst, ds.drift);
                text << "  I(" << ds.k << ") drift " << detail::fmt(ds.drift);
            }
            text << "\n";
            jdrift.push_back(row);
        }
        rep["drift"] = {{"per_point", jdrift}, {"worst", worst},
                        {"threshold", run.tolerance}};
        if (worst > run.tolerance) {
            text << "  drift above tolerance " << detail::fmt(run.tolerance) << "\n";
            math_failed = true;
        }
    }

    // --- involution ------------------------------------------------------------
    if (want_involution && !math_failed) {
        ResidualCheck yb = yang_baxter_check(sys, run.generator, rng);
        rep["yang_baxter"] = {{"ok", yb.ok}, {"residual", yb.residual}};
        text << "yang-baxter [[E,[E,W]],W] = 0: " << (yb.ok ? "ok" : "not confirmed")
             << " (residual " << detail::fmt(yb.residual) << ")\n";
        if (!inv) {
            inv = sys.kind == StructureKind::PoissonBivector
                      ? poisson_invariants(sys, run.generator, rng, run.tolerance)
                      : lutzky_invariants(sys, run.generator, rng);
        }
        InvolutionResult ir = involution_check(*inv, sys, rng, run.tolerance);
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (int a = 0; a < ir.residuals.rows(); ++a) {
            nlohmann::ordered_json row = nlohmann::ordered_json::array();
            for (int b = 0; b < ir.residuals.cols(); ++b) row.push_back(ir.residuals(a, b));
            rows.push_back(row);
        }
        rep["involution"] = {{"residuals", rows}, {"in_involution", ir.in_involution}};
        text << "involution: " << (ir.in_involution ? "all brackets vanish" : "NOT in involution")
             << " (max residual "
             << detail::fmt(ir.residuals.size() > 0 ? ir.residuals.maxCoeff() : 0.0) << ")\n";
        if (yb.ok && !ir.in_involution) math_failed = true;
    }

    out.exit_code = math_failed ? 2 : 0;
    rep["exit_code"] = out.exit_code;
    out.text = text.str();
    return out;
}

}  // namespace phasesym
