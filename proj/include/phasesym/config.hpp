#pragma once

// Config ingestion: structured key-value text declaring a phase-space system,
// a symmetry generator and integrator settings. Format (one entry per line,
// '#' comments):
//
//   seed = 1
//   coordinates = q1 q2 p1 p2
//   parameter m = 1
//   kind = symplectic-form | presymplectic-form | poisson-bivector
//   structure <za> <zb> = <expression>     # coefficient of dz_a ^ dz_b
//   hamiltonian = <expression>
//   generator <za> = <expression>          # component of E on d/dz_a
//   kernel <i> <za> = <expression>         # i-th declared null vector
//   admixture = c1 c2 ...                  # kernel gauge coefficients
//   step = 0.001
//   time = 10
//   tolerance = 1e-8

#include <fstream>
#include <sstream>
#include <string>

#include "phasesym/flow.hpp"

namespace phasesym {

struct LoadedSystem {
    PhaseSpaceSystem system;
    SymmetryGenerator generator;
    IntegratorConfig integrator;
    std::uint64_t seed = 0;
    double tolerance = defaults::kSymmetryTol;
};

namespace detail {
inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

[[noreturn]] inline void config_error(int line, const std::string& what) {
    throw SyntaxError("config line " + std::to_string(line) + ": " + what,
                      static_cast<std::size_t>(line));
}
}  // namespace detail

/// Parses and validates a system declaration. Throws SyntaxError with the
/// failing line for malformed text and ValidationError naming the violated
/// invariant for well-formed but inconsistent declarations.
inline LoadedSystem load_system_text(const std::string& text) {
    LoadedSystem out;
    PhaseSpaceSystem& sys = out.system;
    bool have_kind = false, have_coords = false;
    struct RawTerm {
        int line;
        std::vector<std::string> keys;
        std::string expr;
    };
    std::vector<RawTerm> structure_terms, generator_terms, kernel_terms;
    std::string hamiltonian_text;
    int hamiltonian_line = -1;

    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    bool any_entry = false;
    while (std::getline(is, line)) {
        ++lineno;
        std::string::size_type hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        std::string::size_type eq = line.find('=');
        if (eq == std::string::npos) detail::config_error(lineno, "expected 'key = value'");
        std::vector<std::string> keys = detail::split_ws(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (keys.empty()) detail::config_error(lineno, "missing key");
        if (value.empty()) detail::config_error(lineno, "missing value");
        any_entry = true;
        const std::string& head = keys[0];
        try {
            if (head == "seed" && keys.size() == 1) {
                out.seed = std::stoull(value);
            } else if (head == "coordinates" && keys.size() == 1) {
                sys.chart.coords = detail::split_ws(value);
                have_coords = true;
            } else if (head == "parameter" && keys.size() == 2) {
                sys.parameters.emplace_back(keys[1], std::stod(value));
            } else if (head == "kind" && keys.size() == 1) {
                if (value == "symplectic-form") sys.kind = StructureKind::SymplecticForm;
                else if (value == "presymplectic-form") sys.kind = StructureKind::PresymplecticForm;
                else if (value == "poisson-bivector") sys.kind = StructureKind::PoissonBivector;
                else detail::config_error(lineno, "unknown structure kind '" + value + "'");
                have_kind = true;
            } else if (head == "structure" && keys.size() == 3) {
                structure_terms.push_back({lineno, {keys[1], keys[2]}, value});
            } else if (head == "hamiltonian" && keys.size() == 1) {
                hamiltonian_text = value;
                hamiltonian_line = lineno;
            } else if (head == "generator" && keys.size() == 2) {
                generator_terms.push_back({lineno, {keys[1]}, value});
            } else if (head == "kernel" && keys.size() == 3) {
                kernel_terms.push_back({lineno, {keys[1], keys[2]}, value});
            } else if (head == "admixture" && keys.size() == 1) {
                for (const auto& tok : detail::split_ws(value))
                    out.integrator.kernel_admixture.push_back(std::stod(tok));
            } else if (head == "step" && keys.size() == 1) {
                out.integrator.step = std::stod(value);
            } else if (head == "time" && keys.size() == 1) {
                out.integrator.total_time = std::stod(value);
            } else if (head == "tolerance" && keys.size() == 1) {
                out.tolerance = std::stod(value);
            } else {
                detail::config_error(lineno, "unknown entry '" + head + "'");
            }
        } catch (const std::invalid_argument&) {
            detail::config_error(lineno, "malformed number '" + value + "'");
        } catch (const std::out_of_range&) {
            detail::config_error(lineno, "number out of range '" + value + "'");
        }
    }
    if (!any_entry) throw SyntaxError("config is empty", 0);
    if (!have_coords) throw ValidationError("config declares no coordinates");
    if (!have_kind) throw ValidationError("config declares no structure kind");
    if (sys.dim() < 2) throw ValidationError("need at least two coordinates");
    {
        std::set<std::string> seen;
        for (const auto& c : sys.chart.coords)
            if (!seen.insert(c).second)
                throw ValidationError("duplicate coordinate '" + c + "'");
        for (const auto& [p, v] : sys.parameters)
            if (seen.count(p) || !seen.insert(p).second)
                throw ValidationError("parameter '" + p + "' collides with another name");
    }

    const std::set<std::string> declared = sys.declared_names();
    auto parse_bound = [&](const RawTerm& t) {
        ScalarExpr e;
        try {
            e = parse_expression(t.expr);
        } catch (const SyntaxError& err) {
            detail::config_error(t.line, err.what());
        }
        try {
            validate_symbols(e, declared);
        } catch (const UnknownNameError& err) {
            throw ValidationError("line " + std::to_string(t.line) + ": " + err.what());
        }
        return e;
    };

    const int d = sys.dim();
    DifferentialForm omega(d, 2);
    MultiVectorField bivector(d, 2);
    for (const auto& t : structure_terms) {
        int a, b;
        try {
            a = sys.chart.index_of(t.keys[0]);
            b = sys.chart.index_of(t.keys[1]);
        } catch (const UnknownNameError& err) {
            throw ValidationError("line " + std::to_string(t.line) +
                                  ": structure term references " + err.what());
        }
        ScalarExpr e = parse_bound(t);
        if (sys.kind == StructureKind::PoissonBivector) bivector.add_term({a, b}, e);
        else omega.add_term({a, b}, e);
    }
    if (sys.kind == StructureKind::PoissonBivector) {
        if (bivector.empty()) throw ValidationError("poisson-bivector has no structure terms");
        sys.bivector = bivector;
    } else {
        if (omega.empty() && sys.kind == StructureKind::SymplecticForm)
            throw ValidationError("symplectic-form has no structure terms");
        sys.omega = omega;
        sys.bivector = MultiVectorField(d, 2);
    }
    if (sys.kind != StructureKind::PoissonBivector) sys.bivector = MultiVectorField(d, 2);

    if (hamiltonian_line < 0) throw ValidationError("config declares no hamiltonian");
    sys.hamiltonian = parse_bound({hamiltonian_line, {}, hamiltonian_text});

    if (generator_terms.empty()) throw ValidationError("config declares no generator");
    MultiVectorField gen(d, 1);
    for (const auto& t : generator_terms) {
        int a;
        try {
            a = sys.chart.index_of(t.keys[0]);
        } catch (const UnknownNameError& err) {
            throw ValidationError("line " + std::to_string(t.line) +
                                  ": generator term references " + err.what());
        }
        gen.add_term({a}, parse_bound(t));
    }
    out.generator.field = gen;

    std::map<int, MultiVectorField> kernels;
    for (const auto& t : kernel_terms) {
        int idx;
        try {
            idx = std::stoi(t.keys[0]);
        } catch (...) {
            detail::config_error(t.line, "kernel index must be an integer");
        }
        int a;
        try {
            a = sys.chart.index_of(t.keys[1]);
        } catch (const UnknownNameError& err) {
            throw ValidationError("line " + std::to_string(t.line) +
                                  ": kernel term references " + err.what());
        }
        auto [it, fresh] = kernels.emplace(idx, MultiVectorField(d, 1));
        it->second.add_term({a}, parse_bound(t));
    }
    for (auto& [idx, u] : kernels) sys.kernel_basis.push_back(std::move(u));

    // declared kernel elements must annihilate the form: i_u omega = 0
    if (!sys.kernel_basis.empty()) {
        if (!sys.has_form())
            throw ValidationError("kernel declarations require a 2-form structure");
        Rng rng(out.seed);
        for (std::size_t i = 0; i < sys.kernel_basis.size(); ++i) {
            DifferentialForm iu = interior_product(sys.kernel_basis[i], sys.omega);
            if (!probabilistically_zero(iu, 20, defaults::kIdentityTol, rng))
                throw ValidationError("declared kernel element " + std::to_string(i) +
                                      " does not satisfy i_u omega = 0");
        }
    }
    return out;
}

inline LoadedSystem load_system(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return load_system_text(ss.str());
}

}  // namespace phasesym
