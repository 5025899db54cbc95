#pragma once

// In-code builders for the example systems exercised across the test suites.
// The shipped config files declare the same systems through the CLI surface.

#include "phasesym/mechanics.hpp"

namespace testsys {

using namespace phasesym;

/// 1-DOF free particle: chart (q,p), omega = dp^dq, h = p^2/2.
inline PhaseSpaceSystem free_particle() {
    PhaseSpaceSystem sys;
    sys.chart = Chart{{"q", "p"}};
    sys.kind = StructureKind::SymplecticForm;
    sys.omega = DifferentialForm(2, 2);
    sys.omega.add_term({1, 0}, constant(1));  // dp ^ dq
    sys.hamiltonian = parse_expression("p^2/2");
    return sys;
}

inline SymmetryGenerator dilation_generator() {
    MultiVectorField e(2, 1);
    e.add_term({0}, symbol("q"));
    e.add_term({1}, symbol("p"));
    return {e};
}

/// 2-DOF free particle: chart (q1,q2,p1,p2), omega = sum dp_k^dq_k,
/// h = (p1^2+p2^2)/2, generator E = p1 q1 d/dq1 + p2 q2 d/dq2.
inline PhaseSpaceSystem two_dof() {
    PhaseSpaceSystem sys;
    sys.chart = Chart{{"q1", "q2", "p1", "p2"}};
    sys.kind = StructureKind::SymplecticForm;
    sys.omega = DifferentialForm(4, 2);
    sys.omega.add_term({2, 0}, constant(1));
    sys.omega.add_term({3, 1}, constant(1));
    sys.hamiltonian = parse_expression("(p1^2+p2^2)/2");
    return sys;
}

inline SymmetryGenerator two_dof_generator() {
    MultiVectorField e(4, 1);
    e.add_term({0}, parse_expression("p1*q1"));
    e.add_term({1}, parse_expression("p2*q2"));
    return {e};
}

/// Canonical 4-dim Poisson system: W = sum d/dp_k ^ d/dq_k declared directly.
inline PhaseSpaceSystem poisson_canonical() {
    PhaseSpaceSystem sys;
    sys.chart = Chart{{"q1", "q2", "p1", "p2"}};
    sys.kind = StructureKind::PoissonBivector;
    sys.bivector = MultiVectorField(4, 2);
    sys.bivector.add_term({2, 0}, constant(1));
    sys.bivector.add_term({3, 1}, constant(1));
    sys.hamiltonian = parse_expression("(p1^2+p2^2)/2");
    return sys;
}

/// Relativistic particle (3 spatial dimensions, mass parameter m):
/// chart (x0,x1,x2,x3,p1,p2,p3),
/// omega = -(p_k/rho) dp_k^dx0 + dp_k^dx_k with rho = sqrt(p^2+m^2),
/// vanishing Hamiltonian, declared null vector u = rho d/dx0 + p_k d/dx_k.
inline PhaseSpaceSystem relativistic_particle() {
    PhaseSpaceSystem sys;
    sys.chart = Chart{{"x0", "x1", "x2", "x3", "p1", "p2", "p3"}};
    sys.parameters = {{"m", 1.0}};
    sys.kind = StructureKind::PresymplecticForm;
    sys.omega = DifferentialForm(7, 2);
    const std::string rho = "sqrt(p1^2+p2^2+p3^2+m^2)";
    for (int k = 0; k < 3; ++k) {
        std::string pk = "p" + std::to_string(k + 1);
        sys.omega.add_term({4 + k, 0}, parse_expression("-" + pk + "/" + rho));
        sys.omega.add_term({4 + k, 1 + k}, constant(1));
    }
    sys.hamiltonian = constant(0);
    MultiVectorField u(7, 1);
    u.add_term({0}, parse_expression(rho));
    for (int k = 0; k < 3; ++k)
        u.add_term({1 + k}, symbol("p" + std::to_string(k + 1)));
    sys.kernel_basis.push_back(u);
    return sys;
}

/// The shipped relativistic generator: linear in the kernel-invariant
/// coordinates y_l = x_l - (p_l/rho) x0 with companion-matrix coefficients
/// built from the elementary symmetric polynomials of (rho, p1, p2, p3), so
/// that [E, u] = 0 and the invariant pipeline reproduces those polynomials.
inline SymmetryGenerator relativistic_generator() {
    const std::string rho = "sqrt(p1^2+p2^2+p3^2+m^2)";
    const std::string y1 = "(x1 - p1*x0/" + rho + ")";
    const std::string y2 = "(x2 - p2*x0/" + rho + ")";
    const std::string y3 = "(x3 - p3*x0/" + rho + ")";
    const std::string e1 = "(" + rho + " + p1 + p2 + p3)";
    const std::string e2 = "(" + rho + "*(p1+p2+p3) + p1*p2 + p1*p3 + p2*p3)";
    const std::string e3 = "(" + rho + "*(p1*p2+p1*p3+p2*p3) + p1*p2*p3)";
    MultiVectorField e(7, 1);
    e.add_term({1}, parse_expression(y2));
    e.add_term({2}, parse_expression(y3));
    e.add_term({3}, parse_expression(e3 + "*" + y1 + " - " + e2 + "*" + y2 + " + " +
                                     e1 + "*" + y3));
    return {e};
}

/// e_k(rho, p1, p2, p3) evaluated at a state of the relativistic chart.
inline double relativistic_esym(const std::vector<double>& state, int k, double m = 1.0) {
    double p1 = state[4], p2 = state[5], p3 = state[6];
    double rho = std::sqrt(p1 * p1 + p2 * p2 + p3 * p3 + m * m);
    double mu[4] = {rho, p1, p2, p3};
    double total = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b)
            for (int c = b + 1; c < 4; ++c) {
                if (k == 3) total += mu[a] * mu[b] * mu[c];
            }
    if (k == 1) total = mu[0] + mu[1] + mu[2] + mu[3];
    if (k == 2) {
        total = 0.0;
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) total += mu[a] * mu[b];
    }
    return total;
}

}  // namespace testsys
