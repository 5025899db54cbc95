#pragma once

// Shared helpers for the test suites: random expression/field generators and
// the independent numeric oracles used to cross-check the symbolic kernels.

#include <random>
#include <vector>

#include "phasesym/expr.hpp"

namespace testutil {

using phasesym::Rational;
using phasesym::Rng;
using phasesym::ScalarExpr;

/// Random polynomial-ish expression tree over the given symbols, depth-bounded.
inline ScalarExpr random_expr(Rng& rng, const std::vector<std::string>& syms,
                              int depth, bool allow_sqrt = false) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : (allow_sqrt ? 6 : 5));
    std::uniform_int_distribution<int> cpick(-4, 4);
    std::uniform_int_distribution<std::size_t> spick(0, syms.size() - 1);
    switch (pick(rng)) {
        case 0: return phasesym::constant(cpick(rng));
        case 1: return phasesym::symbol(syms[spick(rng)]);
        case 2:
            return phasesym::sum(random_expr(rng, syms, depth - 1, allow_sqrt),
                                 random_expr(rng, syms, depth - 1, allow_sqrt));
        case 3:
            return phasesym::product(random_expr(rng, syms, depth - 1, allow_sqrt),
                                     random_expr(rng, syms, depth - 1, allow_sqrt));
        case 4:
            return phasesym::negate(random_expr(rng, syms, depth - 1, allow_sqrt));
        case 5: {
            std::uniform_int_distribution<int> e(2, 3);
            return phasesym::power(random_expr(rng, syms, depth - 1, allow_sqrt),
                                   Rational(e(rng)));
        }
        default: {
            // keep radicands positive so evaluation stays in-domain
            ScalarExpr inner = random_expr(rng, syms, depth - 1, false);
            return phasesym::sqrt_of(
                phasesym::sum(phasesym::product(inner, inner), phasesym::constant(1)));
        }
    }
}

/// Random polynomial with only nonnegative-power monomials (always smooth).
inline ScalarExpr random_polynomial(Rng& rng, const std::vector<std::string>& syms,
                                    int max_degree = 2) {
    std::uniform_int_distribution<int> cpick(-3, 3);
    std::uniform_int_distribution<int> epick(0, max_degree);
    std::vector<ScalarExpr> terms;
    std::uniform_int_distribution<int> npick(1, 3);
    int n = npick(rng);
    for (int t = 0; t < n; ++t) {
        std::vector<ScalarExpr> fs{phasesym::constant(cpick(rng))};
        for (const auto& s : syms) {
            int e = epick(rng);
            if (e > 0) fs.push_back(phasesym::power(phasesym::symbol(s), Rational(e)));
        }
        terms.push_back(phasesym::product(std::move(fs)));
    }
    return phasesym::sum(std::move(terms));
}

}  // namespace testutil

#include <Eigen/Dense>

#include "phasesym/exterior.hpp"

namespace testutil {

/// Random antisymmetric field with polynomial coefficients.
template <class Tag>
phasesym::AntisymField<Tag> random_field(Rng& rng, const phasesym::Chart& chart,
                                         int degree, int max_poly_degree = 2) {
    phasesym::AntisymField<Tag> f(chart.dim(), degree);
    std::vector<phasesym::IndexTuple> tuples;
    {
        phasesym::IndexTuple cur;
        phasesym::detail::increasing_tuples(chart.dim(), degree, cur, 0, tuples);
    }
    std::uniform_int_distribution<int> keep(0, 2);
    bool any = false;
    for (const auto& t : tuples) {
        if (keep(rng) == 0 && any) continue;
        any = true;
        f.add_term(phasesym::IndexTuple(t),
                   random_polynomial(rng, chart.coords, max_poly_degree));
    }
    return f;
}

/// Componentwise Lie-transport formula for forms; an oracle independent of
/// the Cartan-formula implementation.
inline phasesym::DifferentialForm transport_formula_form(
    const phasesym::MultiVectorField& x, const phasesym::DifferentialForm& a,
    const phasesym::Chart& chart) {
    using namespace phasesym;
    const int d = a.dim();
    const int k = a.degree();
    DifferentialForm r(d, k);
    std::vector<IndexTuple> tuples;
    {
        IndexTuple cur;
        detail::increasing_tuples(d, k, cur, 0, tuples);
    }
    for (const auto& I : tuples) {
        std::vector<ScalarExpr> terms;
        ScalarExpr aI = a.coefficient(I);
        if (!aI.is_zero())
            for (int m = 0; m < d; ++m) {
                ScalarExpr xm = x.coefficient({m});
                if (xm.is_zero()) continue;
                ScalarExpr da = differentiate(aI, chart.coords[static_cast<std::size_t>(m)]);
                if (!da.is_zero()) terms.push_back(product(xm, da));
            }
        for (std::size_t s = 0; s < I.size(); ++s) {
            for (int m = 0; m < d; ++m) {
                ScalarExpr xm = x.coefficient({m});
                if (xm.is_zero()) continue;
                ScalarExpr dx = differentiate(xm, chart.coords[static_cast<std::size_t>(I[s])]);
                if (dx.is_zero()) continue;
                IndexTuple J = I;
                J[s] = m;
                ScalarExpr ad = a.dense(std::move(J));
                if (ad.is_zero()) continue;
                terms.push_back(product(dx, ad));
            }
        }
        r.add_term(IndexTuple(I), phasesym::sum(std::move(terms)));
    }
    return r;
}

/// Dense numeric Lie derivative of a 2-form along a field at one point, by
/// central finite differences of all ingredients (independent oracle).
inline Eigen::MatrixXd fd_lie_two_form(const phasesym::DifferentialForm& omega,
                                       const phasesym::MultiVectorField& e,
                                       const phasesym::Chart& chart,
                                       const phasesym::EvalContext& ctx,
                                       double step = 1e-6) {
    using namespace phasesym;
    const int d = chart.dim();
    auto omat = [&](const EvalContext& c) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
        for (const auto& [I, coef] : omega.coefficients()) {
            double v = evaluate(coef, c);
            m(I[0], I[1]) = v;
            m(I[1], I[0]) = -v;
        }
        return m;
    };
    auto evec = [&](const EvalContext& c) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
        for (const auto& [I, coef] : e.coefficients()) v(I[0]) = evaluate(coef, c);
        return v;
    };
    Eigen::MatrixXd o0 = omat(ctx);
    Eigen::VectorXd e0 = evec(ctx);
    // (L_E omega)_{ij} = E^m d_m O_{ij} + O_{mj} d_i E^m + O_{im} d_j E^m
    Eigen::MatrixXd lie = Eigen::MatrixXd::Zero(d, d);
    std::vector<Eigen::VectorXd> de(static_cast<std::size_t>(d));
    for (int m = 0; m < d; ++m) {
        EvalContext up = ctx, dn = ctx;
        up.values[chart.coords[static_cast<std::size_t>(m)]] += step;
        dn.values[chart.coords[static_cast<std::size_t>(m)]] -= step;
        lie += e0(m) * (omat(up) - omat(dn)) / (2 * step);
        de[static_cast<std::size_t>(m)] = (evec(up) - evec(dn)) / (2 * step);
    }
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int m = 0; m < d; ++m)
                lie(i, j) += o0(m, j) * de[static_cast<std::size_t>(i)](m) +
                             o0(i, m) * de[static_cast<std::size_t>(j)](m);
    return lie;
}

/// Inverts the square-convolution relating full charpoly elementary symmetric
/// values of a pair-spectrum matrix to the half-spectrum values:
/// (sum_k ehat_k t^k)^2 = sum_k e_k t^k.
inline std::vector<double> half_spectrum_esym(const std::vector<double>& charpoly_coeffs,
                                              int r) {
    // e_k(M) = (-1)^k c_k for det(tI - M) = t^d + c_1 t^{d-1} + ...
    std::vector<double> e(static_cast<std::size_t>(2 * r + 1), 0.0);
    e[0] = 1.0;
    for (int k = 1; k <= 2 * r && k <= static_cast<int>(charpoly_coeffs.size()); ++k)
        e[static_cast<std::size_t>(k)] =
            (k % 2 ? -1.0 : 1.0) * charpoly_coeffs[static_cast<std::size_t>(k - 1)];
    std::vector<double> ehat(static_cast<std::size_t>(r + 1), 0.0);
    ehat[0] = 1.0;
    for (int k = 1; k <= r; ++k) {
        double cross = 0.0;
        for (int j = 1; j < k; ++j)
            cross += ehat[static_cast<std::size_t>(j)] * ehat[static_cast<std::size_t>(k - j)];
        ehat[static_cast<std::size_t>(k)] = (e[static_cast<std::size_t>(k)] - cross) / 2.0;
    }
    return ehat;
}

/// Brute-force numeric Schouten trivector of two bivectors at one point,
/// using central finite differences of the dense components.
inline double schouten22_fd_component(const phasesym::MultiVectorField& a,
                                      const phasesym::MultiVectorField& b,
                                      const phasesym::Chart& chart,
                                      const phasesym::EvalContext& ctx, int i, int j,
                                      int k, double step = 1e-6) {
    using namespace phasesym;
    auto dense_at = [&](const MultiVectorField& w, int r, int c, const EvalContext& e) {
        return evaluate(w.dense({r, c}), e);
    };
    auto d_of = [&](const MultiVectorField& w, int m, int r, int c) {
        EvalContext up = ctx, dn = ctx;
        up.values[chart.coords[static_cast<std::size_t>(m)]] += step;
        dn.values[chart.coords[static_cast<std::size_t>(m)]] -= step;
        return (dense_at(w, r, c, up) - dense_at(w, r, c, dn)) / (2 * step);
    };
    const int d = chart.dim();
    double total = 0.0;
    const int cyc[3][3] = {{i, j, k}, {j, k, i}, {k, i, j}};
    for (const auto& c : cyc)
        for (int m = 0; m < d; ++m)
            total += dense_at(a, m, c[0], ctx) * d_of(b, m, c[1], c[2]) +
                     dense_at(b, m, c[0], ctx) * d_of(a, m, c[1], c[2]);
    return total;
}

}  // namespace testutil
