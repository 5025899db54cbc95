#pragma once

// Exterior algebra of differential forms and multivector fields in a single
// global coordinate chart. Antisymmetric fields are stored sparsely as
// strictly-increasing index tuples -> symbolic coefficients; the wedge uses
// the signed-shuffle convention with no factorial normalization, and the
// interior product fills the first slot first (i_{V^U} = i_U o i_V).

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "phasesym/expr.hpp"

namespace phasesym {

using IndexTuple = std::vector<int>;

/// The single global coordinate chart: an ordered list of coordinate names.
struct Chart {
    std::vector<std::string> coords;

    int dim() const { return static_cast<int>(coords.size()); }

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < coords.size(); ++i)
            if (coords[i] == name) return static_cast<int>(i);
        throw UnknownNameError(name);
    }
};

namespace detail {
/// Sorts `t` in place, returning the permutation sign, or 0 on duplicates.
inline int sort_with_sign(IndexTuple& t) {
    int sign = 1;
    for (std::size_t i = 1; i < t.size(); ++i) {
        int v = t[i];
        std::size_t j = i;
        while (j > 0 && t[j - 1] > v) {
            t[j] = t[j - 1];
            --j;
            sign = -sign;
        }
        t[j] = v;
    }
    for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i] == t[i - 1]) return 0;
    return sign;
}
}  // namespace detail

struct CovariantTag {};      // differential forms
struct ContravariantTag {};  // multivector fields

/// Degree-k antisymmetric field with symbolic coefficients. A zero object of
/// degree > dim is representable (its coefficient map is necessarily empty).
template <class Tag>
class AntisymField {
  public:
    AntisymField() : dim_(0), degree_(0) {}
    AntisymField(int dim, int degree) : dim_(dim), degree_(degree) {}

    static AntisymField scalar(int dim, ScalarExpr value) {
        AntisymField f(dim, 0);
        f.add_term({}, std::move(value));
        return f;
    }

    int dim() const { return dim_; }
    int degree() const { return degree_; }
    const std::map<IndexTuple, ScalarExpr>& coefficients() const { return coeff_; }
    bool empty() const { return coeff_.empty(); }

    /// Adds coeff * dz^{idx} (or the multivector analogue); idx may be in any
    /// order and is normalized with the permutation sign. Duplicate indices
    /// contribute nothing.
    void add_term(IndexTuple idx, const ScalarExpr& coeff) {
        if (static_cast<int>(idx.size()) != degree_)
            throw DegreeError("term degree does not match field degree");
        for (int i : idx)
            if (i < 0 || i >= dim_) throw DegreeError("index outside the chart");
        if (coeff.is_zero()) return;
        int sign = detail::sort_with_sign(idx);
        if (sign == 0) return;
        ScalarExpr signed_coeff = sign > 0 ? coeff : negate(coeff);
        auto it = coeff_.find(idx);
        if (it == coeff_.end()) {
            coeff_.emplace(std::move(idx), std::move(signed_coeff));
        } else {
            ScalarExpr s = sum(it->second, signed_coeff);
            if (s.is_zero()) coeff_.erase(it);
            else it->second = s;
        }
    }

    /// Coefficient on a strictly increasing tuple (zero expression if absent).
    ScalarExpr coefficient(const IndexTuple& idx) const {
        auto it = coeff_.find(idx);
        return it == coeff_.end() ? constant(0) : it->second;
    }

    /// Signed component for an arbitrarily ordered tuple.
    ScalarExpr dense(IndexTuple idx) const {
        int sign = detail::sort_with_sign(idx);
        if (sign == 0) return constant(0);
        ScalarExpr c = coefficient(idx);
        return sign > 0 ? c : negate(c);
    }

    AntisymField negated() const {
        AntisymField f(dim_, degree_);
        for (const auto& [k, v] : coeff_) f.coeff_.emplace(k, negate(v));
        return f;
    }

    AntisymField scaled(const ScalarExpr& s) const {
        AntisymField f(dim_, degree_);
        for (const auto& [k, v] : coeff_) {
            ScalarExpr p = product(s, v);
            if (!p.is_zero()) f.coeff_.emplace(k, std::move(p));
        }
        return f;
    }

    friend AntisymField operator+(const AntisymField& a, const AntisymField& b) {
        if (a.dim_ != b.dim_ || a.degree_ != b.degree_)
            throw ChartMismatchError();
        AntisymField f = a;
        for (const auto& [k, v] : b.coeff_) f.add_term(IndexTuple(k), v);
        return f;
    }

    friend AntisymField operator-(const AntisymField& a, const AntisymField& b) {
        return a + b.negated();
    }

  private:
    int dim_;
    int degree_;
    std::map<IndexTuple, ScalarExpr> coeff_;
};

using DifferentialForm = AntisymField<CovariantTag>;
using MultiVectorField = AntisymField<ContravariantTag>;

// ---------------------------------------------------------------------------
// Wedge product
// ---------------------------------------------------------------------------

template <class Tag>
AntisymField<Tag> wedge(const AntisymField<Tag>& a, const AntisymField<Tag>& b) {
    if (a.dim() != b.dim()) throw ChartMismatchError();
    AntisymField<Tag> r(a.dim(), a.degree() + b.degree());
    if (r.degree() > a.dim()) return r;  // zero object past top degree
    for (const auto& [I, ca] : a.coefficients()) {
        for (const auto& [J, cb] : b.coefficients()) {
            IndexTuple K;
            K.reserve(I.size() + J.size());
            K.insert(K.end(), I.begin(), I.end());
            K.insert(K.end(), J.begin(), J.end());
            r.add_term(std::move(K), product(ca, cb));
        }
    }
    return r;
}

/// k-fold wedge power (no factorial normalization).
template <class Tag>
AntisymField<Tag> multivector_power(const AntisymField<Tag>& v, int k) {
    if (k < 1) throw DegreeError("power requires k >= 1");
    AntisymField<Tag> r = v;
    for (int i = 1; i < k; ++i) r = wedge(r, v);
    return r;
}

// ---------------------------------------------------------------------------
// Exterior derivative
// ---------------------------------------------------------------------------

inline DifferentialForm exterior_derivative(const DifferentialForm& a, const Chart& chart) {
    DifferentialForm r(a.dim(), a.degree() + 1);
    if (r.degree() > a.dim()) return r;
    for (const auto& [I, c] : a.coefficients()) {
        for (int m = 0; m < a.dim(); ++m) {
            if (std::find(I.begin(), I.end(), m) != I.end()) continue;
            ScalarExpr dc = differentiate(c, chart.coords[static_cast<std::size_t>(m)]);
            if (dc.is_zero()) continue;
            IndexTuple K;
            K.reserve(I.size() + 1);
            K.push_back(m);
            K.insert(K.end(), I.begin(), I.end());
            r.add_term(std::move(K), dc);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Interior product
// ---------------------------------------------------------------------------

namespace detail {
/// Contraction of the coordinate vector d/dz_m into the first slot.
inline DifferentialForm contract_slot(int m, const DifferentialForm& a) {
    DifferentialForm r(a.dim(), a.degree() - 1);
    for (const auto& [I, c] : a.coefficients()) {
        auto it = std::find(I.begin(), I.end(), m);
        if (it == I.end()) continue;
        int pos = static_cast<int>(it - I.begin());
        IndexTuple J;
        J.reserve(I.size() - 1);
        for (int x : I)
            if (x != m) J.push_back(x);
        r.add_term(std::move(J), pos % 2 == 0 ? c : negate(c));
    }
    return r;
}
}  // namespace detail

/// i_V a with the first-factor-first convention: for V = v1 ^ ... ^ vk the
/// factor v1 fills the first slot of a.
inline DifferentialForm interior_product(const MultiVectorField& v, const DifferentialForm& a) {
    if (v.dim() != a.dim()) throw ChartMismatchError();
    if (v.degree() > a.degree())
        throw DegreeError("interior product degree underflow");
    DifferentialForm r(a.dim(), a.degree() - v.degree());
    for (const auto& [I, c] : v.coefficients()) {
        DifferentialForm t = a;
        for (int idx : I) t = detail::contract_slot(idx, t);
        r = r + t.scaled(c);
    }
    return r;
}

/// Full pairing of equal degrees, as a scalar expression.
inline ScalarExpr full_pairing(const MultiVectorField& v, const DifferentialForm& a) {
    if (v.degree() != a.degree()) throw DegreeError("full pairing degree mismatch");
    if (v.dim() != a.dim()) throw ChartMismatchError();
    std::vector<ScalarExpr> terms;
    for (const auto& [I, c] : v.coefficients()) {
        ScalarExpr ac = a.coefficient(I);
        if (!ac.is_zero()) terms.push_back(product(c, ac));
    }
    return sum(std::move(terms));
}

// ---------------------------------------------------------------------------
// Lie derivative of a form along a vector field (Cartan formula)
// ---------------------------------------------------------------------------

inline DifferentialForm lie_derivative_form(const MultiVectorField& x,
                                            const DifferentialForm& a,
                                            const Chart& chart) {
    if (x.degree() != 1) throw DegreeError("Lie derivative requires a degree-1 field");
    DifferentialForm da = exterior_derivative(a, chart);
    if (a.degree() == 0) return interior_product(x, da);
    DifferentialForm term1 = interior_product(x, da);
    DifferentialForm term2 = exterior_derivative(interior_product(x, a), chart);
    return term1 + term2;
}

// ---------------------------------------------------------------------------
// Schouten bracket: degree pairs (1,k) and (2,2)
// ---------------------------------------------------------------------------

namespace detail {
inline void increasing_tuples(int dim, int k, IndexTuple& cur, int start,
                              std::vector<IndexTuple>& out) {
    if (static_cast<int>(cur.size()) == k) {
        out.push_back(cur);
        return;
    }
    for (int i = start; i < dim; ++i) {
        cur.push_back(i);
        increasing_tuples(dim, k, cur, i + 1, out);
        cur.pop_back();
    }
}

inline std::vector<IndexTuple> all_tuples(int dim, int k) {
    std::vector<IndexTuple> out;
    IndexTuple cur;
    increasing_tuples(dim, k, cur, 0, out);
    return out;
}
}  // namespace detail

/// [X, W] for X degree 1: the Lie transport of W along X,
/// [X,W]^{i1..ik} = X^m d_m W^{i1..ik} - sum_a W^{i1..m..ik} d_m X^{i_a}.
inline MultiVectorField lie_transport_multivector(const MultiVectorField& x,
                                                  const MultiVectorField& w,
                                                  const Chart& chart) {
    if (x.degree() != 1) throw DegreeError("transport requires a degree-1 field");
    const int d = w.dim();
    const int k = w.degree();
    MultiVectorField r(d, k);
    for (const auto& I : detail::all_tuples(d, k)) {
        std::vector<ScalarExpr> terms;
        // transport of the coefficient
        ScalarExpr wI = w.coefficient(I);
        if (!wI.is_zero()) {
            for (const auto& [M, xc] : x.coefficients()) {
                ScalarExpr dw = differentiate(wI, chart.coords[static_cast<std::size_t>(M[0])]);
                if (!dw.is_zero()) terms.push_back(product(xc, dw));
            }
        }
        // reanchoring of the indices
        for (std::size_t a = 0; a < I.size(); ++a) {
            ScalarExpr xa = x.coefficient({I[a]});
            if (xa.is_zero()) continue;
            for (int m = 0; m < d; ++m) {
                ScalarExpr dx = differentiate(xa, chart.coords[static_cast<std::size_t>(m)]);
                if (dx.is_zero()) continue;
                IndexTuple J = I;
                J[a] = m;
                ScalarExpr wd = w.dense(std::move(J));
                if (wd.is_zero()) continue;
                terms.push_back(negate(product(wd, dx)));
            }
        }
        r.add_term(IndexTuple(I), sum(std::move(terms)));
    }
    return r;
}

/// Schouten bracket of two bivectors: the Jacobi trivector,
/// [A,B]^{ijk} = sum_{cyc(i,j,k)} sum_m (A^{mi} d_m B^{jk} + B^{mi} d_m A^{jk}).
inline MultiVectorField schouten_bivector_pair(const MultiVectorField& a,
                                               const MultiVectorField& b,
                                               const Chart& chart) {
    const int d = a.dim();
    MultiVectorField r(d, 3);
    if (r.degree() > d) return r;
    auto half = [&](const MultiVectorField& u, const MultiVectorField& v, int i, int j,
                    int k, std::vector<ScalarExpr>& terms) {
        // sum_m u^{mi} d_m v^{jk}
        ScalarExpr vjk = v.dense({j, k});
        if (vjk.is_zero()) return;
        for (int m = 0; m < d; ++m) {
            ScalarExpr umi = u.dense({m, i});
            if (umi.is_zero()) continue;
            ScalarExpr dv = differentiate(vjk, chart.coords[static_cast<std::size_t>(m)]);
            if (dv.is_zero()) continue;
            terms.push_back(product(umi, dv));
        }
    };
    for (const auto& T : detail::all_tuples(d, 3)) {
        const int i = T[0], j = T[1], k = T[2];
        std::vector<ScalarExpr> terms;
        const int cyc[3][3] = {{i, j, k}, {j, k, i}, {k, i, j}};
        for (const auto& c : cyc) {
            half(a, b, c[0], c[1], c[2], terms);
            half(b, a, c[0], c[1], c[2], terms);
        }
        r.add_term(IndexTuple(T), sum(std::move(terms)));
    }
    return r;
}

/// Schouten bracket on the supported degree pairs: (1,k) for any k, and (2,2).
inline MultiVectorField schouten_bracket(const MultiVectorField& a,
                                         const MultiVectorField& b,
                                         const Chart& chart) {
    if (a.degree() == 1) return lie_transport_multivector(a, b, chart);
    if (a.degree() == 2 && b.degree() == 2) return schouten_bivector_pair(a, b, chart);
    throw UnsupportedDegreePairError(a.degree(), b.degree());
}

// ---------------------------------------------------------------------------
// Probabilistic zero / equality checks on fields
// ---------------------------------------------------------------------------

template <class Tag>
bool probabilistically_zero(const AntisymField<Tag>& f, int trials, double tol, Rng& rng,
                            const SampleBox& box = {}) {
    for (const auto& [I, c] : f.coefficients())
        if (!probabilistically_zero(c, trials, tol, rng, box)) return false;
    return true;
}

template <class Tag>
bool probabilistically_equal(const AntisymField<Tag>& a, const AntisymField<Tag>& b,
                             int trials, double tol, Rng& rng, const SampleBox& box = {}) {
    if (a.dim() != b.dim() || a.degree() != b.degree()) return false;
    return probabilistically_zero(a - b, trials, tol, rng, box);
}

/// Largest sampled |coefficient| over `trials` random points (for reports).
template <class Tag>
double sampled_residual(const AntisymField<Tag>& f, int trials, Rng& rng,
                        const SampleBox& box = {}) {
    double worst = 0.0;
    for (const auto& [I, c] : f.coefficients()) {
        std::set<std::string> vars = free_symbols(c);
        for (int t = 0; t < trials; ++t) {
            double v = detail::sample_valid(
                [&](const EvalContext& ctx) { return evaluate(c, ctx); }, vars, rng, box);
            worst = std::max(worst, std::abs(v));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// PointTensor: dense-in-value sparse-in-index numeric mirror at a point
// ---------------------------------------------------------------------------

class PointTensor {
  public:
    PointTensor() : dim_(0), degree_(0) {}
    PointTensor(int dim, int degree) : dim_(dim), degree_(degree) {}

    int dim() const { return dim_; }
    int degree() const { return degree_; }
    const std::map<IndexTuple, double>& coefficients() const { return coeff_; }

    void add_term(IndexTuple idx, double v, double prune_eps = 0.0) {
        if (static_cast<int>(idx.size()) != degree_)
            throw DegreeError("term degree does not match tensor degree");
        if (v == 0.0) return;
        int sign = detail::sort_with_sign(idx);
        if (sign == 0) return;
        auto [it, fresh] = coeff_.emplace(std::move(idx), sign * v);
        if (!fresh) {
            it->second += sign * v;
            if (std::abs(it->second) <= prune_eps) coeff_.erase(it);
        }
    }

    double coefficient(const IndexTuple& idx) const {
        auto it = coeff_.find(idx);
        return it == coeff_.end() ? 0.0 : it->second;
    }

    double dense(IndexTuple idx) const {
        int sign = detail::sort_with_sign(idx);
        if (sign == 0) return 0.0;
        return sign * coefficient(idx);
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& [k, v] : coeff_) m = std::max(m, std::abs(v));
        return m;
    }

  private:
    int dim_;
    int degree_;
    std::map<IndexTuple, double> coeff_;
};

template <class Tag>
PointTensor evaluate_at(const AntisymField<Tag>& f, const EvalContext& ctx) {
    PointTensor t(f.dim(), f.degree());
    for (const auto& [I, c] : f.coefficients()) t.add_term(IndexTuple(I), evaluate(c, ctx));
    return t;
}

inline PointTensor wedge(const PointTensor& a, const PointTensor& b) {
    if (a.dim() != b.dim()) throw ChartMismatchError();
    PointTensor r(a.dim(), a.degree() + b.degree());
    if (r.degree() > a.dim()) return r;
    for (const auto& [I, ca] : a.coefficients()) {
        for (const auto& [J, cb] : b.coefficients()) {
            IndexTuple K;
            K.reserve(I.size() + J.size());
            K.insert(K.end(), I.begin(), I.end());
            K.insert(K.end(), J.begin(), J.end());
            r.add_term(std::move(K), ca * cb);
        }
    }
    return r;
}

inline PointTensor tensor_power(const PointTensor& v, int k) {
    PointTensor r = v;
    for (int i = 1; i < k; ++i) r = wedge(r, v);
    return r;
}

inline double pairing(const PointTensor& v, const PointTensor& a) {
    if (v.degree() != a.degree()) throw DegreeError("pairing degree mismatch");
    double s = 0.0;
    for (const auto& [I, c] : v.coefficients()) s += c * a.coefficient(I);
    return s;
}

}  // namespace phasesym
