#pragma once

// System-level constructions on a declared phase space: Hamiltonian vector
// fields, kernels and pseudo-inverse bivectors of degenerate 2-forms,
// symmetry classification, and the conserved-quantity families built from a
// non-Noether generator (regular, presymplectic and Poisson paths).
//
// Orientation convention, fixed once and globally: the structure bivector is
// W = -Omega^{-1} (regular) and W_point = -pinv(Omega) (degenerate), where
// Omega is the dense antisymmetric coefficient matrix of the 2-form. This is
// the unique sign for which {f,g} = X_f g holds together with {p,q} = 1 on
// the canonical pair, and it makes the contraction identities relating
// i_X i_Y omega to i_W (i_X omega ^ i_Y omega) exact as written.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "phasesym/exterior.hpp"

namespace phasesym {

namespace defaults {
inline constexpr double kIdentityTol = 1e-9;   // probabilistic identity checks
inline constexpr double kSymmetryTol = 1e-8;   // commutator residual
inline constexpr double kRankTol = 1e-10;      // relative singular-value cutoff
inline constexpr int kSamplePoints = 50;
inline constexpr double kFdStep = 1e-5;        // central finite-difference step
}  // namespace defaults

// ---------------------------------------------------------------------------
// System declaration
// ---------------------------------------------------------------------------

enum class StructureKind { SymplecticForm, PresymplecticForm, PoissonBivector };

struct PhaseSpaceSystem {
    Chart chart;
    std::vector<std::pair<std::string, double>> parameters;  // name -> default
    StructureKind kind = StructureKind::SymplecticForm;
    DifferentialForm omega;      // used unless kind == PoissonBivector
    MultiVectorField bivector;   // used when kind == PoissonBivector
    ScalarExpr hamiltonian = constant(0);
    std::vector<MultiVectorField> kernel_basis;  // optional declaration

    int dim() const { return chart.dim(); }
    bool has_form() const { return kind != StructureKind::PoissonBivector; }

    std::set<std::string> declared_names() const {
        std::set<std::string> s(chart.coords.begin(), chart.coords.end());
        for (const auto& [n, v] : parameters) s.insert(n);
        return s;
    }

    /// Slot layout used by compiled expressions: coordinates first, then
    /// parameters (parameter slots are filled with their declared defaults).
    std::map<std::string, int> slot_map() const {
        std::map<std::string, int> m;
        for (int i = 0; i < dim(); ++i) m[chart.coords[static_cast<std::size_t>(i)]] = i;
        int j = dim();
        for (const auto& [n, v] : parameters) m[n] = j++;
        return m;
    }

    std::vector<double> slots_for(const std::vector<double>& state) const {
        std::vector<double> s(state.begin(), state.end());
        for (const auto& [n, v] : parameters) s.push_back(v);
        return s;
    }

    EvalContext context(const std::vector<double>& state) const {
        EvalContext ctx;
        for (int i = 0; i < dim(); ++i)
            ctx.values[chart.coords[static_cast<std::size_t>(i)]] = state[static_cast<std::size_t>(i)];
        for (const auto& [n, v] : parameters) ctx.values[n] = v;
        return ctx;
    }

    std::vector<double> random_state(Rng& rng, const SampleBox& box = {}) const {
        std::uniform_real_distribution<double> dist(box.lo, box.hi);
        std::vector<double> s(static_cast<std::size_t>(dim()));
        for (auto& v : s) v = dist(rng);
        return s;
    }
};

struct SymmetryGenerator {
    MultiVectorField field;  // degree 1
};

enum class SymmetryClass {
    StrictSymmetry,
    SymmetryUpToHamiltonian,
    SymmetryUpToKernel,
    NotASymmetry,
};

inline const char* to_string(SymmetryClass c) {
    switch (c) {
        case SymmetryClass::StrictSymmetry: return "strict-symmetry";
        case SymmetryClass::SymmetryUpToHamiltonian: return "symmetry-up-to-hamiltonian";
        case SymmetryClass::SymmetryUpToKernel: return "symmetry-up-to-kernel";
        case SymmetryClass::NotASymmetry: return "not-a-symmetry";
    }
    return "?";
}

struct SymmetryVerdict {
    SymmetryClass cls;
    MultiVectorField witness;  // the commutator K = [E, X_h] when symbolic
    double max_residual = 0.0;
};

// ---------------------------------------------------------------------------
// Sampling helpers (resample away from singular points)
// ---------------------------------------------------------------------------

namespace detail {
template <class Fn>
void for_sampled_states(const PhaseSpaceSystem& sys, int n_points, Rng& rng, Fn&& fn,
                        const SampleBox& box = {}) {
    for (int i = 0; i < n_points; ++i) {
        bool done = false;
        for (int attempt = 0; attempt < box.max_resample_factor && !done; ++attempt) {
            std::vector<double> state = sys.random_state(rng, box);
            try {
                fn(state);
                done = true;
            } catch (const DomainPointError&) {
            } catch (const SingularPointError&) {
            }
        }
        if (!done) throw ExhaustedSamplingError();
    }
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Dense symbolic matrices and determinants
// ---------------------------------------------------------------------------

namespace detail {
using SymbolicMatrix = std::vector<std::vector<ScalarExpr>>;

template <class Tag>
SymbolicMatrix dense_matrix(const AntisymField<Tag>& f) {
    const int d = f.dim();
    SymbolicMatrix m(static_cast<std::size_t>(d),
                     std::vector<ScalarExpr>(static_cast<std::size_t>(d), constant(0)));
    for (const auto& [I, c] : f.coefficients()) {
        m[static_cast<std::size_t>(I[0])][static_cast<std::size_t>(I[1])] = c;
        m[static_cast<std::size_t>(I[1])][static_cast<std::size_t>(I[0])] = negate(c);
    }
    return m;
}

inline ScalarExpr symbolic_determinant(const SymbolicMatrix& m) {
    const std::size_t n = m.size();
    if (n == 0) return constant(1);
    if (n == 1) return m[0][0];
    std::vector<ScalarExpr> terms;
    for (std::size_t i = 0; i < n; ++i) {
        if (m[i][0].is_zero()) continue;
        SymbolicMatrix minor;
        minor.reserve(n - 1);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == i) continue;
            std::vector<ScalarExpr> row(m[r].begin() + 1, m[r].end());
            minor.push_back(std::move(row));
        }
        ScalarExpr t = product(m[i][0], symbolic_determinant(minor));
        terms.push_back(i % 2 == 0 ? t : negate(t));
    }
    return sum(std::move(terms));
}

inline ScalarExpr symbolic_minor(const SymbolicMatrix& m, std::size_t row, std::size_t col) {
    SymbolicMatrix sub;
    sub.reserve(m.size() - 1);
    for (std::size_t r = 0; r < m.size(); ++r) {
        if (r == row) continue;
        std::vector<ScalarExpr> line;
        line.reserve(m.size() - 1);
        for (std::size_t c = 0; c < m.size(); ++c)
            if (c != col) line.push_back(m[r][c]);
        sub.push_back(std::move(line));
    }
    return symbolic_determinant(sub);
}

/// Compiled dense antisymmetric matrix evaluator for a degree-2 field.
class CompiledMatrixField {
  public:
    CompiledMatrixField() = default;

    template <class Tag>
    CompiledMatrixField(const AntisymField<Tag>& f, const std::map<std::string, int>& slots)
        : dim_(f.dim()) {
        for (const auto& [I, c] : f.coefficients())
            entries_.emplace_back(I[0], I[1], CompiledExpr(c, slots));
    }

    Eigen::MatrixXd operator()(const std::vector<double>& slot_values) const {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim_, dim_);
        for (const auto& [i, j, c] : entries_) {
            double v = c(slot_values);
            m(i, j) = v;
            m(j, i) = -v;
        }
        return m;
    }

    int dim() const { return dim_; }

  private:
    int dim_ = 0;
    std::vector<std::tuple<int, int, CompiledExpr>> entries_;
};

/// Compiled degree-1 field evaluator.
class CompiledVectorField {
  public:
    CompiledVectorField() = default;

    CompiledVectorField(const MultiVectorField& f, const std::map<std::string, int>& slots)
        : dim_(f.dim()), comp_(static_cast<std::size_t>(f.dim())) {
        for (const auto& [I, c] : f.coefficients())
            comp_[static_cast<std::size_t>(I[0])] = CompiledExpr(c, slots);
    }

    Eigen::VectorXd operator()(const std::vector<double>& slot_values) const {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
        for (int i = 0; i < dim_; ++i)
            if (comp_[static_cast<std::size_t>(i)]) v(i) = (*comp_[static_cast<std::size_t>(i)])(slot_values);
        return v;
    }

    int dim() const { return dim_; }

  private:
    int dim_ = 0;
    std::vector<std::optional<CompiledExpr>> comp_;
};

inline PointTensor matrix_to_tensor(const Eigen::MatrixXd& m, double prune_eps = 0.0) {
    PointTensor t(static_cast<int>(m.rows()), 2);
    for (int i = 0; i < m.rows(); ++i)
        for (int j = i + 1; j < m.cols(); ++j)
            if (std::abs(m(i, j)) > prune_eps) t.add_term({i, j}, m(i, j));
    return t;
}

/// Moore-Penrose pseudo-inverse with the library's global orientation sign,
/// plus rank and kernel basis. Throws OddRankError if the numerical rank is
/// odd.
struct PinvResult {
    Eigen::MatrixXd w;           // -pinv(Omega)
    Eigen::MatrixXd pinv;        // pinv(Omega)
    int rank;
    std::vector<Eigen::VectorXd> kernel;
};

inline PinvResult oriented_pinv(const Eigen::MatrixXd& omega, double rank_tol) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(omega, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const double smax = s.size() > 0 ? s(0) : 0.0;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
    int rank = 0;
    for (int i = 0; i < s.size(); ++i) {
        if (smax > 0.0 && s(i) > rank_tol * smax) {
            inv(i) = 1.0 / s(i);
            ++rank;
        }
    }
    if (rank % 2 != 0) throw OddRankError(rank);
    PinvResult r;
    r.pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    r.w = -r.pinv;
    r.rank = rank;
    for (int i = rank; i < s.size(); ++i) r.kernel.push_back(svd.matrixV().col(i));
    return r;
}

/// Differential of the Moore-Penrose pseudo-inverse (Golub-Pedersen), valid
/// on constant-rank strata.
inline Eigen::MatrixXd pinv_differential(const Eigen::MatrixXd& a, const Eigen::MatrixXd& p,
                                         const Eigen::MatrixXd& da) {
    const Eigen::MatrixXd i = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    return -p * da * p + p * p.transpose() * da.transpose() * (i - a * p) +
           (i - p * a) * da.transpose() * p.transpose() * p;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// invert_symplectic_form
// ---------------------------------------------------------------------------

/// Symbolic inverse bivector of a non-degenerate 2-form, oriented so that
/// {f,g} = X_f g (equivalently {p,q} = 1 on the canonical pair).
inline MultiVectorField invert_symplectic_form(const PhaseSpaceSystem& sys, Rng& rng) {
    if (!sys.has_form()) throw ValidationError("structure is a bivector, not a 2-form");
    const int d = sys.dim();
    // probabilistic non-degeneracy first (numeric, works in any dimension)
    {
        EvalContext params;
        for (const auto& [n, v] : sys.parameters) params.values[n] = v;
        bool nonzero = false;
        std::uniform_real_distribution<double> dist(-2.0, 2.0);
        for (int t = 0; t < 20 && !nonzero; ++t) {
            EvalContext ctx = params;
            for (const auto& c : sys.chart.coords) ctx.values[c] = dist(rng);
            try {
                PointTensor pt = evaluate_at(sys.omega, ctx);
                Eigen::MatrixXd om = Eigen::MatrixXd::Zero(d, d);
                for (const auto& [I, v] : pt.coefficients()) {
                    om(I[0], I[1]) = v;
                    om(I[1], I[0]) = -v;
                }
                if (std::abs(om.determinant()) > defaults::kIdentityTol) nonzero = true;
            } catch (const DomainPointError&) {
            }
        }
        if (!nonzero) throw DegenerateFormError();
    }
    if (d > 6) throw DimensionTooLargeError(d);
    detail::SymbolicMatrix m = detail::dense_matrix(sys.omega);
    ScalarExpr det = detail::symbolic_determinant(m);

    MultiVectorField w(d, 2);
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            // W_{ij} = -(Omega^{-1})_{ij} = -adj(Omega)_{ij}/det,
            // adj(Omega)_{ij} = (-1)^{i+j} minor_{ji}
            ScalarExpr adj = detail::symbolic_minor(m, static_cast<std::size_t>(j),
                                                    static_cast<std::size_t>(i));
            if ((i + j) % 2 != 0) adj = negate(adj);
            w.add_term({i, j}, quotient(negate(adj), det));
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// kernel_and_pseudoinverse_at
// ---------------------------------------------------------------------------

struct KernelPinvAt {
    std::vector<PointTensor> kernel;  // degree-1 tensors spanning the null space
    PointTensor w_point;              // degree-2, the oriented pseudo-inverse
    Eigen::MatrixXd w_matrix;
    std::vector<Eigen::VectorXd> kernel_vectors;
    int rank;
};

inline KernelPinvAt kernel_and_pseudoinverse_at(const PhaseSpaceSystem& sys,
                                                const EvalContext& point,
                                                double rank_tol = defaults::kRankTol) {
    if (!sys.has_form()) throw ValidationError("structure is a bivector, not a 2-form");
    Eigen::MatrixXd omega(sys.dim(), sys.dim());
    try {
        PointTensor t = evaluate_at(sys.omega, point);
        omega.setZero();
        for (const auto& [I, v] : t.coefficients()) {
            omega(I[0], I[1]) = v;
            omega(I[1], I[0]) = -v;
        }
    } catch (const DomainPointError& e) {
        throw SingularPointError(e.what());
    }
    detail::PinvResult p = detail::oriented_pinv(omega, rank_tol);
    KernelPinvAt out;
    out.rank = p.rank;
    out.w_matrix = p.w;
    out.w_point = detail::matrix_to_tensor(p.w);
    out.kernel_vectors = p.kernel;
    for (const auto& v : p.kernel) {
        PointTensor k(sys.dim(), 1);
        for (int i = 0; i < v.size(); ++i)
            if (v(i) != 0.0) k.add_term({i}, v(i));
        out.kernel.push_back(std::move(k));
    }
    return out;
}

// ---------------------------------------------------------------------------
// hamiltonian_vector_field
// ---------------------------------------------------------------------------

/// X_h, symbolically for regular/Poisson structures, as a pointwise
/// minimum-norm representative for presymplectic ones.
struct HamiltonianField {
    std::optional<MultiVectorField> symbolic;
    std::function<Eigen::VectorXd(const std::vector<double>& state)> pointwise;
};

namespace detail {
/// X_f = W^T grad f for the oriented structure bivector W.
inline MultiVectorField field_from_gradient(const MultiVectorField& w, const ScalarExpr& f,
                                            const Chart& chart) {
    const int d = w.dim();
    MultiVectorField x(d, 1);
    std::vector<ScalarExpr> grad;
    grad.reserve(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
        grad.push_back(differentiate(f, chart.coords[static_cast<std::size_t>(j)]));
    for (int i = 0; i < d; ++i) {
        std::vector<ScalarExpr> terms;
        for (int j = 0; j < d; ++j) {
            if (grad[static_cast<std::size_t>(j)].is_zero()) continue;
            ScalarExpr wji = w.dense({j, i});
            if (wji.is_zero()) continue;
            terms.push_back(product(wji, grad[static_cast<std::size_t>(j)]));
        }
        x.add_term({i}, sum(std::move(terms)));
    }
    return x;
}
}  // namespace detail

inline HamiltonianField hamiltonian_vector_field(const PhaseSpaceSystem& sys, Rng& rng,
                                                 double rank_tol = defaults::kRankTol) {
    HamiltonianField out;
    auto slots = sys.slot_map();
    if (sys.kind == StructureKind::PoissonBivector) {
        out.symbolic = detail::field_from_gradient(sys.bivector, sys.hamiltonian, sys.chart);
    } else if (sys.kind == StructureKind::SymplecticForm) {
        MultiVectorField w = invert_symplectic_form(sys, rng);
        out.symbolic = detail::field_from_gradient(w, sys.hamiltonian, sys.chart);
    } else {
        // presymplectic: pointwise minimum-norm solution of Omega X = grad h,
        // i.e. X = pinv(Omega) grad h = W_point^T grad h.
        auto omega_c = std::make_shared<detail::CompiledMatrixField>(sys.omega, slots);
        auto grad_c = std::make_shared<std::vector<CompiledExpr>>();
        for (const auto& c : sys.chart.coords)
            grad_c->emplace_back(differentiate(sys.hamiltonian, c), slots);
        auto sysp = std::make_shared<PhaseSpaceSystem>(sys);
        auto field = [omega_c, grad_c, sysp, rank_tol](const std::vector<double>& state) {
            std::vector<double> sl = sysp->slots_for(state);
            Eigen::MatrixXd om = (*omega_c)(sl);
            Eigen::VectorXd g(om.rows());
            for (int j = 0; j < g.size(); ++j) g(j) = (*grad_c)[static_cast<std::size_t>(j)](sl);
            detail::PinvResult p = detail::oriented_pinv(om, rank_tol);
            return Eigen::VectorXd(p.pinv * g);
        };
        // consistency: dh must lie in the range of Omega at sampled points
        auto omega_chk = omega_c;
        auto grad_chk = grad_c;
        detail::for_sampled_states(sys, 20, rng, [&](const std::vector<double>& state) {
            std::vector<double> sl = sys.slots_for(state);
            Eigen::MatrixXd om = (*omega_chk)(sl);
            Eigen::VectorXd g(om.rows());
            for (int j = 0; j < g.size(); ++j) g(j) = (*grad_chk)[static_cast<std::size_t>(j)](sl);
            detail::PinvResult p = detail::oriented_pinv(om, rank_tol);
            double res = (om * (p.pinv * g) - g).norm();
            if (res > 1e-8 * (1.0 + g.norm())) throw NoDynamicsError();
        });
        out.pointwise = field;
        return out;
    }
    detail::CompiledVectorField cf(*out.symbolic, slots);
    auto sysp = std::make_shared<PhaseSpaceSystem>(sys);
    out.pointwise = [cf, sysp](const std::vector<double>& state) {
        return cf(sysp->slots_for(state));
    };
    return out;
}

// ---------------------------------------------------------------------------
// classify_field
// ---------------------------------------------------------------------------

enum class FieldClass { Hamiltonian, LocallyHamiltonian, Neither };

inline const char* to_string(FieldClass c) {
    switch (c) {
        case FieldClass::Hamiltonian: return "hamiltonian";
        case FieldClass::LocallyHamiltonian: return "locally-hamiltonian";
        case FieldClass::Neither: return "neither";
    }
    return "?";
}

struct FieldClassification {
    FieldClass cls;
    std::optional<ScalarExpr> potential;  // f with i_K omega + df = 0, when found
};

namespace detail {
/// Poincare homotopy antiderivative of a closed polynomial 1-form:
/// f(z) = sum_j z_j \int_0^1 alpha_j(t z) dt, computed exactly per monomial.
inline std::optional<ScalarExpr> polynomial_antiderivative(
    const std::vector<ScalarExpr>& alpha, const Chart& chart) {
    std::vector<ScalarExpr> terms;
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        Polynomial p;
        std::set<std::string> extra = free_symbols(alpha[j]);
        for (const auto& c : chart.coords) extra.erase(c);
        if (!extra.empty()) return std::nullopt;  // parameters in play: skip
        if (!Polynomial::convert(alpha[j], chart.coords, p)) return std::nullopt;
        for (const auto& [mono, c] : p.terms) {
            int total = 0;
            for (int e : mono) total += e;
            // z_j * integral of the monomial along the ray
            std::vector<ScalarExpr> fs{constant(Rational(c) / Rational(total + 1)),
                                       symbol(chart.coords[j])};
            for (std::size_t i = 0; i < mono.size(); ++i)
                if (mono[i] != 0) fs.push_back(power(symbol(chart.coords[i]), Rational(mono[i])));
            terms.push_back(product(std::move(fs)));
        }
    }
    return sum(std::move(terms));
}
}  // namespace detail

inline FieldClassification classify_field(const PhaseSpaceSystem& sys,
                                          const MultiVectorField& k, Rng& rng) {
    DifferentialForm omega = sys.omega;
    if (sys.kind == StructureKind::PoissonBivector) {
        // correspondence beta(X) + alpha ^ beta (W) = 0: alpha exists iff the
        // symbolic bivector matrix is invertible; solve via the inverse form.
        detail::SymbolicMatrix wm = detail::dense_matrix(sys.bivector);
        ScalarExpr det = detail::symbolic_determinant(wm);
        if (probabilistically_zero(det, 10, defaults::kIdentityTol, rng)) {
            // degenerate Poisson: check pointwise whether K is in the image
            auto slots = sys.slot_map();
            detail::CompiledMatrixField wc(sys.bivector, slots);
            detail::CompiledVectorField kc(k, slots);
            detail::for_sampled_states(sys, 20, rng, [&](const std::vector<double>& state) {
                std::vector<double> sl = sys.slots_for(state);
                Eigen::MatrixXd w = wc(sl);
                Eigen::VectorXd kv = kc(sl);
                detail::PinvResult p = detail::oriented_pinv(w, defaults::kRankTol);
                if ((w * (p.pinv * kv) - kv).norm() > 1e-8 * (1.0 + kv.norm()))
                    throw NoCorrespondingFormError();
            });
            return {FieldClass::LocallyHamiltonian, std::nullopt};
        }
        if (sys.dim() > 6) throw DimensionTooLargeError(sys.dim());
        // alpha with X = W^T alpha  =>  alpha = (W^T)^{-1} X = -W^{-1} X;
        // recast as a 2-form problem: omega := inverse form of W with the same
        // orientation rule, then proceed below.
        DifferentialForm om(sys.dim(), 2);
        for (int i = 0; i < sys.dim(); ++i)
            for (int j = i + 1; j < sys.dim(); ++j) {
                ScalarExpr adj = detail::symbolic_minor(wm, static_cast<std::size_t>(j),
                                                        static_cast<std::size_t>(i));
                if ((i + j) % 2 != 0) adj = negate(adj);
                om.add_term({i, j}, quotient(negate(adj), det));
            }
        omega = om;
    }
    // alpha = -i_K omega, so that exactness means i_K omega + d f = 0
    DifferentialForm alpha = interior_product(k, omega).negated();
    DifferentialForm dalpha = exterior_derivative(alpha, sys.chart);
    // pin parameters: substitute nothing, but sample coords only
    bool closed = true;
    {
        EvalContext params;
        for (const auto& [n, v] : sys.parameters) params.values[n] = v;
        std::uniform_real_distribution<double> dist(-2.0, 2.0);
        for (const auto& [I, c] : dalpha.coefficients()) {
            for (int t = 0; t < 20 && closed; ++t) {
                EvalContext ctx = params;
                for (const auto& n : sys.chart.coords) ctx.values[n] = dist(rng);
                try {
                    double v = evaluate(c, ctx);
                    if (std::abs(v) > defaults::kIdentityTol * (1.0 + std::abs(v))) closed = false;
                } catch (const DomainPointError&) {
                }
            }
            if (!closed) break;
        }
    }
    if (!closed) return {FieldClass::Neither, std::nullopt};
    std::vector<ScalarExpr> comps;
    for (int j = 0; j < sys.dim(); ++j) comps.push_back(alpha.coefficient({j}));
    auto f = detail::polynomial_antiderivative(comps, sys.chart);
    if (f) {
        // verify df = alpha probabilistically before claiming exactness
        bool ok = true;
        for (int j = 0; j < sys.dim() && ok; ++j) {
            ScalarExpr dfj = differentiate(*f, sys.chart.coords[static_cast<std::size_t>(j)]);
            ok = probabilistic_equal(dfj, comps[static_cast<std::size_t>(j)], 10,
                                     defaults::kIdentityTol, rng);
        }
        if (ok) return {FieldClass::Hamiltonian, f};
    }
    return {FieldClass::LocallyHamiltonian, std::nullopt};
}

// ---------------------------------------------------------------------------
// check_symmetry
// ---------------------------------------------------------------------------

inline SymmetryVerdict check_symmetry(const PhaseSpaceSystem& sys, const SymmetryGenerator& gen,
                                      Rng& rng, double tol = defaults::kSymmetryTol) {
    HamiltonianField xh = hamiltonian_vector_field(sys, rng);
    auto slots = sys.slot_map();

    if (xh.symbolic) {
        MultiVectorField k = schouten_bracket(gen.field, *xh.symbolic, sys.chart);
        double residual = 0.0;
        detail::CompiledVectorField kc(k, slots);
        detail::for_sampled_states(sys, defaults::kSamplePoints, rng,
                                   [&](const std::vector<double>& state) {
                                       Eigen::VectorXd v = kc(sys.slots_for(state));
                                       residual = std::max(residual,
                                                           v.cwiseAbs().maxCoeff());
                                   });
        if (residual <= tol) return {SymmetryClass::StrictSymmetry, k, residual};
        FieldClassification fc = classify_field(sys, k, rng);
        if (fc.cls != FieldClass::Neither)
            return {SymmetryClass::SymmetryUpToHamiltonian, k, residual};
        return {SymmetryClass::NotASymmetry, k, residual};
    }

    // presymplectic: K = [E, X_h] with finite-difference transport of the
    // pointwise representative, then orthogonal projection onto the kernel.
    detail::CompiledVectorField ec(gen.field, slots);
    // d_m E^i compiled symbolically
    std::vector<detail::CompiledVectorField> de;
    for (const auto& c : sys.chart.coords) {
        MultiVectorField d(sys.dim(), 1);
        for (const auto& [I, ce] : gen.field.coefficients())
            d.add_term(IndexTuple(I), differentiate(ce, c));
        de.emplace_back(d, slots);
    }
    const double h = defaults::kFdStep;
    double residual = 0.0;
    detail::for_sampled_states(sys, defaults::kSamplePoints, rng,
                               [&](const std::vector<double>& state) {
        std::vector<double> sl = sys.slots_for(state);
        Eigen::VectorXd e = ec(sl);
        Eigen::VectorXd k = Eigen::VectorXd::Zero(sys.dim());
        // E^m d_m X_h (central differences) - X_h^m d_m E
        Eigen::VectorXd xh0 = xh.pointwise(state);
        for (int m = 0; m < sys.dim(); ++m) {
            if (e(m) != 0.0) {
                std::vector<double> up = state, dn = state;
                up[static_cast<std::size_t>(m)] += h;
                dn[static_cast<std::size_t>(m)] -= h;
                k += e(m) * (xh.pointwise(up) - xh.pointwise(dn)) / (2 * h);
            }
            if (xh0(m) != 0.0) k -= xh0(m) * de[static_cast<std::size_t>(m)](sl);
        }
        // project out the pointwise kernel span
        KernelPinvAt kp = kernel_and_pseudoinverse_at(sys, sys.context(state));
        Eigen::VectorXd proj = k;
        for (const auto& u : kp.kernel_vectors) proj -= (u.dot(proj)) * u;
        residual = std::max(residual, proj.cwiseAbs().maxCoeff());
    });
    MultiVectorField empty(sys.dim(), 1);
    if (residual <= tol) return {SymmetryClass::SymmetryUpToKernel, empty, residual};
    return {SymmetryClass::NotASymmetry, empty, residual};
}

// ---------------------------------------------------------------------------
// Invariant sets
// ---------------------------------------------------------------------------

struct InvariantEntry {
    int k = 0;
    std::optional<ScalarExpr> symbolic;
    std::function<double(const std::vector<double>& state)> value;
    std::function<Eigen::VectorXd(const std::vector<double>& state)> gradient;
};

struct InvariantSet {
    enum class Path { Regular, Presymplectic, Poisson };
    Path path = Path::Regular;
    int half_rank = 0;
    std::vector<InvariantEntry> entries;
    std::string normalization_note;
};

inline const char* to_string(InvariantSet::Path p) {
    switch (p) {
        case InvariantSet::Path::Regular: return "regular";
        case InvariantSet::Path::Presymplectic: return "presymplectic";
        case InvariantSet::Path::Poisson: return "poisson";
    }
    return "?";
}

namespace detail {
inline InvariantEntry symbolic_entry(int k, const ScalarExpr& e, const PhaseSpaceSystem& sys) {
    InvariantEntry entry;
    entry.k = k;
    entry.symbolic = e;
    auto slots = sys.slot_map();
    auto sysp = std::make_shared<PhaseSpaceSystem>(sys);
    CompiledExpr ce(e, slots);
    entry.value = [ce, sysp](const std::vector<double>& state) {
        return ce(sysp->slots_for(state));
    };
    std::vector<CompiledExpr> grads;
    for (const auto& c : sys.chart.coords) grads.emplace_back(differentiate(e, c), slots);
    entry.gradient = [grads, sysp](const std::vector<double>& state) {
        std::vector<double> sl = sysp->slots_for(state);
        Eigen::VectorXd g(static_cast<int>(state.size()));
        for (int j = 0; j < g.size(); ++j) g(j) = grads[static_cast<std::size_t>(j)](sl);
        return g;
    };
    return entry;
}
}  // namespace detail

/// I^(k) = i_{W^k} (L_E omega)^k. Regular path: symbolic, k = 1..n for
/// dim = 2n. Presymplectic path: pointwise evaluators built from the oriented
/// pseudo-inverse at each point, k = 1..r with 2r = rank(omega).
inline InvariantSet lutzky_invariants(const PhaseSpaceSystem& sys, const SymmetryGenerator& gen,
                                      Rng& rng, double rank_tol = defaults::kRankTol) {
    if (!sys.has_form())
        throw ValidationError("lutzky_invariants requires a 2-form structure");
    InvariantSet out;
    DifferentialForm omega_e = lie_derivative_form(gen.field, sys.omega, sys.chart);

    if (sys.kind == StructureKind::SymplecticForm) {
        out.path = InvariantSet::Path::Regular;
        MultiVectorField w = invert_symplectic_form(sys, rng);
        const int n = sys.dim() / 2;
        out.half_rank = n;
        MultiVectorField wk = w;
        DifferentialForm ok = omega_e;
        for (int k = 1; k <= n; ++k) {
            if (k > 1) {
                wk = wedge(wk, w);
                ok = wedge(ok, omega_e);
            }
            out.entries.push_back(detail::symbolic_entry(k, full_pairing(wk, ok), sys));
        }
        out.normalization_note =
            "symbolic pairing i_{W^k}(L_E omega)^k, no factorial normalization";
        return out;
    }

    out.path = InvariantSet::Path::Presymplectic;
    // constant-rank scan
    int rank = -1;
    detail::for_sampled_states(sys, defaults::kSamplePoints, rng,
                               [&](const std::vector<double>& state) {
        KernelPinvAt kp = kernel_and_pseudoinverse_at(sys, sys.context(state), rank_tol);
        if (rank < 0) rank = kp.rank;
        else if (rank != kp.rank) throw RankMismatchError();
    });
    const int r = rank / 2;
    out.half_rank = r;

    auto slots = sys.slot_map();
    auto omega_c = std::make_shared<detail::CompiledMatrixField>(sys.omega, slots);
    auto oe_c = std::make_shared<detail::CompiledMatrixField>(omega_e, slots);
    // coordinate derivatives, for exact gradients of the pointwise pipeline
    auto domega = std::make_shared<std::vector<detail::CompiledMatrixField>>();
    auto doe = std::make_shared<std::vector<detail::CompiledMatrixField>>();
    for (const auto& cname : sys.chart.coords) {
        DifferentialForm dO(sys.dim(), 2), dA(sys.dim(), 2);
        for (const auto& [I, c] : sys.omega.coefficients())
            dO.add_term(IndexTuple(I), differentiate(c, cname));
        for (const auto& [I, c] : omega_e.coefficients())
            dA.add_term(IndexTuple(I), differentiate(c, cname));
        domega->emplace_back(dO, slots);
        doe->emplace_back(dA, slots);
    }
    auto sysp = std::make_shared<PhaseSpaceSystem>(sys);

    for (int k = 1; k <= r; ++k) {
        InvariantEntry entry;
        entry.k = k;
        entry.value = [=](const std::vector<double>& state) {
            std::vector<double> sl = sysp->slots_for(state);
            Eigen::MatrixXd om = (*omega_c)(sl);
            detail::PinvResult p = detail::oriented_pinv(om, rank_tol);
            if (p.rank != 2 * r) throw RankMismatchError();
            PointTensor w = detail::matrix_to_tensor(p.w);
            PointTensor a = detail::matrix_to_tensor((*oe_c)(sl));
            return pairing(tensor_power(w, k), tensor_power(a, k));
        };
        entry.gradient = [=](const std::vector<double>& state) {
            std::vector<double> sl = sysp->slots_for(state);
            Eigen::MatrixXd om = (*omega_c)(sl);
            detail::PinvResult p = detail::oriented_pinv(om, rank_tol);
            Eigen::MatrixXd amat = (*oe_c)(sl);
            PointTensor w = detail::matrix_to_tensor(p.w);
            PointTensor a = detail::matrix_to_tensor(amat);
            PointTensor wk1 = k > 1 ? tensor_power(w, k - 1) : PointTensor(sysp->dim(), 0);
            PointTensor ak1 = k > 1 ? tensor_power(a, k - 1) : PointTensor(sysp->dim(), 0);
            if (k == 1) {
                wk1.add_term({}, 1.0);
                ak1.add_term({}, 1.0);
            }
            PointTensor wk = k > 1 ? wedge(wk1, w) : w;
            PointTensor ak = k > 1 ? wedge(ak1, a) : a;
            Eigen::VectorXd g(sysp->dim());
            for (int j = 0; j < sysp->dim(); ++j) {
                Eigen::MatrixXd dOm = (*domega)[static_cast<std::size_t>(j)](sl);
                Eigen::MatrixXd dA = (*doe)[static_cast<std::size_t>(j)](sl);
                Eigen::MatrixXd dW = -detail::pinv_differential(om, p.pinv, dOm);
                double term = k * pairing(wedge(detail::matrix_to_tensor(dW), wk1), ak) +
                              k * pairing(wk, wedge(detail::matrix_to_tensor(dA), ak1));
                g(j) = term;
            }
            return g;
        };
        out.entries.push_back(std::move(entry));
    }
    out.normalization_note =
        "pointwise pairing of oriented pseudo-inverse powers against "
        "(L_E omega)^k at each evaluation point";
    return out;
}

/// Poisson-path invariants I^(k) = [E,W]^{r-k} ^ W^k / W^r for k = 0..r,
/// with the k = r entry trivially 1. The ratio is taken against the
/// largest-magnitude component of W^r and full proportionality is verified.
inline InvariantSet poisson_invariants(const PhaseSpaceSystem& sys, const SymmetryGenerator& gen,
                                       Rng& rng, double tol = defaults::kSymmetryTol) {
    if (sys.kind != StructureKind::PoissonBivector)
        throw ValidationError("poisson_invariants requires a bivector structure");
    InvariantSet out;
    out.path = InvariantSet::Path::Poisson;
    const MultiVectorField& w = sys.bivector;
    MultiVectorField b = schouten_bracket(gen.field, w, sys.chart);

    // half-rank: largest k with W^k probabilistically nonzero, constant
    // across sampled points
    int r = 0;
    {
        std::vector<MultiVectorField> powers;
        MultiVectorField wk = w;
        while (wk.degree() <= sys.dim() && !wk.empty()) {
            powers.push_back(wk);
            wk = wedge(wk, w);
        }
        auto slots = sys.slot_map();
        std::vector<std::vector<std::pair<IndexTuple, CompiledExpr>>> compiled;
        for (const auto& p : powers) {
            std::vector<std::pair<IndexTuple, CompiledExpr>> cs;
            for (const auto& [I, c] : p.coefficients()) cs.emplace_back(I, CompiledExpr(c, slots));
            compiled.push_back(std::move(cs));
        }
        int seen = -1;
        detail::for_sampled_states(sys, defaults::kSamplePoints, rng,
                                   [&](const std::vector<double>& state) {
            std::vector<double> sl = sys.slots_for(state);
            int rp = 0;
            for (std::size_t i = 0; i < compiled.size(); ++i) {
                double mx = 0;
                for (const auto& [I, c] : compiled[i]) mx = std::max(mx, std::abs(c(sl)));
                if (mx > defaults::kIdentityTol) rp = static_cast<int>(i) + 1;
            }
            if (seen < 0) seen = rp;
            else if (seen != rp) throw RankDriftError();
        });
        r = seen;
    }
    out.half_rank = r;

    MultiVectorField wr = multivector_power(w, r);
    auto slots = sys.slot_map();
    auto sysp = std::make_shared<PhaseSpaceSystem>(sys);
    auto den_entries = std::make_shared<std::vector<std::pair<IndexTuple, CompiledExpr>>>();
    for (const auto& [I, c] : wr.coefficients()) den_entries->emplace_back(I, CompiledExpr(c, slots));

    bool all_constant = true;
    for (int k = 0; k <= r; ++k) {
        MultiVectorField num(sys.dim(), 2 * r);
        if (k == 0) num = multivector_power(b, r);
        else if (k == r) num = wr;
        else num = wedge(multivector_power(b, r - k), multivector_power(w, k));

        InvariantEntry entry;
        entry.k = k;
        // symbolic ratio when the denominator has a single component and the
        // numerator is supported on it
        if (den_entries->size() == 1) {
            const IndexTuple& pivot = wr.coefficients().begin()->first;
            bool supported = true;
            for (const auto& [I, c] : num.coefficients())
                if (I != pivot) supported = false;
            if (supported) {
                ScalarExpr ratio = quotient(num.coefficient(pivot), wr.coefficient(pivot));
                InvariantEntry se = detail::symbolic_entry(k, ratio, sys);
                se.k = k;
                if (!ratio.is_constant()) all_constant = false;
                // still verify proportionality pointwise below via the wrapper
                out.entries.push_back(std::move(se));
                continue;
            }
        }
        all_constant = false;
        auto num_entries = std::make_shared<std::vector<std::pair<IndexTuple, CompiledExpr>>>();
        auto dnum = std::make_shared<std::vector<std::vector<std::pair<IndexTuple, CompiledExpr>>>>();
        auto dden = std::make_shared<std::vector<std::vector<std::pair<IndexTuple, CompiledExpr>>>>();
        for (const auto& [I, c] : num.coefficients()) num_entries->emplace_back(I, CompiledExpr(c, slots));
        for (const auto& cname : sys.chart.coords) {
            std::vector<std::pair<IndexTuple, CompiledExpr>> dn, dd;
            for (const auto& [I, c] : num.coefficients())
                dn.emplace_back(I, CompiledExpr(differentiate(c, cname), slots));
            for (const auto& [I, c] : wr.coefficients())
                dd.emplace_back(I, CompiledExpr(differentiate(c, cname), slots));
            dnum->push_back(std::move(dn));
            dden->push_back(std::move(dd));
        }
        auto ratio_at = [=](const std::vector<double>& sl, IndexTuple* pivot_out) {
            // pivot = largest-magnitude denominator component
            double best = 0;
            const IndexTuple* pivot = nullptr;
            std::map<IndexTuple, double> den_vals;
            for (const auto& [I, c] : *den_entries) {
                double v = c(sl);
                den_vals[I] = v;
                if (std::abs(v) > std::abs(best)) { best = v; pivot = &I; }
            }
            if (!pivot || best == 0.0)
                throw SingularPointError("denominator multivector vanishes at the point");
            std::map<IndexTuple, double> num_vals;
            for (const auto& [I, c] : *num_entries) num_vals[I] = c(sl);
            double ratio = num_vals.count(*pivot) ? num_vals[*pivot] / best : 0.0;
            // full proportionality check
            double worst = 0.0;
            for (const auto& [I, dv] : den_vals) {
                double nv = num_vals.count(I) ? num_vals[I] : 0.0;
                worst = std::max(worst, std::abs(nv - ratio * dv));
            }
            for (const auto& [I, nv] : num_vals)
                if (!den_vals.count(I)) worst = std::max(worst, std::abs(nv));
            if (worst > tol * (1.0 + std::abs(ratio)) * (1.0 + std::abs(best)))
                throw NotProportionalError(worst);
            if (pivot_out) *pivot_out = *pivot;
            return ratio;
        };
        entry.value = [=](const std::vector<double>& state) {
            return ratio_at(sysp->slots_for(state), nullptr);
        };
        entry.gradient = [=](const std::vector<double>& state) {
            std::vector<double> sl = sysp->slots_for(state);
            IndexTuple pivot;
            double ratio = ratio_at(sl, &pivot);
            double den = 0;
            for (const auto& [I, c] : *den_entries)
                if (I == pivot) den = c(sl);
            Eigen::VectorXd g(sysp->dim());
            for (int j = 0; j < sysp->dim(); ++j) {
                double dn = 0, dd = 0;
                for (const auto& [I, c] : (*dnum)[static_cast<std::size_t>(j)])
                    if (I == pivot) dn = c(sl);
                for (const auto& [I, c] : (*dden)[static_cast<std::size_t>(j)])
                    if (I == pivot) dd = c(sl);
                g(j) = (dn - ratio * dd) / den;
            }
            return g;
        };
        out.entries.push_back(std::move(entry));
    }
    // verify proportionality of all entries at sampled points before handing out
    detail::for_sampled_states(sys, defaults::kSamplePoints, rng,
                               [&](const std::vector<double>& state) {
        for (const auto& e : out.entries) (void)e.value(state);
    });
    out.normalization_note = all_constant
        ? "all entries constant (degenerate-but-valid: [E,W] proportional to W)"
        : "component ratio against the largest W^r component; k = r entry trivially 1";
    return out;
}

// ---------------------------------------------------------------------------
// Poisson bracket, Jacobi validation, Yang-Baxter, involution
// ---------------------------------------------------------------------------

/// The oriented structure bivector, symbolically: declared (Poisson) or
/// inverted (regular symplectic). Presymplectic structures have none.
inline MultiVectorField structure_bivector(const PhaseSpaceSystem& sys, Rng& rng) {
    if (sys.kind == StructureKind::PoissonBivector) return sys.bivector;
    return invert_symplectic_form(sys, rng);
}

inline ScalarExpr poisson_bracket(const ScalarExpr& f, const ScalarExpr& g,
                                  const MultiVectorField& w, const Chart& chart) {
    std::vector<ScalarExpr> terms;
    for (const auto& [I, c] : w.coefficients()) {
        const std::string& zi = chart.coords[static_cast<std::size_t>(I[0])];
        const std::string& zj = chart.coords[static_cast<std::size_t>(I[1])];
        ScalarExpr t = difference(product(differentiate(f, zi), differentiate(g, zj)),
                                  product(differentiate(f, zj), differentiate(g, zi)));
        terms.push_back(product(c, t));
    }
    return sum(std::move(terms));
}

inline ScalarExpr poisson_bracket(const ScalarExpr& f, const ScalarExpr& g,
                                  const PhaseSpaceSystem& sys, Rng& rng) {
    return poisson_bracket(f, g, structure_bivector(sys, rng), sys.chart);
}

struct ResidualCheck {
    bool ok = false;
    double residual = 0.0;
};

/// [W,W] = 0 within tolerance (Jacobi identity for the induced bracket).
inline ResidualCheck validate_poisson(const MultiVectorField& w, const Chart& chart,
                                      const std::vector<std::pair<std::string, double>>& params,
                                      Rng& rng, double tol = defaults::kIdentityTol) {
    MultiVectorField ww = schouten_bracket(w, w, chart);
    double worst = 0.0;
    EvalContext base;
    for (const auto& [n, v] : params) base.values[n] = v;
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (const auto& [I, c] : ww.coefficients()) {
        for (int t = 0; t < 20; ++t) {
            EvalContext ctx = base;
            for (const auto& n : chart.coords) ctx.values[n] = dist(rng);
            try {
                worst = std::max(worst, std::abs(evaluate(c, ctx)));
            } catch (const DomainPointError&) {
            }
        }
    }
    return {worst <= tol, worst};
}

inline ResidualCheck validate_poisson(const PhaseSpaceSystem& sys, Rng& rng,
                                      double tol = defaults::kIdentityTol) {
    if (sys.kind != StructureKind::PoissonBivector)
        throw ValidationError("validate_poisson requires a bivector structure");
    return validate_poisson(sys.bivector, sys.chart, sys.parameters, rng, tol);
}

/// [[E,[E,W]],W] = 0 check. Symbolic for systems with a symbolic bivector;
/// finite-difference transport of the pointwise pseudo-inverse field for
/// presymplectic ones (noise-limited, tolerance widened accordingly).
inline ResidualCheck yang_baxter_check(const PhaseSpaceSystem& sys, const SymmetryGenerator& gen,
                                       Rng& rng, double tol = defaults::kIdentityTol) {
    if (sys.kind != StructureKind::PresymplecticForm) {
        MultiVectorField w = structure_bivector(sys, rng);
        MultiVectorField inner = schouten_bracket(gen.field, w, sys.chart);
        inner = schouten_bracket(gen.field, inner, sys.chart);
        MultiVectorField t = schouten_bracket(inner, w, sys.chart);
        double worst = 0.0;
        EvalContext base;
        for (const auto& [n, v] : sys.parameters) base.values[n] = v;
        std::uniform_real_distribution<double> dist(-2.0, 2.0);
        for (const auto& [I, c] : t.coefficients())
            for (int s = 0; s < 20; ++s) {
                EvalContext ctx = base;
                for (const auto& n : sys.chart.coords) ctx.values[n] = dist(rng);
                try {
                    worst = std::max(worst, std::abs(evaluate(c, ctx)));
                } catch (const DomainPointError&) {
                }
            }
        return {worst <= tol, worst};
    }

    // presymplectic: all brackets evaluated pointwise with FD transport of
    // the pseudo-inverse field
    auto slots = sys.slot_map();
    detail::CompiledMatrixField omega_c(sys.omega, slots);
    detail::CompiledVectorField ec(gen.field, slots);
    std::vector<detail::CompiledVectorField> de;
    for (const auto& cname : sys.chart.coords) {
        MultiVectorField d(sys.dim(), 1);
        for (const auto& [I, ce] : gen.field.coefficients())
            d.add_term(IndexTuple(I), differentiate(ce, cname));
        de.emplace_back(d, slots);
    }
    const int d = sys.dim();
    auto wmat = [&](const std::vector<double>& state) {
        Eigen::MatrixXd om = omega_c(sys.slots_for(state));
        return detail::oriented_pinv(om, defaults::kRankTol).w;
    };
    // B = [E,W] pointwise (dense matrix form)
    auto bmat = [&](const std::vector<double>& state, double h) {
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(d, d);
        std::vector<double> sl = sys.slots_for(state);
        Eigen::VectorXd e = ec(sl);
        Eigen::MatrixXd w0 = wmat(state);
        for (int m = 0; m < d; ++m) {
            std::vector<double> up = state, dn = state;
            up[static_cast<std::size_t>(m)] += h;
            dn[static_cast<std::size_t>(m)] -= h;
            Eigen::MatrixXd dw = (wmat(up) - wmat(dn)) / (2 * h);
            b += e(m) * dw;
            Eigen::VectorXd dem = de[static_cast<std::size_t>(m)](sl);
            // - W^{mj} d_m E^i - W^{im} d_m E^j
            b -= dem * w0.row(m);
            b -= w0.col(m) * dem.transpose();
        }
        return Eigen::MatrixXd((b - b.transpose()) / 2.0);  // enforce antisymmetry
    };
    const double h1 = 1e-4, h2 = 1e-4;
    auto cmat = [&](const std::vector<double>& state) {
        // C = [E, B] with FD transport of B
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
        std::vector<double> sl = sys.slots_for(state);
        Eigen::VectorXd e = ec(sl);
        Eigen::MatrixXd b0 = bmat(state, h1);
        for (int m = 0; m < d; ++m) {
            std::vector<double> up = state, dn = state;
            up[static_cast<std::size_t>(m)] += h2;
            dn[static_cast<std::size_t>(m)] -= h2;
            c += e(m) * (bmat(up, h1) - bmat(dn, h1)) / (2 * h2);
            Eigen::VectorXd dem = de[static_cast<std::size_t>(m)](sl);
            c -= dem * b0.row(m);
            c -= b0.col(m) * dem.transpose();
        }
        return Eigen::MatrixXd((c - c.transpose()) / 2.0);
    };
    double worst = 0.0;
    detail::for_sampled_states(sys, 5, rng, [&](const std::vector<double>& state) {
        Eigen::MatrixXd w0 = wmat(state);
        Eigen::MatrixXd c0 = cmat(state);
        auto dmat = [&](auto&& f, int m) {
            std::vector<double> up = state, dn = state;
            up[static_cast<std::size_t>(m)] += h2;
            dn[static_cast<std::size_t>(m)] -= h2;
            return Eigen::MatrixXd((f(up) - f(dn)) / (2 * h2));
        };
        std::vector<Eigen::MatrixXd> dW(static_cast<std::size_t>(d)), dC(static_cast<std::size_t>(d));
        for (int m = 0; m < d; ++m) {
            dW[static_cast<std::size_t>(m)] = dmat(wmat, m);
            dC[static_cast<std::size_t>(m)] = dmat(cmat, m);
        }
        for (const auto& T : detail::all_tuples(d, 3)) {
            double total = 0.0;
            const int cyc[3][3] = {{T[0], T[1], T[2]}, {T[1], T[2], T[0]}, {T[2], T[0], T[1]}};
            for (const auto& cy : cyc)
                for (int m = 0; m < d; ++m) {
                    total += c0(m, cy[0]) * dW[static_cast<std::size_t>(m)](cy[1], cy[2]);
                    total += w0(m, cy[0]) * dC[static_cast<std::size_t>(m)](cy[1], cy[2]);
                }
            worst = std::max(worst, std::abs(total));
        }
    });
    return {worst <= std::max(tol, 1e-3), worst};
}

/// Pairwise Poisson-bracket residual matrix for an invariant set.
struct InvolutionResult {
    Eigen::MatrixXd residuals;
    bool in_involution = false;
};

inline InvolutionResult involution_check(const InvariantSet& inv, const PhaseSpaceSystem& sys,
                                         Rng& rng, double tol = defaults::kSymmetryTol,
                                         int n_points = defaults::kSamplePoints) {
    const int n = static_cast<int>(inv.entries.size());
    InvolutionResult out;
    out.residuals = Eigen::MatrixXd::Zero(n, n);
    auto slots = sys.slot_map();
    std::optional<detail::CompiledMatrixField> wsym;
    if (sys.kind != StructureKind::PresymplecticForm)
        wsym.emplace(structure_bivector(sys, rng), slots);

    detail::for_sampled_states(sys, n_points, rng, [&](const std::vector<double>& state) {
        Eigen::MatrixXd w;
        if (wsym) {
            w = (*wsym)(sys.slots_for(state));
        } else {
            KernelPinvAt kp = kernel_and_pseudoinverse_at(sys, sys.context(state));
            w = kp.w_matrix;
        }
        std::vector<Eigen::VectorXd> grads;
        grads.reserve(static_cast<std::size_t>(n));
        for (const auto& e : inv.entries) grads.push_back(e.gradient(state));
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b) {
                double v = grads[static_cast<std::size_t>(a)].dot(
                    w * grads[static_cast<std::size_t>(b)]);
                out.residuals(a, b) = std::max(out.residuals(a, b), std::abs(v));
                out.residuals(b, a) = out.residuals(a, b);
            }
    });
    out.in_involution = out.residuals.maxCoeff() <= tol;
    return out;
}

// ---------------------------------------------------------------------------
// charpoly_oracle
// ---------------------------------------------------------------------------

/// Characteristic-polynomial coefficients (c_1..c_d, leading 1 omitted, sign
/// convention det(tI - M) = t^d + c_1 t^{d-1} + ... + c_d) of the mixed
/// matrix M = W * mat(L_E omega) at a point. Faddeev-LeVerrier recursion.
inline std::vector<double> charpoly_oracle(const PhaseSpaceSystem& sys,
                                           const SymmetryGenerator& gen,
                                           const EvalContext& point, Rng& rng,
                                           double rank_tol = defaults::kRankTol) {
    if (!sys.has_form())
        throw ValidationError("charpoly_oracle requires a 2-form structure");
    DifferentialForm omega_e = lie_derivative_form(gen.field, sys.omega, sys.chart);
    Eigen::MatrixXd w, a;
    try {
        PointTensor at = evaluate_at(omega_e, point);
        a = Eigen::MatrixXd::Zero(sys.dim(), sys.dim());
        for (const auto& [I, v] : at.coefficients()) {
            a(I[0], I[1]) = v;
            a(I[1], I[0]) = -v;
        }
        if (sys.kind == StructureKind::SymplecticForm) {
            MultiVectorField ws = invert_symplectic_form(sys, rng);
            PointTensor wt = evaluate_at(ws, point);
            w = Eigen::MatrixXd::Zero(sys.dim(), sys.dim());
            for (const auto& [I, v] : wt.coefficients()) {
                w(I[0], I[1]) = v;
                w(I[1], I[0]) = -v;
            }
        } else {
            w = kernel_and_pseudoinverse_at(sys, point, rank_tol).w_matrix;
        }
    } catch (const DomainPointError& e) {
        throw SingularPointError(e.what());
    }
    Eigen::MatrixXd m = w * a;
    const int d = sys.dim();
    std::vector<double> coeffs(static_cast<std::size_t>(d));
    Eigen::MatrixXd mk = Eigen::MatrixXd::Identity(d, d);
    for (int k = 1; k <= d; ++k) {
        mk = m * mk;
        double ck = -mk.trace() / k;
        coeffs[static_cast<std::size_t>(k - 1)] = ck;
        mk += ck * Eigen::MatrixXd::Identity(d, d);
    }
    return coeffs;
}

}  // namespace phasesym
