#include <catch2/catch_amalgamated.hpp>

#include "phasesym/mechanics.hpp"
#include "test_helpers.hpp"
#include "test_systems.hpp"

using namespace phasesym;

TEST_CASE("invert_symplectic_form: orientation pinned on the canonical pair") {
    Rng rng(31);
    PhaseSpaceSystem sys = testsys::free_particle();
    MultiVectorField w = invert_symplectic_form(sys, rng);
    REQUIRE(probabilistic_equal(full_pairing(w, sys.omega), constant(1), 10, 1e-12, rng));
    // {p, q} = 1 and {f,g} = X_f g on the canonical pair
    ScalarExpr pq = poisson_bracket(symbol("p"), symbol("q"), w, sys.chart);
    REQUIRE(probabilistic_equal(pq, constant(1), 10, 1e-12, rng));
    MultiVectorField xp = detail::field_from_gradient(w, symbol("p"), sys.chart);
    // X_p q should equal {p,q} = 1
    REQUIRE(probabilistic_equal(xp.coefficient({0}), constant(1), 10, 1e-12, rng));
}

TEST_CASE("invert_symplectic_form: scaling and degeneracy") {
    Rng rng(32);
    PhaseSpaceSystem sys = testsys::free_particle();
    sys.omega = DifferentialForm(2, 2);
    sys.omega.add_term({1, 0}, constant(2));  // 2 dp^dq
    MultiVectorField w = invert_symplectic_form(sys, rng);
    REQUIRE(probabilistic_equal(w.dense({1, 0}), constant(Rational(1, 2)), 10, 1e-12, rng));

    PhaseSpaceSystem rel = testsys::relativistic_particle();
    REQUIRE_THROWS_AS(invert_symplectic_form(rel, rng), DegenerateFormError);

    PhaseSpaceSystem big;
    big.chart = Chart{{"a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4"}};
    big.kind = StructureKind::SymplecticForm;
    big.omega = DifferentialForm(8, 2);
    for (int k = 0; k < 4; ++k) big.omega.add_term({4 + k, k}, constant(1));
    REQUIRE_THROWS_AS(invert_symplectic_form(big, rng), DimensionTooLargeError);
}

TEST_CASE("kernel_and_pseudoinverse_at") {
    Rng rng(33);
    PhaseSpaceSystem rel = testsys::relativistic_particle();
    std::uniform_real_distribution<double> dist(-2, 2);
    for (int t = 0; t < 5; ++t) {
        std::vector<double> state = rel.random_state(rng);
        for (int k = 4; k < 7; ++k) state[static_cast<std::size_t>(k)] = 0.3 + std::abs(state[static_cast<std::size_t>(k)]);
        KernelPinvAt kp = kernel_and_pseudoinverse_at(rel, rel.context(state));
        REQUIRE(kp.rank == 6);
        REQUIRE(kp.kernel.size() == 1);
        // kernel is collinear with u = rho d/dx0 + p_k d/dx_k
        double p1 = state[4], p2 = state[5], p3 = state[6];
        double rho = std::sqrt(p1 * p1 + p2 * p2 + p3 * p3 + 1.0);
        Eigen::VectorXd u(7);
        u << rho, p1, p2, p3, 0, 0, 0;
        Eigen::VectorXd k0 = kp.kernel_vectors[0];
        double cosang = std::abs(u.normalized().dot(k0.normalized()));
        REQUIRE(cosang == Catch::Approx(1.0).margin(1e-10));
    }

    // canonical pair: rank 2, empty kernel, W = the oriented inverse
    PhaseSpaceSystem fp = testsys::free_particle();
    KernelPinvAt kp = kernel_and_pseudoinverse_at(fp, fp.context({0.3, 1.2}));
    REQUIRE(kp.rank == 2);
    REQUIRE(kp.kernel.empty());
    REQUIRE(kp.w_matrix(0, 1) == Catch::Approx(-1.0).margin(1e-12));  // W = dp^dq direction

    // zero form: rank 0, kernel is the whole space, W = 0
    PhaseSpaceSystem zero = testsys::free_particle();
    zero.omega = DifferentialForm(2, 2);
    KernelPinvAt kz = kernel_and_pseudoinverse_at(zero, zero.context({0.0, 0.0}));
    REQUIRE(kz.rank == 0);
    REQUIRE(kz.kernel.size() == 2);
    REQUIRE(kz.w_matrix.norm() == 0.0);
}

TEST_CASE("hamiltonian_vector_field") {
    Rng rng(34);
    PhaseSpaceSystem fp = testsys::free_particle();
    HamiltonianField xh = hamiltonian_vector_field(fp, rng);
    REQUIRE(xh.symbolic.has_value());
    REQUIRE(probabilistic_equal(xh.symbolic->coefficient({0}), symbol("p"), 10, 1e-12, rng));
    REQUIRE(probabilistic_equal(xh.symbolic->coefficient({1}), constant(0), 10, 1e-12, rng));

    // relativistic, h = 0: the zero representative
    PhaseSpaceSystem rel = testsys::relativistic_particle();
    HamiltonianField xr = hamiltonian_vector_field(rel, rng);
    REQUIRE_FALSE(xr.symbolic.has_value());
    std::vector<double> state{0.1, -0.4, 0.8, 0.2, 0.9, 1.4, 0.5};
    REQUIRE(xr.pointwise(state).norm() == 0.0);

    // canonical Poisson
    PhaseSpaceSystem pc = testsys::poisson_canonical();
    HamiltonianField xp = hamiltonian_vector_field(pc, rng);
    REQUIRE(xp.symbolic.has_value());
    REQUIRE(probabilistic_equal(xp.symbolic->coefficient({0}), symbol("p1"), 10, 1e-12, rng));
    REQUIRE(probabilistic_equal(xp.symbolic->coefficient({1}), symbol("p2"), 10, 1e-12, rng));
    REQUIRE(xp.symbolic->coefficient({2}).is_zero());
    REQUIRE(xp.symbolic->coefficient({3}).is_zero());
}

TEST_CASE("classify_field") {
    Rng rng(35);
    PhaseSpaceSystem fp = testsys::free_particle();

    MultiVectorField k1(2, 1);
    k1.add_term({0}, symbol("p"));  // p d/dq
    FieldClassification c1 = classify_field(fp, k1, rng);
    REQUIRE(c1.cls == FieldClass::Hamiltonian);
    REQUIRE(c1.potential.has_value());
    REQUIRE(probabilistic_equal(*c1.potential, parse_expression("p^2/2"), 10, 1e-10, rng));

    MultiVectorField k2(2, 1);
    k2.add_term({0}, symbol("q"));  // q d/dq
    REQUIRE(classify_field(fp, k2, rng).cls == FieldClass::Neither);

    MultiVectorField k3(2, 1);  // [pq d/dp, p d/dq] = pq d/dq - p^2 d/dp
    k3.add_term({0}, parse_expression("p*q"));
    k3.add_term({1}, parse_expression("0-p^2"));
    REQUIRE(classify_field(fp, k3, rng).cls == FieldClass::Neither);
}

TEST_CASE("check_symmetry verdicts") {
    Rng rng(36);
    // strict: dilation on the free particle, [E, p d/dq] = 0
    PhaseSpaceSystem fp = testsys::free_particle();
    SymmetryVerdict v1 = check_symmetry(fp, testsys::dilation_generator(), rng);
    REQUIRE(v1.cls == SymmetryClass::StrictSymmetry);
    REQUIRE(v1.max_residual <= 1e-10);

    // up to a Hamiltonian field: the 2-DOF momentum-weighted dilation
    PhaseSpaceSystem td = testsys::two_dof();
    SymmetryVerdict v2 = check_symmetry(td, testsys::two_dof_generator(), rng);
    REQUIRE(v2.cls == SymmetryClass::SymmetryUpToHamiltonian);
    // witness K = -p1^2 d/dq1 - p2^2 d/dq2
    REQUIRE(probabilistic_equal(v2.witness.coefficient({0}), parse_expression("0-p1^2"),
                                10, 1e-10, rng));
    REQUIRE(probabilistic_equal(v2.witness.coefficient({1}), parse_expression("0-p2^2"),
                                10, 1e-10, rng));

    // up to the kernel: the relativistic configuration
    PhaseSpaceSystem rel = testsys::relativistic_particle();
    SymmetryVerdict v3 = check_symmetry(rel, testsys::relativistic_generator(), rng);
    REQUIRE(v3.cls == SymmetryClass::SymmetryUpToKernel);

    // rejected: E = pq d/dp on the free particle
    MultiVectorField bad(2, 1);
    bad.add_term({1}, parse_expression("p*q"));
    SymmetryVerdict v4 = check_symmetry(fp, SymmetryGenerator{bad}, rng);
    REQUIRE(v4.cls == SymmetryClass::NotASymmetry);
}

TEST_CASE("Liouville: Hamiltonian fields preserve omega and W") {
    Rng rng(37);
    PhaseSpaceSystem td = testsys::two_dof();
    MultiVectorField w = invert_symplectic_form(td, rng);
    for (int i = 0; i < 10; ++i) {
        ScalarExpr h = testutil::random_polynomial(rng, td.chart.coords, 2);
        MultiVectorField xh = detail::field_from_gradient(w, h, td.chart);
        DifferentialForm lie = lie_derivative_form(xh, td.omega, td.chart);
        REQUIRE(probabilistically_zero(lie, 4, 1e-9, rng));
        MultiVectorField comm = schouten_bracket(xh, w, td.chart);
        REQUIRE(probabilistically_zero(comm, 4, 1e-9, rng));
    }
}

TEST_CASE("contraction identity i_X i_Y L_Z omega = i_[Z,W] (i_X omega ^ i_Y omega)") {
    Rng rng(38);
    PhaseSpaceSystem td = testsys::two_dof();
    MultiVectorField w = invert_symplectic_form(td, rng);
    for (int i = 0; i < 10; ++i) {
        auto x = testutil::random_field<ContravariantTag>(rng, td.chart, 1);
        auto y = testutil::random_field<ContravariantTag>(rng, td.chart, 1);
        auto z = testutil::random_field<ContravariantTag>(rng, td.chart, 1);
        DifferentialForm lz = lie_derivative_form(z, td.omega, td.chart);
        // slot order (Y, X): under the global orientation pinned by the
        // canonical-pair bracket, this is the order in which the identity is
        // exact (the companion contraction identity fixes (X, Y))
        ScalarExpr lhs = full_pairing(wedge(y, x), lz);
        DifferentialForm ax = interior_product(x, td.omega);
        DifferentialForm ay = interior_product(y, td.omega);
        ScalarExpr rhs = full_pairing(schouten_bracket(z, w, td.chart), wedge(ax, ay));
        REQUIRE(probabilistic_equal(lhs, rhs, 6, 1e-9, rng));
    }
}

TEST_CASE("Eq-15-style contraction holds for the oriented pseudo-inverse") {
    Rng rng(39);
    PhaseSpaceSystem rel = testsys::relativistic_particle();
    std::uniform_real_distribution<double> dist(-2, 2);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        std::vector<double> state = rel.random_state(rng);
        KernelPinvAt kp = kernel_and_pseudoinverse_at(rel, rel.context(state));
        Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(7, 7);
        {
            PointTensor t2 = evaluate_at(rel.omega, rel.context(state));
            for (const auto& [I, v] : t2.coefficients()) {
                omega(I[0], I[1]) = v;
                omega(I[1], I[0]) = -v;
            }
        }
        for (int j = 0; j < 10; ++j) {
            Eigen::VectorXd x(7), y(7);
            for (int i = 0; i < 7; ++i) {
                x(i) = dist(rng);
                y(i) = dist(rng);
            }
            double lhs = x.dot(omega * y);                      // omega(X, Y)
            Eigen::VectorXd ax = omega.transpose() * x;         // i_X omega
            Eigen::VectorXd ay = omega.transpose() * y;
            double rhs = ax.dot(kp.w_matrix * ay);              // i_W(i_X omega ^ i_Y omega)
            worst = std::max(worst, std::abs(lhs - rhs));
        }
    }
    REQUIRE(worst <= 1e-9);
}

TEST_CASE("lutzky_invariants: regular path") {
    Rng rng(40);
    // dilation on the free particle: omega_E = 2 omega, I^(1) = 2
    PhaseSpaceSystem fp = testsys::free_particle();
    InvariantSet inv1 = lutzky_invariants(fp, testsys::dilation_generator(), rng);
    REQUIRE(inv1.path == InvariantSet::Path::Regular);
    REQUIRE(inv1.entries.size() == 1);
    REQUIRE(inv1.entries[0].symbolic.has_value());
    REQUIRE(probabilistic_equal(*inv1.entries[0].symbolic, constant(2), 10, 1e-12, rng));

    // 2-DOF: I^(1) = p1 + p2, I^(2) = 4 p1 p2 under the library normalization
    PhaseSpaceSystem td = testsys::two_dof();
    InvariantSet inv2 = lutzky_invariants(td, testsys::two_dof_generator(), rng);
    REQUIRE(inv2.entries.size() == 2);
    REQUIRE(probabilistic_equal(*inv2.entries[0].symbolic, parse_expression("p1+p2"),
                                10, 1e-10, rng));
    REQUIRE(probabilistic_equal(*inv2.entries[1].symbolic, parse_expression("4*p1*p2"),
                                10, 1e-10, rng));
}

TEST_CASE("lutzky_invariants: 2-DOF against the finite-difference oracle") {
    Rng rng(41);
    PhaseSpaceSystem td = testsys::two_dof();
    SymmetryGenerator gen = testsys::two_dof_generator();
    InvariantSet inv = lutzky_invariants(td, gen, rng);
    std::uniform_real_distribution<double> dist(-2, 2);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> state = td.random_state(rng);
        EvalContext ctx = td.context(state);
        // oracle: FD Lie derivative + dense contraction with the numeric inverse
        Eigen::MatrixXd a = testutil::fd_lie_two_form(td.omega, gen.field, td.chart, ctx);
        Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(4, 4);
        {
            PointTensor t2 = evaluate_at(td.omega, ctx);
            for (const auto& [I, v] : t2.coefficients()) {
                omega(I[0], I[1]) = v;
                omega(I[1], I[0]) = -v;
            }
        }
        Eigen::MatrixXd w = -omega.inverse();
        PointTensor wt = detail::matrix_to_tensor(w);
        PointTensor at = detail::matrix_to_tensor(a, 1e-9);
        for (const auto& e : inv.entries) {
            double oracle = pairing(tensor_power(wt, e.k), tensor_power(at, e.k));
            REQUIRE(e.value(state) == Catch::Approx(oracle).margin(1e-5));
        }
        // conservation along the exact flow q_i(t) = q_i + p_i t
        for (const auto& e : inv.entries) {
            double i0 = e.value(state);
            std::vector<double> moved = state;
            moved[0] += state[2] * 3.7;
            moved[1] += state[3] * 3.7;
            REQUIRE(e.value(moved) == Catch::Approx(i0).margin(1e-9 * (1 + std::abs(i0))));
        }
    }
}

TEST_CASE("lutzky_invariants: relativistic presymplectic pipeline") {
    Rng rng(42);
    PhaseSpaceSystem rel = testsys::relativistic_particle();
    SymmetryGenerator gen = testsys::relativistic_generator();
    InvariantSet inv = lutzky_invariants(rel, gen, rng);
    REQUIRE(inv.path == InvariantSet::Path::Presymplectic);
    REQUIRE(inv.half_rank == 3);
    REQUIRE(inv.entries.size() == 3);
    // I^(k) / e_k(rho, p1, p2, p3) is a fixed constant per k: C = (1, 4, 36)
    std::vector<double> expect{1.0, 4.0, 36.0};
    for (int t = 0; t < 30; ++t) {
        std::vector<double> state = rel.random_state(rng);
        for (const auto& e : inv.entries) {
            double ek = testsys::relativistic_esym(state, e.k);
            REQUIRE(e.value(state) / ek ==
                    Catch::Approx(expect[static_cast<std::size_t>(e.k - 1)]).epsilon(1e-10));
        }
    }
}

TEST_CASE("representative independence of the presymplectic invariants") {
    Rng rng(43);
    PhaseSpaceSystem rel = testsys::relativistic_particle();
    SymmetryGenerator gen = testsys::relativistic_generator();
    DifferentialForm omega_e = lie_derivative_form(gen.field, rel.omega, rel.chart);
    std::uniform_real_distribution<double> dist(-1, 1);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> state = rel.random_state(rng);
        EvalContext ctx = rel.context(state);
        KernelPinvAt kp = kernel_and_pseudoinverse_at(rel, ctx);
        PointTensor a = evaluate_at(omega_e, ctx);
        Eigen::VectorXd u = kp.kernel_vectors[0];
        for (int trial = 0; trial < 10; ++trial) {
            Eigen::VectorXd v(7);
            for (int i = 0; i < 7; ++i) v(i) = dist(rng);
            Eigen::MatrixXd wp = kp.w_matrix + v * u.transpose() - u * v.transpose();
            PointTensor wt = detail::matrix_to_tensor(wp);
            PointTensor w0 = detail::matrix_to_tensor(kp.w_matrix);
            for (int k = 1; k <= 3; ++k) {
                double base = pairing(tensor_power(w0, k), tensor_power(a, k));
                double pert = pairing(tensor_power(wt, k), tensor_power(a, k));
                REQUIRE(std::abs(pert - base) <= 1e-8 * (1 + std::abs(base)));
            }
        }
    }
}

TEST_CASE("poisson_invariants: canonical example values") {
    Rng rng(44);
    PhaseSpaceSystem pc = testsys::poisson_canonical();
    InvariantSet inv = poisson_invariants(pc, testsys::two_dof_generator(), rng);
    REQUIRE(inv.half_rank == 2);
    REQUIRE(inv.entries.size() == 3);  // k = 0, 1, 2
    REQUIRE(inv.entries[0].k == 0);
    REQUIRE(inv.entries[0].symbolic.has_value());
    REQUIRE(probabilistic_equal(*inv.entries[0].symbolic, parse_expression("p1*p2"),
                                20, 1e-10, rng));
    REQUIRE(probabilistic_equal(*inv.entries[1].symbolic,
                                parse_expression("0-(p1+p2)/2"), 20, 1e-10, rng));
    REQUIRE(probabilistic_equal(*inv.entries[2].symbolic, constant(1), 20, 1e-10, rng));
}

TEST_CASE("poisson_invariants: degenerate-but-valid cases") {
    Rng rng(45);
    PhaseSpaceSystem pc = testsys::poisson_canonical();
    // Euler field: [E, W] = -2W, all entries constant
    MultiVectorField euler(4, 1);
    for (int i = 0; i < 4; ++i)
        euler.add_term({i}, symbol(pc.chart.coords[static_cast<std::size_t>(i)]));
    InvariantSet inv = poisson_invariants(pc, SymmetryGenerator{euler}, rng);
    for (const auto& e : inv.entries) {
        REQUIRE(e.symbolic.has_value());
        double expect = std::pow(-2.0, 2 - e.k);
        REQUIRE(probabilistic_equal(*e.symbolic, constant(Rational(static_cast<long>(expect))),
                                    10, 1e-10, rng));
    }
    REQUIRE(inv.normalization_note.find("degenerate-but-valid") != std::string::npos);

    // Hamiltonian generator: B = 0, entries 0, 0, 1
    HamiltonianField xh = hamiltonian_vector_field(pc, rng);
    InvariantSet inv2 = poisson_invariants(pc, SymmetryGenerator{*xh.symbolic}, rng);
    REQUIRE(probabilistic_equal(*inv2.entries[0].symbolic, constant(0), 10, 1e-10, rng));
    REQUIRE(probabilistic_equal(*inv2.entries[1].symbolic, constant(0), 10, 1e-10, rng));
    REQUIRE(probabilistic_equal(*inv2.entries[2].symbolic, constant(1), 10, 1e-10, rng));
}

TEST_CASE("poisson_bracket properties") {
    Rng rng(46);
    PhaseSpaceSystem pc = testsys::poisson_canonical();
    ScalarExpr q1q2 = poisson_bracket(symbol("q1"), symbol("q2"), pc, rng);
    REQUIRE(probabilistic_equal(q1q2, constant(0), 10, 1e-12, rng));
    for (int i = 0; i < 10; ++i) {
        ScalarExpr f = testutil::random_polynomial(rng, pc.chart.coords, 2);
        ScalarExpr g = testutil::random_polynomial(rng, pc.chart.coords, 2);
        ScalarExpr ff = poisson_bracket(f, f, pc, rng);
        REQUIRE(probabilistic_equal(ff, constant(0), 5, 1e-9, rng));
        // antisymmetry and Leibniz
        ScalarExpr fg = poisson_bracket(f, g, pc, rng);
        ScalarExpr gf = poisson_bracket(g, f, pc, rng);
        REQUIRE(probabilistic_equal(fg, negate(gf), 5, 1e-9, rng));
        ScalarExpr h = testutil::random_polynomial(rng, pc.chart.coords, 1);
        ScalarExpr lhs = poisson_bracket(f, product(g, h), pc, rng);
        ScalarExpr rhs = sum(product(g, poisson_bracket(f, h, pc, rng)),
                             product(poisson_bracket(f, g, pc, rng), h));
        REQUIRE(probabilistic_equal(lhs, rhs, 5, 1e-9, rng));
    }
    // Jacobi residual when validate_poisson passes
    for (int i = 0; i < 5; ++i) {
        ScalarExpr f = testutil::random_polynomial(rng, pc.chart.coords, 2);
        ScalarExpr g = testutil::random_polynomial(rng, pc.chart.coords, 2);
        ScalarExpr h = testutil::random_polynomial(rng, pc.chart.coords, 2);
        ScalarExpr jac = sum(
            {poisson_bracket(poisson_bracket(f, g, pc, rng), h, pc, rng),
             poisson_bracket(poisson_bracket(g, h, pc, rng), f, pc, rng),
             poisson_bracket(poisson_bracket(h, f, pc, rng), g, pc, rng)});
        REQUIRE(probabilistic_equal(jac, constant(0), 5, 1e-9, rng));
    }
}

TEST_CASE("validate_poisson") {
    Rng rng(47);
    PhaseSpaceSystem pc = testsys::poisson_canonical();
    REQUIRE(validate_poisson(pc, rng).ok);

    // W = dp1^dq1 + q1 dp2^dq2 directions fails Jacobi
    PhaseSpaceSystem bad = pc;
    bad.bivector = MultiVectorField(4, 2);
    bad.bivector.add_term({2, 0}, constant(1));
    bad.bivector.add_term({3, 1}, symbol("q1"));
    ResidualCheck rc = validate_poisson(bad, rng);
    REQUIRE_FALSE(rc.ok);
    REQUIRE(rc.residual > 0.1);

    // any 2-dimensional bivector is Poisson (trivectors vanish)
    PhaseSpaceSystem two = testsys::free_particle();
    two.kind = StructureKind::PoissonBivector;
    two.bivector = MultiVectorField(2, 2);
    two.bivector.add_term({0, 1}, parse_expression("p^2+q^2+1"));
    REQUIRE(validate_poisson(two, rng).ok);
}

TEST_CASE("yang_baxter_check") {
    Rng rng(48);
    PhaseSpaceSystem pc = testsys::poisson_canonical();
    // Euler field: [E,W] = -2W so [[E,[E,W]],W] ~ [W,W] = 0
    MultiVectorField euler(4, 1);
    for (int i = 0; i < 4; ++i)
        euler.add_term({i}, symbol(pc.chart.coords[static_cast<std::size_t>(i)]));
    REQUIRE(yang_baxter_check(pc, SymmetryGenerator{euler}, rng).ok);

    // Hamiltonian generator: [E,W] = 0
    HamiltonianField xh = hamiltonian_vector_field(pc, rng);
    REQUIRE(yang_baxter_check(pc, SymmetryGenerator{*xh.symbolic}, rng).ok);

    // 2-DOF generator: record the result; involution must agree if true
    PhaseSpaceSystem td = testsys::two_dof();
    ResidualCheck yb = yang_baxter_check(td, testsys::two_dof_generator(), rng);
    InvariantSet inv = lutzky_invariants(td, testsys::two_dof_generator(), rng);
    InvolutionResult ir = involution_check(inv, td, rng);
    if (yb.ok) REQUIRE(ir.in_involution);
}

TEST_CASE("involution_check") {
    Rng rng(49);
    // relativistic invariants: momentum functions, exactly in involution
    PhaseSpaceSystem rel = testsys::relativistic_particle();
    InvariantSet inv = lutzky_invariants(rel, testsys::relativistic_generator(), rng);
    InvolutionResult ir = involution_check(inv, rel, rng, 1e-8);
    REQUIRE(ir.in_involution);
    REQUIRE(ir.residuals.maxCoeff() <= 1e-8);

    // single-entry set is trivially in involution
    InvariantSet single;
    single.entries.push_back(inv.entries[0]);
    REQUIRE(involution_check(single, rel, rng).in_involution);

    // the pair {p, q} on the canonical structure has bracket 1
    PhaseSpaceSystem fp = testsys::free_particle();
    InvariantSet pq;
    pq.entries.push_back(detail::symbolic_entry(1, symbol("p"), fp));
    pq.entries.push_back(detail::symbolic_entry(2, symbol("q"), fp));
    InvolutionResult ir2 = involution_check(pq, fp, rng);
    REQUIRE_FALSE(ir2.in_involution);
    REQUIRE(ir2.residuals(0, 1) == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("charpoly_oracle") {
    Rng rng(50);
    PhaseSpaceSystem td = testsys::two_dof();

    // Hamiltonian generator: omega_E = 0, all coefficients vanish
    MultiVectorField xh = *hamiltonian_vector_field(td, rng).symbolic;
    std::vector<double> state{0.3, -0.7, 1.0, 2.0};
    std::vector<double> c0 = charpoly_oracle(td, SymmetryGenerator{xh}, td.context(state), rng);
    for (double c : c0) REQUIRE(std::abs(c) <= 1e-12);

    // 2-DOF generator at p = (1,2): mixed-matrix spectrum {-1,-1,-2,-2}
    std::vector<double> c1 =
        charpoly_oracle(td, testsys::two_dof_generator(), td.context({0.4, 1.3, 1.0, 2.0}), rng);
    // det(tI - M) = (t+1)^2 (t+2)^2 = t^4 + 6t^3 + 13t^2 + 12t + 4
    REQUIRE(c1[0] == Catch::Approx(6.0).margin(1e-9));
    REQUIRE(c1[1] == Catch::Approx(13.0).margin(1e-9));
    REQUIRE(c1[2] == Catch::Approx(12.0).margin(1e-9));
    REQUIRE(c1[3] == Catch::Approx(4.0).margin(1e-9));

    // dilation on the free particle: M = -2 I
    PhaseSpaceSystem fp = testsys::free_particle();
    std::vector<double> c2 =
        charpoly_oracle(fp, testsys::dilation_generator(), fp.context({0.9, 0.4}), rng);
    REQUIRE(c2[0] == Catch::Approx(4.0).margin(1e-9));   // (t+2)^2
    REQUIRE(c2[1] == Catch::Approx(4.0).margin(1e-9));
}

TEST_CASE("oracle consistency: invariants vs half-spectrum symmetric values") {
    Rng rng(51);
    // 2-DOF example
    PhaseSpaceSystem td = testsys::two_dof();
    SymmetryGenerator gen = testsys::two_dof_generator();
    InvariantSet inv = lutzky_invariants(td, gen, rng);
    std::vector<std::vector<double>> ratios(inv.entries.size());
    for (int t = 0; t < 50; ++t) {
        std::vector<double> state = td.random_state(rng);
        std::vector<double> cp = charpoly_oracle(td, gen, td.context(state), rng);
        std::vector<double> ehat = testutil::half_spectrum_esym(cp, 2);
        for (std::size_t i = 0; i < inv.entries.size(); ++i) {
            double denom = ehat[static_cast<std::size_t>(inv.entries[i].k)];
            if (std::abs(denom) < 1e-6) continue;
            ratios[i].push_back(inv.entries[i].value(state) / denom);
        }
    }
    for (const auto& r : ratios) {
        REQUIRE(r.size() >= 10);
        double lo = *std::min_element(r.begin(), r.end());
        double hi = *std::max_element(r.begin(), r.end());
        REQUIRE(std::abs(hi - lo) <= 1e-8 * (1 + std::abs(hi)));
    }
}

TEST_CASE("cross-formulation consistency on the 2-DOF example") {
    Rng rng(52);
    PhaseSpaceSystem td = testsys::two_dof();
    SymmetryGenerator gen = testsys::two_dof_generator();
    InvariantSet reg = lutzky_invariants(td, gen, rng);

    PhaseSpaceSystem pc = testsys::poisson_canonical();
    InvariantSet poi = poisson_invariants(pc, gen, rng);

    // each Poisson entry is a point-independent multiple of a regular one:
    // I_P^(1) ~ I_R^(1), I_P^(0) ~ I_R^(2)
    std::vector<double> r1, r2;
    for (int t = 0; t < 30; ++t) {
        std::vector<double> state = td.random_state(rng);
        r1.push_back(poi.entries[1].value(state) / reg.entries[0].value(state));
        r2.push_back(poi.entries[0].value(state) / reg.entries[1].value(state));
    }
    auto spread = [](const std::vector<double>& v) {
        return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
    };
    REQUIRE(spread(r1) <= 1e-8);
    REQUIRE(spread(r2) <= 1e-8);
}
