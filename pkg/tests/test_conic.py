"""Tests for the embedded conic interior-point solver."""

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings, strategies as st

from relaynet.conic import (
    ComplexMatrixVar,
    ConicProgram,
    ConicStatus,
    HermitianLMI,
    HermitianMatrixVar,
    SolverError,
    embed_hermitian,
)


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _rand_hermitian(rng, p):
    m = _crandn(rng, p, p)
    return (m + m.conj().T) / 2


def _barrier_oracle(cvec, const_mat, coeff_stack, box):
    """Independent log-det barrier descent for a box-bounded LMI program.

    Solves min c.x  s.t.  const_mat + sum_i x_i coeff_stack[i] PSD (complex
    Hermitian) and |x_i| <= box, by centering the penalized objective
    t*c.x - logdet(M(x)) - sum log(box^2 - x_i^2) with damped Newton steps
    over an increasing barrier schedule.  Written directly against numpy, so
    it shares no code with the interior-point solver it cross-checks.
    """
    n = cvec.size
    nu = const_mat.shape[0] + 2 * n

    def lmi(x):
        return const_mat + np.tensordot(x, coeff_stack, axes=(0, 0))

    def phi(x, t):
        if np.any(np.abs(x) >= box):
            return np.inf
        w = np.linalg.eigvalsh(lmi(x))
        if w[0] <= 0:
            return np.inf
        val = t * float(cvec @ x) - float(np.sum(np.log(w)))
        val -= float(np.sum(np.log(box - x) + np.log(box + x)))
        return val

    def grad_hess(x, t):
        minv = np.linalg.inv(lmi(x))
        g = t * cvec.astype(float).copy()
        proj = np.array([minv @ coeff_stack[i] for i in range(n)])
        for i in range(n):
            g[i] -= float(np.real(np.trace(proj[i])))
        g += 1.0 / (box - x) - 1.0 / (box + x)
        hess = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                hij = float(np.real(np.trace(proj[i] @ proj[j])))
                hess[i, j] = hess[j, i] = hij
        hess += np.diag(1.0 / (box - x) ** 2 + 1.0 / (box + x) ** 2)
        return g, hess

    x = np.zeros(n)
    t = 1.0
    while True:
        for _ in range(100):
            g, hess = grad_hess(x, t)
            dx = -np.linalg.solve(hess, g)
            decrement2 = float(-g @ dx)
            if decrement2 / 2 < 1e-14:
                break
            step, f0 = 1.0, phi(x, t)
            while step > 1e-16 and not phi(x + step * dx, t) <= f0 - 0.25 * step * decrement2:
                step *= 0.5
            x = x + step * dx
        if nu / t <= 1e-9:
            break
        t *= 10.0
    return float(cvec @ x), x


def _random_lmi_program(rng, n=3, p=2, box=10.0):
    """A bounded random complex-LMI instance plus its raw data."""
    cvec = rng.standard_normal(n)
    base = _crandn(rng, p, p)
    const = base @ base.conj().T + 0.5 * np.eye(p)
    stack = np.stack([_rand_hermitian(rng, p) for _ in range(n)])

    prog = ConicProgram()
    prog.new_vars(n)
    idx = np.arange(n)
    prog.minimize(idx, cvec)
    lmi = HermitianLMI(p)
    lmi.add_const(0, 0, const)
    lmi.add_terms(0, 0, idx, stack)
    prog.add_psd_hermitian(lmi)
    for i in range(n):
        prog.add_nonneg([i], [1.0], box)
        prog.add_nonneg([i], [-1.0], box)
    return prog, cvec, const, stack, box


class TestEmbedHermitian:
    def test_identity(self):
        assert np.array_equal(embed_hermitian(np.eye(2, dtype=complex)), np.eye(4))

    def test_pauli_like_matrix_eigenvalues(self):
        m = np.array([[0.0, 1j], [-1j, 0.0]])
        emb = embed_hermitian(m)
        w = np.sort(np.linalg.eigvalsh(emb))
        np.testing.assert_allclose(w, [-1.0, -1.0, 1.0, 1.0], atol=1e-12)

    def test_psd_iff_embedded_psd(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            h = _rand_hermitian(rng, 3)
            # mix of PSD and indefinite draws
            if rng.random() < 0.5:
                h = h @ h.conj().T
            w_c = np.linalg.eigvalsh(h)
            w_r = np.linalg.eigvalsh(embed_hermitian(h))
            assert (w_c.min() >= -1e-12) == (w_r.min() >= -1e-12)
            # eigenvalues are doubled copies
            np.testing.assert_allclose(np.repeat(np.sort(w_c), 2), np.sort(w_r),
                                       atol=1e-10)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            embed_hermitian(np.array([[0.0, 1.0], [2.0, 0.0]]))

    def test_rejects_rectangular(self):
        with pytest.raises(ValueError):
            embed_hermitian(np.zeros((2, 3)))


class TestVariableHandles:
    def test_complex_matrix_round_trip(self):
        rng = np.random.default_rng(3)
        var = ComplexMatrixVar(offset=2, m=3, n=2)
        x = np.zeros(2 + var.size)
        target = _crandn(rng, 3, 2)
        mn = 6
        x[2:2 + mn] = target.real.reshape(-1, order="F")
        x[2 + mn:2 + 2 * mn] = target.imag.reshape(-1, order="F")
        np.testing.assert_allclose(var.value(x), target, atol=1e-15)

    def test_sandwich_matches_direct_product(self):
        rng = np.random.default_rng(4)
        var = ComplexMatrixVar(offset=0, m=3, n=4)
        a = _crandn(rng, 2, 3)
        b = _crandn(rng, 4, 5)
        idx, stack = var.sandwich(a, b)
        target = _crandn(rng, 3, 4)
        x = np.concatenate([target.real.reshape(-1, order="F"),
                            target.imag.reshape(-1, order="F")])
        built = np.tensordot(x[idx - var.offset], stack, axes=(0, 0))
        np.testing.assert_allclose(built, a @ target @ b, atol=1e-12)

    def test_hermitian_var_basis_round_trip(self):
        rng = np.random.default_rng(5)
        var = HermitianMatrixVar(offset=0, p=3)
        params = rng.standard_normal(var.size)
        from_basis = np.tensordot(params, var.basis(), axes=(0, 0))
        np.testing.assert_allclose(var.value(params), from_basis, atol=1e-15)
        assert np.linalg.norm(from_basis - from_basis.conj().T) < 1e-14


class TestSmallPrograms:
    def test_weighted_trace_minimum(self):
        prog = ConicProgram()
        X = prog.new_hermitian(2)
        di = X.diag_indices()
        prog.minimize(di, [1.0, 2.0])
        prog.add_eq(di, [1.0, 1.0], 1.0)
        lmi = HermitianLMI(2)
        lmi.add_terms(0, 0, X.indices(), X.basis())
        prog.add_psd_hermitian(lmi)
        sol = prog.solve()
        assert sol.status == ConicStatus.OPTIMAL
        assert abs(sol.objective_value - 1.0) < 1e-6
        np.testing.assert_allclose(X.value(sol.x), np.diag([1.0, 0.0]), atol=1e-6)
        assert sol.duality_gap <= 1e-7 * (1 + abs(sol.objective_value))
        assert sol.kkt_residual <= 1e-7

    def test_fixed_vector_norm(self):
        prog = ConicProgram()
        t = prog.new_scalar()
        prog.minimize([t], [1.0])
        prog.add_soc([t], [1.0], 0.0, [], np.zeros((2, 0)), [3.0, 4.0])
        sol = prog.solve()
        assert sol.status == ConicStatus.OPTIMAL
        assert abs(sol.objective_value - 5.0) < 1e-6

    def test_objective_offset_reported(self):
        prog = ConicProgram()
        t = prog.new_scalar()
        prog.minimize([t], [1.0], offset=2.5)
        prog.add_soc([t], [1.0], 0.0, [], np.zeros((1, 0)), [1.0])
        sol = prog.solve()
        assert abs(sol.objective_value - 3.5) < 1e-6

    def test_complex_soc_tail(self):
        # minimize t with ||A vec(X) + u|| <= t at fixed X forced by equalities
        rng = np.random.default_rng(9)
        prog = ConicProgram()
        X = prog.new_complex_matrix(2, 1)
        t = prog.new_scalar()
        target = _crandn(rng, 2, 1)
        x_real = np.concatenate([target.real.reshape(-1, order="F"),
                                 target.imag.reshape(-1, order="F")])
        for i, v in zip(X.indices(), x_real):
            prog.add_eq([i], [1.0], float(v))
        a = _crandn(rng, 3, 2)
        u = _crandn(rng, 3)
        prog.minimize([t], [1.0])
        prog.add_soc_complex([t], [1.0], 0.0, X, a, u)
        sol = prog.solve()
        expected = np.linalg.norm(a @ target.reshape(-1) + u)
        assert sol.status == ConicStatus.OPTIMAL
        assert abs(sol.objective_value - expected) < 1e-6


class TestOracleAgreement:
    def test_random_lmi_instances_match_barrier_descent(self):
        rng = np.random.default_rng(21)
        for trial in range(20):
            prog, cvec, const, stack, box = _random_lmi_program(rng)
            sol = prog.solve()
            assert sol.status == ConicStatus.OPTIMAL, f"trial {trial}: {sol.detail}"
            ref, _ = _barrier_oracle(cvec, const, stack, box)
            rel = abs(sol.objective_value - ref) / (1.0 + abs(ref))
            assert rel < 1e-5, f"trial {trial}: ipm={sol.objective_value} oracle={ref}"


class TestInvariants:
    def test_weak_duality_after_feasibility(self):
        rng = np.random.default_rng(33)
        for _ in range(10):
            prog, *_ = _random_lmi_program(rng)
            sol = prog.solve(trace=True)
            assert sol.status == ConicStatus.OPTIMAL
            seen_feasible = False
            for pobj, dobj, pres, dres in sol.trace:
                if pres <= 1e-6 and dres <= 1e-6:
                    seen_feasible = True
                if seen_feasible:
                    assert pobj >= dobj - 1e-9
            assert seen_feasible

    def test_optimal_cone_memberships(self):
        rng = np.random.default_rng(34)
        for _ in range(10):
            n, p = 4, 3
            prog = ConicProgram()
            prog.new_vars(n)
            idx = np.arange(n)
            cvec = rng.standard_normal(n)
            prog.minimize(idx, cvec)
            base = _crandn(rng, p, p)
            const = base @ base.conj().T + 0.5 * np.eye(p)
            stack = np.stack([_rand_hermitian(rng, p) for _ in range(n)])
            lmi = HermitianLMI(p)
            lmi.add_const(0, 0, const)
            lmi.add_terms(0, 0, idx, stack)
            prog.add_psd_hermitian(lmi)
            # ||x|| <= 4 keeps it bounded
            soc_coef = np.eye(n)
            prog.add_soc([], [], 4.0, idx, soc_coef, np.zeros(n))
            sol = prog.solve()
            assert sol.status == ConicStatus.OPTIMAL
            m = const + np.tensordot(sol.x, stack, axes=(0, 0))
            assert np.linalg.eigvalsh((m + m.conj().T) / 2).min() >= -1e-7
            assert 4.0 - np.linalg.norm(sol.x) >= -1e-7

    def test_resolve_is_bit_identical(self):
        rng = np.random.default_rng(35)
        prog, *_ = _random_lmi_program(rng)
        s1 = prog.solve()
        s2 = prog.solve()
        assert np.array_equal(s1.primal_values, s2.primal_values)
        assert s1.objective_value == s2.objective_value
        assert s1.iterations == s2.iterations

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(min_value=-5.0, max_value=5.0,
                              allow_nan=False, allow_infinity=False),
                    min_size=2, max_size=5))
    def test_simplex_minimum_picks_smallest_cost(self, costs):
        """min c.x over the probability simplex equals min(c)."""
        c = np.asarray(costs)
        prog = ConicProgram()
        prog.new_vars(c.size)
        idx = np.arange(c.size)
        prog.minimize(idx, c)
        prog.add_eq(idx, np.ones(c.size), 1.0)
        for i in range(c.size):
            prog.add_nonneg([i], [1.0], 0.0)
        sol = prog.solve()
        assert sol.status == ConicStatus.OPTIMAL
        assert abs(sol.objective_value - c.min()) < 1e-6 * (1 + abs(c.min()))


class TestStatuses:
    def test_primal_infeasible_detected(self):
        prog = ConicProgram()
        x = prog.new_scalar()
        prog.minimize([x], [1.0])
        prog.add_nonneg([x], [1.0], -1.0)   # x >= 1
        prog.add_nonneg([x], [-1.0], 0.0)   # x <= 0
        sol = prog.solve()
        assert sol.status == ConicStatus.INFEASIBLE

    def test_unbounded_reported_as_infeasible_certificate(self):
        prog = ConicProgram()
        x = prog.new_scalar()
        prog.minimize([x], [-1.0])
        prog.add_nonneg([x], [1.0], 0.0)
        sol = prog.solve()
        assert sol.status == ConicStatus.INFEASIBLE
        assert "unbounded" in sol.detail

    def test_max_iter_status(self):
        rng = np.random.default_rng(55)
        prog, *_ = _random_lmi_program(rng)
        sol = prog.solve(max_iter=2)
        assert sol.status == ConicStatus.MAX_ITER
        assert sol.detail != ""

    def test_unconstrained_costed_variable_is_an_unbounded_ray(self):
        # x1 never appears in any constraint, so the problem is unbounded
        prog = ConicProgram()
        x0 = prog.new_scalar()
        x1 = prog.new_scalar()
        prog.minimize([x0, x1], [1.0, 1.0])
        prog.add_nonneg([x0], [1.0], 1.0)
        prog.add_nonneg([x0], [-1.0], 1.0)
        sol = prog.solve()
        assert sol.status == ConicStatus.INFEASIBLE
        assert "unbounded" in sol.detail

    def test_singular_kkt_with_bounded_optimum_still_solves(self):
        # a zero-cost unconstrained variable makes the plain KKT system
        # singular; regularization must rescue the solve
        prog = ConicProgram()
        x0 = prog.new_scalar()
        prog.new_scalar()
        prog.minimize([x0], [1.0])
        prog.add_nonneg([x0], [1.0], 1.0)
        prog.add_nonneg([x0], [-1.0], 1.0)
        sol = prog.solve()
        assert sol.status == ConicStatus.OPTIMAL
        assert abs(sol.objective_value - (-1.0)) < 1e-6

    def test_numerical_failure_on_overflowing_data(self):
        prog = ConicProgram()
        x = prog.new_scalar()
        prog.minimize([x], [1.0])
        prog.add_nonneg([x], [1e200], 1e200)
        prog.add_nonneg([x], [-1e200], 1e200)
        sol = prog.solve()
        assert sol.status == ConicStatus.NUMERICAL_FAILURE


class TestValidation:
    def test_undeclared_variable_rejected(self):
        prog = ConicProgram()
        prog.new_scalar()
        with pytest.raises(SolverError):
            prog.add_nonneg([5], [1.0], 0.0)

    def test_no_variables_rejected(self):
        prog = ConicProgram()
        with pytest.raises(SolverError):
            prog.solve()

    def test_no_cones_rejected(self):
        prog = ConicProgram()
        x = prog.new_scalar()
        prog.minimize([x], [1.0])
        with pytest.raises(SolverError):
            prog.solve()

    def test_non_hermitian_lmi_coefficient_rejected(self):
        prog = ConicProgram()
        x = prog.new_scalar()
        lmi = HermitianLMI(2)
        lmi.add_const(0, 0, np.eye(2))
        lmi.add_terms(0, 0, [x], np.array([[[0.0, 1.0], [2.0, 0.0]]], dtype=complex))
        with pytest.raises(ValueError):
            prog.add_psd_hermitian(lmi)


class TestDumpText:
    def test_dump_contains_17_digit_coefficients(self):
        prog = ConicProgram()
        x = prog.new_scalar()
        prog.minimize([x], [1.0 / 3.0])
        prog.add_nonneg([x], [1.0], 1.0 / 7.0)
        text = prog.dump_text()
        assert format(1.0 / 3.0, ".17g") in text
        assert format(1.0 / 7.0, ".17g") in text
        assert text.startswith("variables 1")

    def test_dump_is_deterministic(self):
        rng = np.random.default_rng(77)
        prog, *_ = _random_lmi_program(rng)
        assert prog.dump_text() == prog.dump_text()
