import numpy as np
import pytest
from scipy.optimize import brentq

from pairjump import jc, spinbath
from pairjump.engine import MatrixChannel
from pairjump.reference import (AmplitudeSolution, DenseModel,
                                DimensionCapError, NormDriftError,
                                born_markov_p, jc_dense_model, jc_exact,
                                jc_exact_closed_form, spin_block_exact,
                                spin_dense_mixed_pairs, spin_dense_model,
                                tcl2_jc_p, von_neumann_dense,
                                von_neumann_dense_mixed)

SX = np.array([[0, 1], [1, 0]], dtype=complex)


def volterra_amplitude(gamma0, lam, t_end, n):
    """Direct product-integration of G'(t) = -int_0^t f(t-s) G(s) ds with
    the exponential kernel; trapezoid in the memory integral."""
    dt = t_end / n
    ts = np.arange(n + 1) * dt
    kern = 0.5 * gamma0 * lam * np.exp(-lam * ts)
    g = np.zeros(n + 1)
    gdot = np.zeros(n + 1)
    g[0] = 1.0
    for k in range(n):
        # Heun step with the memory integral re-evaluated at the endpoint
        mem_k = np.trapezoid(kern[:k + 1][::-1] * g[:k + 1], dx=dt) if k else 0.0
        g_pred = g[k] - dt * mem_k
        g_tmp = np.append(g[:k + 1], g_pred)
        mem_k1 = np.trapezoid(kern[:k + 2][::-1] * g_tmp, dx=dt)
        g[k + 1] = g[k] - 0.5 * dt * (mem_k + mem_k1)
        gdot[k + 1] = -mem_k1
    return ts, g


class TestVonNeumannDense:
    def test_constant_when_h_zero(self):
        model = DenseModel.from_channels(2, 2,
                                         [MatrixChannel(SX, np.zeros((2, 2)))])
        grid = np.linspace(0, 2, 5)
        phi = np.kron([1, 0], [1, 0]).astype(complex)
        rho = von_neumann_dense(model, phi, phi, grid, 50)
        for g in range(5):
            np.testing.assert_allclose(rho[g], rho[0], atol=1e-14)

    def test_sigma_x_rotation_analytic(self):
        model = DenseModel.from_channels(2, 2, [MatrixChannel(SX, SX)])
        grid = np.linspace(0, 2, 9)
        phi = np.kron([1, 0], [1, 0]).astype(complex)
        rho = von_neumann_dense(model, phi, phi, grid, 200)
        exact = np.stack([np.diag([np.cos(t) ** 2, np.sin(t) ** 2])
                          for t in grid])
        assert np.abs(rho - exact).max() < 1e-12

    def test_fourth_order_convergence(self):
        model = DenseModel.from_channels(2, 2, [MatrixChannel(SX, SX)])
        grid = np.array([0.0, 1.0])
        phi = np.kron([1, 0], [1, 0]).astype(complex)
        exact = np.diag([np.cos(1.0) ** 2, np.sin(1.0) ** 2])
        errs = []
        for steps in (8, 16):
            rho = von_neumann_dense(model, phi, phi, grid, steps)
            errs.append(np.abs(rho[1] - exact).max())
        assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.2)

    def test_dimension_cap(self):
        model = DenseModel(64, 128, lambda t: None)
        with pytest.raises(DimensionCapError):
            von_neumann_dense(model, np.zeros(64 * 128), np.zeros(64 * 128),
                              np.array([0.0, 1.0]))

    def test_norm_drift_detected(self):
        model = DenseModel.from_channels(2, 2,
                                         [MatrixChannel(5 * SX, 5 * SX)])
        grid = np.array([0.0, 4.0])
        phi = np.kron([1, 0], [1, 0]).astype(complex)
        with pytest.raises(NormDriftError):
            von_neumann_dense(model, phi, phi, grid, steps_per_interval=2)

    def test_norm_conserved_to_1e8(self):
        # trace of the rho from identical branches equals the squared norm
        model = jc_dense_model(jc.discretize(jc.LorentzianSpectrum(5.0),
                                             20.0, 32, horizon=4.0))
        phi = np.zeros(2 * 33, dtype=complex)
        phi[0] = 1.0
        grid = np.linspace(0, 3, 7)
        rho = von_neumann_dense(model, phi, phi, grid, 200)
        traces = np.einsum("gii->g", rho).real
        assert np.abs(traces - 1.0).max() < 1e-8


class TestJCExact:
    def test_initial_value(self):
        sol = jc_exact(5.0, 1.0, np.linspace(0, 5, 11))
        assert sol.p[0] == 1.0
        assert isinstance(sol, AmplitudeSolution)
        assert np.all(sol.p <= 1.0 + 1e-12)

    def test_first_zero_and_frequency(self):
        grid = np.linspace(0, 3, 3001)
        sol = jc_exact(5.0, 1.0, grid)
        g = np.real(sol.amplitude)
        sign_change = np.where(np.diff(np.sign(g)) != 0)[0][0]
        t0 = brentq(lambda t: np.interp(t, grid, g),
                    grid[sign_change], grid[sign_change + 1])
        # analytic: tan(1.5 t0) = -3, Omega = lam sqrt(2 gamma0/lam - 1) = 3
        expect = (np.pi - np.arctan(3.0)) / 1.5
        assert t0 == pytest.approx(expect, abs=1e-6)
        assert t0 == pytest.approx(1.2617, abs=5e-4)

    def test_matches_closed_form(self):
        grid = np.linspace(0, 5, 26)
        sol = jc_exact(5.0, 1.0, grid)
        closed = jc_exact_closed_form(5.0, 1.0, grid)
        np.testing.assert_allclose(np.real(sol.amplitude), closed, atol=1e-9)

    def test_matches_volterra_quadrature(self):
        ts, g = volterra_amplitude(5.0, 1.0, 3.0, 6000)
        sol = jc_exact(5.0, 1.0, ts[::600])
        np.testing.assert_allclose(np.real(sol.amplitude), g[::600],
                                   atol=2e-4)

    def test_revival_after_first_zero(self):
        grid = np.linspace(0, 4, 801)
        p = jc_exact(5.0, 1.0, grid).p
        i0 = np.argmin(np.abs(grid - 1.2617))
        after = p[i0 + 20:]
        peak = after.max()
        assert peak > 0.05
        k = i0 + 20 + int(np.argmax(after))
        assert grid[k] == pytest.approx(2 * np.pi / 3, abs=0.02)

    def test_agrees_with_dense_modes_and_improves(self):
        grid = np.linspace(0, 3, 13)
        sol = jc_exact(5.0, 1.0, grid)
        errs = {}
        for m in (64, 128):
            res = jc.discretize(jc.LorentzianSpectrum(5.0), 20.0, m,
                                horizon=3.5)
            model = jc_dense_model(res)
            phi = np.zeros(2 * (m + 1), dtype=complex)
            phi[0] = 1.0
            rho = von_neumann_dense(model, phi, phi, grid, 120)
            errs[m] = np.abs(rho[:, 0, 0].real - sol.p).max()
        assert errs[64] < 1e-2
        assert errs[128] < errs[64]


class TestApproximateCurves:
    def test_born_markov_values(self):
        grid = np.array([0.0, 0.2])
        p = born_markov_p(5.0, grid)
        assert p[0] == 1.0
        assert p[1] == pytest.approx(np.exp(-1.0), rel=1e-12)
        assert p[1] == pytest.approx(0.36788, abs=1e-5)

    def test_born_markov_never_crosses_zero_but_exact_does(self):
        grid = np.linspace(0, 5, 201)
        markov = born_markov_p(5.0, grid)
        exact_amp = np.real(jc_exact(5.0, 1.0, grid).amplitude)
        assert np.all(markov > 0)
        assert np.any(exact_amp < 0)

    def test_tcl2_limits(self):
        grid = np.linspace(0, 5, 11)
        p = tcl2_jc_p(5.0, 1.0, grid)
        assert p[0] == 1.0
        # late-time log-derivative approaches the Markov rate
        late = (np.log(p[-2]) - np.log(p[-1])) / (grid[-1] - grid[-2])
        assert late == pytest.approx(5.0, rel=1e-2)

    def test_tcl2_weak_coupling_matches_exact(self):
        grid = np.linspace(0, 5, 26)
        p2 = tcl2_jc_p(0.1, 1.0, grid)
        pe = jc_exact(0.1, 1.0, grid).p
        assert np.abs(p2 - pe).max() < 1e-2


class TestSpinBlockExact:
    def test_initial_value_is_one_minus_discarded(self):
        params = spinbath.SpinBathParams(20, 0.5)
        res = spin_block_exact(params, np.linspace(0, 1, 3), eps_cut=1e-3)
        assert res.coherence[0].real == pytest.approx(1 - res.discarded_weight,
                                                      abs=1e-14)
        assert res.discarded_weight <= 1e-3

    def test_matches_dense_brute_force_n2(self):
        params = spinbath.SpinBathParams(2, 0.5)
        grid = np.linspace(0, 3, 7)
        blk = spin_block_exact(params, grid, eps_cut=0.0,
                               steps_per_interval=800)
        dense = von_neumann_dense_mixed(spin_dense_model(params),
                                        spin_dense_mixed_pairs(params), grid,
                                        steps_per_interval=800)
        assert np.abs(blk.coherence - dense[:, 0, 1]).max() < 1e-8

    def test_matches_dense_brute_force_n3(self):
        params = spinbath.SpinBathParams(3, 0.7)
        grid = np.linspace(0, 2, 5)
        blk = spin_block_exact(params, grid, eps_cut=0.0,
                               steps_per_interval=800)
        dense = von_neumann_dense_mixed(spin_dense_model(params),
                                        spin_dense_mixed_pairs(params), grid,
                                        steps_per_interval=800)
        assert np.abs(blk.coherence - dense[:, 0, 1]).max() < 1e-8

    def test_step_halving_invariance(self):
        params = spinbath.SpinBathParams(100, 0.5)
        grid = np.linspace(0, 3, 7)
        a = spin_block_exact(params, grid, eps_cut=1e-4)
        b = spin_block_exact(params, grid, eps_cut=1e-4,
                             steps_per_interval=None)
        # rerun with twice the automatically chosen resolution
        auto = spin_block_exact(params, grid, eps_cut=1e-4)
        fine = spin_block_exact(params, grid, eps_cut=1e-4,
                                steps_per_interval=2 * _auto_steps(params,
                                                                   grid))
        assert np.abs(auto.coherence - fine.coherence).max() < 1e-6
        np.testing.assert_array_equal(a.coherence, b.coherence)

    def test_eps_cut_validation(self):
        params = spinbath.SpinBathParams(10, 0.5)
        with pytest.raises(ValueError):
            spin_block_exact(params, np.linspace(0, 1, 3), eps_cut=0.5)


def _auto_steps(params, grid):
    res = spin_block_exact(params, grid[:2], eps_cut=1e-4)
    # recompute the default step choice the same way the solver does
    import math

    a = params.per_spin_coupling
    two_js = range(params.n_spins % 2, params.n_spins + 1, 2)
    jmax = max(two_js) / 2
    freq = params.omega0 + 2 * a * (jmax + 1) + 2 * a * math.sqrt(
        jmax * (jmax + 1))
    return max(1, int(np.ceil(float(np.diff(grid).max()) * freq / 0.003)))
