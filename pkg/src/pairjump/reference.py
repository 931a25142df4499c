"""Deterministic oracles the stochastic ensembles are checked against.

Dense von Neumann integration propagates explicit total-system vectors with
classic fixed-step RK4 and partial-traces the pair outer product; the damped
JC amplitude equation is solved through its equivalent second-order ODE for
the exponential memory kernel; the spin bath gets an exact block-sum
solution that walks the (j, m) mixture in decreasing probability order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .engine import MatrixChannel
from .jc import DiscretizedReservoir
from .spinbath import SpinBathParams, pjm_fraction

DEFAULT_DIM_CAP = 4096


class DimensionCapError(ValueError):
    """Requested dense integration exceeds the configured size cap."""


class NormDriftError(RuntimeError):
    """RK4 norm drift exceeded tolerance: the step size is too coarse."""


@dataclass(frozen=True)
class DenseModel:
    """Explicit-matrix total system: dimensions plus H_I(t) assembly."""

    d_system: int
    d_bath: int
    h_of_t: Callable[[float], np.ndarray]

    @classmethod
    def from_channels(cls, d_system: int, d_bath: int,
                      channels: Sequence[MatrixChannel]) -> "DenseModel":
        def h_of_t(t: float) -> np.ndarray:
            h = np.zeros((d_system * d_bath, d_system * d_bath), dtype=complex)
            for ch in channels:
                h += np.kron(ch.a, ch.b_of_t(t))
            return h

        return cls(d_system, d_bath, h_of_t)


def _rk4_pair(h_of_t: Callable[[float], np.ndarray], y: np.ndarray,
              t0: float, t1: float, steps: int) -> np.ndarray:
    h = (t1 - t0) / steps
    for k in range(steps):
        t = t0 + k * h
        h_a = h_of_t(t)
        h_b = h_of_t(t + 0.5 * h)
        h_c = h_of_t(t + h)
        k1 = -1j * (h_a @ y)
        k2 = -1j * (h_b @ (y + 0.5 * h * k1))
        k3 = -1j * (h_b @ (y + 0.5 * h * k2))
        k4 = -1j * (h_c @ (y + h * k3))
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def von_neumann_dense(model: DenseModel, phi1: np.ndarray, phi2: np.ndarray,
                      grid: np.ndarray, steps_per_interval: int = 128,
                      dim_cap: int = DEFAULT_DIM_CAP,
                      norm_tol: float = 1e-6) -> np.ndarray:
    """Integrate both total-system vectors with RK4 and partial-trace
    |Phi_1><Phi_2| over the bath at every grid point.

    Returns (n_grid, d_system, d_system).  Norm drift beyond norm_tol on
    either vector aborts with NormDriftError.
    """
    dim = model.d_system * model.d_bath
    if dim > dim_cap:
        raise DimensionCapError(f"total dimension {dim} exceeds cap {dim_cap}")
    grid = np.asarray(grid, dtype=float)
    y = np.stack([np.asarray(phi1, complex), np.asarray(phi2, complex)],
                 axis=1)
    if y.shape[0] != dim:
        raise ValueError("initial vectors do not match model dimension")
    out = np.empty((len(grid), model.d_system, model.d_system), dtype=complex)

    def reduced(yc: np.ndarray) -> np.ndarray:
        p1 = yc[:, 0].reshape(model.d_system, model.d_bath)
        p2 = yc[:, 1].reshape(model.d_system, model.d_bath)
        return p1 @ p2.conj().T

    out[0] = reduced(y)
    for g in range(1, len(grid)):
        y = _rk4_pair(model.h_of_t, y, grid[g - 1], grid[g],
                      steps_per_interval)
        drift = np.abs(np.linalg.norm(y, axis=0) - 1.0).max()
        if drift > norm_tol:
            raise NormDriftError(
                f"norm drift {drift:.3g} at t={grid[g]:.4g}; reduce the step")
        out[g] = reduced(y)
    return out


def von_neumann_dense_mixed(model: DenseModel,
                            pairs: Sequence[tuple[float, np.ndarray, np.ndarray]],
                            grid: np.ndarray,
                            steps_per_interval: int = 128,
                            dim_cap: int = DEFAULT_DIM_CAP,
                            norm_tol: float = 1e-6) -> np.ndarray:
    """Weighted sum of pure-pair solutions for mixed initial states.

    All pair vectors ride one stacked RK4 pass so H(t) is assembled once
    per stage.
    """
    dim = model.d_system * model.d_bath
    if dim > dim_cap:
        raise DimensionCapError(f"total dimension {dim} exceeds cap {dim_cap}")
    grid = np.asarray(grid, dtype=float)
    weights = np.array([w for w, _, _ in pairs])
    y = np.stack([np.asarray(v, complex) for _, p1, p2 in pairs
                  for v in (p1, p2)], axis=1)
    out = np.zeros((len(grid), model.d_system, model.d_system), dtype=complex)

    def reduced(yc: np.ndarray) -> np.ndarray:
        rho = np.zeros((model.d_system, model.d_system), dtype=complex)
        for k, w in enumerate(weights):
            p1 = yc[:, 2 * k].reshape(model.d_system, model.d_bath)
            p2 = yc[:, 2 * k + 1].reshape(model.d_system, model.d_bath)
            rho += w * (p1 @ p2.conj().T)
        return rho

    out[0] = reduced(y)
    for g in range(1, len(grid)):
        y = _rk4_pair(model.h_of_t, y, grid[g - 1], grid[g],
                      steps_per_interval)
        drift = np.abs(np.linalg.norm(y, axis=0) - 1.0).max()
        if drift > norm_tol:
            raise NormDriftError(
                f"norm drift {drift:.3g} at t={grid[g]:.4g}; reduce the step")
        out[g] = reduced(y)
    return out


@dataclass(frozen=True)
class AmplitudeSolution:
    """Excited-state amplitude G(t) with p(t) = |G(t)|^2."""

    grid: np.ndarray
    amplitude: np.ndarray

    @property
    def p(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2


def jc_exact(gamma0: float, lam: float, grid: np.ndarray,
             steps_per_interval: int = 256) -> AmplitudeSolution:
    """Exact damped-JC amplitude for the exponential memory kernel
    f(tau) = (gamma0 lam / 2) exp(-lam |tau|).

    The memory integral collapses to G'' + lam G' + (gamma0 lam / 2) G = 0
    with G(0) = 1, G'(0) = 0, integrated here with RK4.
    """
    if gamma0 <= 0 or lam <= 0:
        raise ValueError("gamma0 and lambda must be positive")
    grid = np.asarray(grid, dtype=float)
    coeff = 0.5 * gamma0 * lam
    y = np.array([1.0, 0.0])
    out = np.empty(len(grid), dtype=complex)
    out[0] = y[0]

    def deriv(yv: np.ndarray) -> np.ndarray:
        return np.array([yv[1], -lam * yv[1] - coeff * yv[0]])

    for g in range(1, len(grid)):
        h = (grid[g] - grid[g - 1]) / steps_per_interval
        for _ in range(steps_per_interval):
            k1 = deriv(y)
            k2 = deriv(y + 0.5 * h * k1)
            k3 = deriv(y + 0.5 * h * k2)
            k4 = deriv(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[g] = y[0]
    return AmplitudeSolution(grid=grid, amplitude=out)


def jc_exact_closed_form(gamma0: float, lam: float,
                         grid: np.ndarray) -> np.ndarray:
    """Closed-form G(t) for cross-checking the ODE route."""
    grid = np.asarray(grid, dtype=float)
    disc = complex(lam ** 2 - 2.0 * gamma0 * lam)
    d = np.sqrt(disc)
    t = grid
    if abs(d) < 1e-14:
        g = np.exp(-0.5 * lam * t) * (1.0 + 0.5 * lam * t)
    else:
        g = np.exp(-0.5 * lam * t) * (np.cosh(0.5 * d * t)
                                      + (lam / d) * np.sinh(0.5 * d * t))
    return np.real_if_close(g, tol=1e6)


def born_markov_p(gamma0: float, grid: np.ndarray) -> np.ndarray:
    """Memoryless weak-coupling decay p(t) = exp(-gamma0 t)."""
    if gamma0 <= 0:
        raise ValueError("gamma0 must be positive")
    return np.exp(-gamma0 * np.asarray(grid, dtype=float))


def tcl2_jc_p(gamma0: float, lam: float, grid: np.ndarray) -> np.ndarray:
    """Second-order time-convolutionless curve for the exponential kernel:
    p(t) = exp(-int_0^t gamma0 (1 - e^{-lam s}) ds)."""
    if gamma0 <= 0 or lam <= 0:
        raise ValueError("gamma0 and lambda must be positive")
    t = np.asarray(grid, dtype=float)
    return np.exp(-gamma0 * (t - (1.0 - np.exp(-lam * t)) / lam))


@dataclass(frozen=True)
class SpinBlockResult:
    grid: np.ndarray
    coherence: np.ndarray      # <+| rho_S(t) |->
    discarded_weight: float
    n_labels: int


def spin_block_exact(params: SpinBathParams, grid: np.ndarray,
                     eps_cut: float = 1e-4,
                     steps_per_interval: int | None = None) -> SpinBlockResult:
    """Exact coherence of the central spin for the unpolarized bath.

    Conservation of the total 3-component closes every pure-state evolution
    in a two-dimensional subspace {|+, j, m>, |-, j, m+1>}, so each (j, m)
    term needs one 2x2 propagator; labels enter in decreasing probability
    order until their cumulative weight reaches 1 - eps_cut.
    """
    if not 0.0 <= eps_cut <= 0.01:
        raise ValueError("eps_cut must lie in [0, 0.01]")
    grid = np.asarray(grid, dtype=float)
    n = params.n_spins
    a = params.per_spin_coupling
    omega0 = params.omega0

    labels = []
    for two_j in range(n % 2, n + 1, 2):
        p = float(pjm_fraction(n, two_j))
        for two_m in range(-two_j, two_j + 1, 2):
            labels.append((p, two_j, two_m))
    labels.sort(key=lambda r: (-r[0], r[1], r[2]))
    probs = np.array([r[0] for r in labels])
    cum = np.cumsum(probs)
    last = int(np.searchsorted(cum, 1.0 - eps_cut, side="left"))
    last = min(last, len(labels) - 1)
    included = labels[:last + 1]
    included_weight = float(cum[last])
    discarded = max(0.0, 1.0 - included_weight)

    # Block (j, m_blk) spans {|+, m_blk>, |-, m_blk + 1>}; a label (j, m)
    # needs blocks m (for the |+, j, m> branch) and m - 1 (for |-, j, m>).
    block_index: dict[tuple[int, int], int] = {}
    for _, two_j, two_m in included:
        for blk in ((two_j, two_m), (two_j, two_m - 2)):
            if blk not in block_index:
                block_index[blk] = len(block_index)
    n_blk = len(block_index)
    d0 = np.empty(n_blk)
    d1 = np.empty(n_blk)
    coup = np.empty(n_blk)
    for (two_j, two_mb), k in block_index.items():
        j = two_j / 2.0
        mb = two_mb / 2.0
        d0[k] = 2.0 * a * mb
        d1[k] = -2.0 * a * (mb + 1.0)
        coup[k] = 2.0 * a * math.sqrt(max(j * (j + 1.0) - mb * (mb + 1.0),
                                          0.0))

    if steps_per_interval is None:
        freq = omega0 + float(np.abs(np.stack([d0, d1])).max()
                              + coup.max())
        dt_interval = float(np.diff(grid).max())
        steps_per_interval = max(1, int(np.ceil(dt_interval * freq / 0.003)))

    w = np.tile(np.eye(2, dtype=complex), (n_blk, 1, 1))

    def rhs(t: float, wv: np.ndarray) -> np.ndarray:
        ph = np.exp(1j * omega0 * t)
        top = d0[:, None] * wv[:, 0, :] + (coup * ph)[:, None] * wv[:, 1, :]
        bot = (coup * np.conj(ph))[:, None] * wv[:, 0, :] \
            + d1[:, None] * wv[:, 1, :]
        return -1j * np.stack([top, bot], axis=1)

    a_idx = np.array([block_index[(tj, tm)] for _, tj, tm in included])
    b_idx = np.array([block_index[(tj, tm - 2)] for _, tj, tm in included])
    p_arr = np.array([p for p, _, _ in included])

    out = np.empty(len(grid), dtype=complex)
    out[0] = complex(np.sum(p_arr * w[a_idx, 0, 0]
                            * np.conj(w[b_idx, 1, 1])))
    for g in range(1, len(grid)):
        h = (grid[g] - grid[g - 1]) / steps_per_interval
        t = grid[g - 1]
        for k in range(steps_per_interval):
            tk = t + k * h
            k1 = rhs(tk, w)
            k2 = rhs(tk + 0.5 * h, w + 0.5 * h * k1)
            k3 = rhs(tk + 0.5 * h, w + 0.5 * h * k2)
            k4 = rhs(tk + h, w + h * k3)
            w = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        drift = np.abs(np.linalg.norm(w, axis=1) - 1.0).max()
        if drift > 1e-6:
            raise NormDriftError(
                f"propagator norm drift {drift:.3g} at t={grid[g]:.4g}")
        out[g] = complex(np.sum(p_arr * w[a_idx, 0, 0]
                                * np.conj(w[b_idx, 1, 1])))
    return SpinBlockResult(grid=grid, coherence=out,
                           discarded_weight=discarded,
                           n_labels=len(included))


# ---------------------------------------------------------------------------
# Dense-model builders for the two shipped benchmarks (brute-force oracles).


def jc_dense_model(reservoir: DiscretizedReservoir) -> DenseModel:
    """Single-excitation-sector JC total system as explicit matrices.

    Basis: {e, g} (x) {vacuum, one photon in mode k}, dimension 2 (M + 1).
    """
    m = len(reservoir.couplings)
    dim_b = m + 1
    g = reservoir.couplings
    delta = reservoir.detunings

    def h_of_t(t: float) -> np.ndarray:
        h = np.zeros((2 * dim_b, 2 * dim_b), dtype=complex)
        row = g * np.exp(1j * delta * t)
        # <e, 0| H |g, 1_k> = g_k exp(i delta_k t)
        h[0, dim_b + 1:] = row
        h[dim_b + 1:, 0] = np.conj(row)
        return h

    return DenseModel(d_system=2, d_bath=dim_b, h_of_t=h_of_t)


def spin_dense_model(params: SpinBathParams,
                     max_spins: int = 10) -> DenseModel:
    """Brute-force Pauli tensor-product model of the spin bath (small N)."""
    n = params.n_spins
    if n > max_spins:
        raise DimensionCapError(f"N = {n} too large for the dense builder")
    a = params.per_spin_coupling
    omega0 = params.omega0
    dim_b = 2 ** n
    sz = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    sp = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    eye = np.eye(2, dtype=complex)

    def embed(op: np.ndarray, site: int) -> np.ndarray:
        mats = [eye] * n
        mats[site] = op
        full = mats[0]
        for mm in mats[1:]:
            full = np.kron(full, mm)
        return full

    b3 = sum(a * embed(sz, i) for i in range(n))
    bp = sum(2.0 * a * embed(sp, i) for i in range(n))
    bm = bp.conj().T

    sys_z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    sys_p = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    sys_m = sys_p.conj().T

    def h_of_t(t: float) -> np.ndarray:
        # H = sigma_3 B_3 + sigma_+ B_-(t) + sigma_- B_+(t)
        b_minus = bm * np.exp(1j * omega0 * t)
        b_plus = bp * np.exp(-1j * omega0 * t)
        return (np.kron(sys_z, b3) + np.kron(sys_p, b_minus)
                + np.kron(sys_m, b_plus))

    return DenseModel(d_system=2, d_bath=dim_b, h_of_t=h_of_t)


def spin_dense_mixed_pairs(params: SpinBathParams, kind: str = "coherence"
                           ) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """Pure-pair decomposition of rho(0) = |+><psi2| (x) 2^-N I."""
    n = params.n_spins
    dim_b = 2 ** n
    plus = np.array([1.0, 0.0], dtype=complex)
    minus = np.array([0.0, 1.0], dtype=complex)
    psi2 = plus if kind == "population" else minus
    pairs = []
    for b in range(dim_b):
        chi = np.zeros(dim_b, dtype=complex)
        chi[b] = 1.0
        pairs.append((1.0 / dim_b, np.kron(plus, chi), np.kron(psi2, chi)))
    return pairs
