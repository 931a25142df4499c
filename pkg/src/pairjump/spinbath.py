"""Central spin coupled to N bath spins with uniform root-mean-square coupling.

Uniform couplings confine the bath to a single collective angular momentum
ladder: every jump maps a |j, m> basis state to a neighboring rung (or back
to itself for the diagonal channel) times a unit phase.  The bath state is
therefore the symbolic triple (j, m, phase), exact for any N, and the
completely unpolarized initial bath is a mixture over (j, m) with weight
P(j, m) computed from exact binomials.

Working units put omega0 = 1; the coupling enters as A/omega0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import rng as rngmod
from .engine import (MAX_RATE_PER_STEP, BranchState, StepSizeError,
                     TrajectoryPair)

S_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)   # |+><-|
S_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |-><+|
S_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

CHANNEL_DIAGONAL = "3"
CHANNEL_RAISE_SYSTEM = "+"
CHANNEL_LOWER_SYSTEM = "-"


@dataclass(frozen=True)
class SpinBathParams:
    """Bath size N, rms coupling A and central transition frequency."""

    n_spins: int
    coupling: float
    omega0: float = 1.0

    def __post_init__(self) -> None:
        if self.n_spins < 1:
            raise ValueError("need at least one bath spin")
        if self.coupling <= 0 or self.omega0 <= 0:
            raise ValueError("coupling and omega0 must be positive")

    @property
    def per_spin_coupling(self) -> float:
        """A^(j) = A / sqrt(N)."""
        return self.coupling / math.sqrt(self.n_spins)


@dataclass(frozen=True)
class CollectiveLabel:
    """Total-spin quantum numbers stored as doubled integers."""

    two_j: int
    two_m: int

    def __post_init__(self) -> None:
        if self.two_j < 0 or abs(self.two_m) > self.two_j \
                or (self.two_j - self.two_m) % 2 != 0:
            raise ValueError(f"invalid (2j, 2m) = ({self.two_j}, {self.two_m})")

    @property
    def j(self) -> float:
        return self.two_j / 2.0

    @property
    def m(self) -> float:
        return self.two_m / 2.0


def pjm_fraction(n_spins: int, two_j: int) -> Fraction:
    """Exact weight of each individual (j, m) basis state in the
    unpolarized mixture of n_spins spin-1/2 particles."""
    if two_j < 0 or two_j > n_spins or (n_spins - two_j) % 2 != 0:
        raise ValueError(
            f"j = {two_j / 2} incompatible with N = {n_spins}")
    k = (n_spins + two_j) // 2
    return Fraction(math.comb(n_spins, k) - math.comb(n_spins, k + 1),
                    2 ** n_spins)


def pjm(n_spins: int, j: float) -> float:
    """P(j, m): probability of each (j, m) pair, independent of m."""
    two_j = int(round(2 * j))
    if abs(2 * j - two_j) > 1e-12:
        raise ValueError(f"j = {j} is not half-integer")
    return float(pjm_fraction(n_spins, two_j))


@lru_cache(maxsize=8)
def _label_table(n_spins: int):
    """Per-(j, m) sampling table: doubled quantum numbers, weights, CDF."""
    two_js = []
    two_ms = []
    weights = []
    for two_j in range(n_spins % 2, n_spins + 1, 2):
        p = float(pjm_fraction(n_spins, two_j))
        for two_m in range(-two_j, two_j + 1, 2):
            two_js.append(two_j)
            two_ms.append(two_m)
            weights.append(p)
    two_js = np.array(two_js, dtype=np.int64)
    two_ms = np.array(two_ms, dtype=np.int64)
    weights = np.array(weights)
    cdf = np.cumsum(weights)
    return two_js, two_ms, weights, cdf


def sample_initial_label(n_spins: int, rng: np.random.Generator) -> CollectiveLabel:
    """Inverse-CDF draw of (j, m) from the unpolarized mixture."""
    two_js, two_ms, _, cdf = _label_table(n_spins)
    u = rng.random()
    idx = min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)
    return CollectiveLabel(int(two_js[idx]), int(two_ms[idx]))


class LadderBathState:
    """A single |j, m> rung times a complex amplitude."""

    __slots__ = ("two_j", "two_m", "amplitude")

    def __init__(self, two_j: int, two_m: int, amplitude: complex = 1.0):
        self.two_j = two_j
        self.two_m = two_m
        self.amplitude = complex(amplitude)

    def norm(self) -> float:
        return abs(self.amplitude)

    def scaled(self, factor: complex) -> "LadderBathState":
        return LadderBathState(self.two_j, self.two_m,
                               self.amplitude * factor)

    def inner(self, other: "LadderBathState") -> complex:
        """<self|other>; rungs are orthonormal."""
        if self.two_j != other.two_j or self.two_m != other.two_m:
            return 0.0
        return np.conj(self.amplitude) * other.amplitude


def apply_channel(params: SpinBathParams, alpha: str, t: float,
                  chi: LadderBathState) -> LadderBathState:
    """Bath side of one channel on a ladder state, unnormalized.

    Ladder edges come back with amplitude 0 (and an unchanged label), which
    the engine's rate guard turns into a disabled channel.
    """
    a = params.per_spin_coupling
    j = chi.two_j / 2.0
    m = chi.two_m / 2.0
    jj1 = j * (j + 1.0)
    if alpha == CHANNEL_DIAGONAL:
        # sum_j sigma_3^(j) = 2 J_3 on the collective ladder
        return LadderBathState(chi.two_j, chi.two_m,
                               chi.amplitude * (2.0 * a * m))
    if alpha == CHANNEL_RAISE_SYSTEM:
        c_sq = jj1 - m * (m - 1.0)
        if c_sq <= 0.0:
            return LadderBathState(chi.two_j, chi.two_m, 0.0)
        amp = 2.0 * a * math.sqrt(c_sq) \
            * np.exp(+1j * params.omega0 * t) * chi.amplitude
        return LadderBathState(chi.two_j, chi.two_m - 2, amp)
    if alpha == CHANNEL_LOWER_SYSTEM:
        c_sq = jj1 - m * (m + 1.0)
        if c_sq <= 0.0:
            return LadderBathState(chi.two_j, chi.two_m, 0.0)
        amp = 2.0 * a * math.sqrt(c_sq) \
            * np.exp(-1j * params.omega0 * t) * chi.amplitude
        return LadderBathState(chi.two_j, chi.two_m + 2, amp)
    raise ValueError(f"unknown channel {alpha!r}")


class _LadderChannel:
    """Pairs a fixed system matrix with one bath channel rule."""

    def __init__(self, params: SpinBathParams, system_matrix: np.ndarray,
                 alpha: str):
        self.params = params
        self.system_matrix = system_matrix
        self.alpha = alpha

    def apply_system(self, t: float, psi: np.ndarray) -> np.ndarray:
        return self.system_matrix @ psi

    def apply_bath(self, t: float, bath: LadderBathState) -> LadderBathState:
        return apply_channel(self.params, self.alpha, t, bath)


INITIAL_COHERENCE = "coherence"    # rho(0) = |+><-| (x) unpolarized bath
INITIAL_POPULATION = "population"  # rho(0) = |+><+| (x) unpolarized bath


def spin_initial_pair(params: SpinBathParams, rng: np.random.Generator,
                      kind: str = INITIAL_COHERENCE) -> TrajectoryPair:
    """Sample one (j, m) label shared by both branches.

    The shared label realizes E(|Phi_1><Phi_2|) = psi1 psi2^dag (x)
    sum P(j,m) |j,m><j,m| at t = 0.
    """
    label = sample_initial_label(params.n_spins, rng)
    plus = np.array([1.0, 0.0], dtype=complex)
    minus = np.array([0.0, 1.0], dtype=complex)
    psi2 = plus if kind == INITIAL_POPULATION else minus
    b1 = BranchState(plus, LadderBathState(label.two_j, label.two_m))
    b2 = BranchState(psi2.copy(),
                     LadderBathState(label.two_j, label.two_m))
    return TrajectoryPair(b1, b2, t=0.0)


@lru_cache(maxsize=8)
def _reachable_rate_bound(n_spins: int, coupling: float) -> float:
    """Max total rate over every (j, m) the initial sampler can actually
    produce, with m ranging over the full ladder of each reachable j."""
    two_js, _, _, cdf = _label_table(n_spins)
    increments = np.diff(np.concatenate(([0.0], cdf)))
    reachable = np.unique(two_js[increments > 0.0])
    a = coupling / math.sqrt(n_spins)
    bound = 0.0
    for two_j in reachable:
        j = two_j / 2.0
        m = np.arange(-two_j, two_j + 1, 2) / 2.0
        jj1 = j * (j + 1.0)
        c_up = np.sqrt(np.maximum(jj1 - m * (m + 1.0), 0.0))
        c_dn = np.sqrt(np.maximum(jj1 - m * (m - 1.0), 0.0))
        total = 2.0 * a * np.abs(m) + 2.0 * a * np.maximum(c_up, c_dn)
        bound = max(bound, float(total.max()))
    return bound


class SpinBathModel:
    """Pair-process model of the central spin; system basis (+, -)."""

    system_labels = ("+", "-")

    def __init__(self, params: SpinBathParams,
                 initial_kind: str = INITIAL_COHERENCE):
        if initial_kind not in (INITIAL_COHERENCE, INITIAL_POPULATION):
            raise ValueError(f"unknown initial state {initial_kind!r}")
        self.params = params
        self.initial_kind = initial_kind
        self.channels = [
            _LadderChannel(params, S_Z, CHANNEL_DIAGONAL),
            _LadderChannel(params, S_PLUS, CHANNEL_RAISE_SYSTEM),
            _LadderChannel(params, S_MINUS, CHANNEL_LOWER_SYSTEM),
        ]

    @classmethod
    def from_parameters(cls, n_spins: int, a_over_omega0: float,
                        initial_kind: str = INITIAL_COHERENCE) -> "SpinBathModel":
        return cls(SpinBathParams(n_spins=n_spins, coupling=a_over_omega0,
                                  omega0=1.0), initial_kind)

    def initial_pair(self, rng: np.random.Generator) -> TrajectoryPair:
        return spin_initial_pair(self.params, rng, self.initial_kind)

    def rate_bound(self) -> float:
        return _reachable_rate_bound(self.params.n_spins,
                                     self.params.coupling)

    def evolve_batch(self, seed: int, trajectory_indices: np.ndarray,
                     grid: np.ndarray, steps_per_interval: int,
                     log_weight_cap: float = 700.0):
        return evolve_spin_batch(self, seed, trajectory_indices, grid,
                                 steps_per_interval, log_weight_cap)


def evolve_spin_batch(model: SpinBathModel, seed: int,
                      trajectory_indices: np.ndarray, grid: np.ndarray,
                      steps_per_interval: int, log_weight_cap: float = 700.0,
                      rng_block: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Lockstep evolution of a block of spin-bath trajectories.

    Branch state per trajectory: system basis index (0 = +, 1 = -), the
    rung m, one complex phase and the log-weight; j is fixed per
    trajectory.  Channel decision order matches the generic engine
    (diagonal, then the sigma_+ channel, then sigma_-), and the uniform
    streams are the same, one draw per branch per step.

    Returns (D, aborted) with D of shape (n_traj, n_grid, 2, 2).
    """
    grid = np.asarray(grid, dtype=float)
    idx = np.asarray(trajectory_indices, dtype=np.int64)
    n = idx.size
    n_grid = len(grid)
    params = model.params
    a = params.per_spin_coupling
    omega0 = params.omega0

    j = np.empty(n)
    m = np.empty((2, n))
    s = np.zeros((2, n), dtype=np.int64)
    if model.initial_kind == INITIAL_COHERENCE:
        s[1, :] = 1
    z = np.ones((2, n), dtype=complex)
    lam = np.zeros((2, n))
    for k, i in enumerate(idx):
        label = sample_initial_label(params.n_spins,
                                     rngmod.stream(seed, int(i),
                                                   rngmod.ROLE_INIT))
        j[k] = label.two_j / 2.0
        m[:, k] = label.two_m / 2.0
    jj1 = j * (j + 1.0)
    alive = np.ones(n, dtype=bool)
    gens = [[rngmod.stream(seed, int(i), role) for i in idx]
            for role in (rngmod.ROLE_BRANCH1, rngmod.ROLE_BRANCH2)]

    out = np.zeros((n, n_grid, 2, 2), dtype=complex)
    rows = np.arange(n)

    def emit(g: int) -> None:
        val = z[0] * np.conj(z[1]) * np.exp(lam[0] + lam[1])
        val = np.where(m[0] == m[1], val, 0.0)
        val[~alive] = 0.0
        out[rows, g, s[0], s[1]] = val

    emit(0)
    total_steps = (n_grid - 1) * steps_per_interval
    u_buf = np.empty((2, n, rng_block))
    buf_fill = 0
    buf_pos = 0
    step_no = 0
    for g in range(1, n_grid):
        t0 = grid[g - 1]
        dt = (grid[g] - t0) / steps_per_interval
        for k in range(steps_per_interval):
            if buf_pos == buf_fill:
                buf_fill = min(rng_block, total_steps - step_no)
                for b in range(2):
                    for w, gen in enumerate(gens[b]):
                        u_buf[b, w, :buf_fill] = gen.random(buf_fill)
                buf_pos = 0
            t_mid = t0 + (k + 0.5) * dt
            for b in range(2):
                mb = m[b]
                r3 = 2.0 * a * np.abs(mb)
                lowers_bath = s[b] == 1  # sigma_+ channel active
                c_sq = np.where(lowers_bath, jj1 - mb * (mb - 1.0),
                                jj1 - mb * (mb + 1.0))
                r_lad = 2.0 * a * np.sqrt(np.maximum(c_sq, 0.0))
                total = r3 + r_lad
                if np.any(total[alive] * dt > MAX_RATE_PER_STEP):
                    raise StepSizeError("Gamma*dt exceeds the per-step bound")
                u = u_buf[b, :, buf_pos]
                jump_diag = (u < r3 * dt) & alive
                jump_lad = (~jump_diag) & (u < total * dt) & alive
                if np.any(jump_diag):
                    sign = np.where(s[b, jump_diag] == 0, 1.0, -1.0) \
                        * np.sign(mb[jump_diag])
                    z[b, jump_diag] *= -1j * sign
                if np.any(jump_lad):
                    dn = jump_lad & lowers_bath
                    up = jump_lad & ~lowers_bath
                    z[b, dn] *= -1j * np.exp(+1j * omega0 * t_mid)
                    m[b, dn] -= 1.0
                    s[b, dn] = 0
                    z[b, up] *= -1j * np.exp(-1j * omega0 * t_mid)
                    m[b, up] += 1.0
                    s[b, up] = 1
                nojump = (~jump_diag) & (~jump_lad) & alive
                lam[b, nojump] += total[nojump] * dt
            alive &= (lam[0] + lam[1]) <= log_weight_cap
            buf_pos += 1
            step_no += 1
        emit(g)
    return out, ~alive
