"""Pair-state piecewise deterministic jump process.

The total-system density matrix is represented as the ensemble mean of
|Phi_1><Phi_2| over two independently jumping product states
Phi_nu = psi_nu (x) chi_nu.  Between jumps nothing moves except a scalar
log-weight Lambda_nu that accrues the total jump rate; at a jump the system
factor picks up -i * A_alpha and the environment factor B_alpha, both
renormalized.  A channel alpha fires at rate

    Gamma_alpha = ||A_alpha psi|| * ||B_alpha chi|| / (||psi|| * ||chi||),

which makes the one-step mean of the pair update reproduce the von Neumann
equation exactly; the ensemble average of

    D(t) = |psi_1><psi_2| * exp(Lambda_1 + Lambda_2) * <chi_2|chi_1>

is the reduced density matrix of the open system.

The per-pair functions in this module are the reference implementation and
drive arbitrary models (anything exposing jump channels).  For production
ensembles the shipped models provide lockstep-vectorized evolvers that
consume the exact same per-(trajectory, branch) random streams; see
``evolve_dense_batch`` here and the model modules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from . import rng as rngmod

# A single step must never carry more than this much jump probability.
MAX_RATE_PER_STEP = 0.05

DEFAULT_LOG_WEIGHT_CAP = 700.0


class InvalidStateError(ValueError):
    """A state norm came out non-finite."""


class ZeroRateJumpError(ValueError):
    """A jump was requested on a channel whose rate vanishes."""


class StepSizeError(ValueError):
    """Gamma * dt exceeded the per-step resolution bound."""


class RateBoundError(RuntimeError):
    """Observed rate exceeded the bound handed to the thinning sampler."""


class JumpChannel(Protocol):
    """One interaction term: a system operator paired with a bath operator."""

    def apply_system(self, t: float, psi: np.ndarray) -> np.ndarray:
        """A_alpha(t) psi, unnormalized."""
        ...

    def apply_bath(self, t: float, bath: Any) -> Any:
        """B_alpha(t) chi, unnormalized bath state."""
        ...


class PairModel(Protocol):
    system_labels: tuple[str, ...]
    channels: Sequence[JumpChannel]

    def initial_pair(self, rng: np.random.Generator) -> "TrajectoryPair": ...

    def rate_bound(self) -> float: ...


@dataclass(frozen=True)
class BranchState:
    """One branch: unit system vector, unit bath vector, drift log-weight."""

    psi: np.ndarray
    bath: Any
    log_weight: float = 0.0


@dataclass(frozen=True)
class TrajectoryPair:
    branch1: BranchState
    branch2: BranchState
    t: float = 0.0


@dataclass(frozen=True)
class RateSet:
    per_channel: np.ndarray
    total: float


@dataclass
class TrajectoryOutcome:
    """Per-trajectory contributions D(t_g) on the output grid."""

    contributions: np.ndarray  # (n_grid, d, d) complex
    aborted: bool
    jump_count: int


def compute_rates(branch: BranchState, t: float,
                  channels: Sequence[JumpChannel]) -> RateSet:
    """Jump rates of every channel for one branch at time t.

    A channel whose system factor annihilates psi gets rate exactly 0 and
    its bath operator is not evaluated, so sector-restricted bath
    representations stay inside their domain.
    """
    psi_norm = float(np.linalg.norm(branch.psi))
    bath_norm = float(branch.bath.norm())
    if not (np.isfinite(psi_norm) and np.isfinite(bath_norm)):
        raise InvalidStateError("non-finite state norm")
    rates = np.zeros(len(channels))
    for i, ch in enumerate(channels):
        a_norm = float(np.linalg.norm(ch.apply_system(t, branch.psi)))
        if not np.isfinite(a_norm):
            raise InvalidStateError(f"non-finite norm from channel {i}")
        if a_norm == 0.0:
            continue
        b_norm = float(ch.apply_bath(t, branch.bath).norm())
        if not np.isfinite(b_norm):
            raise InvalidStateError(f"non-finite bath norm from channel {i}")
        rates[i] = (a_norm * b_norm) / (psi_norm * bath_norm)
    return RateSet(per_channel=rates, total=float(rates.sum()))


def apply_jump(branch: BranchState, channel_index: int, t: float,
               channels: Sequence[JumpChannel]) -> BranchState:
    """Fire one channel: psi <- -i A psi / ||A psi||, unit <- B unit / ||B unit||.

    The log-weight is untouched; jumps are norm conserving.
    """
    ch = channels[channel_index]
    a_psi = ch.apply_system(t, branch.psi)
    a_norm = float(np.linalg.norm(a_psi))
    if a_norm == 0.0:
        raise ZeroRateJumpError(
            f"channel {channel_index} annihilates the system state")
    b_chi = ch.apply_bath(t, branch.bath)
    b_norm = float(b_chi.norm())
    if b_norm == 0.0:
        raise ZeroRateJumpError(
            f"channel {channel_index} annihilates the bath state")
    return BranchState(psi=(-1j) * a_psi / a_norm,
                       bath=b_chi.scaled(1.0 / b_norm),
                       log_weight=branch.log_weight)


def advance_no_jump(branch: BranchState, dt: float,
                    total_rate: float) -> BranchState:
    """Drift step: only the log-weight moves, by Gamma * dt."""
    return BranchState(psi=branch.psi, bath=branch.bath,
                       log_weight=branch.log_weight + total_rate * dt)


def branch_step_at(branch: BranchState, t_mid: float, dt: float,
                   channels: Sequence[JumpChannel],
                   rng: np.random.Generator) -> tuple[BranchState, int | None]:
    """One Bernoulli jump decision with rates evaluated at the step midpoint.

    Draws exactly one uniform; u falling in channel alpha's subinterval of
    [0, Gamma*dt) fires alpha, otherwise the branch drifts.  At most one
    channel can fire per step.
    """
    rates = compute_rates(branch, t_mid, channels)
    if rates.total * dt > MAX_RATE_PER_STEP:
        raise StepSizeError(
            f"Gamma*dt = {rates.total * dt:.4g} exceeds {MAX_RATE_PER_STEP}; "
            f"reduce dt below {MAX_RATE_PER_STEP / rates.total:.4g}")
    u = rng.random()
    if u < rates.total * dt:
        cum = np.cumsum(rates.per_channel) * dt
        idx = int(np.searchsorted(cum, u, side="right"))
        return apply_jump(branch, idx, t_mid, channels), idx
    return advance_no_jump(branch, dt, rates.total), None


def step(pair: TrajectoryPair, dt: float, channels: Sequence[JumpChannel],
         rng1: np.random.Generator,
         rng2: np.random.Generator) -> TrajectoryPair:
    """Advance both branches by dt with independent jump noise."""
    t_mid = pair.t + 0.5 * dt
    b1, _ = branch_step_at(pair.branch1, t_mid, dt, channels, rng1)
    b2, _ = branch_step_at(pair.branch2, t_mid, dt, channels, rng2)
    return TrajectoryPair(branch1=b1, branch2=b2, t=pair.t + dt)


def contribution(pair: TrajectoryPair) -> np.ndarray:
    """Single-trajectory estimate D = |psi1><psi2| e^(L1+L2) <unit2|unit1>."""
    b1, b2 = pair.branch1, pair.branch2
    weight = np.exp(b1.log_weight + b2.log_weight)
    overlap = b2.bath.inner(b1.bath)
    return np.outer(b1.psi, np.conj(b2.psi)) * (weight * overlap)


def evolve_pair(model: PairModel, grid: np.ndarray, steps_per_interval: int,
                rng1: np.random.Generator, rng2: np.random.Generator,
                *, pair: TrajectoryPair | None = None,
                init_rng: np.random.Generator | None = None,
                log_weight_cap: float = DEFAULT_LOG_WEIGHT_CAP) -> TrajectoryOutcome:
    """Step one trajectory pair across a strictly increasing grid from t=0.

    Emits D at every grid point.  A trajectory whose combined log-weight
    exceeds the cap is flagged aborted and stops contributing.
    """
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and increase strictly")
    if pair is None:
        pair = model.initial_pair(init_rng)
    channels = model.channels
    d = len(model.system_labels)
    out = np.zeros((len(grid), d, d), dtype=complex)
    out[0] = contribution(pair)
    jumps = 0
    for g in range(1, len(grid)):
        t0 = grid[g - 1]
        dt = (grid[g] - t0) / steps_per_interval
        b1, b2 = pair.branch1, pair.branch2
        for k in range(steps_per_interval):
            t_mid = t0 + (k + 0.5) * dt
            b1, j1 = branch_step_at(b1, t_mid, dt, channels, rng1)
            b2, j2 = branch_step_at(b2, t_mid, dt, channels, rng2)
            jumps += (j1 is not None) + (j2 is not None)
            if b1.log_weight + b2.log_weight > log_weight_cap:
                return TrajectoryOutcome(out, aborted=True, jump_count=jumps)
        pair = TrajectoryPair(b1, b2, t=grid[g])
        out[g] = contribution(pair)
    return TrajectoryOutcome(out, aborted=False, jump_count=jumps)


def sample_next_jump_thinning(
        branch: BranchState, t: float, rate_bound: float,
        channels: Sequence[JumpChannel], rng: np.random.Generator,
        t_end: float = np.inf) -> tuple[float, int] | None:
    """Exact next-jump sampling for time-dependent rates by rejection.

    Candidate times arrive at the constant bound rate; a candidate at s is
    accepted with probability Gamma(s)/bound, and the accepting uniform also
    selects the channel.  Returns None once the candidate passes t_end.
    Raises RateBoundError if the observed rate ever exceeds the bound.
    """
    if rate_bound <= 0.0:
        return None
    while True:
        t = t + rng.exponential(1.0 / rate_bound)
        if t >= t_end:
            return None
        rates = compute_rates(branch, t, channels)
        if rates.total > rate_bound * (1.0 + 1e-12):
            raise RateBoundError(
                f"rate {rates.total:.6g} exceeds bound {rate_bound:.6g} at t={t:.6g}")
        u = rng.random() * rate_bound
        if u < rates.total:
            cum = np.cumsum(rates.per_channel)
            idx = int(np.searchsorted(cum, u, side="right"))
            return t, idx


def _integrated_rate(branch: BranchState, t_a: float, t_b: float,
                     channels: Sequence[JumpChannel]) -> float:
    """Integral of the total rate over a jump-free interval (states frozen)."""
    from scipy.integrate import quad

    if t_b <= t_a:
        return 0.0
    val, _ = quad(lambda s: compute_rates(branch, s, channels).total,
                  t_a, t_b, limit=200)
    return float(val)


def evolve_branch_thinning(branch: BranchState, grid: np.ndarray,
                           channels: Sequence[JumpChannel], rate_bound: float,
                           rng: np.random.Generator
                           ) -> tuple[list[BranchState], int]:
    """Evolve one branch with exactly sampled jump times; snapshot at grid points.

    Between events the log-weight accrues the quadrature of the total rate,
    so the drift carries no time-step error at all.
    """
    snapshots = [branch]
    jumps = 0
    t_cur = float(grid[0])
    nxt = sample_next_jump_thinning(branch, t_cur, rate_bound, channels, rng,
                                    t_end=float(grid[-1]))
    for t_g in grid[1:]:
        t_g = float(t_g)
        while nxt is not None and nxt[0] <= t_g:
            t_jump, idx = nxt
            lw = branch.log_weight + _integrated_rate(branch, t_cur, t_jump,
                                                      channels)
            branch = BranchState(branch.psi, branch.bath, lw)
            branch = apply_jump(branch, idx, t_jump, channels)
            jumps += 1
            t_cur = t_jump
            nxt = sample_next_jump_thinning(branch, t_cur, rate_bound,
                                            channels, rng,
                                            t_end=float(grid[-1]))
        lw = branch.log_weight + _integrated_rate(branch, t_cur, t_g, channels)
        branch = BranchState(branch.psi, branch.bath, lw)
        t_cur = t_g
        snapshots.append(branch)
    return snapshots, jumps


def evolve_pair_thinning(model: PairModel, grid: np.ndarray,
                         rng1: np.random.Generator,
                         rng2: np.random.Generator,
                         *, pair: TrajectoryPair | None = None,
                         init_rng: np.random.Generator | None = None,
                         log_weight_cap: float = DEFAULT_LOG_WEIGHT_CAP) -> TrajectoryOutcome:
    """Thinning-stepper counterpart of evolve_pair (validation path)."""
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and increase strictly")
    if pair is None:
        pair = model.initial_pair(init_rng)
    bound = model.rate_bound()
    snaps1, jumps1 = evolve_branch_thinning(pair.branch1, grid,
                                            model.channels, bound, rng1)
    snaps2, jumps2 = evolve_branch_thinning(pair.branch2, grid,
                                            model.channels, bound, rng2)
    d = len(model.system_labels)
    out = np.zeros((len(grid), d, d), dtype=complex)
    for g, (b1, b2) in enumerate(zip(snaps1, snaps2)):
        if b1.log_weight + b2.log_weight > log_weight_cap:
            return TrajectoryOutcome(out, aborted=True,
                                     jump_count=jumps1 + jumps2)
        out[g] = contribution(TrajectoryPair(b1, b2, t=float(grid[g])))
    return TrajectoryOutcome(out, aborted=False, jump_count=jumps1 + jumps2)


# ---------------------------------------------------------------------------
# Dense-matrix models and their lockstep batch evolver.


class DenseBath:
    """Bath state as an explicit complex vector."""

    __slots__ = ("vec",)

    def __init__(self, vec: np.ndarray):
        self.vec = np.asarray(vec, dtype=complex)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))

    def scaled(self, factor: complex) -> "DenseBath":
        return DenseBath(self.vec * factor)

    def inner(self, other: "DenseBath") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.vec, other.vec))


class MatrixChannel:
    """Jump channel built from an explicit system matrix and a bath matrix
    rule b_of_t (constant matrices wrapped automatically)."""

    def __init__(self, a: np.ndarray,
                 b_of_t: Callable[[float], np.ndarray] | np.ndarray):
        self.a = np.asarray(a, dtype=complex)
        if callable(b_of_t):
            self.b_of_t = b_of_t
        else:
            b_const = np.asarray(b_of_t, dtype=complex)
            self.b_of_t = lambda t, _b=b_const: _b

    def apply_system(self, t: float, psi: np.ndarray) -> np.ndarray:
        return self.a @ psi

    def apply_bath(self, t: float, bath: DenseBath) -> DenseBath:
        return DenseBath(self.b_of_t(t) @ bath.vec)


class MatrixPairModel:
    """Pair model over explicit matrices, for toy systems and cross-checks."""

    def __init__(self, channels: Sequence[MatrixChannel],
                 psi0_1: np.ndarray, chi0_1: np.ndarray,
                 psi0_2: np.ndarray | None = None,
                 chi0_2: np.ndarray | None = None,
                 system_labels: tuple[str, ...] | None = None):
        self.channels = list(channels)
        self._psi1 = np.asarray(psi0_1, dtype=complex)
        self._chi1 = np.asarray(chi0_1, dtype=complex)
        self._psi2 = self._psi1 if psi0_2 is None else np.asarray(psi0_2, complex)
        self._chi2 = self._chi1 if chi0_2 is None else np.asarray(chi0_2, complex)
        d = self._psi1.shape[0]
        self.system_labels = system_labels or tuple(str(i) for i in range(d))

    def initial_pair(self, rng: np.random.Generator | None = None) -> TrajectoryPair:
        def unit(v: np.ndarray) -> np.ndarray:
            return v / np.linalg.norm(v)

        b1 = BranchState(unit(self._psi1), DenseBath(unit(self._chi1)))
        b2 = BranchState(unit(self._psi2), DenseBath(unit(self._chi2)))
        return TrajectoryPair(b1, b2, t=0.0)

    def rate_bound(self, horizon: float | None = None) -> float:
        # ||A|| * ||B(t)|| bounds the rate for unit states; bath phase rules
        # in the shipped models are unimodular so t=0 suffices.
        bound = 0.0
        for ch in self.channels:
            sa = float(np.linalg.norm(ch.a, ord=2))
            sb = float(np.linalg.norm(ch.b_of_t(0.0), ord=2))
            bound += sa * sb
        return bound

    def hamiltonian(self, t: float) -> np.ndarray:
        """H_I(t) = sum_alpha A_alpha (x) B_alpha(t) as a dense matrix."""
        return sum(np.kron(ch.a, ch.b_of_t(t)) for ch in self.channels)


def evolve_dense_batch(model: MatrixPairModel, seed: int,
                       trajectory_indices: np.ndarray, grid: np.ndarray,
                       steps_per_interval: int,
                       log_weight_cap: float = DEFAULT_LOG_WEIGHT_CAP,
                       rng_block: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Lockstep evolution of many trajectories of a dense-matrix model.

    Consumes, per trajectory and branch, the same uniform sequence as the
    per-pair functions driven by rng.branch_streams, so small ensembles can
    be cross-checked one to one.  Returns (D, aborted) with D of shape
    (n_traj, n_grid, d, d).
    """
    grid = np.asarray(grid, dtype=float)
    idx = np.asarray(trajectory_indices, dtype=np.int64)
    n = idx.size
    pairs = [model.initial_pair(rngmod.stream(seed, int(i), rngmod.ROLE_INIT))
             for i in idx]
    d = len(model.system_labels)
    db = pairs[0].branch1.bath.vec.shape[0]
    psi = np.empty((2, n, d), dtype=complex)
    chi = np.empty((2, n, db), dtype=complex)
    lam = np.zeros((2, n))
    for k, p in enumerate(pairs):
        for b, br in enumerate((p.branch1, p.branch2)):
            psi[b, k] = br.psi
            chi[b, k] = br.bath.vec
            lam[b, k] = br.log_weight
    gens = [[rngmod.stream(seed, int(i), role) for i in idx]
            for role in (rngmod.ROLE_BRANCH1, rngmod.ROLE_BRANCH2)]
    alive = np.ones(n, dtype=bool)
    n_ch = len(model.channels)
    a_mats = [ch.a for ch in model.channels]

    out = np.zeros((n, len(grid), d, d), dtype=complex)

    def emit(g: int) -> None:
        ov = np.einsum("nj,nj->n", np.conj(chi[1]), chi[0])
        w = np.exp(lam[0] + lam[1]) * ov
        out[:, g] = (w[:, None, None] * psi[0][:, :, None]
                     * np.conj(psi[1])[:, None, :])
        out[~alive, g] = 0.0

    emit(0)
    u_buf = np.empty((2, n, rng_block))
    buf_fill = 0
    buf_pos = 0
    total_steps = (len(grid) - 1) * steps_per_interval
    step_no = 0
    for g in range(1, len(grid)):
        t0 = grid[g - 1]
        dt = (grid[g] - t0) / steps_per_interval
        for k in range(steps_per_interval):
            if buf_pos == buf_fill:
                buf_fill = min(rng_block, total_steps - step_no)
                for b in range(2):
                    for m, gen in enumerate(gens[b]):
                        u_buf[b, m, :buf_fill] = gen.random(buf_fill)
                buf_pos = 0
            t_mid = t0 + (k + 0.5) * dt
            b_mats = [ch.b_of_t(t_mid) for ch in model.channels]
            for b in range(2):
                a_psi = [psi[b] @ a.T for a in a_mats]
                b_chi = [chi[b] @ bm.T for bm in b_mats]
                na = np.stack([np.linalg.norm(v, axis=1) for v in a_psi], axis=1)
                nb = np.stack([np.linalg.norm(v, axis=1) for v in b_chi], axis=1)
                rates = na * nb
                total = rates.sum(axis=1)
                if np.any(total[alive] * dt > MAX_RATE_PER_STEP):
                    raise StepSizeError("Gamma*dt exceeds the per-step bound")
                u = u_buf[b, :, buf_pos]
                cum = np.cumsum(rates, axis=1) * dt
                jumped = u < cum[:, -1]
                ch_idx = (u[:, None] >= cum).sum(axis=1)
                for alpha in range(n_ch):
                    sel = jumped & (ch_idx == alpha) & alive
                    if not np.any(sel):
                        continue
                    psi[b, sel] = (-1j) * a_psi[alpha][sel] \
                        / na[sel, alpha][:, None]
                    chi[b, sel] = b_chi[alpha][sel] / nb[sel, alpha][:, None]
                nojump = (~jumped) & alive
                lam[b, nojump] += total[nojump] * dt
            alive &= (lam[0] + lam[1]) <= log_weight_cap
            buf_pos += 1
            step_no += 1
        emit(g)
    return out, ~alive
