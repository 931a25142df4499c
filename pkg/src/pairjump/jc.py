"""Two-state atom in a zero-temperature Bosonic reservoir (damped JC model).

The reservoir has a Lorentzian spectral density centered on the atomic
transition and is discretized into modes for simulation.  Starting from
|e> (x) |0> the two jump channels (sigma_+ with the photon-absorbing bath
operator, sigma_- with its adjoint) fire in strict alternation, so the
bath never leaves the span of the vacuum and a single one-photon
wavepacket.  The bath state is therefore stored as M+1 complex
amplitudes, which makes the representation exact rather than truncated.

Working units put lambda = 1; gamma0 enters as the ratio gamma0/lambda.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .engine import (MAX_RATE_PER_STEP, BranchState, StepSizeError,
                     TrajectoryPair)


class SectorViolationError(ValueError):
    """Operation would create a second excitation in the restricted bath."""


class RecurrenceTimeError(ValueError):
    """Mode spacing too coarse for the requested horizon."""


@dataclass(frozen=True)
class LorentzianSpectrum:
    """J(omega) = gamma0 lambda^2 / (2 pi ((omega0-omega)^2 + lambda^2))."""

    gamma0: float
    lam: float = 1.0

    def __post_init__(self) -> None:
        if self.gamma0 <= 0 or self.lam <= 0:
            raise ValueError("gamma0 and lambda must be positive")

    def density(self, detuning: np.ndarray | float) -> np.ndarray | float:
        """Spectral density as a function of detuning omega0 - omega."""
        return (self.gamma0 * self.lam ** 2 / (2.0 * np.pi)
                / (np.asarray(detuning) ** 2 + self.lam ** 2))


@dataclass(frozen=True)
class DiscretizedReservoir:
    """Midpoint-rule mode grid: detunings delta_k and couplings g_k."""

    detunings: np.ndarray
    couplings: np.ndarray

    @property
    def coupling_sq_sum(self) -> float:
        return float(np.sum(self.couplings ** 2))

    @property
    def recurrence_time(self) -> float:
        spacing = abs(self.detunings[1] - self.detunings[0])
        return 2.0 * np.pi / spacing


def discretize(spectrum: LorentzianSpectrum, window_factor: float,
               n_modes: int, horizon: float) -> DiscretizedReservoir:
    """Midpoint grid of n_modes modes on [-W, W], W = window_factor * lambda.

    g_k^2 = J(delta_k) * dW.  Fails if the recurrence time 2 pi / dW does
    not exceed the simulation horizon, naming the smallest adequate mode
    count.
    """
    if n_modes < 2:
        raise ValueError("need at least 2 modes")
    if window_factor <= 0:
        raise ValueError("window_factor must be positive")
    w = window_factor * spectrum.lam
    spacing = 2.0 * w / n_modes
    if 2.0 * np.pi / spacing <= horizon:
        n_min = int(np.ceil(2.0 * w * horizon / (2.0 * np.pi))) + 1
        raise RecurrenceTimeError(
            f"recurrence time {2.0 * np.pi / spacing:.4g} does not exceed the "
            f"horizon {horizon:.4g}; need at least {n_min} modes")
    detunings = -w + (np.arange(n_modes) + 0.5) * spacing
    couplings = np.sqrt(spectrum.density(detunings) * spacing)
    return DiscretizedReservoir(detunings=detunings, couplings=couplings)


def bath_correlation(spectrum: LorentzianSpectrum, tau: float,
                     window: float | None = None) -> complex:
    """Reservoir correlation integral J(omega) e^{i (omega0-omega) tau}
    by quadrature over detuning, optionally restricted to |detuning| <=
    window.  The density is even in the detuning, so the result is real.
    """
    from scipy.integrate import quad

    upper = np.inf if window is None else float(window)
    val, _ = quad(lambda d: spectrum.density(d), 0.0, upper,
                  weight="cos", wvar=float(tau), limit=400)
    return complex(2.0 * val, 0.0)


class JCBathState:
    """Vacuum amplitude c0 plus one-photon mode amplitudes f_k."""

    __slots__ = ("c0", "f")

    def __init__(self, c0: complex, f: np.ndarray):
        self.c0 = complex(c0)
        self.f = np.asarray(f, dtype=complex)

    @classmethod
    def vacuum(cls, n_modes: int) -> "JCBathState":
        return cls(1.0, np.zeros(n_modes, dtype=complex))

    def norm(self) -> float:
        return float(np.sqrt(abs(self.c0) ** 2
                             + np.sum(np.abs(self.f) ** 2)))

    def scaled(self, factor: complex) -> "JCBathState":
        return JCBathState(self.c0 * factor, self.f * factor)

    def inner(self, other: "JCBathState") -> complex:
        """<self|other>."""
        return (np.conj(self.c0) * other.c0
                + complex(np.vdot(self.f, other.f)))


def apply_B(t: float, reservoir: DiscretizedReservoir,
            chi: JCBathState) -> JCBathState:
    """Photon absorption: one-photon amplitudes collapse onto the vacuum."""
    phases = np.exp(1j * reservoir.detunings * t)
    c0 = complex(np.sum(reservoir.couplings * phases * chi.f))
    return JCBathState(c0, np.zeros_like(chi.f))


def apply_Bdag(t: float, reservoir: DiscretizedReservoir,
               chi: JCBathState) -> JCBathState:
    """Photon creation from the vacuum component.

    The restricted representation has no two-photon sector, so a nonzero
    one-photon input is refused.
    """
    if np.any(chi.f != 0):
        raise SectorViolationError(
            "bath creation on a state with one-photon amplitude would leave "
            "the {vacuum, one photon} sector")
    f = reservoir.couplings * np.exp(-1j * reservoir.detunings * t) * chi.c0
    return JCBathState(0.0, f)


SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)   # |e><g|
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |g><e|


class _AbsorptionChannel:
    """sigma_+ on the atom, B(t) on the reservoir."""

    def __init__(self, reservoir: DiscretizedReservoir):
        self.reservoir = reservoir

    def apply_system(self, t: float, psi: np.ndarray) -> np.ndarray:
        return SIGMA_PLUS @ psi

    def apply_bath(self, t: float, bath: JCBathState) -> JCBathState:
        return apply_B(t, self.reservoir, bath)


class _EmissionChannel:
    """sigma_- on the atom, B^dagger(t) on the reservoir."""

    def __init__(self, reservoir: DiscretizedReservoir):
        self.reservoir = reservoir

    def apply_system(self, t: float, psi: np.ndarray) -> np.ndarray:
        return SIGMA_MINUS @ psi

    def apply_bath(self, t: float, bath: JCBathState) -> JCBathState:
        return apply_Bdag(t, self.reservoir, bath)


def jc_initial_pair(n_modes: int) -> TrajectoryPair:
    """Both branches start in |e> (x) vacuum with zero log-weight."""
    excited = np.array([1.0, 0.0], dtype=complex)
    b1 = BranchState(excited.copy(), JCBathState.vacuum(n_modes))
    b2 = BranchState(excited.copy(), JCBathState.vacuum(n_modes))
    return TrajectoryPair(b1, b2, t=0.0)


class JCModel:
    """Pair-process model of the damped JC atom, exact in the one-photon
    sector.  system_labels index the atomic basis (e, g)."""

    system_labels = ("e", "g")

    def __init__(self, spectrum: LorentzianSpectrum,
                 reservoir: DiscretizedReservoir):
        self.spectrum = spectrum
        self.reservoir = reservoir
        self.channels = [_AbsorptionChannel(reservoir),
                         _EmissionChannel(reservoir)]
        self.coupling_norm = float(np.sqrt(reservoir.coupling_sq_sum))

    @classmethod
    def from_parameters(cls, gamma0_over_lambda: float, n_modes: int,
                        window_factor: float, horizon: float) -> "JCModel":
        spectrum = LorentzianSpectrum(gamma0=gamma0_over_lambda, lam=1.0)
        reservoir = discretize(spectrum, window_factor, n_modes, horizon)
        return cls(spectrum, reservoir)

    def initial_pair(self, rng: np.random.Generator | None = None) -> TrajectoryPair:
        return jc_initial_pair(len(self.reservoir.couplings))

    def rate_bound(self) -> float:
        # Along trajectories from |e>(x)|0> exactly one channel is active
        # at a time and |kappa(tau)| <= sum g^2, so sqrt(sum g^2) bounds
        # the total rate.
        return self.coupling_norm

    def correlation_table(self, dt: float, n_steps: int) -> np.ndarray:
        """kappa(n dt) = sum_k g_k^2 exp(i delta_k n dt) for n = 0..n_steps."""
        taus = np.arange(n_steps + 1) * dt
        phases = np.exp(1j * np.outer(taus, self.reservoir.detunings))
        return phases @ (self.reservoir.couplings ** 2)

    def evolve_batch(self, seed: int, trajectory_indices: np.ndarray,
                     grid: np.ndarray, steps_per_interval: int,
                     log_weight_cap: float = 700.0):
        return evolve_jc_batch(self, seed, trajectory_indices, grid,
                               steps_per_interval, log_weight_cap)


def evolve_jc_batch(model: JCModel, seed: int,
                    trajectory_indices: np.ndarray, grid: np.ndarray,
                    steps_per_interval: int, log_weight_cap: float = 700.0,
                    rng_block: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Lockstep evolution of a block of JC trajectories.

    Exploits the strict channel alternation: a branch is either
    (excited, vacuum) or (ground, one-photon wavepacket created at a known
    step), so the whole branch state is an integer tag, one complex phase
    and the log-weight.  Rates and overlaps come from a precomputed
    correlation table on multiples of the step, which matches the generic
    engine to floating-point association.  Consumes the same per-branch
    uniform streams as the generic engine, one draw per step.

    Returns (D, aborted): D has shape (n_traj, n_grid, 2, 2).
    """
    grid = np.asarray(grid, dtype=float)
    idx = np.asarray(trajectory_indices, dtype=np.int64)
    n = idx.size
    n_grid = len(grid)
    total_steps = (n_grid - 1) * steps_per_interval
    dt = (grid[-1] - grid[0]) / total_steps
    big_g = model.coupling_norm
    kappa = model.correlation_table(dt, total_steps)
    kappa_abs = np.abs(kappa)
    if big_g * dt > MAX_RATE_PER_STEP:
        raise StepSizeError(
            f"Gamma*dt = {big_g * dt:.4g} exceeds {MAX_RATE_PER_STEP}")

    # tag < 0: excited atom, vacuum bath; tag = s >= 0: ground atom plus a
    # wavepacket created at step s. z carries every accumulated phase.
    tag = np.full((2, n), -1, dtype=np.int64)
    z = np.ones((2, n), dtype=complex)
    lam = np.zeros((2, n))
    alive = np.ones(n, dtype=bool)
    gens = [[rngmod.stream(seed, int(i), role) for i in idx]
            for role in (rngmod.ROLE_BRANCH1, rngmod.ROLE_BRANCH2)]

    out = np.zeros((n, n_grid, 2, 2), dtype=complex)

    def emit(g: int) -> None:
        both_vac = (tag[0] < 0) & (tag[1] < 0)
        both_ph = (tag[0] >= 0) & (tag[1] >= 0)
        ov = np.zeros(n, dtype=complex)
        ov[both_vac] = 1.0
        if np.any(both_ph):
            delta = tag[1, both_ph] - tag[0, both_ph]
            k = kappa[np.abs(delta)] / big_g ** 2
            ov[both_ph] = np.where(delta >= 0, k, np.conj(k))
        val = z[0] * np.conj(z[1]) * np.exp(lam[0] + lam[1]) * ov
        val[~alive] = 0.0
        rows = np.arange(n)
        s1 = (tag[0] >= 0).astype(np.int64)  # 0 = e, 1 = g
        s2 = (tag[1] >= 0).astype(np.int64)
        out[rows, g, s1, s2] = val

    emit(0)
    u_buf = np.empty((2, n, rng_block))
    buf_fill = 0
    buf_pos = 0
    step_no = 0
    for g in range(1, n_grid):
        for _k in range(steps_per_interval):
            if buf_pos == buf_fill:
                buf_fill = min(rng_block, total_steps - step_no)
                for b in range(2):
                    for m, gen in enumerate(gens[b]):
                        u_buf[b, m, :buf_fill] = gen.random(buf_fill)
                buf_pos = 0
            for b in range(2):
                vac = tag[b] < 0
                rate = np.empty(n)
                rate[vac] = big_g
                ph = ~vac
                if np.any(ph):
                    rate[ph] = kappa_abs[step_no - tag[b, ph]] / big_g
                u = u_buf[b, :, buf_pos]
                jump = (u < rate * dt) & alive
                if np.any(jump):
                    emit_ph = jump & vac
                    absorb = jump & ph
                    z[b, emit_ph] *= -1j
                    tag[b, emit_ph] = step_no
                    if np.any(absorb):
                        kap = kappa[step_no - tag[b, absorb]]
                        z[b, absorb] *= -1j * kap / np.abs(kap)
                        tag[b, absorb] = -1
                nojump = (~jump) & alive
                lam[b, nojump] += rate[nojump] * dt
            alive &= (lam[0] + lam[1]) <= log_weight_cap
            buf_pos += 1
            step_no += 1
        emit(g)
    return out, ~alive
