"""Experiment orchestration: configs, seeded parallel ensembles, CSV files.

A run is fully determined by (config, seed): trajectory randomness is keyed
by trajectory index, trajectories are processed in fixed-size chunks whose
boundaries do not depend on the worker count, and chunk accumulators merge
in index order.  The emitted CSV is therefore bitwise reproducible for any
number of workers.

CSV schema (stable, parsers rely on the column order): t, then for every
system-matrix entry L the four columns re_L, im_L, se_re_L, se_im_L in
row-major entry order, then n and aborted.  Floats are scientific notation
with 16 significant digits.
"""

from __future__ import annotations

import math
import multiprocessing
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import rng as rngmod
from . import stats
from .engine import evolve_pair_thinning
from .jc import JCModel
from .reference import born_markov_p, jc_exact, spin_block_exact, tcl2_jc_p
from .spinbath import (INITIAL_COHERENCE, INITIAL_POPULATION, SpinBathModel,
                       pjm_fraction)

MODEL_JC = "jc"
MODEL_SPIN = "spin_bath"
STEPPER_EULER = "euler"
STEPPER_THINNING = "thinning"
REFERENCE_KINDS = ("jc_exact", "born_markov", "tcl2", "spin_block")

MAX_ABORTED_FRACTION = 1e-6
TARGET_RATE_PER_STEP = 0.01
FLOAT_FORMAT = "{:.15e}"


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class RunAbortedError(RuntimeError):
    """Too many trajectories hit the log-weight cap."""


@dataclass(frozen=True)
class RunConfig:
    model: str = MODEL_JC
    # bosonic reservoir
    gamma0_over_lambda: float = 5.0
    n_modes: int = 400
    window_factor: float = 20.0
    # spin bath
    n_spins: int = 2
    a_over_omega0: float = 0.5
    initial_state: str = INITIAL_COHERENCE
    # run shape
    t_max: float = 5.0
    n_grid: int = 25
    n_trajectories: int = 1000
    seed: int = 1
    dt: float | None = None
    steps_per_grid: int | None = None
    stepper: str = STEPPER_EULER
    workers: int = 1
    log_weight_cap: float = 700.0
    chunk_size: int = 8192
    output: str | None = None
    epsilon_cut: float = 1e-4

    def validate(self) -> "RunConfig":
        if self.model not in (MODEL_JC, MODEL_SPIN):
            raise ConfigError(f"model must be '{MODEL_JC}' or '{MODEL_SPIN}', "
                              f"got {self.model!r}")
        if self.stepper not in (STEPPER_EULER, STEPPER_THINNING):
            raise ConfigError(f"unknown stepper {self.stepper!r}")
        if self.initial_state not in (INITIAL_COHERENCE, INITIAL_POPULATION):
            raise ConfigError(f"unknown initial_state {self.initial_state!r}")
        for name in ("gamma0_over_lambda", "window_factor", "a_over_omega0",
                     "t_max", "log_weight_cap"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("n_modes", "n_spins", "n_trajectories", "workers",
                     "chunk_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.n_grid < 2:
            raise ConfigError("n_grid must be at least 2")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.steps_per_grid is not None and self.steps_per_grid < 1:
            raise ConfigError("steps_per_grid must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        if not 0.0 <= self.epsilon_cut <= 0.01:
            raise ConfigError("epsilon_cut must lie in [0, 0.01]")
        return self


_BOOL_FIELDS: set[str] = set()
_INT_FIELDS = {"n_modes", "n_spins", "n_grid", "n_trajectories", "seed",
               "steps_per_grid", "workers", "chunk_size"}
_FLOAT_FIELDS = {"gamma0_over_lambda", "window_factor", "a_over_omega0",
                 "t_max", "dt", "log_weight_cap", "epsilon_cut"}
_STR_FIELDS = {"model", "initial_state", "stepper", "output"}


def parse_config_text(text: str) -> dict[str, str]:
    """Flat 'key = value' lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        out[key] = value
    return out


def config_from_mapping(mapping: dict[str, str],
                        base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    updates = {}
    for key, value in mapping.items():
        if key in _INT_FIELDS:
            try:
                updates[key] = int(value)
            except ValueError as exc:
                raise ConfigError(f"{key}: expected integer, got {value!r}") \
                    from exc
        elif key in _FLOAT_FIELDS:
            try:
                updates[key] = float(value)
            except ValueError as exc:
                raise ConfigError(f"{key}: expected number, got {value!r}") \
                    from exc
        elif key in _STR_FIELDS:
            updates[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return replace(cfg, **updates).validate()


def load_config(path: str, overrides: dict[str, str] | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        mapping = parse_config_text(fh.read())
    if overrides:
        mapping.update(overrides)
    return config_from_mapping(mapping)


def build_model(cfg: RunConfig):
    if cfg.model == MODEL_JC:
        return JCModel.from_parameters(cfg.gamma0_over_lambda, cfg.n_modes,
                                       cfg.window_factor, horizon=cfg.t_max)
    return SpinBathModel.from_parameters(cfg.n_spins, cfg.a_over_omega0,
                                         cfg.initial_state)


def time_grid(cfg: RunConfig) -> np.ndarray:
    return np.linspace(0.0, cfg.t_max, cfg.n_grid)


def resolve_steps_per_interval(cfg: RunConfig, model) -> int:
    """Uniform substeps per grid interval honoring the rate resolution."""
    bound = model.rate_bound()
    interval = cfg.t_max / (cfg.n_grid - 1)
    if cfg.steps_per_grid is not None:
        steps = cfg.steps_per_grid
    else:
        target = cfg.dt if cfg.dt is not None \
            else TARGET_RATE_PER_STEP / bound
        steps = max(1, math.ceil(interval / target))
    dt = interval / steps
    if bound * dt > 0.05:
        raise ConfigError(
            f"rate bound {bound:.4g} times step {dt:.4g} exceeds 0.05; "
            f"need at least {math.ceil(interval * bound / 0.05)} steps "
            "per grid interval")
    return steps


def entry_labels(system_labels: Sequence[str]) -> list[str]:
    return [a + b for a in system_labels for b in system_labels]


# --- worker plumbing --------------------------------------------------------

_WORKER: dict = {}


def _init_worker(cfg: RunConfig) -> None:
    model = build_model(cfg)
    _WORKER["cfg"] = cfg
    _WORKER["model"] = model
    _WORKER["grid"] = time_grid(cfg)
    _WORKER["steps"] = resolve_steps_per_interval(cfg, model)


def _simulate_chunk(bounds: tuple[int, int]) -> stats.EnsembleAccumulator:
    lo, hi = bounds
    cfg: RunConfig = _WORKER["cfg"]
    model = _WORKER["model"]
    grid: np.ndarray = _WORKER["grid"]
    steps: int = _WORKER["steps"]
    indices = np.arange(lo, hi, dtype=np.int64)
    if cfg.stepper == STEPPER_EULER:
        contrib, aborted = model.evolve_batch(cfg.seed, indices, grid, steps,
                                              cfg.log_weight_cap)
    else:
        rows = []
        aborted = np.zeros(len(indices), dtype=bool)
        for k, i in enumerate(indices):
            rng1, rng2 = rngmod.branch_streams(cfg.seed, int(i))
            init = rngmod.stream(cfg.seed, int(i), rngmod.ROLE_INIT)
            outcome = evolve_pair_thinning(model, grid, rng1, rng2,
                                           init_rng=init,
                                           log_weight_cap=cfg.log_weight_cap)
            rows.append(outcome.contributions)
            aborted[k] = outcome.aborted
        contrib = np.stack(rows)
    acc = stats.EnsembleAccumulator(grid=grid, labels=model.system_labels,
                                    traj_lo=lo, traj_hi=hi)
    kept = ~aborted
    if np.any(kept):
        acc.add_batch(contrib[kept])
    acc.add_aborted(int(aborted.sum()))
    return acc


@dataclass
class SimulationResult:
    config: RunConfig
    estimate: stats.DensityEstimate
    accumulator: stats.EnsembleAccumulator
    rate_bound: float
    output_path: str | None = None


def run_simulate(cfg: RunConfig) -> SimulationResult:
    cfg = cfg.validate()
    model = build_model(cfg)  # warms caches before fork
    bound = model.rate_bound()
    resolve_steps_per_interval(cfg, model)
    chunks = [(lo, min(lo + cfg.chunk_size, cfg.n_trajectories))
              for lo in range(0, cfg.n_trajectories, cfg.chunk_size)]
    acc: stats.EnsembleAccumulator | None = None
    if cfg.workers == 1:
        _init_worker(cfg)
        for bounds in chunks:
            piece = _simulate_chunk(bounds)
            acc = piece if acc is None else stats.merge(acc, piece)
    else:
        with multiprocessing.Pool(processes=cfg.workers,
                                  initializer=_init_worker,
                                  initargs=(cfg,)) as pool:
            for piece in pool.imap(_simulate_chunk, chunks):
                acc = piece if acc is None else stats.merge(acc, piece)
    assert acc is not None
    if acc.aborted > MAX_ABORTED_FRACTION * cfg.n_trajectories:
        raise RunAbortedError(
            f"{acc.aborted} of {cfg.n_trajectories} trajectories hit the "
            f"log-weight cap {cfg.log_weight_cap}")
    est = stats.estimate(acc)
    path = None
    if cfg.output:
        path = cfg.output
        write_density_csv(path, est)
    return SimulationResult(config=cfg, estimate=est, accumulator=acc,
                            rate_bound=bound, output_path=path)


# --- reference curves -------------------------------------------------------


@dataclass
class ReferenceResult:
    config: RunConfig
    kind: str
    estimate: stats.DensityEstimate
    discarded_weight: float | None = None
    output_path: str | None = None


def run_reference(cfg: RunConfig, kind: str) -> ReferenceResult:
    cfg = cfg.validate()
    if kind not in REFERENCE_KINDS:
        raise ConfigError(f"unknown reference {kind!r}; "
                          f"choose from {', '.join(REFERENCE_KINDS)}")
    grid = time_grid(cfg)
    discarded = None
    if kind == "spin_block":
        if cfg.model != MODEL_SPIN:
            raise ConfigError("spin_block reference needs model = spin_bath")
        labels = ("+", "-")
        res = spin_block_exact(
            SpinBathModel.from_parameters(cfg.n_spins,
                                          cfg.a_over_omega0).params,
            grid, eps_cut=cfg.epsilon_cut)
        mean = np.zeros((len(grid), 2, 2), dtype=complex)
        mean[:, 0, 1] = res.coherence
        discarded = res.discarded_weight
    else:
        if cfg.model != MODEL_JC:
            raise ConfigError(f"{kind} reference needs model = jc")
        labels = ("e", "g")
        if kind == "jc_exact":
            p = jc_exact(cfg.gamma0_over_lambda, 1.0, grid).p
        elif kind == "born_markov":
            p = born_markov_p(cfg.gamma0_over_lambda, grid)
        else:
            p = tcl2_jc_p(cfg.gamma0_over_lambda, 1.0, grid)
        mean = np.zeros((len(grid), 2, 2), dtype=complex)
        mean[:, 0, 0] = p
        mean[:, 1, 1] = 1.0 - p
    zeros = np.zeros_like(mean, dtype=float)
    est = stats.DensityEstimate(
        grid=grid, labels=labels, mean=mean, se_re=zeros, se_im=zeros.copy(),
        n=0, aborted=0,
        trace_mean=np.einsum("gii->g", mean),
        trace_se_re=np.zeros(len(grid)), trace_se_im=np.zeros(len(grid)),
        herm_mean=mean - np.conj(np.swapaxes(mean, -1, -2)),
        herm_se_re=zeros.copy(), herm_se_im=zeros.copy())
    path = None
    if cfg.output:
        path = cfg.output
        write_density_csv(path, est)
    return ReferenceResult(config=cfg, kind=kind, estimate=est,
                           discarded_weight=discarded, output_path=path)


# --- CSV --------------------------------------------------------------------


def write_density_csv(path: str, est: stats.DensityEstimate) -> None:
    labels = entry_labels(est.labels)
    d = len(est.labels)
    cols = ["t"]
    for lab in labels:
        cols += [f"re_{lab}", f"im_{lab}", f"se_re_{lab}", f"se_im_{lab}"]
    cols += ["n", "aborted"]
    lines = [",".join(cols)]
    for g, t in enumerate(est.grid):
        vals = [FLOAT_FORMAT.format(t)]
        for i in range(d):
            for j in range(d):
                vals += [FLOAT_FORMAT.format(est.mean[g, i, j].real),
                         FLOAT_FORMAT.format(est.mean[g, i, j].imag),
                         FLOAT_FORMAT.format(est.se_re[g, i, j]),
                         FLOAT_FORMAT.format(est.se_im[g, i, j])]
        vals += [str(est.n), str(est.aborted)]
        lines.append(",".join(vals))
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


@dataclass
class ParsedRun:
    grid: np.ndarray
    entry_labels: list[str]
    re: np.ndarray      # (n_grid, n_entries)
    im: np.ndarray
    se_re: np.ndarray
    se_im: np.ndarray
    n: int
    aborted: int

    def column(self, label: str, part: str = "re") -> np.ndarray:
        k = self.entry_labels.index(label)
        return getattr(self, part)[:, k]


def read_density_csv(path: str) -> ParsedRun:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    if header[0] != "t" or header[-2:] != ["n", "aborted"]:
        raise ValueError(f"{path}: unexpected header {header[:3]}...")
    body = header[1:-2]
    if len(body) % 4 != 0:
        raise ValueError(f"{path}: entry columns not in groups of four")
    labels = [c[3:] for c in body[0::4]]
    n_e = len(labels)
    rows = [ln.split(",") for ln in lines[1:]]
    g = len(rows)
    grid = np.array([float(r[0]) for r in rows])
    data = np.array([[float(x) for x in r[1:1 + 4 * n_e]] for r in rows])
    data = data.reshape(g, n_e, 4)
    return ParsedRun(grid=grid, entry_labels=labels,
                     re=data[:, :, 0], im=data[:, :, 1],
                     se_re=data[:, :, 2], se_im=data[:, :, 3],
                     n=int(rows[0][-2]), aborted=int(rows[0][-1]))


# --- compare ----------------------------------------------------------------


@dataclass
class CompareReport:
    grid: np.ndarray
    entry_labels: list[str]
    z_re: np.ndarray   # (n_grid, n_entries)
    z_im: np.ndarray
    max_abs_z: float
    frac_within_4: float

    def frac_within(self, limit: float) -> float:
        z = np.concatenate([self.z_re.ravel(), self.z_im.ravel()])
        return float(np.mean(np.abs(z) <= limit))

    def passes(self, z_limit: float = 4.0, min_frac: float = 0.95,
               max_z: float | None = None) -> bool:
        ok = self.frac_within(z_limit) >= min_frac
        if max_z is not None:
            ok = ok and self.max_abs_z <= max_z
        return ok


def _z_scores(diff: np.ndarray, se: np.ndarray) -> np.ndarray:
    z = np.zeros_like(diff)
    nonzero = se > 0.0
    z[nonzero] = diff[nonzero] / se[nonzero]
    exact = (~nonzero) & (diff != 0.0)
    z[exact] = np.inf * np.sign(diff[exact])
    return z


def run_compare(sim_path: str, ref_path: str) -> CompareReport:
    sim = read_density_csv(sim_path)
    ref = read_density_csv(ref_path)
    if sim.grid.shape != ref.grid.shape or np.any(sim.grid != ref.grid):
        raise ValueError("simulation and reference grids differ")
    if sim.entry_labels != ref.entry_labels:
        raise ValueError("simulation and reference entry labels differ")
    z_re = _z_scores(sim.re - ref.re, sim.se_re)
    z_im = _z_scores(sim.im - ref.im, sim.se_im)
    allz = np.concatenate([z_re.ravel(), z_im.ravel()])
    report = CompareReport(
        grid=sim.grid, entry_labels=sim.entry_labels, z_re=z_re, z_im=z_im,
        max_abs_z=float(np.max(np.abs(allz))),
        frac_within_4=float(np.mean(np.abs(allz) <= 4.0)))
    return report


# --- P(j, m) table ----------------------------------------------------------


def pjm_table_rows(n_spins: int) -> list[tuple[float, float, float, float]]:
    """(j, per-pair P, ladder weight (2j+1) P, exact cumulative) per j."""
    from fractions import Fraction

    rows = []
    cum_frac = Fraction(0)
    for two_j in range(n_spins % 2, n_spins + 1, 2):
        p = pjm_fraction(n_spins, two_j)
        w = (two_j + 1) * p
        cum_frac += w
        rows.append((two_j / 2.0, float(p), float(w), float(cum_frac)))
    assert cum_frac == 1
    return rows


def run_pjm_table(n_spins: int, output: str | None = None
                  ) -> list[tuple[float, float, float, float]]:
    rows = pjm_table_rows(n_spins)
    if output:
        lines = ["j,p_per_pair,ladder_weight,cumulative"]
        for j, p, w, c in rows:
            lines.append(",".join([f"{j:g}", FLOAT_FORMAT.format(p),
                                   FLOAT_FORMAT.format(w),
                                   FLOAT_FORMAT.format(c)]))
        with open(output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    return rows
