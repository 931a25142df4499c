"""Streaming, mergeable ensemble statistics for trajectory contributions.

Accumulators keep compensated running sums and sums of squared real and
imaginary parts for every grid point and matrix entry, plus derived series
(trace and hermiticity defect) tracked per trajectory so their standard
errors come out of the same machinery.  Merging is field-wise with the
operands ordered by their trajectory-index ranges, so any split of an
ensemble into chunks reduces to bitwise-identical totals as long as the
chunk boundaries themselves do not move.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridMismatchError(ValueError):
    """Contribution grid does not match the accumulator grid."""


class DegenerateFitError(RuntimeError):
    """Too few usable points for the variance growth fit."""


def _kahan_add(total: np.ndarray, comp: np.ndarray, value: np.ndarray) -> None:
    y = value - comp
    t = total + y
    comp[...] = (t - total) - y
    total[...] = t


@dataclass
class _Moment:
    """Compensated sum plus sum of squares of re/im parts."""

    s: np.ndarray
    s_c: np.ndarray
    sq_re: np.ndarray
    sq_re_c: np.ndarray
    sq_im: np.ndarray
    sq_im_c: np.ndarray

    @classmethod
    def zeros(cls, shape: tuple[int, ...]) -> "_Moment":
        return cls(np.zeros(shape, dtype=complex), np.zeros(shape, dtype=complex),
                   np.zeros(shape), np.zeros(shape),
                   np.zeros(shape), np.zeros(shape))

    def add_batch(self, values: np.ndarray) -> None:
        _kahan_add(self.s, self.s_c, values.sum(axis=0))
        _kahan_add(self.sq_re, self.sq_re_c, (values.real ** 2).sum(axis=0))
        _kahan_add(self.sq_im, self.sq_im_c, (values.imag ** 2).sum(axis=0))

    def merge_from(self, other: "_Moment") -> None:
        _kahan_add(self.s, self.s_c, other.s + other.s_c)
        _kahan_add(self.sq_re, self.sq_re_c, other.sq_re + other.sq_re_c)
        _kahan_add(self.sq_im, self.sq_im_c, other.sq_im + other.sq_im_c)

    def mean(self, n: int) -> np.ndarray:
        return (self.s + self.s_c) / n

    def se(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-part standard errors (sample SD / sqrt(n))."""
        m = self.mean(n)
        var_re = (self.sq_re + self.sq_re_c) / n - m.real ** 2
        var_im = (self.sq_im + self.sq_im_c) / n - m.imag ** 2
        corr = n / (n - 1)
        var_re = np.maximum(var_re, 0.0) * corr
        var_im = np.maximum(var_im, 0.0) * corr
        return np.sqrt(var_re / n), np.sqrt(var_im / n)


@dataclass
class DensityEstimate:
    """Grid of mean reduced matrices with per-entry standard errors."""

    grid: np.ndarray
    labels: tuple[str, ...]
    mean: np.ndarray          # (n_grid, d, d) complex
    se_re: np.ndarray
    se_im: np.ndarray
    n: int
    aborted: int
    trace_mean: np.ndarray    # (n_grid,) complex
    trace_se_re: np.ndarray
    trace_se_im: np.ndarray
    herm_mean: np.ndarray     # (n_grid, d, d) complex, D - D^dagger per traj
    herm_se_re: np.ndarray
    herm_se_im: np.ndarray


@dataclass
class EnsembleAccumulator:
    grid: np.ndarray
    labels: tuple[str, ...]
    traj_lo: int = 0
    traj_hi: int = 0
    n: int = 0
    aborted: int = 0
    entries: _Moment = field(default=None)  # type: ignore[assignment]
    trace: _Moment = field(default=None)    # type: ignore[assignment]
    herm: _Moment = field(default=None)     # type: ignore[assignment]

    def __post_init__(self) -> None:
        g = len(self.grid)
        d = len(self.labels)
        if self.entries is None:
            self.entries = _Moment.zeros((g, d, d))
            self.trace = _Moment.zeros((g,))
            self.herm = _Moment.zeros((g, d, d))

    def add_batch(self, contributions: np.ndarray) -> None:
        """Fold in a block of trajectories, shape (m, n_grid, d, d)."""
        g = len(self.grid)
        d = len(self.labels)
        if contributions.shape[1:] != (g, d, d):
            raise GridMismatchError(
                f"contribution shape {contributions.shape[1:]} does not match "
                f"accumulator ({g}, {d}, {d})")
        self.n += contributions.shape[0]
        self.entries.add_batch(contributions)
        tr = np.einsum("mgii->mg", contributions)
        self.trace.add_batch(tr)
        defect = contributions - np.conj(np.swapaxes(contributions, -1, -2))
        self.herm.add_batch(defect)

    def add_aborted(self, count: int) -> None:
        self.aborted += count


def accumulate(acc: EnsembleAccumulator, contributions: np.ndarray) -> EnsembleAccumulator:
    """Fold one trajectory's contribution series (n_grid, d, d) into acc."""
    acc.add_batch(np.asarray(contributions)[None, ...])
    return acc


def merge(a: EnsembleAccumulator, b: EnsembleAccumulator) -> EnsembleAccumulator:
    """Combine two accumulators; operands are ordered by trajectory range so
    the result does not depend on argument order."""
    if a.grid.shape != b.grid.shape or np.any(a.grid != b.grid):
        raise GridMismatchError("accumulator grids differ")
    if a.labels != b.labels:
        raise GridMismatchError("accumulator labels differ")
    if b.traj_lo < a.traj_lo:
        a, b = b, a
    out = EnsembleAccumulator(grid=a.grid, labels=a.labels,
                              traj_lo=a.traj_lo,
                              traj_hi=max(a.traj_hi, b.traj_hi),
                              n=a.n + b.n, aborted=a.aborted + b.aborted)
    for name in ("entries", "trace", "herm"):
        mine: _Moment = getattr(out, name)
        mine.merge_from(getattr(a, name))
        mine.merge_from(getattr(b, name))
    return out


def estimate(acc: EnsembleAccumulator) -> DensityEstimate:
    """Means and standard errors; needs at least two trajectories."""
    if acc.n < 2:
        raise ValueError("need n >= 2 trajectories to estimate errors")
    n = acc.n
    se_re, se_im = acc.entries.se(n)
    tr_se_re, tr_se_im = acc.trace.se(n)
    h_se_re, h_se_im = acc.herm.se(n)
    return DensityEstimate(
        grid=acc.grid, labels=acc.labels,
        mean=acc.entries.mean(n), se_re=se_re, se_im=se_im,
        n=n, aborted=acc.aborted,
        trace_mean=acc.trace.mean(n), trace_se_re=tr_se_re,
        trace_se_im=tr_se_im,
        herm_mean=acc.herm.mean(n), herm_se_re=h_se_re, herm_se_im=h_se_im)


def total_variance_series(acc: EnsembleAccumulator) -> np.ndarray:
    """Sum over matrix entries of sample variances (re + im) per grid point."""
    n = acc.n
    m = acc.entries.mean(n)
    var_re = np.maximum((acc.entries.sq_re + acc.entries.sq_re_c) / n
                        - m.real ** 2, 0.0)
    var_im = np.maximum((acc.entries.sq_im + acc.entries.sq_im_c) / n
                        - m.imag ** 2, 0.0)
    if n > 1:
        corr = n / (n - 1)
        var_re *= corr
        var_im *= corr
    return (var_re + var_im).sum(axis=(1, 2))


def variance_growth(acc: EnsembleAccumulator) -> float:
    """Least-squares slope of log total variance vs t over the latter half
    of the grid.  Zero-variance ensembles report rate 0.  Raises
    DegenerateFitError when fewer than 5 usable points remain."""
    v = total_variance_series(acc)
    if np.all(v == 0.0):
        return 0.0
    half = len(acc.grid) // 2
    t = np.asarray(acc.grid[half:], dtype=float)
    vv = v[half:]
    keep = vv > 0.0
    if keep.sum() < 5:
        raise DegenerateFitError(
            f"only {int(keep.sum())} positive-variance points in the "
            "latter half of the grid")
    slope = np.polyfit(t[keep], np.log(vv[keep]), 1)[0]
    return float(slope)
