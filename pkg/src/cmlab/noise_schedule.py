"""Forward-process noise schedules and the uniform training partition.

A noise schedule is a pair of functions ``(alpha(t), sigma2(t))`` defining
the Gaussian conditional law of the forward process,

    x_t | x_0  ~  N(alpha(t) * x_0, sigma2(t) * I),

with initial conditions ``alpha(0) = 1`` and ``sigma2(0) = 0``.  The
equivalent SDE coefficients are

    h(t)  = d log alpha(t) / dt,
    g2(t) = d sigma2(t) / dt - 2 h(t) sigma2(t).

Two closed-form schedules are built in:

* ``make_ou``: alpha = exp(-t), sigma2 = 1 - exp(-2t), i.e. (h, g2) = (-1, 2)
  (an Ornstein-Uhlenbeck / variance-preserving process);
* ``make_ve``: alpha = 1, sigma2 = t**2, i.e. (h, g2) = (0, 2t)
  (a variance-exploding process).

Custom schedules are supplied as tabulated ``(t, alpha, sigma2)`` columns and
interpolated with a monotone cubic; their SDE coefficients come from central
finite differences.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import NumericError

__all__ = [
    "NoiseSchedule",
    "TrainingPartition",
    "make_ou",
    "make_ve",
    "make_custom",
    "custom_from_csv",
    "drift_diffusion",
    "contraction",
]


@dataclass(frozen=True, slots=True, eq=False)
class NoiseSchedule:
    """Signal scale ``alpha(t)`` and noise variance ``sigma2(t)``.

    Parameters
    ----------
    alpha, sigma2 : callable
        Vectorized functions of time. ``alpha`` must stay positive and
        ``sigma2`` nondecreasing with ``alpha(0) = 1``, ``sigma2(0) = 0``.
    kind : str
        One of ``"ou"``, ``"ve"``, ``"custom"``.
    t_max : float or None
        Upper end of the valid time domain; ``None`` means unbounded
        (closed-form schedules are valid wherever their formulas are).
    """

    alpha: Callable
    sigma2: Callable
    kind: str
    t_max: float | None = None
    # Closed-form (h, g2) for the built-in kinds; None selects finite
    # differences.
    _closed_drift: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("ou", "ve", "custom"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        a0 = float(np.asarray(self.alpha(0.0)))
        s0 = float(np.asarray(self.sigma2(0.0)))
        if not math.isclose(a0, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"alpha(0) must be 1, got {a0!r}")
        if abs(s0) > 1e-12:
            raise ValueError(f"sigma2(0) must be 0, got {s0!r}")

    def check_time(self, t) -> np.ndarray:
        """Validate ``t`` against the schedule domain and return it as array."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise NumericError(f"time must be >= 0, got {t!r}")
        if self.t_max is not None and np.any(t > self.t_max * (1 + 1e-12)):
            raise NumericError(
                f"time {t!r} outside the schedule domain [0, {self.t_max}]"
            )
        return t

    def sigma(self, t):
        """Standard deviation ``sqrt(sigma2(t))``."""
        return np.sqrt(self.sigma2(t))


def make_ou() -> NoiseSchedule:
    """Ornstein-Uhlenbeck schedule: ``alpha = exp(-t)``, ``sigma2 = 1 - exp(-2t)``."""

    def alpha(t):
        return np.exp(-np.asarray(t, dtype=float))

    def sigma2(t):
        # -expm1 keeps full precision for small t where 1 - exp(-2t) cancels.
        return -np.expm1(-2.0 * np.asarray(t, dtype=float))

    def closed_drift(t):
        t = np.asarray(t, dtype=float)
        return -np.ones_like(t), 2.0 * np.ones_like(t)

    return NoiseSchedule(alpha, sigma2, kind="ou", _closed_drift=closed_drift)


def make_ve() -> NoiseSchedule:
    """Variance-exploding schedule: ``alpha = 1``, ``sigma2 = t**2``."""

    def alpha(t):
        return np.ones_like(np.asarray(t, dtype=float))

    def sigma2(t):
        t = np.asarray(t, dtype=float)
        return t * t

    def closed_drift(t):
        t = np.asarray(t, dtype=float)
        return np.zeros_like(t), 2.0 * t

    return NoiseSchedule(alpha, sigma2, kind="ve", _closed_drift=closed_drift)


def make_custom(t, alpha_values, sigma2_values) -> NoiseSchedule:
    """Schedule from tabulated values, interpolated with a monotone cubic.

    The table must start at ``t = 0`` with ``alpha = 1`` and ``sigma2 = 0``,
    keep ``alpha`` positive, and keep ``sigma2`` nondecreasing.
    """
    t = np.asarray(t, dtype=float)
    a = np.asarray(alpha_values, dtype=float)
    s2 = np.asarray(sigma2_values, dtype=float)
    if t.ndim != 1 or t.shape != a.shape or t.shape != s2.shape:
        raise ValueError("t, alpha, sigma2 must be equal-length 1-D arrays")
    if t.size < 2:
        raise ValueError("need at least two tabulated points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("tabulated times must be strictly increasing")
    if abs(t[0]) > 1e-12:
        raise ValueError("tabulated times must start at 0")
    if np.any(a <= 0):
        raise ValueError("alpha must be positive everywhere")
    if np.any(np.diff(s2) < 0):
        raise ValueError("sigma2 must be nondecreasing")
    alpha_i = PchipInterpolator(t, a, extrapolate=True)
    sigma2_i = PchipInterpolator(t, s2, extrapolate=True)
    return NoiseSchedule(
        lambda x: alpha_i(np.asarray(x, dtype=float)),
        lambda x: sigma2_i(np.asarray(x, dtype=float)),
        kind="custom",
        t_max=float(t[-1]),
    )


def custom_from_csv(path) -> NoiseSchedule:
    """Load a custom schedule from a CSV file with header ``t,alpha,sigma2``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty schedule file") from None
        expected = ["t", "alpha", "sigma2"]
        if [h.strip() for h in header] != expected:
            raise ValueError(
                f"{path}: header must be exactly {','.join(expected)!r}, "
                f"got {','.join(header)!r}"
            )
        rows = [[float(cell) for cell in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return make_custom(arr[:, 0], arr[:, 1], arr[:, 2])


def drift_diffusion(schedule: NoiseSchedule, t):
    """SDE coefficients ``(h(t), g2(t))`` of the schedule.

    Built-in kinds use their closed forms; custom schedules use central
    finite differences with step ``min(1e-6, t/2)`` (which requires t > 0).
    """
    t = schedule.check_time(t)
    if schedule._closed_drift is not None:
        return schedule._closed_drift(t)
    if np.any(t <= 0):
        raise NumericError(
            "finite-difference drift of a custom schedule needs t > 0"
        )
    step = np.minimum(1e-6, t / 2.0)
    a_plus = np.asarray(schedule.alpha(t + step), dtype=float)
    a_minus = np.asarray(schedule.alpha(t - step), dtype=float)
    h = (np.log(a_plus) - np.log(a_minus)) / (2.0 * step)
    s2_plus = np.asarray(schedule.sigma2(t + step), dtype=float)
    s2_minus = np.asarray(schedule.sigma2(t - step), dtype=float)
    ds2 = (s2_plus - s2_minus) / (2.0 * step)
    g2 = ds2 - 2.0 * h * np.asarray(schedule.sigma2(t), dtype=float)
    return h, g2


def contraction(schedule: NoiseSchedule, t):
    """Contraction factor ``alpha(t)**2 / sigma2(t)``; undefined at t = 0."""
    t = schedule.check_time(t)
    if np.any(t <= 0):
        raise NumericError("contraction factor diverges at t = 0")
    a = np.asarray(schedule.alpha(t), dtype=float)
    s2 = np.asarray(schedule.sigma2(t), dtype=float)
    return a * a / s2


@dataclass(frozen=True, slots=True)
class TrainingPartition:
    """Uniform grid ``t_i = i * delta`` for ``i = 0..m``."""

    delta: float
    m: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta!r}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m!r}")

    @property
    def horizon(self) -> float:
        return self.delta * self.m

    def points(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.delta

    def time_of(self, i: int) -> float:
        if not 0 <= i <= self.m:
            raise NumericError(f"partition index {i} outside 0..{self.m}")
        return i * self.delta
