"""Coefficient sequences for the intermediate gradient method and its rate bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

C1 = 4.0 * math.sqrt(2.0)
C2 = 16.0 * math.sqrt(2.0)
C3 = 48.0
C4 = 4.0 * math.sqrt(3.0)

# noiseless beta_i = L would break beta_i > L; the perturbation is below every tolerance
SIGMA0_BETA_FACTOR = 1.0 + 1e-12
REL_TOL = 1e-12


def default_ab(p: float) -> tuple[float, float]:
    """Coefficients ``a = 2^{(2p-1)/2}``, ``b = 2^{(5-2p)/4} p^{(1-2p)/2}``."""
    if not 1 <= p <= 2:
        raise ValueError(f"p must lie in [1, 2], got {p}")
    return 2.0 ** ((2 * p - 1) / 2), 2.0 ** ((5 - 2 * p) / 4) * p ** ((1 - 2 * p) / 2)


@dataclass(frozen=True)
class ScheduleParams:
    p: float
    L: float
    sigma: float = 0.0
    R: float = 1.0
    a: Optional[float] = None
    b: Optional[float] = None

    def __post_init__(self):
        a0, b0 = default_ab(self.p)
        if self.a is None:
            object.__setattr__(self, "a", a0)
        if self.b is None:
            object.__setattr__(self, "b", b0)
        if self.a < 1 or self.b < 0:
            raise ValueError("need a >= 1 and b >= 0")
        if not self.L > 0 or self.sigma < 0 or not self.R > 0:
            raise ValueError("need L > 0, sigma >= 0, R > 0")


class Schedule:
    """Closed-form ``alpha_i, beta_i, B_i`` plus memoised prefix sums ``A_k``.

    The coefficient methods accept scalars or integer arrays. One instance per
    engine run; after the run it may be shared read-only.
    """

    def __init__(self, params: ScheduleParams):
        self.params = params
        self._A: list[float] = []
        self._run = (0.0, 0.0)

    @classmethod
    def default(cls, p: float, L: float, sigma: float = 0.0, R: float = 1.0) -> "Schedule":
        return cls(ScheduleParams(p, L, sigma, R))

    @property
    def L(self) -> float:
        return self.params.L

    def alpha(self, i):
        p, a = self.params.p, self.params.a
        return (1.0 / a) * ((np.asarray(i, dtype=float) + p) / p) ** (p - 1)

    def beta(self, i):
        pr = self.params
        i = np.asarray(i, dtype=float)
        if pr.sigma == 0:
            return pr.L * SIGMA0_BETA_FACTOR + 0.0 * i
        return pr.L + (pr.b * pr.sigma / pr.R) * (i + pr.p + 1) ** ((2 * pr.p - 1) / 2)

    def B(self, i):
        return self.params.a * self.alpha(i) ** 2

    def coefficients(self, i: int) -> tuple[float, float, float]:
        return float(self.alpha(i)), float(self.beta(i)), float(self.B(i))

    def tau(self, k: int) -> float:
        return float(self.alpha(k + 1) / self.B(k + 1))

    def partial_sum_A(self, k: int) -> float:
        if k < 0:
            raise ValueError("k must be nonnegative")
        self._extend(k)
        return self._A[k]

    def prefix_sums(self, k_max: int) -> np.ndarray:
        self._extend(k_max)
        return np.array(self._A[: k_max + 1])

    def _extend(self, k: int) -> None:
        start = len(self._A)
        if k < start:
            return
        s, comp = self._run
        # Neumaier compensated summation
        for a in self.alpha(np.arange(start, k + 1)).tolist():
            t = s + a
            if abs(s) >= abs(a):
                comp += (s - t) + a
            else:
                comp += (a - t) + s
            s = t
            self._A.append(s + comp)
        self._run = (s, comp)

    def __repr__(self):
        return f"Schedule({self.params})"


class CustomSchedule(Schedule):
    """Schedule from arbitrary coefficient callables, for admissibility experiments."""

    def __init__(self, L: float, alpha: Callable, beta: Callable, B: Callable):
        self._alpha, self._beta, self._B = alpha, beta, B
        self._L = L
        self._A = []
        self._run = (0.0, 0.0)
        self.params = None

    @property
    def L(self) -> float:
        return self._L

    def alpha(self, i):
        return np.vectorize(self._alpha, otypes=[float])(i) if np.ndim(i) else float(self._alpha(i))

    def beta(self, i):
        return np.vectorize(self._beta, otypes=[float])(i) if np.ndim(i) else float(self._beta(i))

    def B(self, i):
        return np.vectorize(self._B, otypes=[float])(i) if np.ndim(i) else float(self._B(i))


@dataclass
class ScheduleReport:
    k_max: int
    first_violation: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.first_violation

    @property
    def first(self) -> Optional[tuple[str, int]]:
        if not self.first_violation:
            return None
        name = min(self.first_violation, key=lambda n: self.first_violation[n])
        return name, self.first_violation[name]


def _le(lhs, rhs, tol=REL_TOL):
    return lhs <= rhs + tol * np.maximum(np.abs(rhs), np.abs(lhs))


def validate(sched: Schedule, k_max: int, tol: float = REL_TOL) -> ScheduleReport:
    """Check every admissibility inequality for indices ``0..k_max``.

    Records the first failing index of each condition.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    idx = np.arange(k_max + 1)
    al = np.asarray(sched.alpha(idx), dtype=float)
    be = np.asarray(sched.beta(idx), dtype=float)
    Bs = np.asarray(sched.B(idx), dtype=float)
    A = sched.prefix_sums(k_max)
    L = sched.L
    report = ScheduleReport(k_max)

    def record(name, ok):
        bad = np.flatnonzero(~np.asarray(ok))
        if bad.size:
            report.first_violation[name] = int(idx[bad[0]] if np.ndim(ok) else 0)

    def record_from(name, ok, offset):
        bad = np.flatnonzero(~np.asarray(ok))
        if bad.size:
            report.first_violation[name] = int(bad[0] + offset)

    if not (0 < al[0] <= 1):
        report.first_violation["alpha0_in_(0,1]"] = 0
    if not math.isclose(al[0], Bs[0], rel_tol=tol * 10) or not math.isclose(al[0], A[0], rel_tol=tol * 10):
        report.first_violation["alpha0=A0=B0"] = 0
    record("beta>L", be > L)
    record_from("beta_monotone", _le(be[:-1], be[1:], tol), 0)
    record("0<=alpha<=B", (al >= 0) & _le(al, Bs, tol))
    record_from("alpha^2*beta<=B*beta_prev", _le(al[1:] ** 2 * be[1:], Bs[1:] * be[:-1], tol), 1)
    record_from("B*beta_prev<=A*beta_prev", _le(Bs[1:] * be[:-1], A[1:] * be[:-1], tol), 1)
    record("A>=B", _le(Bs, A, tol))
    return report


def mean_gap_bound(sched: Schedule, delta: float, k) -> float:
    """Mean-gap bound ``C1 L R^2/k^p + C2 sigma R/sqrt(k) + C3 k^{p-1} delta``."""
    pr = sched.params
    k = np.asarray(k, dtype=float)
    if np.any(k < 1):
        raise ValueError("bound defined for k >= 1")
    out = C1 * pr.L * pr.R ** 2 / k ** pr.p + C2 * pr.sigma * pr.R / np.sqrt(k) + C3 * k ** (pr.p - 1) * delta
    return float(out) if out.ndim == 0 else out


def deviation_threshold(sched: Schedule, delta: float, D: float, omega: float, k) -> float:
    """Deviation threshold exceeded with probability at most ``3 exp(-omega)``."""
    if omega < 0 or D < 0:
        raise ValueError("need omega >= 0 and D >= 0")
    pr = sched.params
    k = np.asarray(k, dtype=float)
    if np.any(k < 1):
        raise ValueError("threshold defined for k >= 1")
    out = (C1 * pr.L * pr.R ** 2 / k ** pr.p
           + C2 * (1 + omega) * pr.sigma * pr.R / np.sqrt(k)
           + C3 * k ** (pr.p - 1) * delta
           + C4 * D * pr.sigma * math.sqrt(omega) / np.sqrt(k))
    return float(out) if out.ndim == 0 else out


def delta_accumulation(sched: Schedule, k: int) -> float:
    """``sum_{i<=k} B_i / A_k``: the factor multiplying the oracle bias in the gap bound."""
    return float(np.sum(sched.B(np.arange(k + 1))) / sched.partial_sum_A(k))
