"""Restart schemes for strongly convex problems.

Stage ``k`` reruns the base method from ``u_k`` with the prox rescaled by
``R_k`` and mini-batches of size ``m_k``; the shrinking ``R_k`` and growing
``m_k`` give linear outer convergence. Stage sizes are evaluated in extended
precision before the ceiling, since Euler's number enters every formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import mpmath
import numpy as np

from .geometry import CompositeTerm, FeasibleSet, ProxSetup
from .oracle import CountingOracle, StochasticOracle
from .rng import RngStream
from .schedule import Schedule, ScheduleParams
from .sigm import GapEvaluator, SigmProblem, run_state

_DPS = 50
# values this close to an integer are snapped before the ceiling
SNAP_REL = mpmath.mpf("1e-12")


def _mp():
    ctx = mpmath.mp.clone()
    ctx.dps = _DPS
    return ctx


def _ceil(ctx, v) -> int:
    r = ctx.nint(v)
    if abs(v - r) <= SNAP_REL * max(abs(v), 1):
        return int(r)
    return int(ctx.ceil(v))


@dataclass(frozen=True)
class SigmaParams:
    """Inputs of both restart variants.

    ``L`` and ``sigma`` describe the oracle; ``V2`` is the prox growth constant.
    ``eps`` switches on accuracy targeting; ``Lambda`` is needed by variant 2.
    """

    L: float
    mu: float
    R0: float
    p: float = 2.0
    sigma: float = 0.0
    V2: float = 1.0
    delta: float = 0.0
    eps: Optional[float] = None
    Lambda: Optional[float] = None
    N: Optional[int] = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("restarts need mu > 0")
        if not (self.L > 0 and self.R0 > 0):
            raise ValueError("need L > 0 and R0 > 0")
        if not 1 <= self.p <= 2:
            raise ValueError("p must lie in [1, 2]")
        if self.V2 < 1:
            raise ValueError("quadratic growth V^2 must be at least 1")
        if self.sigma < 0 or self.delta < 0:
            raise ValueError("need sigma >= 0 and delta >= 0")
        if self.eps is not None and not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.Lambda is not None and not 0 < self.Lambda < 1:
            raise ValueError("Lambda must lie in (0, 1)")
        if self.N is not None and self.N < 0:
            raise ValueError("N must be nonnegative")

    def outer_iterations(self) -> int:
        if self.N is not None:
            return self.N
        if self.eps is None:
            raise ValueError("give either N or eps")
        return complexity_calculators(self).N_needed


def _kappa(ctx, pr: SigmaParams, factor: int):
    """``factor * e * C1 * L * V^2 / mu`` with ``C1 = 4 sqrt 2``."""
    return factor * ctx.e * 4 * ctx.sqrt(2) * ctx.mpf(pr.L) * ctx.mpf(pr.V2) / ctx.mpf(pr.mu)


def _radius2(ctx, pr: SigmaParams, k: int, factor: int):
    p = ctx.mpf(pr.p)
    floor = (2 ** p * ctx.e * 48 * ctx.mpf(pr.delta) / (ctx.mpf(pr.mu) * (ctx.e - 1))
             * _kappa(ctx, pr, factor) ** ((p - 1) / p))
    return ctx.mpf(pr.R0) ** 2 * ctx.exp(-k) + floor * (1 - ctx.exp(-k))


def _check_k(k: int) -> None:
    if k < 0:
        raise ValueError("stage index must be nonnegative")


def sigma_stage_sizes(params: SigmaParams, k: int) -> tuple[int, int, float]:
    """``(N_k, m_k, R_k^2)`` for the plain restart scheme."""
    _check_k(k)
    ctx, pr = _mp(), params
    p = ctx.mpf(pr.p)
    Nk = _ceil(ctx, _kappa(ctx, pr, 4) ** (1 / p))
    # C2^2 = 512
    m = (16 * ctx.exp(k + 2) * 512 * ctx.mpf(pr.sigma) ** 2 * ctx.mpf(pr.V2)
         / (ctx.mpf(pr.mu) ** 2 * ctx.mpf(pr.R0) ** 2 * Nk))
    mk = max(1, _ceil(ctx, m))
    return Nk, mk, float(_radius2(ctx, pr, k, 4))


def sigma2_stage_sizes(params: SigmaParams, k: int, base: Optional[FeasibleSet] = None,
                       u: Optional[np.ndarray] = None):
    """``(N_k, m_k, R_k^2, Q_k)`` for the confidence-controlled scheme.

    ``Q_k`` is only built when the base set and the stage center ``u`` are given.
    """
    _check_k(k)
    if params.Lambda is None:
        raise ValueError("variant 2 needs a confidence level Lambda in (0, 1)")
    ctx, pr = _mp(), params
    N = pr.outer_iterations()
    if N < 1:
        raise ValueError("variant 2 needs N >= 1")
    p = ctx.mpf(pr.p)
    Nk = _ceil(ctx, _kappa(ctx, pr, 6) ** (1 / p))
    log_term = ctx.log(3 * ctx.mpf(N) / ctx.mpf(pr.Lambda))
    common = ctx.exp(k + 2) * ctx.mpf(pr.sigma) ** 2 / (ctx.mpf(pr.mu) ** 2 * ctx.mpf(pr.R0) ** 2 * Nk)
    first = 36 * 512 * ctx.mpf(pr.V2) * (1 + log_term) ** 2 * common
    # C4^2 = 48
    second = 144 * 48 * log_term * common
    mk = max(1, _ceil(ctx, first), _ceil(ctx, second))
    R2 = float(_radius2(ctx, pr, k, 6))
    Q = None
    if base is not None and u is not None:
        Q = FeasibleSet.intersect_ball(base, u, math.sqrt(R2))
    return Nk, mk, R2, Q


@dataclass(frozen=True)
class Complexity:
    N_needed: int
    delta_max_v1: float
    delta_max_v2: float
    total_calls_bound_v1: float
    total_calls_bound_v2: float


def complexity_calculators(params: SigmaParams) -> Complexity:
    """Outer iterations, admissible bias and total oracle calls for accuracy ``eps``.

    The variant 2 call bound is ``nan`` when no ``Lambda`` is set.
    """
    if params.eps is None:
        raise ValueError("complexity calculators need eps")
    ctx, pr = _mp(), params
    p = ctx.mpf(pr.p)
    eps, mu, s2, V2 = ctx.mpf(pr.eps), ctx.mpf(pr.mu), ctx.mpf(pr.sigma) ** 2, ctx.mpf(pr.V2)
    ratio = mu * ctx.mpf(pr.R0) ** 2 / eps
    N_needed = max(0, _ceil(ctx, ctx.log(ratio)))
    k4, k6 = _kappa(ctx, pr, 4), _kappa(ctx, pr, 6)
    dmax1 = eps * (ctx.e - 1) / (2 ** p * 48 * ctx.e) * k4 ** ((1 - p) / p)
    dmax2 = eps * (ctx.e - 1) / (2 ** p * 48 * ctx.e) * k6 ** ((1 - p) / p)
    outer = 1 + ctx.log(ratio)
    calls1 = (1 + k4 ** (1 / p)) * outer + 16 * ctx.e ** 3 * 512 * s2 * V2 / (mu * eps * (ctx.e - 1))
    if pr.Lambda is None:
        calls2 = ctx.nan
    else:
        lg = ctx.log(3 / ctx.mpf(pr.Lambda) * outer)
        calls2 = ((1 + k6 ** (1 / p)) * outer
                  + 36 * ctx.e ** 3 * 512 * s2 * V2 / (mu * (ctx.e - 1) * eps) * (1 + lg) ** 2
                  + 144 * ctx.e ** 3 * 48 * s2 / (mu * eps * (ctx.e - 1)) * lg)
    return Complexity(N_needed, float(dmax1), float(dmax2), float(calls1), float(calls2))


def sigma_gap_bound(params: SigmaParams, k: int) -> float:
    """Mean-gap bound after ``k`` stages of the plain scheme."""
    ctx, pr = _mp(), params
    p = ctx.mpf(pr.p)
    plateau = (48 * ctx.e * 2 ** (p - 1) / (ctx.e - 1) * _kappa(ctx, pr, 4) ** ((p - 1) / p)
               * (1 - ctx.exp(-k)) * ctx.mpf(pr.delta))
    return float(ctx.mpf(pr.mu) * ctx.mpf(pr.R0) ** 2 / 2 * ctx.exp(-k) + plateau)


def sigma2_threshold(params: SigmaParams, N: Optional[int] = None) -> float:
    """Gap level exceeded by variant 2 after ``N`` stages with probability at most ``Lambda``.

    The bias term carries ``delta`` once.
    """
    ctx, pr = _mp(), params
    N = pr.outer_iterations() if N is None else N
    p = ctx.mpf(pr.p)
    plateau = (2 ** (p - 1) * ctx.e * 48 * ctx.mpf(pr.delta) / (ctx.e - 1)
               * _kappa(ctx, pr, 6) ** ((p - 1) / p))
    return float(ctx.mpf(pr.mu) * ctx.mpf(pr.R0) ** 2 / 2 * ctx.exp(-N) + plateau)


def euclidean_stage_setup(u, R: float, feasible: FeasibleSet) -> ProxSetup:
    """Default factory: ``||x - u||^2 / (2 R^2)`` over the stage set (``V^2 = 1``)."""
    return ProxSetup.euclidean(u, feasible=feasible, scale=R)


@dataclass
class RestartProblem:
    """What a restart run needs: the oracle, ``h``, ``u_0`` and a prox factory.

    The factory gets ``(center, scale, stage feasible set)`` and returns the
    stage's :class:`ProxSetup`; the oracle is reused across stages.
    """

    oracle: StochasticOracle
    u0: np.ndarray
    h: CompositeTerm = field(default_factory=CompositeTerm.zero)
    feasible: FeasibleSet = field(default_factory=FeasibleSet.whole_space)
    make_setup: Callable[..., ProxSetup] = euclidean_stage_setup
    evaluator: Optional[GapEvaluator] = None


@dataclass
class StageReport:
    """One outer stage. ``oracle_calls = (N_k + 1) m_k``: the inner init draw is batched too."""

    k: int
    N_k: int
    m_k: int
    R2_k: float
    oracle_calls: int
    u_next: np.ndarray
    gap: Optional[float] = None


def _guard_delta(params: SigmaParams, variant: int) -> None:
    if params.eps is None:
        return
    c = complexity_calculators(params)
    dmax = c.delta_max_v1 if variant == 1 else c.delta_max_v2
    if params.delta > dmax:
        raise ValueError(f"oracle bias delta={params.delta:g} exceeds the admissible "
                         f"{dmax:g} for eps={params.eps:g}; accuracy eps is not guaranteed")


def _restart(params: SigmaParams, problem: RestartProblem, stream: RngStream, variant: int):
    _guard_delta(params, variant)
    N = params.outer_iterations()
    u = np.array(problem.u0, dtype=float)
    counter = CountingOracle(problem.oracle)
    reports = []
    for k in range(N):
        if variant == 1:
            Nk, mk, R2 = sigma_stage_sizes(params, k)
            Qk = problem.feasible
        else:
            Nk, mk, R2, Qk = sigma2_stage_sizes(params, k, problem.feasible, u)
        Rk = math.sqrt(R2)
        setup = problem.make_setup(u, Rk, Qk)
        sched = Schedule(ScheduleParams(params.p, params.L * R2, params.sigma * Rk / math.sqrt(mk),
                                        math.sqrt(params.V2)))
        inner = SigmProblem(counter, problem.h, setup, sched, minibatch=mk, delta=params.delta)
        before = counter.calls
        u, _, _ = run_state(inner, Nk, stream=stream.for_stage(k), checkpoints=())
        gap = problem.evaluator.gap(u) if problem.evaluator is not None else None
        reports.append(StageReport(k, Nk, mk, R2, counter.calls - before, u.copy(), gap))
    return u, reports


def sigma_run(params: SigmaParams, problem: RestartProblem, stream: RngStream = RngStream()):
    """Plain restart scheme; returns ``(u_N, stage reports)``.

    With ``eps`` set and no ``N``, runs the number of stages that accuracy
    needs and refuses when the oracle bias is too large for it.
    """
    return _restart(params, problem, stream, 1)


def sigma2_run(params: SigmaParams, problem: RestartProblem, stream: RngStream = RngStream()):
    """Confidence-controlled scheme: stage ``k`` works inside ``{x in Q : ||x - u_k|| <= R_k}``."""
    if params.Lambda is None:
        raise ValueError("variant 2 needs a confidence level Lambda in (0, 1)")
    return _restart(params, problem, stream, 2)
