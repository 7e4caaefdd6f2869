"""Stochastic intermediate gradient method for ``min_{x in Q} f(x) + h(x)``.

The accumulated linear model is kept as the covector ``s_k = sum_i alpha_i G_i``
and the scalar ``A_k``; its affine constant does not move any argmin, so it is
dropped.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .geometry import (CompositeTerm, ProxSetup, contains, norm, solve_bregman_prox,
                       solve_linear_prox)
from .oracle import StochasticOracle, minibatch
from .rng import RngStream
from .schedule import Schedule, mean_gap_bound


@dataclass
class SigmProblem:
    oracle: StochasticOracle
    h: CompositeTerm
    setup: ProxSetup
    schedule: Schedule
    minibatch: int = 1
    delta: Optional[float] = None
    track_bias: bool = False

    def __post_init__(self):
        if self.minibatch < 1:
            raise ValueError("mini-batch size must be at least 1")
        if self.oracle.n != self.setup.norm.n:
            raise ValueError("oracle and prox setup dimensions differ")
        if self.delta is None:
            self.delta = self.oracle.meta.delta


@dataclass
class SigmState:
    k: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    A: float
    calls: int
    history: Optional[list] = None
    bias_sum: float = 0.0
    max_slack: float = float("-inf")

    @property
    def bias_charge(self) -> float:
        """Realised bias term ``sum_i B_i max(r_i, 0) / A_k``.

        ``r_i`` is how far the true ``f`` rose above the oracle's quadratic upper
        model between the point queried and the point the step moved to; a valid
        (delta, L)-oracle keeps every ``r_i <= delta``. Needs ``track_bias``.
        """
        return self.bias_sum / self.A


@dataclass
class IterationRecord:
    k: int
    phi: float
    gap: Optional[float]
    bound: float
    calls: int
    wall_ns: int = 0


@dataclass(frozen=True)
class GapEvaluator:
    """Exact objective ``phi = f + h`` together with its optimal value."""

    phi: Callable[[np.ndarray], float]
    phi_star: float

    def gap(self, x) -> float:
        return self.phi(x) - self.phi_star


class InvariantError(AssertionError):
    pass


def _slack(problem: SigmProblem, x, target) -> float:
    F, g = problem.oracle.expected(x)
    d = target - x
    lin = F + float(np.dot(g, d))
    return problem.oracle.value(target) - lin - 0.5 * problem.oracle.meta.L * norm(problem.setup.norm, d) ** 2


def _draw(problem: SigmProblem, x, stream: RngStream, index: int):
    return minibatch(problem.oracle, x, problem.minibatch, stream.generator(index))


def init(problem: SigmProblem, stream: RngStream = RngStream(), debug: bool = False) -> SigmState:
    """Draw at the prox center and take the first prox step."""
    sched = problem.schedule
    x0 = problem.setup.center.copy()
    G0 = _draw(problem, x0, stream, 0).G
    a0, b0, _ = sched.coefficients(0)
    s0 = a0 * G0
    # h weighted by alpha_0, matching the model Psi_0
    y0 = solve_linear_prox(problem.setup, b0, s0, a0, problem.h)
    state = SigmState(0, x0, y0, y0, s0, sched.partial_sum_A(0), problem.minibatch,
                      [(a0, G0)] if debug else None)
    if problem.track_bias:
        r = _slack(problem, x0, y0)
        state.bias_sum, state.max_slack = a0 * max(r, 0.0), r
    if debug:
        _check_feasible(problem, x0=x0, y0=y0)
    return state


def step(state: SigmState, problem: SigmProblem, stream: RngStream = RngStream(),
         debug: bool = False) -> SigmState:
    """One iteration ``k -> k + 1``."""
    sched, setup, h = problem.schedule, problem.setup, problem.h
    k = state.k
    beta_k = float(sched.beta(k))
    alpha_next = float(sched.alpha(k + 1))
    B_next = float(sched.B(k + 1))
    tau = alpha_next / B_next
    A_next = sched.partial_sum_A(k + 1)

    z = solve_linear_prox(setup, beta_k, state.s, state.A, h)
    x_next = tau * z + (1 - tau) * state.y
    G = _draw(problem, x_next, stream, k + 1).G
    # the Bregman step uses beta_k, not beta_{k+1}
    x_hat = solve_bregman_prox(setup, beta_k, z, G, alpha_next, h)
    w = tau * x_hat + (1 - tau) * state.y
    mix = B_next / A_next
    y_next = (1 - mix) * state.y + mix * w

    history = None
    if debug:
        if not (0 < tau <= 1 + 1e-12 and 0 <= mix <= 1 + 1e-12):
            raise InvariantError(f"mixing weights out of [0, 1] at k={k}: tau={tau}, B/A={mix}")
        _check_feasible(problem, z=z, x=x_next, x_hat=x_hat, w=w, y=y_next)
        history = state.history + [(alpha_next, G)]
    new = SigmState(k + 1, x_next, y_next, z, state.s + alpha_next * G, A_next,
                    state.calls + problem.minibatch, history, state.bias_sum, state.max_slack)
    if problem.track_bias:
        r = _slack(problem, x_next, w)
        new.bias_sum += B_next * max(r, 0.0)
        new.max_slack = max(new.max_slack, r)
    return new


def _check_feasible(problem: SigmProblem, **points) -> None:
    for name, p in points.items():
        if not contains(problem.setup.feasible, p, problem.setup.norm, tol=1e-7):
            raise InvariantError(f"iterate {name} left the feasible set")


def geometric_checkpoints(K: int) -> list[int]:
    """``0, 1, 3, 10, 31, 100, ...`` up to and including ``K``."""
    pts = {0, K}
    j = 0
    while True:
        v = int(round(10 ** (j / 2)))
        if v > K:
            break
        pts.add(v)
        j += 1
    return sorted(pts)


def _record(problem: SigmProblem, state: SigmState, trace_with: Optional[GapEvaluator],
            t0: Optional[int]) -> IterationRecord:
    y = state.y
    if trace_with is not None:
        phi = trace_with.phi(y)
        gap = phi - trace_with.phi_star
    else:
        phi = problem.oracle.expected(y).F + problem.h(y)
        gap = None
    bound = mean_gap_bound(problem.schedule, problem.delta, state.k) if state.k >= 1 else float("inf")
    wall = time.perf_counter_ns() - t0 if t0 is not None else 0
    return IterationRecord(state.k, phi, gap, bound, state.calls, wall)


def run(problem: SigmProblem, K: int, trace_with: Optional[GapEvaluator] = None,
        stream: RngStream = RngStream(), checkpoints: Optional[Iterable[int]] = None,
        debug: bool = False, timing: bool = False):
    """Run ``K`` iterations and return ``(y_K, trace)``.

    The trace holds a record per iteration unless ``checkpoints`` restricts it.
    """
    y, trace, _ = run_state(problem, K, trace_with, stream, checkpoints, debug, timing)
    return y, trace


def run_state(problem: SigmProblem, K: int, trace_with: Optional[GapEvaluator] = None,
              stream: RngStream = RngStream(), checkpoints: Optional[Iterable[int]] = None,
              debug: bool = False, timing: bool = False):
    """Like :func:`run` but also returns the final :class:`SigmState`."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    t0 = time.perf_counter_ns() if timing else None
    wanted = None if checkpoints is None else set(checkpoints)
    state = init(problem, stream, debug)
    trace = []
    if wanted is None or 0 in wanted:
        trace.append(_record(problem, state, trace_with, t0))
    for _ in range(K):
        state = step(state, problem, stream, debug)
        if wanted is None or state.k in wanted:
            trace.append(_record(problem, state, trace_with, t0))
    return state.y, trace, state
