"""Test problems with known optima, built from a small descriptor.

Every builder starts the method at ``x0 = 0`` (or the simplex barycenter) and
returns the exact optimal value when one is available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import CompositeTerm, FeasibleSet, NormSpec, ProxSetup, diameter, project
from .oracle import (NoiseSpec, StochasticOracle, hoelder_oracle, lasso_problem,
                     quadratic_oracle, with_noise)
from .sigm import GapEvaluator

PROBLEM_KINDS = ("quadratic", "lasso", "hoelder-norm", "simplex-quadratic")


@dataclass
class ProblemSpec:
    """Problem descriptor; which fields matter depends on ``kind``.

    ``dist`` is ``||x0 - x*||`` for the quadratic, ``||c||`` for the Hoelder
    norm problem. ``radius`` adds a centred ball constraint.
    """

    kind: str = "quadratic"
    n: int = 20
    L: float = 1.0
    mu: float = 0.0
    sigma: float = 0.0
    noise: str = "sphere"
    dist: float = 1.0
    radius: Optional[float] = None
    lam: float = 0.1
    rows: int = 0
    nu: float = 0.0
    L_nu: float = 1.0
    delta: float = 0.01
    data_seed: int = 0

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; expected one of {PROBLEM_KINDS}")
        if self.n < 1:
            raise ValueError("n must be positive")


@dataclass
class BuiltProblem:
    oracle: StochasticOracle
    h: CompositeTerm
    setup: ProxSetup
    evaluator: GapEvaluator
    x_star: np.ndarray
    R: float
    phi_star_residual: float = 0.0
    D: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def feasible(self) -> FeasibleSet:
        return self.setup.feasible


def _unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _noise(spec: ProblemSpec) -> Optional[NoiseSpec]:
    return NoiseSpec(spec.noise, spec.sigma) if spec.sigma > 0 else None


def quadratic_spectrum(spec: ProblemSpec) -> np.ndarray:
    """Eigenvalues ``linspace(mu, L)``; without ``mu`` they decay quadratically to ``L / n^2``."""
    if spec.mu > 0:
        return np.linspace(spec.mu, spec.L, spec.n)
    return spec.L * (np.arange(1, spec.n + 1) / spec.n) ** 2


def build_quadratic(spec: ProblemSpec) -> BuiltProblem:
    rng = np.random.default_rng(spec.data_seed)
    n = spec.n
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = Q @ np.diag(quadratic_spectrum(spec)) @ Q.T
    A = (A + A.T) / 2
    x_star = spec.dist * _unit(rng, n)
    if spec.radius is not None and spec.radius < spec.dist:
        raise ValueError("the quadratic's minimiser must lie inside the ball constraint")
    b = A @ x_star
    oracle = quadratic_oracle(A, b, _noise(spec), mu=spec.mu if spec.mu > 0 else None)
    feasible = FeasibleSet.whole_space() if spec.radius is None else FeasibleSet.ball(np.zeros(n), spec.radius)
    setup = ProxSetup.euclidean(np.zeros(n), feasible=feasible)
    phi_star = -0.5 * float(b @ x_star)
    ev = GapEvaluator(lambda x: 0.5 * float(x @ A @ x) - float(b @ x), phi_star)
    D = diameter(feasible, setup.norm) if feasible.bounded else None
    return BuiltProblem(oracle, CompositeTerm.zero(), setup, ev, x_star, spec.dist, D=D,
                        extra={"A": A, "b": b})


def separable_lasso_solution(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """Minimiser of ``sum_j (a_j x_j - b_j)^2 + lam |x_j|``."""
    r = b / a
    return np.sign(r) * np.maximum(np.abs(r) - lam / (2 * a ** 2), 0.0)


def lasso_reference(A, b, lam: float, iters: int = 20000):
    """Noiseless high-budget run of the fast variant; returns ``(x, phi, residual bound)``."""
    from .schedule import Schedule, mean_gap_bound
    from .sigm import SigmProblem, run

    oracle, h = lasso_problem(A, b, lam)
    n = oracle.n
    setup = ProxSetup.euclidean(np.zeros(n))
    # R from the least-squares solution bounds nothing in general; a crude
    # upper bound on ||x*|| follows from phi(x*) <= phi(0) = ||b||^2
    R = float(np.dot(b, b)) / lam if lam > 0 else np.linalg.norm(np.linalg.lstsq(A, b, rcond=None)[0])
    sched = Schedule.default(2, oracle.meta.L, 0.0, max(R, 1e-12))
    y, _ = run(SigmProblem(oracle, h, setup, sched), iters, checkpoints=())
    phi = oracle.value(y) + h(y)
    return y, phi, mean_gap_bound(sched, 0.0, iters)


def build_lasso(spec: ProblemSpec) -> BuiltProblem:
    """``||A x - b||^2 + lam ||x||_1``; ``rows = 0`` gives a separable diagonal ``A``."""
    rng = np.random.default_rng(spec.data_seed)
    n = spec.n
    if spec.rows == 0:
        a = rng.uniform(0.5, 1.5, n)
        A = np.diag(a)
        b = rng.standard_normal(n)
        x_star = separable_lasso_solution(a, b, spec.lam)
        residual = 0.0
    else:
        A = rng.standard_normal((spec.rows, n)) / math.sqrt(spec.rows)
        b = rng.standard_normal(spec.rows)
        x_star, _, residual = lasso_reference(A, b, spec.lam)
    oracle, h = lasso_problem(A, b, spec.lam, _noise(spec))
    setup = ProxSetup.euclidean(np.zeros(n))

    def phi(x):
        r = A @ x - b
        return float(r @ r) + h(x)

    return BuiltProblem(oracle, h, setup, GapEvaluator(phi, phi(x_star)), x_star,
                        float(np.linalg.norm(x_star)), residual, extra={"A": A, "b": b})


def hoelder_power(nu: float, c: np.ndarray):
    """``||x - c||^{1+nu} / (1+nu)``; its gradient is Hoelder with constant ``2^{1-nu}``."""

    def f(x):
        return float(np.linalg.norm(x - c)) ** (1 + nu) / (1 + nu)

    def g(x):
        d = x - c
        r = float(np.linalg.norm(d))
        if r == 0.0:
            return np.zeros_like(d)
        return r ** (nu - 1) * d

    return f, g


def build_hoelder(spec: ProblemSpec) -> BuiltProblem:
    """Hoelder-smooth distance to ``c`` over a ball, biased oracle with ``L(delta)``.

    For ``nu = 0`` this is the Euclidean norm ``||x - c||``.
    """
    rng = np.random.default_rng(spec.data_seed)
    n = spec.n
    c = spec.dist * _unit(rng, n)
    radius = 1.0 if spec.radius is None else spec.radius
    if radius < spec.dist:
        raise ValueError("the minimiser c must lie inside the ball constraint")
    f, g = hoelder_power(spec.nu, c)
    base = hoelder_oracle((f, g), spec.nu, spec.L_nu, spec.delta, n=n)
    oracle = with_noise(base, _noise(spec)) if spec.sigma > 0 else base
    feasible = FeasibleSet.ball(np.zeros(n), radius)
    setup = ProxSetup.euclidean(np.zeros(n), feasible=feasible)
    return BuiltProblem(oracle, CompositeTerm.zero(), setup, GapEvaluator(f, 0.0), c, spec.dist,
                        D=2 * radius, extra={"c": c})


def build_simplex_quadratic(spec: ProblemSpec) -> BuiltProblem:
    """``||x - c||_2^2 / 2`` on the simplex with the entropy prox; ``L = 1`` in the l1 norm."""
    rng = np.random.default_rng(spec.data_seed)
    n = spec.n
    c = rng.standard_normal(n) / math.sqrt(n)
    x_star = project(FeasibleSet.simplex(), NormSpec.euclidean(n), c)
    A = np.eye(n)
    oracle = quadratic_oracle(A, c)
    if spec.sigma > 0:
        # noise measured in the dual of l1, the max-norm
        oracle = with_noise(oracle, _noise(spec), NormSpec.l1(n))
    setup = ProxSetup.entropy(n)
    phi_star = 0.5 * float(np.dot(x_star - c, x_star - c)) - 0.5 * float(c @ c)
    ev = GapEvaluator(lambda x: 0.5 * float(x @ x) - float(c @ x), phi_star)
    # sqrt(2 d(x*)) with d = KL(x || uniform)
    kl = float(np.sum(np.where(x_star > 0, x_star * np.log(np.maximum(x_star, 1e-300) * n), 0.0)))
    return BuiltProblem(oracle, CompositeTerm.zero(), setup, ev, x_star, math.sqrt(max(2 * kl, 1e-24)),
                        D=2.0, extra={"c": c})


def build(spec: ProblemSpec) -> BuiltProblem:
    if spec.kind == "quadratic":
        return build_quadratic(spec)
    if spec.kind == "lasso":
        return build_lasso(spec)
    if spec.kind == "hoelder-norm":
        return build_hoelder(spec)
    return build_simplex_quadratic(spec)
