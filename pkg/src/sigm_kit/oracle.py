"""Stochastic inexact (delta, L)-oracles.

An oracle answers ``sample(x, rng) -> OracleAnswer(F, G)`` with unbiased noisy
estimates of a deterministic pair ``(f_dL(x), g_dL(x))`` returned by
``expected(x)``. ``value(x)`` is the true function ``f``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .geometry import NormSpec, dual_norm, norm


class OracleAnswer(NamedTuple):
    F: float
    G: np.ndarray


@dataclass(frozen=True)
class OracleMeta:
    delta: float = 0.0
    L: float = 1.0
    sigma: float = 0.0
    mu: float = 0.0
    light_tail: bool = True

    def __post_init__(self):
        vals = (self.delta, self.L, self.sigma, self.mu)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("oracle constants must be finite")
        if self.delta < 0 or self.sigma < 0 or self.mu < 0 or not self.L > 0:
            raise ValueError("need delta, sigma, mu >= 0 and L > 0")
        if self.mu > self.L * (1 + 1e-12):
            raise ValueError("strong convexity modulus cannot exceed L")


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean additive gradient noise measured in the dual norm.

    ``sphere`` draws a uniformly random direction on the dual-norm sphere of
    radius ``sigma`` (random signs for the l-infinity dual of l1);
    ``truncated-gaussian`` draws a Gaussian with ``E||zeta||_*^2 = sigma^2``
    conditioned on ``||zeta||_* <= 3 sigma``.
    """

    kind: str = "sphere"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sphere", "truncated-gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def draw(self, spec: NormSpec, size: int, rng: np.random.Generator) -> np.ndarray:
        """``size`` noise vectors as rows of an array."""
        n = spec.n
        if self.sigma == 0:
            return np.zeros((size, n))
        if spec.kind == "l1":
            if self.kind != "sphere":
                raise ValueError("truncated-gaussian noise needs a Euclidean norm")
            return self.sigma * rng.choice((-1.0, 1.0), size=(size, n))
        u = rng.standard_normal((size, n))
        if self.kind == "sphere":
            u *= self.sigma / np.linalg.norm(u, axis=1, keepdims=True)
        else:
            u *= self.sigma / math.sqrt(n)
            bad = np.linalg.norm(u, axis=1) > 3 * self.sigma
            while bad.any():
                u[bad] = rng.standard_normal((int(bad.sum()), n)) * (self.sigma / math.sqrt(n))
                bad = np.linalg.norm(u, axis=1) > 3 * self.sigma
        # whitened -> dual coordinates: ||L u||_* = ||u||_2 for H = L L^T
        if spec.is_isotropic and spec.diag[0] == 1.0:
            return u
        if spec.is_diagonal:
            return u * np.sqrt(spec.diag)
        return u @ spec._chol.T


class StochasticOracle:
    """Base class. Subclasses implement :meth:`expected` and :meth:`value`."""

    meta: OracleMeta
    n: int

    def expected(self, x) -> OracleAnswer:
        raise NotImplementedError

    def value(self, x) -> float:
        raise NotImplementedError

    def sample(self, x, rng: np.random.Generator) -> OracleAnswer:
        return self.expected(x)

    def sample_mean(self, x, m: int, rng: np.random.Generator) -> OracleAnswer:
        """Average of ``m`` independent samples at ``x``."""
        answers = [self.sample(x, rng) for _ in range(m)]
        return OracleAnswer(
            float(np.mean([a.F for a in answers])),
            np.mean([a.G for a in answers], axis=0),
        )


@dataclass(frozen=True, eq=False)
class QuadraticOracle(StochasticOracle):
    """``f(x) = x^T A x / 2 - b^T x`` with exact gradient ``A x - b``."""

    A: np.ndarray
    b: np.ndarray
    meta: OracleMeta = field(default_factory=OracleMeta)

    @property
    def n(self) -> int:
        return self.b.size

    def expected(self, x) -> OracleAnswer:
        Ax = self.A @ x
        return OracleAnswer(float(0.5 * x @ Ax - self.b @ x), Ax - self.b)

    def value(self, x) -> float:
        return float(0.5 * x @ (self.A @ x) - self.b @ x)


@dataclass(frozen=True, eq=False)
class LeastSquaresOracle(StochasticOracle):
    """``f(x) = ||A x - b||_2^2`` (the smooth part of LASSO)."""

    A: np.ndarray
    b: np.ndarray
    meta: OracleMeta = field(default_factory=OracleMeta)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def expected(self, x) -> OracleAnswer:
        r = self.A @ x - self.b
        return OracleAnswer(float(r @ r), 2.0 * (self.A.T @ r))

    def value(self, x) -> float:
        r = self.A @ x - self.b
        return float(r @ r)


@dataclass(frozen=True, eq=False)
class SubgradientOracle(StochasticOracle):
    """Exact value and a subgradient of a convex function with Holder subgradient."""

    f: Callable[[np.ndarray], float]
    subgrad: Callable[[np.ndarray], np.ndarray]
    dim: int
    nu: float
    L_nu: float
    meta: OracleMeta = field(default_factory=OracleMeta)

    @property
    def n(self) -> int:
        return self.dim

    def expected(self, x) -> OracleAnswer:
        return OracleAnswer(float(self.f(x)), np.asarray(self.subgrad(x), dtype=float))

    def value(self, x) -> float:
        return float(self.f(x))


@dataclass(frozen=True, eq=False)
class NoisyOracle(StochasticOracle):
    """``G <- G + zeta`` with ``zeta`` drawn from ``noise``; ``F`` unchanged."""

    base: StochasticOracle
    noise: NoiseSpec
    spec: NormSpec
    meta: OracleMeta = field(default_factory=OracleMeta)

    @property
    def n(self) -> int:
        return self.base.n

    def expected(self, x) -> OracleAnswer:
        return self.base.expected(x)

    def value(self, x) -> float:
        return self.base.value(x)

    def sample(self, x, rng) -> OracleAnswer:
        F, G = self.base.sample(x, rng)
        return OracleAnswer(F, G + self.noise.draw(self.spec, 1, rng)[0])

    def sample_mean(self, x, m, rng) -> OracleAnswer:
        if isinstance(self.base, NoisyOracle):
            return super().sample_mean(x, m, rng)
        # the base answer is deterministic; only the noise needs m draws
        F, G = self.base.expected(x)
        return OracleAnswer(F, G + self.noise.draw(self.spec, m, rng).mean(axis=0))


class CountingOracle(StochasticOracle):
    """Wraps an oracle and counts every sample it hands out."""

    def __init__(self, base: StochasticOracle):
        self.base = base
        self.meta = base.meta
        self.calls = 0

    @property
    def n(self) -> int:
        return self.base.n

    def expected(self, x):
        return self.base.expected(x)

    def value(self, x):
        return self.base.value(x)

    def sample(self, x, rng):
        self.calls += 1
        return self.base.sample(x, rng)

    def sample_mean(self, x, m, rng):
        self.calls += m
        return self.base.sample_mean(x, m, rng)


def _noise_meta(meta: OracleMeta, noise: Optional[NoiseSpec]) -> OracleMeta:
    if noise is None:
        return meta
    return dataclasses.replace(meta, sigma=noise.sigma, light_tail=noise.kind == "sphere")


def quadratic_oracle(A, b, noise: Optional[NoiseSpec] = None, mu: Optional[float] = None):
    """Quadratic ``x^T A x / 2 - b^T x`` with ``L = lambda_max(A)`` (Euclidean norm)."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.size:
        raise ValueError("A must be square and match b")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12):
        raise ValueError("A must be symmetric")
    eig = np.linalg.eigvalsh(A)
    if eig[0] < -1e-12 * max(1.0, eig[-1]):
        raise ValueError("A must be positive semidefinite")
    L = float(eig[-1]) if eig[-1] > 0 else 1e-12
    mu = max(float(eig[0]), 0.0) if mu is None else mu
    oracle = QuadraticOracle(A, b, OracleMeta(0.0, L, 0.0, min(mu, L)))
    return with_noise(oracle, noise) if noise is not None else oracle


def lasso_problem(A, b, lam: float, noise: Optional[NoiseSpec] = None):
    """LASSO ``||A x - b||_2^2 + lam ||x||_1``: returns ``(oracle, h)``."""
    from .geometry import CompositeTerm

    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != b.size:
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    eig = np.linalg.eigvalsh(A.T @ A)
    L = 2.0 * float(eig[-1]) if eig[-1] > 0 else 1e-12
    oracle = LeastSquaresOracle(A, b, OracleMeta(0.0, L, 0.0, min(2.0 * max(eig[0], 0.0), L)))
    if noise is not None:
        oracle = with_noise(oracle, noise)
    return oracle, CompositeTerm.l1(lam)


def hoelder_L(nu: float, L_nu: float, delta: float) -> float:
    """Smoothness constant making a Holder-subgradient function a (delta, L)-oracle."""
    if not 0 <= nu <= 1:
        raise ValueError("nu must lie in [0, 1]")
    if nu == 1:
        return float(L_nu)
    if not delta > 0:
        raise ValueError("invalid bias: delta must be > 0 when nu < 1")
    return float(L_nu * (L_nu * (1 - nu) / (2 * delta * (1 + nu))) ** ((1 - nu) / (1 + nu)))


def hoelder_oracle(f_spec, nu: float, L_nu: float, delta: float, n: Optional[int] = None,
                   center=None, mu: float = 0.0, extra_L: float = 0.0):
    """Exact value/subgradient oracle for a function with Holder-continuous subgradient.

    ``f_spec`` is ``"l2-norm"`` (``||x - center||_2``), ``"max-coordinate"``
    (``max_j (x - center)_j``) or a ``(f, subgradient)`` pair. ``extra_L`` adds a
    smooth part's Lipschitz constant to the computed ``L``.
    """
    L = hoelder_L(nu, L_nu, delta) + extra_L
    if isinstance(f_spec, str):
        if n is None:
            raise ValueError("built-in Holder functions need the dimension n")
        c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        if f_spec == "l2-norm":
            def f(x):
                return float(np.linalg.norm(x - c))

            def g(x):
                d = x - c
                r = np.linalg.norm(d)
                return d / r if r > 0 else np.zeros_like(d)
        elif f_spec == "max-coordinate":
            def f(x):
                return float(np.max(x - c))

            def g(x):
                e = np.zeros(len(x))
                e[int(np.argmax(x - c))] = 1.0
                return e
        else:
            raise ValueError(f"unknown Holder function {f_spec!r}")
    else:
        f, g = f_spec
        if n is None:
            raise ValueError("custom Holder functions need the dimension n")
    return SubgradientOracle(f, g, n, nu, L_nu, OracleMeta(delta, L, 0.0, mu))


def with_noise(base: StochasticOracle, noise: NoiseSpec, spec: Optional[NormSpec] = None):
    spec = spec or NormSpec.euclidean(base.n)
    return NoisyOracle(base, noise, spec, _noise_meta(base.meta, noise))


def minibatch(base: StochasticOracle, x, m: int, rng: np.random.Generator) -> OracleAnswer:
    """Average of ``m`` samples; the noise bound drops to ``sigma / sqrt(m)``."""
    if m < 1:
        raise ValueError("mini-batch size must be at least 1")
    if m == 1:
        return base.sample(x, rng)
    return base.sample_mean(x, m, rng)


@dataclass
class CertificateReport:
    pairs: int
    lower_violations: int
    upper_violations: int
    max_lower_violation: float
    max_upper_violation: float

    @property
    def passed(self) -> bool:
        return self.lower_violations == 0 and self.upper_violations == 0


def certify_oracle(oracle: StochasticOracle, f_true: Callable, pairs: int,
                   rng: np.random.Generator, spec: Optional[NormSpec] = None,
                   sampler: Optional[Callable] = None, tol: float = 1e-9,
                   average: int = 0) -> CertificateReport:
    """Check ``0 <= f(y) - f_dL(x) - <g_dL(x), y - x> <= L/2 ||x - y||^2 + delta``.

    Pairs come from ``sampler(rng)`` (default: uniform in the unit Euclidean
    ball). ``g_dL`` is the oracle's exact mean, or an ``average``-sample Monte
    Carlo mean when ``average > 0``.
    """
    spec = spec or NormSpec.euclidean(oracle.n)
    if sampler is None:
        def sampler(r):
            v = r.standard_normal(oracle.n)
            return v / np.linalg.norm(v) * r.random() ** (1.0 / oracle.n)
    L, delta = oracle.meta.L, oracle.meta.delta
    low = up = 0
    max_low = max_up = 0.0
    for _ in range(pairs):
        x, y = sampler(rng), sampler(rng)
        if average > 0:
            Fx, gx = oracle.sample_mean(x, average, rng)
        else:
            Fx, gx = oracle.expected(x)
        gap = f_true(y) - Fx - float(np.dot(gx, y - x))
        lo_v = -gap
        up_v = gap - 0.5 * L * norm(spec, x - y) ** 2 - delta
        scale = max(1.0, abs(Fx), abs(f_true(y)))
        if lo_v > tol * scale:
            low += 1
        if up_v > tol * scale:
            up += 1
        max_low = max(max_low, lo_v)
        max_up = max(max_up, up_v)
    return CertificateReport(pairs, low, up, max_low, max_up)


def empirical_second_moment(oracle: StochasticOracle, x, draws: int, rng,
                            spec: Optional[NormSpec] = None, m: int = 1) -> float:
    """Monte Carlo ``E ||G - g||_*^2`` of ``m``-averaged answers."""
    spec = spec or NormSpec.euclidean(oracle.n)
    g = oracle.expected(x).G
    acc = 0.0
    for _ in range(draws):
        acc += dual_norm(spec, minibatch(oracle, x, m, rng).G - g) ** 2
    return acc / draws
