"""Norms, feasible sets, prox-functions and the two prox subproblems.

Two geometries are supported:

* half-squared-distance prox ``d(x) = ||(x - x0) / rho||^2 / 2`` in a weighted
  Euclidean norm ``||x|| = sqrt(<x, Hx>)``, on the whole space, a box, a ball
  or a ball intersected with a box;
* negative-entropy prox ``d(x) = KL(x || x0) / rho^2`` on the standard simplex,
  paired with the l1 norm (entropy is 1-strongly convex there by Pinsker).

Every prox subproblem is solved in closed form, or by a scalar bisection on the
multiplier of a single ball constraint. Anything else raises
:class:`UnsupportedGeometry`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

ENTROPY_FLOOR = 1e-300

SUPPORTED = (
    "half-squared-distance on whole-space/box/euclidean-ball/ball-intersection(box) "
    "with h in {zero, l1, linear} (l1, box and box-ball need diagonal H); "
    "negative-entropy on standard-simplex with h in {zero, linear}"
)


class UnsupportedGeometry(ValueError):
    """No closed-form prox for the requested (set, prox-function, h) combination."""

    def __init__(self, what: str):
        super().__init__(f"unsupported geometry: {what}. Supported: {SUPPORTED}")


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class NormSpec:
    """A primal norm and, implicitly, its dual.

    ``kind`` is ``"euclidean"`` (weighted by the SPD matrix ``H``, identity when
    omitted) or ``"l1"``.
    """

    kind: str
    n: int
    H: Optional[np.ndarray] = None
    _chol: Optional[np.ndarray] = field(default=None, repr=False)
    _hdiag: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if self.kind == "euclidean":
            H = np.eye(self.n) if self.H is None else np.array(self.H, dtype=float)
            if H.shape != (self.n, self.n):
                raise ValueError(f"H must be {self.n}x{self.n}, got {H.shape}")
            if not np.allclose(H, H.T, rtol=0.0, atol=1e-12):
                raise ValueError("H must be symmetric")
            try:
                chol = np.linalg.cholesky(H)
            except np.linalg.LinAlgError as exc:
                raise ValueError("H must be positive definite") from exc
            H.setflags(write=False)
            object.__setattr__(self, "H", H)
            object.__setattr__(self, "_chol", chol)
            if np.count_nonzero(H - np.diag(np.diag(H))) == 0:
                object.__setattr__(self, "_hdiag", np.diag(H).copy())
        elif self.kind == "l1":
            if self.H is not None:
                raise ValueError("l1 norm takes no weight matrix")
        else:
            raise ValueError(f"unknown norm kind {self.kind!r}")

    @classmethod
    def euclidean(cls, n: int, H=None) -> "NormSpec":
        return cls("euclidean", n, H)

    @classmethod
    def l1(cls, n: int) -> "NormSpec":
        return cls("l1", n)

    @property
    def is_diagonal(self) -> bool:
        return self._hdiag is not None

    @property
    def diag(self) -> np.ndarray:
        """Diagonal of ``H``; only valid when :attr:`is_diagonal`."""
        return self._hdiag

    @property
    def is_isotropic(self) -> bool:
        return self.is_diagonal and bool(np.all(self._hdiag == self._hdiag[0]))

    def check(self, x) -> np.ndarray:
        x = _vec(x)
        if x.shape != (self.n,):
            raise ValueError(f"dimension mismatch: expected ({self.n},), got {x.shape}")
        return x

    def solve(self, g) -> np.ndarray:
        """``H^{-1} g``."""
        if self.is_diagonal:
            return g / self._hdiag
        y = np.linalg.solve(self._chol, g)
        return np.linalg.solve(self._chol.T, y)


def norm(spec: NormSpec, x) -> float:
    x = spec.check(x)
    if spec.kind == "l1":
        return float(np.abs(x).sum())
    if spec.is_diagonal:
        return float(math.sqrt(np.dot(spec.diag * x, x)))
    return float(math.sqrt(max(x @ spec.H @ x, 0.0)))


def dual_norm(spec: NormSpec, g) -> float:
    g = spec.check(g)
    if spec.kind == "l1":
        return float(np.abs(g).max())
    return float(math.sqrt(max(np.dot(g, spec.solve(g)), 0.0)))


@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """Closed convex feasible set.

    Balls are measured in the norm passed alongside the set (the setup norm).
    """

    kind: str
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    base: Optional["FeasibleSet"] = None

    @classmethod
    def whole_space(cls) -> "FeasibleSet":
        return cls("whole-space")

    @classmethod
    def box(cls, lo, hi) -> "FeasibleSet":
        lo, hi = _vec(lo), _vec(hi)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lo <= hi of equal shape")
        return cls("box", lo=lo, hi=hi)

    @classmethod
    def ball(cls, center, radius: float) -> "FeasibleSet":
        if not radius > 0:
            raise ValueError("ball radius must be positive")
        return cls("euclidean-ball", center=_vec(center), radius=float(radius))

    @classmethod
    def simplex(cls) -> "FeasibleSet":
        return cls("standard-simplex")

    @classmethod
    def intersect_ball(cls, base: "FeasibleSet", center, radius: float) -> "FeasibleSet":
        """``{x in base : ||x - center|| <= radius}``; used for restart stages."""
        if not radius > 0:
            raise ValueError("ball radius must be positive")
        if base.kind == "whole-space":
            return cls.ball(center, radius)
        return cls("ball-intersection", center=_vec(center), radius=float(radius), base=base)

    @property
    def bounded(self) -> bool:
        return self.kind != "whole-space"


def contains(fs: FeasibleSet, x, spec: NormSpec, tol: float = 1e-9) -> bool:
    x = _vec(x)
    if fs.kind == "whole-space":
        return True
    if fs.kind == "box":
        return bool(np.all(x >= fs.lo - tol) and np.all(x <= fs.hi + tol))
    if fs.kind == "euclidean-ball":
        return norm(spec, x - fs.center) <= fs.radius * (1 + tol) + tol
    if fs.kind == "standard-simplex":
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol * max(1, x.size))
    if fs.kind == "ball-intersection":
        return contains(fs.base, x, spec, tol) and (
            norm(spec, x - fs.center) <= fs.radius * (1 + tol) + tol
        )
    raise ValueError(f"unknown set kind {fs.kind!r}")


def diameter(fs: FeasibleSet, spec: NormSpec) -> float:
    """``max ||x - y||`` over the set (an upper bound for ball-intersection)."""
    if fs.kind == "whole-space":
        return math.inf
    if fs.kind == "euclidean-ball":
        return 2.0 * fs.radius
    if fs.kind == "box":
        spread = fs.hi - fs.lo
        if spec.kind == "l1":
            return float(spread.sum())
        if spec.is_diagonal:
            return norm(spec, spread)
        # sign pattern maximising the quadratic form over the box corners
        n = spread.size
        if n > 16:
            raise UnsupportedGeometry("box diameter for a dense H in dimension > 16")
        best = 0.0
        for mask in range(2 ** n):
            signs = np.array([1.0 if mask >> j & 1 else -1.0 for j in range(n)])
            best = max(best, norm(spec, signs * spread))
        return best
    if fs.kind == "standard-simplex":
        if spec.kind == "l1":
            return 2.0
        if spec.is_diagonal:
            d = spec.diag
            return float(math.sqrt(np.max(d[:, None] + d[None, :] - 2 * np.diag(d))))
        return max(
            norm(spec, np.eye(spec.n)[i] - np.eye(spec.n)[j])
            for i in range(spec.n)
            for j in range(spec.n)
        )
    if fs.kind == "ball-intersection":
        return min(2.0 * fs.radius, diameter(fs.base, spec))
    raise ValueError(f"unknown set kind {fs.kind!r}")


@dataclass(frozen=True, eq=False)
class CompositeTerm:
    """The simple convex term ``h``: zero, ``lam * ||x||_1`` or ``<c, x>``."""

    kind: str = "zero"
    lam: float = 0.0
    c: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "l1" and not self.lam >= 0:
            raise ValueError("l1 weight must be nonnegative")
        if self.kind == "linear":
            object.__setattr__(self, "c", _vec(self.c))
        if self.kind not in ("zero", "l1", "linear"):
            raise ValueError(f"unknown composite term {self.kind!r}")

    @classmethod
    def zero(cls) -> "CompositeTerm":
        return cls("zero")

    @classmethod
    def l1(cls, lam: float) -> "CompositeTerm":
        return cls("l1", lam=float(lam))

    @classmethod
    def linear(cls, c) -> "CompositeTerm":
        return cls("linear", c=c)

    def __call__(self, x) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1":
            return self.lam * float(np.abs(x).sum())
        return float(np.dot(self.c, x))

    def subgradient(self, x) -> np.ndarray:
        x = _vec(x)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "l1":
            return self.lam * np.sign(x)
        return self.c.copy()


@dataclass(frozen=True, eq=False)
class ProxSetup:
    """Geometry bundle handed to the solver.

    ``scale`` implements ``d((x - center) / scale)``: iterates stay in the
    original coordinates while the prox is strongly convex in ``||.|| / scale``.
    ``growth`` is the quadratic-growth constant ``V^2`` of ``d``.
    """

    norm: NormSpec
    center: np.ndarray
    d_kind: str = "half-squared-distance"
    scale: float = 1.0
    feasible: FeasibleSet = field(default_factory=FeasibleSet.whole_space)
    growth: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", self.norm.check(self.center))
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.d_kind == "negative-entropy":
            if self.feasible.kind != "standard-simplex":
                raise UnsupportedGeometry("negative-entropy outside the standard simplex")
            if np.any(self.center <= 0):
                raise ValueError("entropy center must be strictly positive")
        elif self.d_kind != "half-squared-distance":
            raise ValueError(f"unknown prox-function {self.d_kind!r}")
        elif self.norm.kind != "euclidean":
            raise UnsupportedGeometry("half-squared-distance needs a Euclidean norm")
        if not contains(self.feasible, self.center, self.norm):
            raise ValueError("prox center must be feasible")

    @classmethod
    def euclidean(cls, center, H=None, feasible=None, scale: float = 1.0) -> "ProxSetup":
        center = _vec(center)
        return cls(
            NormSpec.euclidean(center.size, H),
            center,
            "half-squared-distance",
            scale,
            feasible or FeasibleSet.whole_space(),
            1.0,
        )

    @classmethod
    def entropy(cls, n: int, center=None, scale: float = 1.0) -> "ProxSetup":
        center = np.full(n, 1.0 / n) if center is None else _vec(center)
        # KL(x||x0) <= ||x - x0||_1^2 / min(x0) bounds the growth constant
        return cls(
            NormSpec.l1(n),
            center,
            "negative-entropy",
            scale,
            FeasibleSet.simplex(),
            2.0 / float(np.min(center)),
        )

    def scaled_norm(self, x) -> float:
        return norm(self.norm, x) / self.scale


def prox_value(setup: ProxSetup, x) -> float:
    """``d(x)``; zero at the center and 1-strongly convex in the scaled norm."""
    x = _vec(x)
    diff = x - setup.center
    if setup.d_kind == "half-squared-distance":
        return 0.5 * norm(setup.norm, diff) ** 2 / setup.scale ** 2
    return _kl(x, setup.center) / setup.scale ** 2


def _kl(x: np.ndarray, z: np.ndarray) -> float:
    pos = x > 0
    return float(np.sum(x[pos] * (np.log(x[pos]) - np.log(z[pos]))) + np.sum(z) - np.sum(x))


def bregman(setup: ProxSetup, x, z) -> float:
    """Bregman distance ``d(x) - d(z) - <grad d(z), x - z>``."""
    x, z = _vec(x), _vec(z)
    if setup.d_kind == "half-squared-distance":
        return 0.5 * norm(setup.norm, x - z) ** 2 / setup.scale ** 2
    if np.any(z <= 0):
        raise ValueError("entropy Bregman distance needs z strictly positive")
    return _kl(x, z) / setup.scale ** 2


def prox_gradient(setup: ProxSetup, x) -> np.ndarray:
    x = _vec(x)
    if setup.d_kind == "half-squared-distance":
        diff = x - setup.center
        Hd = setup.norm.diag * diff if setup.norm.is_diagonal else setup.norm.H @ diff
        return Hd / setup.scale ** 2
    return (np.log(np.maximum(x, ENTROPY_FLOOR)) - np.log(setup.center) + 1.0) / setup.scale ** 2


def _soft(v: np.ndarray, t) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _softmax(logits: np.ndarray) -> np.ndarray:
    w = np.exp(logits - logits.max())
    x = w / w.sum()
    return np.maximum(x, ENTROPY_FLOOR)


def _separable_with_ball(c, v, hd, lam, lo, hi, u, r, spec: NormSpec):
    """argmin c/2 ||x - v||_H^2 + lam ||x||_1 over box ∩ {||x - u||_H <= r}, H diagonal.

    For a fixed multiplier ``nu`` of the ball constraint the problem separates;
    ``nu`` is found by bisection on the (monotone) constraint residual.
    """

    def x_of(nu):
        m = (c * v + nu * u) / (c + nu)
        x = _soft(m, lam / ((c + nu) * hd)) if lam > 0 else m
        return np.clip(x, lo, hi)

    def excess(nu):
        return norm(spec, x_of(nu) - u) - r

    if excess(0.0) <= 0:
        return x_of(0.0)
    hi_nu = c
    while excess(hi_nu) > 0:
        hi_nu *= 2.0
        if hi_nu > 1e300:
            raise ValueError("empty intersection of box and ball")
    lo_nu = 0.0
    for _ in range(200):
        mid = 0.5 * (lo_nu + hi_nu)
        if mid in (lo_nu, hi_nu):
            break
        if excess(mid) > 0:
            lo_nu = mid
        else:
            hi_nu = mid
    return x_of(hi_nu)


def _euclid_prox(setup: ProxSetup, c: float, anchor: np.ndarray, s: np.ndarray,
                 w_h: float, h: CompositeTerm, feasible: FeasibleSet) -> np.ndarray:
    """argmin c/2 ||x - anchor||_H^2 + <s, x> + w_h h(x) over ``feasible``."""
    spec = setup.norm
    if h.kind == "linear":
        s = s + w_h * h.c
    v = anchor - spec.solve(s) / c
    lam = w_h * h.lam if h.kind == "l1" else 0.0
    kind = feasible.kind
    if lam > 0 or kind in ("box", "ball-intersection"):
        if not spec.is_diagonal:
            raise UnsupportedGeometry(f"{kind} with h={h.kind} under a non-diagonal H")
    if kind == "whole-space":
        return _soft(v, lam / (c * spec.diag)) if lam > 0 else v
    if kind == "box":
        x = _soft(v, lam / (c * spec.diag)) if lam > 0 else v
        return np.clip(x, feasible.lo, feasible.hi)
    if kind == "euclidean-ball":
        if lam == 0:
            return _radial(spec, v, feasible.center, feasible.radius)
        return _separable_with_ball(c, v, spec.diag, lam, -np.inf, np.inf,
                                    feasible.center, feasible.radius, spec)
    if kind == "ball-intersection":
        base = feasible.base
        if base.kind == "box":
            lo, hi = base.lo, base.hi
        elif base.kind == "whole-space":
            lo, hi = -np.inf, np.inf
        else:
            raise UnsupportedGeometry(f"ball-intersection over {base.kind}")
        return _separable_with_ball(c, v, spec.diag, lam, lo, hi,
                                    feasible.center, feasible.radius, spec)
    raise UnsupportedGeometry(f"half-squared-distance on {kind}")


def _radial(spec: NormSpec, v, center, radius):
    dist = norm(spec, v - center)
    if dist <= radius:
        return v
    return center + (v - center) * (radius / dist)


def solve_linear_prox(setup: ProxSetup, beta: float, s, w_h: float,
                      h: CompositeTerm) -> np.ndarray:
    """Minimise ``beta d(x) + <s, x> + w_h h(x)`` over the feasible set."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    s = setup.norm.check(s)
    if setup.d_kind == "half-squared-distance":
        c = beta / setup.scale ** 2
        return _euclid_prox(setup, c, setup.center, s, w_h, h, setup.feasible)
    if h.kind == "l1":
        raise UnsupportedGeometry("negative-entropy with h=l1")
    if h.kind == "linear":
        s = s + w_h * h.c
    return _softmax(np.log(setup.center) - setup.scale ** 2 * s / beta)


def solve_bregman_prox(setup: ProxSetup, beta: float, z, g, alpha: float,
                       h: CompositeTerm) -> np.ndarray:
    """Minimise ``beta V(x, z) + alpha <g, x - z> + alpha h(x)`` over the feasible set."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    z = setup.norm.check(z)
    g = setup.norm.check(g)
    if alpha == 0:
        return z.copy()
    if setup.d_kind == "half-squared-distance":
        c = beta / setup.scale ** 2
        return _euclid_prox(setup, c, z, alpha * g, alpha, h, setup.feasible)
    if h.kind == "l1":
        raise UnsupportedGeometry("negative-entropy with h=l1")
    if np.any(z <= 0):
        raise ValueError("entropy prox step from a point on the simplex boundary")
    if h.kind == "linear":
        g = g + h.c
    return _softmax(np.log(z) - alpha * setup.scale ** 2 * g / beta)


def project(fs: FeasibleSet, spec: NormSpec, x) -> np.ndarray:
    """Nearest point of ``fs`` to ``x`` in the norm ``spec``."""
    x = spec.check(x)
    if fs.kind == "whole-space":
        return x.copy()
    if fs.kind == "box":
        # clipping is nearest in any coordinate-separable norm
        if spec.kind == "l1" or spec.is_diagonal:
            return np.clip(x, fs.lo, fs.hi)
        raise UnsupportedGeometry("box projection under a non-diagonal H")
    if spec.kind == "l1":
        raise UnsupportedGeometry(f"l1-norm projection onto {fs.kind}")
    if fs.kind == "euclidean-ball":
        return _radial(spec, x, fs.center, fs.radius)
    if fs.kind == "standard-simplex":
        if not spec.is_isotropic:
            raise UnsupportedGeometry("simplex projection under a non-isotropic H")
        return _project_simplex(x)
    if fs.kind == "ball-intersection":
        if not spec.is_diagonal:
            raise UnsupportedGeometry("ball-intersection projection under a non-diagonal H")
        if fs.base.kind != "box":
            raise UnsupportedGeometry(f"ball-intersection over {fs.base.kind}")
        return _separable_with_ball(1.0, x, spec.diag, 0.0, fs.base.lo, fs.base.hi,
                                    fs.center, fs.radius, spec)
    raise ValueError(f"unknown set kind {fs.kind!r}")


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)
