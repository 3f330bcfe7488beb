"""Convex bodies, logconcave densities, weighted samples and the sets we measure.

Everything here is vectorized over rows: a batch of points is an ``(m, n)``
array and membership / log-density calls return length-``m`` arrays.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

SQRT2 = math.sqrt(2.0)


class DegenerateSampleWarning(UserWarning):
    """Raised (as a warning) when a sample carries all its weight on one point."""


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return arr, single


# --------------------------------------------------------------------------- bodies


@dataclass(frozen=True)
class ConvexBody:
    dim: int

    kind = "body"

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dim}")

    @property
    def center(self) -> np.ndarray:
        return np.zeros(self.dim)

    @property
    def bounding_radius(self) -> float:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    def _inside(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x):
        """Membership for one point (returns bool) or a batch (returns bool array)."""
        pts, single = _as_points(x, self.dim)
        inside = self._inside(pts)
        return bool(inside[0]) if single else inside

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        r = self.bounding_radius
        return self.center - r, self.center + r

    def to_spec(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(ConvexBody):
    radius: float = 1.0

    kind = "ball"

    def __post_init__(self):
        super().__post_init__()
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")

    @property
    def bounding_radius(self) -> float:
        return float(self.radius)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def _inside(self, pts):
        return np.einsum("ij,ij->i", pts, pts) <= self.radius**2

    def to_spec(self):
        return {"kind": "ball", "n": self.dim, "R": self.radius}


@dataclass(frozen=True)
class Cube(ConvexBody):
    side: float = 1.0

    kind = "cube"

    def __post_init__(self):
        super().__post_init__()
        if not self.side > 0:
            raise ValueError(f"cube side must be positive, got {self.side}")

    @property
    def bounding_radius(self) -> float:
        return 0.5 * self.side * math.sqrt(self.dim)

    @property
    def diameter(self) -> float:
        return self.side * math.sqrt(self.dim)

    def bounding_box(self):
        h = 0.5 * self.side
        return np.full(self.dim, -h), np.full(self.dim, h)

    def _inside(self, pts):
        return np.all(np.abs(pts) <= 0.5 * self.side, axis=1)

    def to_spec(self):
        return {"kind": "cube", "n": self.dim, "s": self.side}


@dataclass(frozen=True)
class Cone(ConvexBody):
    """The cone ``0 <= x1 <= n, sum_{i>=2} x_i^2 <= x1^2 / n`` cut by the ball of radius D at ``n e1``."""

    depth: float = 1.0

    kind = "cone"

    def __post_init__(self):
        super().__post_init__()
        if self.dim < 2:
            raise ValueError("cone needs dimension >= 2")
        if not self.depth > 0:
            raise ValueError(f"cone truncation D must be positive, got {self.depth}")

    @property
    def height(self) -> float:
        return float(self.dim)

    @property
    def center(self) -> np.ndarray:
        c = np.zeros(self.dim)
        c[0] = self.height
        return c

    @property
    def bounding_radius(self) -> float:
        return float(self.depth)

    @property
    def diameter(self) -> float:
        return float(self.depth)

    def bounding_box(self):
        n = self.height
        r = min(self.depth, n / math.sqrt(self.dim))
        lo = np.full(self.dim, -r)
        hi = np.full(self.dim, r)
        lo[0], hi[0] = max(0.0, n - self.depth), n
        return lo, hi

    def slice_radius(self, x1: float) -> float:
        """Radius of the cross-section ``{x : x_1 = x1}``; 0 outside the body's extent."""
        n = self.height
        if not 0.0 <= x1 <= n:
            return 0.0
        sphere = self.depth**2 - (x1 - n) ** 2
        if sphere < 0:
            return 0.0
        return min(x1 / math.sqrt(self.dim), math.sqrt(sphere))

    def _inside(self, pts):
        n = self.height
        x1 = pts[:, 0]
        rest = np.einsum("ij,ij->i", pts[:, 1:], pts[:, 1:])
        return (x1 >= 0) & (x1 <= n) & (rest <= x1 * x1 / self.dim) & ((x1 - n) ** 2 + rest <= self.depth**2)

    def to_spec(self):
        return {"kind": "cone", "n": self.dim, "D": self.depth}


def cone_start(n: int, D: float) -> float:
    """Lower edge ``n - sqrt(D^2 - n)`` of the start slab in the cone construction."""
    return n - math.sqrt(D * D - n)


def make_body(spec: Mapping[str, Any]) -> ConvexBody:
    """Build a body from ``{"kind": ..., "n": ..., params}``."""
    kind = spec.get("kind")
    n = spec.get("n")
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ValueError(f"body dimension n must be an integer, got {n!r}")
    if kind == "ball":
        return Ball(int(n), float(spec.get("R", 1.0)))
    if kind == "cube":
        return Cube(int(n), float(spec.get("s", 1.0)))
    if kind == "cone":
        if n < 2:
            raise ValueError("cone needs n >= 2")
        D = float(spec["D"])
        if D > 0 and not (2 * math.sqrt(n) <= D <= n / 2):
            warnings.warn(f"cone D={D} outside the range 2*sqrt(n) <= D <= n/2 for n={n}", stacklevel=2)
        return Cone(int(n), D)
    raise ValueError(f"unknown body kind {kind!r}")


# ------------------------------------------------------------------------ densities


class Density:
    """Logconcave density known up to an additive constant in log space."""

    kind = "density"
    dim: int
    support: ConvexBody | None = None

    def log_density(self, x):
        pts, single = _as_points(x, self.dim)
        out = self._log_density(pts)
        return float(out[0]) if single else out

    def _log_density(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def has_exact_sampler(self) -> bool:
        return False

    def _sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        raise ValueError(f"no exact sampler for {self.kind} density in dimension {self.dim}")

    @property
    def scale(self) -> float:
        """Length scale for default finite-difference steps."""
        if self.support is not None:
            return self.support.diameter
        return math.sqrt(self.dim)

    def to_spec(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Gaussian(Density):
    dim: int

    kind = "gaussian"

    def _log_density(self, pts):
        return -0.5 * np.einsum("ij,ij->i", pts, pts)

    @property
    def has_exact_sampler(self):
        return True

    def _sample(self, count, rng):
        return rng.standard_normal((count, self.dim))

    def to_spec(self):
        return {"kind": "gaussian", "n": self.dim}


@dataclass(frozen=True, eq=False)
class ProductExponential(Density):
    """i.i.d. coordinates with density ``exp(-sqrt(2)|x|)/sqrt(2)``: isotropic, logconcave."""

    dim: int

    kind = "product_exponential"

    def _log_density(self, pts):
        return -SQRT2 * np.abs(pts).sum(axis=1)

    @property
    def has_exact_sampler(self):
        return True

    def _sample(self, count, rng):
        return rng.laplace(0.0, 1.0 / SQRT2, size=(count, self.dim))

    def to_spec(self):
        return {"kind": "product_exponential", "n": self.dim}


@dataclass(frozen=True, eq=False)
class UniformOnBody(Density):
    body: ConvexBody
    dim: int = field(init=False)

    kind = "uniform_on_body"

    def __post_init__(self):
        object.__setattr__(self, "dim", self.body.dim)

    @property
    def support(self):
        return self.body

    def _log_density(self, pts):
        return np.where(self.body._inside(pts), 0.0, -np.inf)

    @property
    def has_exact_sampler(self):
        if isinstance(self.body, (Ball, Cube)):
            return True
        return self.dim <= 8

    def _sample(self, count, rng):
        body = self.body
        if isinstance(body, Ball):
            return body.radius * uniform_unit_ball(count, self.dim, rng)
        if isinstance(body, Cube):
            h = 0.5 * body.side
            return rng.uniform(-h, h, size=(count, self.dim))
        if self.dim > 8:
            raise ValueError(f"rejection sampling from the bounding box is limited to n <= 8, got n={self.dim}")
        return rejection_sample(body, count, rng)

    def to_spec(self):
        return {"kind": "uniform_on_body", "body": self.body.to_spec()}


@dataclass(frozen=True, eq=False)
class GaussianTilted(Density):
    """``base(x) * exp(c^T x - t |x|^2 / 2)``: the localized measure at time ``t``."""

    base: Density
    c: np.ndarray
    t: float
    dim: int = field(init=False)

    kind = "gaussian_tilted"

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.shape != (self.base.dim,):
            raise ValueError("tilt vector has the wrong dimension")
        if self.t < 0:
            raise ValueError("tilt time must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "dim", self.base.dim)

    @property
    def support(self):
        return self.base.support

    def _log_density(self, pts):
        base = self.base._log_density(pts)
        tilt = pts @ self.c - 0.5 * self.t * np.einsum("ij,ij->i", pts, pts)
        return np.where(np.isfinite(base), base + tilt, -np.inf)

    @property
    def has_exact_sampler(self):
        return isinstance(self.base, Gaussian)

    def _sample(self, count, rng):
        if not isinstance(self.base, Gaussian):
            return super()._sample(count, rng)
        s = 1.0 / (1.0 + self.t)
        return self.c * s + math.sqrt(s) * rng.standard_normal((count, self.dim))

    def to_spec(self):
        return {"kind": "gaussian_tilted", "base": self.base.to_spec(), "c": self.c.tolist(), "t": self.t}


def make_density(spec: Mapping[str, Any]) -> Density:
    kind = spec.get("kind")
    if kind == "gaussian":
        return Gaussian(_positive_int(spec.get("n"), "n"))
    if kind == "product_exponential":
        return ProductExponential(_positive_int(spec.get("n"), "n"))
    if kind == "uniform_on_body":
        body = spec["body"]
        return UniformOnBody(body if isinstance(body, ConvexBody) else make_body(body))
    if kind == "gaussian_tilted":
        base = spec["base"]
        base = base if isinstance(base, Density) else make_density(base)
        return GaussianTilted(base, np.asarray(spec["c"], dtype=float), float(spec["t"]))
    raise ValueError(f"unsupported density kind {kind!r}")


def _positive_int(v, name):
    if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
        raise ValueError(f"{name} must be a positive integer, got {v!r}")
    return int(v)


# ------------------------------------------------------------------------- sampling


def uniform_unit_ball(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points in the unit ball: normalized Gaussian direction, radius ``U^(1/n)``."""
    g = rng.standard_normal((count, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random((count, 1)) ** (1.0 / dim)
    return g / norms * r


def rejection_sample(body: ConvexBody, count: int, rng: np.random.Generator, batch: int = 4096) -> np.ndarray:
    lo, hi = body.bounding_box()
    out = []
    have = 0
    while have < count:
        cand = rng.uniform(lo, hi, size=(max(batch, 2 * (count - have)), body.dim))
        keep = cand[body._inside(cand)]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:count] if out else np.empty((0, body.dim))


@dataclass(frozen=True, eq=False)
class WeightedSample:
    points: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be an (m, n) array")
        lw = np.array(self.log_weights, dtype=float)
        if lw.shape != (pts.shape[0],):
            raise ValueError("need one log-weight per point")
        pts.setflags(write=False)
        lw.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def unit(cls, points) -> "WeightedSample":
        pts = np.asarray(points, dtype=float)
        return cls(pts, np.zeros(len(pts)))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def weights(self) -> np.ndarray:
        return normalized_weights(self.log_weights)

    def ess(self) -> float:
        return effective_sample_size(self.weights())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x_{i + 1}" for i in range(self.dim)] + ["log_w"])
        for p, lw in zip(self.points, self.log_weights):
            w.writerow([repr(float(v)) for v in p] + [repr(float(lw))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "WeightedSample":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        if header[-1] != "log_w":
            raise ValueError("last column must be log_w")
        data = np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(header))
        return cls(data[:, :-1], data[:, -1])


def normalized_weights(log_weights: np.ndarray) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0:
        return lw.copy()
    top = np.max(lw)
    if not np.isfinite(top):
        raise FloatingPointError("all log-weights are -inf or non-finite")
    w = np.exp(lw - top)
    return w / w.sum()


def effective_sample_size(weights: np.ndarray) -> float:
    w = np.asarray(weights)
    s = w.sum()
    return float(s * s / np.dot(w, w)) if s > 0 else 0.0


def sample_iid(density: Density, count: int, rng: np.random.Generator) -> WeightedSample:
    """Exact i.i.d. draws with unit weights."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return WeightedSample(np.empty((0, density.dim)), np.empty(0))
    if not density.has_exact_sampler:
        raise ValueError(f"no exact sampler for {density.kind} density in dimension {density.dim}")
    return WeightedSample.unit(density._sample(count, rng))


def mean_cov(sample: WeightedSample) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and covariance; a zero covariance (with a warning) if degenerate."""
    return weighted_mean_cov(sample.points, sample.weights())


def weighted_mean_cov(points: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = points.shape[1]
    if points.shape[0] == 0:
        raise ValueError("empty sample")
    mu = w @ points
    if np.count_nonzero(w > 0) < 2:
        warnings.warn("sample has fewer than two points with positive weight", DegenerateSampleWarning, stacklevel=2)
        return mu, np.zeros((n, n))
    centered = points - mu
    A = (centered * w[:, None]).T @ centered
    return mu, 0.5 * (A + A.T)


def whitening(sample: WeightedSample) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Empirical whitening map ``x -> W (x - mu)`` with ``W = A^{-1/2}``; also returns A's spectrum."""
    mu, A = mean_cov(sample)
    lam, V = np.linalg.eigh(A)
    if lam[0] <= 0:
        raise ValueError("sample covariance is singular")
    W = (V / np.sqrt(lam)) @ V.T
    return mu, W, lam


# ----------------------------------------------------------------------------- sets


class TestSet:
    """A measurable set used for ``g_t = p_t(E)`` and boundary estimates."""

    __test__ = False  # keep pytest from collecting this

    label = "set"

    def indicator(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def measure(self, points: np.ndarray, weights: np.ndarray) -> float:
        mask = self.indicator(points)
        if mask.all():
            # normalized weights can sum to 1 - ulp; a set holding every point has mass 1
            return 1.0
        return float(np.sum(weights[mask]))

    def enlarge(self, h: float) -> "TestSet":
        raise NotImplementedError

    def erode(self, h: float) -> "TestSet":
        raise NotImplementedError

    def complement(self) -> "TestSet":
        return Complement(self)

    def to_spec(self) -> dict[str, Any]:
        raise NotImplementedError


def _unit(theta) -> tuple[np.ndarray, float]:
    th = np.array(theta, dtype=float)
    norm = float(np.linalg.norm(th))
    if norm == 0:
        raise ValueError("direction must be nonzero")
    th /= norm
    th.setflags(write=False)
    return th, norm


@dataclass(frozen=True, eq=False)
class Halfspace(TestSet):
    """``{x : theta^T x >= b}`` with theta rescaled to unit length."""

    theta: np.ndarray
    b: float
    name: str = "half"

    def __post_init__(self):
        th, norm = _unit(self.theta)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "b", float(self.b) / norm)

    @property
    def label(self):
        return self.name

    def indicator(self, points):
        return points @ self.theta >= self.b

    def enlarge(self, h):
        return Halfspace(self.theta, self.b - h, self.name)

    def erode(self, h):
        return Halfspace(self.theta, self.b + h, self.name)

    def to_spec(self):
        return {"kind": "halfspace", "theta": self.theta.tolist(), "b": self.b, "name": self.name}


@dataclass(frozen=True, eq=False)
class Slab(TestSet):
    """``{x : lo <= theta^T x <= hi}``."""

    theta: np.ndarray
    lo: float
    hi: float
    name: str = "slab"

    def __post_init__(self):
        th, norm = _unit(self.theta)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "lo", float(self.lo) / norm)
        object.__setattr__(self, "hi", float(self.hi) / norm)

    @property
    def label(self):
        return self.name

    def indicator(self, points):
        s = points @ self.theta
        return (s >= self.lo) & (s <= self.hi)

    def enlarge(self, h):
        return Slab(self.theta, self.lo - h, self.hi + h, self.name)

    def erode(self, h):
        return Slab(self.theta, self.lo + h, self.hi - h, self.name)

    def to_spec(self):
        return {"kind": "slab", "theta": self.theta.tolist(), "lo": self.lo, "hi": self.hi, "name": self.name}


@dataclass(frozen=True)
class CenteredBall(TestSet):
    """``{x : |x|^2 <= r^2}``."""

    r: float
    name: str = "ball"

    @property
    def label(self):
        return self.name

    def indicator(self, points):
        if math.isinf(self.r):
            return np.ones(points.shape[0], dtype=bool)
        if self.r < 0:
            return np.zeros(points.shape[0], dtype=bool)
        return np.einsum("ij,ij->i", points, points) <= self.r * self.r

    def enlarge(self, h):
        return CenteredBall(self.r + h, self.name)

    def erode(self, h):
        return CenteredBall(self.r - h, self.name)

    def to_spec(self):
        return {"kind": "ball", "r": self.r, "name": self.name}


@dataclass(frozen=True)
class Complement(TestSet):
    inner: TestSet

    @property
    def label(self):
        return f"not_{self.inner.label}"

    def indicator(self, points):
        return ~self.inner.indicator(points)

    def measure(self, points, weights):
        # 1 - a is exact or rounds back so that measure(S) + measure(S^c) == 1.0
        return 1.0 - self.inner.measure(points, weights)

    def enlarge(self, h):
        return Complement(self.inner.erode(h))

    def erode(self, h):
        return Complement(self.inner.enlarge(h))

    def complement(self):
        return self.inner

    def to_spec(self):
        return {"kind": "complement", "inner": self.inner.to_spec()}


def make_set(spec: Mapping[str, Any]) -> TestSet:
    kind = spec.get("kind")
    if kind == "halfspace":
        return Halfspace(spec["theta"], spec["b"], spec.get("name", "half"))
    if kind == "slab":
        return Slab(spec["theta"], spec["lo"], spec["hi"], spec.get("name", "slab"))
    if kind == "ball":
        return CenteredBall(float(spec["r"]), spec.get("name", "ball"))
    if kind == "complement":
        return Complement(make_set(spec["inner"]))
    raise ValueError(f"unknown set kind {kind!r}")


def axis(n: int, i: int = 0) -> np.ndarray:
    e = np.zeros(n)
    e[i] = 1.0
    return e


def set_measure(sample: WeightedSample, set_spec: TestSet) -> float:
    """Weighted fraction of the sample inside the set."""
    if sample.size == 0:
        return 0.0
    return min(1.0, max(0.0, set_spec.measure(sample.points, sample.weights())))


def boundary_measure(density: Density, set_spec: TestSet, h: float | None, sample: WeightedSample) -> float:
    """One-sided Minkowski surrogate ``[P(S_h) - P(S)] / h`` estimated on ``sample``."""
    if h is None:
        h = 1e-3 * density.scale
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    w = sample.weights()
    inner = set_spec.measure(sample.points, w)
    outer = set_spec.enlarge(h).measure(sample.points, w)
    return (outer - inner) / h
