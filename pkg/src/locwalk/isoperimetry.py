"""Isoperimetric profiles, concentration and small-ball experiments.

Empirical log-Cheeger values are minima over *halfspaces* only, hence upper
estimates of the true constant, which is an infimum over all sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .ballwalk import check_cone_range
from .bodies import Density, Halfspace, WeightedSample
from .special import chi2_cdf, log_chi2_cdf, normal_interval, normal_pdf


@dataclass(frozen=True)
class ProfilePoint:
    descriptor: Any
    g: float
    boundary: float

    @property
    def small_side(self) -> float:
        return min(self.g, 1.0 - self.g)

    @property
    def psi(self) -> float:
        return self.boundary / self.small_side

    @property
    def kappa(self) -> float:
        return self.psi / math.sqrt(math.log(1.0 / self.small_side))


def gaussian_interval_profile(a: float, b: float, y: float, t: float) -> ProfilePoint:
    """Measure and boundary of ``S = [y, b]`` under ``e^{-t x^2/2}`` restricted to ``[a, b]``.

    Everything is evaluated at unit variance after the substitution ``x -> x sqrt(t)``.
    """
    if not a < b:
        raise ValueError(f"degenerate interval [{a}, {b}]")
    if not a < y < b:
        raise ValueError(f"threshold y={y} must lie strictly inside ({a}, {b})")
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    s = math.sqrt(t)
    A, B, Y = a * s, b * s, y * s
    Z = normal_interval(A, B)
    g = normal_interval(Y, B) / Z
    boundary = s * (normal_pdf(Y) / Z)
    return ProfilePoint(("gaussian_interval", a, b, y, t), g, boundary)


def threshold_for_mass(a: float, b: float, g: float, t: float = 1.0) -> float:
    """The ``y`` with ``gaussian_interval_profile(a, b, y, t).g == g``."""
    if not 0 < g < 1:
        raise ValueError("target mass must lie in (0, 1)")
    f = lambda y: gaussian_interval_profile(a, b, y, t).g - g  # noqa: E731
    span = b - a
    return brentq(f, a + 1e-12 * span, b - 1e-12 * span, xtol=1e-14 * max(1.0, abs(a), abs(b)), rtol=1e-15)


DEFAULT_INTERVALS = ((-10.0, 10.0), (-2.0, 3.0), (0.0, 4.0), (1.0, 10.0), (-5.0, -0.5))


def gaussian_profile_grid(
    intervals: Sequence[tuple[float, float]] = DEFAULT_INTERVALS,
    masses: Sequence[float] | None = None,
    t: float = 1.0,
) -> list[ProfilePoint]:
    """Profile points ``S = [y, b]`` of given masses (all <= 1/2) on each interval."""
    masses = np.geomspace(1e-6, 0.5, 10) if masses is None else masses
    out = []
    for a, b in intervals:
        for g in masses:
            out.append(gaussian_interval_profile(a, b, threshold_for_mass(a, b, float(g), t), t))
    return out


# -------------------------------------------------------------- empirical profiles


@dataclass(frozen=True)
class CheegerEstimate:
    kappa_hat: float
    argmin: Halfspace | None
    points: list[ProfilePoint] = field(repr=False)
    skipped: int = 0

    @property
    def psi_hat(self) -> float:
        return min((p.psi for p in self.points), default=math.inf)

    @property
    def rho_hat(self) -> float:
        """Log-Sobolev proxy, reported as the square of the log-Cheeger estimate."""
        return self.kappa_hat**2


def _upper_mass(sorted_proj: np.ndarray, cum_from_top: np.ndarray, b: float) -> float:
    # weighted mass of {proj >= b}
    i = np.searchsorted(sorted_proj, b, side="left")
    return float(cum_from_top[i])


def estimate_log_cheeger(
    sample: WeightedSample,
    directions: Sequence[np.ndarray] | np.ndarray,
    thresholds: Sequence[float] | None = None,
    h: float | None = None,
) -> CheegerEstimate:
    """Minimum halfspace log-Cheeger ratio over ``directions x thresholds``.

    Boundary mass uses the forward Minkowski difference ``[P(S_h) - P(S)]/h``.
    The default ``h`` is ``ess^(-1/5)`` times the projection's spread: a tiny
    fixed ``h`` leaves a handful of points per band, and the minimum over many
    noisy ratios is then biased low. Thresholds default to the 2%..98% quantiles
    of each projection. Halfspaces whose smaller side holds less than ``10/m``
    of the mass are skipped.
    """
    m = sample.size
    if m < 1000:
        raise ValueError(f"need at least 1000 sample points, got {m}")
    if h is not None and not h > 0:
        raise ValueError("h must be positive")
    w = sample.weights()
    ess = 1.0 / float(w @ w)
    pts = []
    skipped = 0
    best, arg = math.inf, None
    for theta in np.atleast_2d(np.asarray(directions, dtype=float)):
        theta = theta / np.linalg.norm(theta)
        proj = sample.points @ theta
        hd = h if h is not None else ess ** -0.2 * math.sqrt(max(float(w @ (proj - w @ proj) ** 2), 1e-300))
        order = np.argsort(proj, kind="stable")
        sp = proj[order]
        # cum_from_top[i] = sum of weights of sorted entries i..m-1
        cum_from_top = np.concatenate([np.cumsum(w[order][::-1])[::-1], [0.0]])
        bs = np.quantile(proj, np.linspace(0.02, 0.98, 49)) if thresholds is None else thresholds
        for b in bs:
            g = _upper_mass(sp, cum_from_top, b)
            small = min(g, 1 - g)
            if small < 10.0 / m:
                skipped += 1
                continue
            rate = (_upper_mass(sp, cum_from_top, b - hd) - g) / hd
            p = ProfilePoint(("halfspace", tuple(theta), float(b)), g, rate)
            pts.append(p)
            if p.kappa < best:
                best, arg = p.kappa, Halfspace(theta, b)
    return CheegerEstimate(best, arg, pts, skipped)


# ----------------------------------------------------------------- concentration


@dataclass
class TailTable:
    t: np.ndarray
    tail_median: np.ndarray
    tail_mean: np.ndarray
    counts_median: np.ndarray
    counts_mean: np.ndarray
    m: int
    n: int
    c_median: float
    c_mean: float
    median: float
    mean: float

    @property
    def censored_median(self) -> np.ndarray:
        return self.counts_median == 0

    @property
    def censored_mean(self) -> np.ndarray:
        return self.counts_mean == 0

    def rows(self):
        for i, t in enumerate(self.t):
            yield {
                "t": float(t),
                "tail_median": float(self.tail_median[i]),
                "tail_mean": float(self.tail_mean[i]),
                "bound_median": math.exp(-self.c_median * t * t / (t + math.sqrt(self.n))),
                "bound_mean": math.exp(-self.c_mean * t * t / (t + math.sqrt(self.n))),
                "censored": bool(self.counts_median[i] == 0),
            }


def fit_tail_constant(t: np.ndarray, tails: np.ndarray, n: int) -> float:
    """Largest ``c`` with ``tail <= exp(-c t^2 / (t + sqrt n))`` at every uncensored ``t > 0``."""
    best = math.inf
    for ti, pi in zip(t, tails):
        if ti <= 0 or pi <= 0:
            continue
        best = min(best, -math.log(pi) * (ti + math.sqrt(n)) / (ti * ti))
    return best


def lipschitz_statistic(kind: str | Callable[[np.ndarray], np.ndarray], n: int) -> Callable[[np.ndarray], np.ndarray]:
    if callable(kind):
        return kind
    if kind == "euclidean_norm":
        return lambda x: np.sqrt(np.einsum("ij,ij->i", x, x))
    if kind == "fixed_direction":
        return lambda x: x[:, 0]
    raise ValueError(f"unknown 1-Lipschitz statistic {kind!r}")


def concentration_experiment(
    density: Density,
    g_kind: str | Callable = "euclidean_norm",
    t_grid: Sequence[float] = tuple(np.arange(0.0, 8.5, 0.5)),
    m: int = 1_000_000,
    rng: np.random.Generator | None = None,
    chunk: int = 50_000,
) -> TailTable:
    """Empirical upper tails of ``g(x) - median`` and ``g(x) - mean`` on a grid of ``t``."""
    from .rng import stream

    rng = rng if rng is not None else stream(0)
    if not density.has_exact_sampler:
        raise ValueError("concentration experiment needs an exact sampler")
    g = lipschitz_statistic(g_kind, density.dim)
    vals = np.concatenate([g(density._sample(min(chunk, m - i), rng)) for i in range(0, m, chunk)])
    med = float(np.median(vals))
    mean = float(vals.mean())
    t = np.asarray(t_grid, dtype=float)
    svals = np.sort(vals)
    cm = m - np.searchsorted(svals, med + t, side="left")
    ca = m - np.searchsorted(svals, mean + t, side="left")
    tm, ta = cm / m, ca / m
    return TailTable(
        t, tm, ta, cm, ca, m, density.dim,
        fit_tail_constant(t, tm, density.dim), fit_tail_constant(t, ta, density.dim), med, mean,
    )


# --------------------------------------------------------------------- small ball


@dataclass(frozen=True)
class SmallBallRow:
    eps: float
    prob: float | None
    log_prob: float | None
    stderr: float | None
    bound: float
    bound_k2: float
    resolvable: bool

    @property
    def holds(self) -> bool | None:
        if self.prob is None:
            return None
        return self.prob <= self.bound


def small_ball_experiment(
    n: int,
    eps_grid: Sequence[float],
    mode: str = "gaussian_exact",
    density: Density | None = None,
    m: int = 1_000_000,
    rng: np.random.Generator | None = None,
    chunk: int = 50_000,
) -> list[SmallBallRow]:
    """``P(|x|^2 <= eps n)`` against ``eps^sqrt(n)`` (and the ``eps^(sqrt(n)/2)`` form at k = 2).

    Monte Carlo probabilities resting on fewer than 10 hits are reported as below
    resolution (``prob=None``) rather than zero.
    """
    for e in eps_grid:
        if not 0 < e <= 1:
            raise ValueError(f"eps must lie in (0, 1], got {e}")
    if mode == "gaussian_exact":
        rows = []
        for e in eps_grid:
            lp = log_chi2_cdf(e * n, n)
            rows.append(SmallBallRow(e, math.exp(lp), lp, 0.0, e ** math.sqrt(n), e ** (math.sqrt(n) / 2), True))
        return rows
    if mode != "monte_carlo":
        raise ValueError(f"unknown small-ball mode {mode!r}")
    from .rng import stream

    density = density if density is not None else _gaussian(n)
    rng = rng if rng is not None else stream(0)
    sq = np.concatenate(
        [np.einsum("ij,ij->i", x, x) for x in (density._sample(min(chunk, m - i), rng) for i in range(0, m, chunk))]
    )
    rows = []
    for e in eps_grid:
        k = int(np.count_nonzero(sq <= e * n))
        p = k / m
        ok = k >= 10
        rows.append(
            SmallBallRow(
                e, p if ok else None, math.log(p) if ok else None,
                math.sqrt(p * (1 - p) / m) if ok else None, e ** math.sqrt(n), e ** (math.sqrt(n) / 2), ok,
            )
        )
    return rows


def _gaussian(n):
    from .bodies import Gaussian

    return Gaussian(n)


def small_ball_bound_exponent(n: int, k: float, c2: float = 1.0) -> float:
    """Exponent ``c2 n^(1 - 1/k) / k`` of the general small-ball bound."""
    return c2 * n ** (1 - 1 / k) / k


# ------------------------------------------------------------------------ moments


@dataclass(frozen=True)
class MomentCheck:
    lhs: float
    rhs: float
    lhs_stderr: float
    passed: bool


def moment_check(sample: WeightedSample, k: int) -> MomentCheck:
    """``E|x|^k`` against ``(2k)^k (E|x|^2)^(k/2)``."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    w = sample.weights()
    r = np.sqrt(np.einsum("ij,ij->i", sample.points, sample.points))
    rk = r**k
    lhs = float(w @ rk)
    rhs = float((2 * k) ** k * (w @ r**2) ** (k / 2))
    ess = 1.0 / float(w @ w)
    se = float(math.sqrt(max(w @ (rk - lhs) ** 2, 0.0) / ess))
    return MomentCheck(lhs, rhs, se, lhs <= rhs)


# ------------------------------------------------------------------- cone profile


@dataclass(frozen=True)
class ConeSlab:
    n: int
    D: float
    t0: float
    log_p: float
    kappa_upper: float

    @property
    def p(self) -> float:
        return math.exp(self.log_p)

    @property
    def rho_upper(self) -> float:
        return self.kappa_upper**2


def cone_slab_profile(n: int, D: float) -> ConeSlab:
    """Analytic log-Cheeger upper bound from the slab ``t0 <= x1 <= t0 + 1`` of the cone.

    The slab mass is taken relative to the untruncated cone,
    ``((t0+1)/n)^(n-1) - (t0/n)^(n-1)``, and the slab's expansion is at most 2.
    """
    check_cone_range(n, D, min_n=2)
    t0 = n - math.sqrt(D * D - n)
    hi = (n - 1) * math.log1p((t0 + 1 - n) / n)
    lo = (n - 1) * math.log1p((t0 - n) / n)
    log_p = hi + math.log(-math.expm1(lo - hi))
    return ConeSlab(n, float(D), t0, log_p, 2.0 / math.sqrt(-log_p))


def small_ball_chi2(n: int, eps: float) -> float:
    return chi2_cdf(eps * n, n)
