"""Stochastic localization on a particle ensemble.

The tilted measure ``p_t(x) ∝ exp(c_t^T x - t|x|^2/2) p(x)`` is represented by
an ensemble drawn from a reference measure plus importance log-weights that are
recomputed from ``(c_t, t)`` at every step (never accumulated). The tilt is
driven by the Euler-Maruyama discretization of ``dc_t = dW_t + mu_t dt``.

Modes
-----
``reweight``
    Fixed ensemble from the base density, weights only. The tracked ``g_t`` is
    then an exact martingale of the empirical base measure (up to time
    discretization).
``exact_gaussian``
    Standard normal base; ``mu_t`` and ``A_t`` use the closed form
    ``Normal(c/(1+t), I/(1+t))`` and refresh resamples from it.
``mcmc_refresh``
    Degenerate ensembles are resampled and moved by ``10 n`` ball-walk steps
    targeting the tilted density.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from .barrier import psi as barrier_psi
from .barrier import solve_eigs
from .bodies import (
    Density,
    Gaussian,
    TestSet,
    effective_sample_size,
    normalized_weights,
    uniform_unit_ball,
    weighted_mean_cov,
)
from .rng import ordered_map, stream

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    EXACT_GAUSSIAN = "exact_gaussian"
    REWEIGHT = "reweight"
    MCMC_REFRESH = "mcmc_refresh"


@dataclass(frozen=True)
class SDEParams:
    dt: float = 1e-3
    T: float = 1.0
    m: int = 2000
    ess_floor: float = 0.5

    def __post_init__(self):
        if not self.dt > 0 or self.T < 0 or (self.T > 0 and self.dt > self.T):
            raise ValueError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        if self.m < 2:
            raise ValueError(f"need at least 2 particles, got m={self.m}")
        if not 0 < self.ess_floor <= 1:
            raise ValueError(f"ess_floor must lie in (0, 1], got {self.ess_floor}")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class Oversampling:
    """Draw a fraction of the ensemble from the base restricted to ``region``.

    ``base_measure`` is the exact base probability of the region; the particles
    carry the correction ``-log((1-f) + f 1_E(x) / p(E))``.
    """

    region: TestSet
    fraction: float
    base_measure: float

    def __post_init__(self):
        if not 0 < self.fraction < 1:
            raise ValueError("oversampling fraction must lie in (0, 1)")
        if not 0 < self.base_measure <= 1:
            raise ValueError("region base measure must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class LocalizationState:
    base: Density
    mode: Mode
    t: float
    c: np.ndarray
    points: np.ndarray
    base_log_w: np.ndarray
    ref_c: np.ndarray
    ref_t: float
    sq_norms: np.ndarray = field(repr=False)
    refreshes: int = 0

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @cached_property
    def log_weights(self) -> np.ndarray:
        lw = self.base_log_w + self.points @ (self.c - self.ref_c) - 0.5 * (self.t - self.ref_t) * self.sq_norms
        if not np.isfinite(np.max(lw)):
            raise FloatingPointError(
                f"all importance weights vanished at t={self.t:.6g} (|c|={np.linalg.norm(self.c):.4g}); "
                "refresh the ensemble or reduce dt"
            )
        return lw

    @cached_property
    def weights(self) -> np.ndarray:
        return normalized_weights(self.log_weights)

    @cached_property
    def ess(self) -> float:
        return effective_sample_size(self.weights)

    @cached_property
    def _ensemble_moments(self) -> tuple[np.ndarray, np.ndarray]:
        return weighted_mean_cov(self.points, self.weights)

    @property
    def mu(self) -> np.ndarray:
        if self.mode is Mode.EXACT_GAUSSIAN:
            return self.c / (1.0 + self.t)
        return self.weights @ self.points

    @property
    def A(self) -> np.ndarray:
        if self.mode is Mode.EXACT_GAUSSIAN:
            return np.eye(self.dim) / (1.0 + self.t)
        return self._ensemble_moments[1]

    @property
    def ensemble_mu(self) -> np.ndarray:
        return self._ensemble_moments[0]

    @property
    def ensemble_A(self) -> np.ndarray:
        return self._ensemble_moments[1]

    def measure(self, test_set: TestSet) -> float:
        return min(1.0, max(0.0, test_set.measure(self.points, self.weights)))

    def tilted_density(self) -> Density:
        from .bodies import GaussianTilted

        return GaussianTilted(self.base, self.c, self.t)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _draw_region(base: Density, region: TestSet, count: int, rng: np.random.Generator) -> np.ndarray:
    out, have = [], 0
    while have < count:
        cand = base._sample(max(1024, 4 * (count - have)), rng)
        keep = cand[region.indicator(cand)]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:count]


def init_localization(
    base: Density,
    m: int,
    mode: Mode | str = Mode.REWEIGHT,
    rng: np.random.Generator | None = None,
    oversample: Oversampling | None = None,
    start: np.ndarray | None = None,
) -> LocalizationState:
    """State at ``t = 0`` with ``c = 0`` and an ensemble drawn from ``base``.

    Without an exact sampler, ``mcmc_refresh`` mode accepts a ``start`` point in
    the support and burns in ``m`` ball walks from it.
    """
    mode = Mode(mode)
    if m < 2:
        raise ValueError(f"need at least 2 particles, got m={m}")
    if mode is Mode.EXACT_GAUSSIAN and not isinstance(base, Gaussian):
        raise ValueError("exact_gaussian mode needs a standard Gaussian base")
    rng = rng if rng is not None else stream(0)
    n = base.dim
    base_log_w = np.zeros(m)
    if base.has_exact_sampler:
        if oversample is None:
            points = base._sample(m, rng)
        else:
            k = int(round(oversample.fraction * m))
            points = np.vstack([base._sample(m - k, rng), _draw_region(base, oversample.region, k, rng)])
            inside = oversample.region.indicator(points)
            f = k / m
            base_log_w = -np.log((1 - f) + f * inside / oversample.base_measure)
    elif mode is Mode.MCMC_REFRESH:
        if start is None or not np.isfinite(base.log_density(np.asarray(start, float))):
            raise ValueError("mcmc_refresh without an exact sampler needs a start point in the support")
        points = np.tile(np.asarray(start, float), (m, 1))
        points = _mh_moves(base, np.zeros(n), 0.0, points, 100 * n, rng)
    else:
        raise ValueError(f"{base.kind} base has no exact sampler; use mode=mcmc_refresh")
    return LocalizationState(
        base=base,
        mode=mode,
        t=0.0,
        c=_frozen(np.zeros(n)),
        points=_frozen(points),
        base_log_w=_frozen(base_log_w),
        ref_c=_frozen(np.zeros(n)),
        ref_t=0.0,
        sq_norms=_frozen(np.einsum("ij,ij->i", points, points)),
    )


def localization_step(state: LocalizationState, dt: float, rng: np.random.Generator, dW=None) -> LocalizationState:
    """``c <- c + dW + mu dt``, ``t <- t + dt``; weights recomputed from scratch."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dW is None:
        dW = math.sqrt(dt) * rng.standard_normal(state.dim)
    c = state.c + dW + state.mu * dt
    new = replace(state, t=state.t + dt, c=_frozen(c))
    new.log_weights  # fail fast on a degenerate ensemble
    return new


def _mh_moves(
    base: Density, c: np.ndarray, t: float, points: np.ndarray, steps: int, rng: np.random.Generator, delta=None
) -> np.ndarray:
    """Vectorized Metropolis ball walk (one chain per particle) targeting the tilted base."""
    m, n = points.shape
    delta = 1.0 / math.sqrt(n) if delta is None else delta
    x = points.copy()

    def logp(z):
        lb = base._log_density(z)
        return np.where(np.isfinite(lb), lb + z @ c - 0.5 * t * np.einsum("ij,ij->i", z, z), -np.inf)

    lp = logp(x)
    if not np.all(np.isfinite(lp)):
        raise ValueError("refresh started from points outside the support")
    for _ in range(steps):
        y = x + delta * uniform_unit_ball(m, n, rng)
        ly = logp(y)
        ok = np.log(rng.random(m)) < ly - lp
        x[ok] = y[ok]
        lp[ok] = ly[ok]
    return x


def systematic_resample(w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    m = w.size
    positions = (rng.random() + np.arange(m)) / m
    cum = np.cumsum(w)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions)


def refresh_particles(state: LocalizationState, rng: np.random.Generator) -> LocalizationState:
    """Replace the ensemble by an equally weighted draw from the current ``p_t``."""
    n, m = state.dim, state.m
    if state.mode is Mode.EXACT_GAUSSIAN:
        s = 1.0 / (1.0 + state.t)
        points = state.c * s + math.sqrt(s) * rng.standard_normal((m, n))
    elif state.mode is Mode.MCMC_REFRESH:
        idx = systematic_resample(state.weights, rng)
        points = _mh_moves(state.base, state.c, state.t, state.points[idx], 10 * n, rng)
    else:
        raise ValueError("reweight mode has no refresh mechanism")
    return replace(
        state,
        points=_frozen(points),
        base_log_w=_frozen(np.zeros(m)),
        ref_c=state.c,
        ref_t=state.t,
        sq_norms=_frozen(np.einsum("ij,ij->i", points, points)),
        refreshes=state.refreshes + 1,
    )


# ----------------------------------------------------------------------------- runs


@dataclass
class LocalizationRun:
    """Time series of one localization path (row 0 is ``t = 0``)."""

    t: np.ndarray
    ess: np.ndarray
    g: dict[str, np.ndarray]
    opnorm: np.ndarray | None = None
    u: np.ndarray | None = None
    psi: np.ndarray | None = None
    refreshes: int = 0
    final: LocalizationState | None = None

    def rows(self, run_id: int = 0):
        labels = list(self.g)
        for k in range(self.t.size):
            row = {"run_id": run_id, "step": k, "t": float(self.t[k])}
            if self.opnorm is not None:
                row.update(opnorm_A=float(self.opnorm[k]), u=float(self.u[k]), psi=float(self.psi[k]))
            row["ess"] = float(self.ess[k])
            for lab in labels:
                row[f"g_{lab}"] = float(self.g[lab][k])
            yield row


def run_localization(
    base: Density,
    params: SDEParams,
    test_sets: Sequence[TestSet] = (),
    rng: np.random.Generator | None = None,
    mode: Mode | str = Mode.REWEIGHT,
    barrier: tuple[int, float] | None = None,
    oversample: Oversampling | None = None,
    track_spectrum: bool = True,
    start: np.ndarray | None = None,
) -> LocalizationRun:
    """Simulate one path to ``params.T`` recording ``||A_t||``, ``u(A_t)``, ``Psi_t``, ESS and ``g_t``.

    ``barrier = (q, Phi)`` defaults to ``q = 2``, ``Phi = 4 n`` (so ``u_0 = 3/2``
    for an isotropic start).
    """
    rng = rng if rng is not None else stream(0)
    state = init_localization(base, params.m, mode, rng, oversample=oversample, start=start)
    n = base.dim
    q, phi = barrier if barrier is not None else (2, 4.0 * n)
    K = params.steps
    labels = [s.label for s in test_sets]
    if len(set(labels)) != len(labels):
        raise ValueError("test sets need distinct labels")
    t = np.empty(K + 1)
    ess = np.empty(K + 1)
    g = {lab: np.empty(K + 1) for lab in labels}
    if track_spectrum:
        opn, us, ps = np.empty(K + 1), np.empty(K + 1), np.empty(K + 1)

    def record(k, st):
        t[k] = st.t
        ess[k] = st.ess
        for lab, s in zip(labels, test_sets):
            g[lab][k] = st.measure(s)
        if track_spectrum:
            lam = np.linalg.eigvalsh(st.A)
            if lam[0] < -1e-10:
                raise FloatingPointError(f"covariance lost positive semidefiniteness (lambda_min={lam[0]:.3e})")
            lam = np.clip(lam, 0.0, None)
            opn[k] = lam[-1]
            us[k] = solve_eigs(lam, q, phi).u
            ps[k] = barrier_psi(us[k])

    record(0, state)
    floor = params.ess_floor * params.m
    for k in range(1, K + 1):
        state = localization_step(state, params.dt, rng)
        if state.mode is not Mode.REWEIGHT and state.ess < floor:
            state = refresh_particles(state, rng)
        record(k, state)
    run = LocalizationRun(t=t, ess=ess, g=g, refreshes=state.refreshes, final=state)
    if track_spectrum:
        run.opnorm, run.u, run.psi = opn, us, ps
    return run


def run_many(base, params, test_sets, seed: int, runs: int, **kw) -> list[LocalizationRun]:
    """Independent paths; path ``r`` uses stream ``(seed, r)``."""
    return ordered_map(lambda r: run_localization(base, params, test_sets, stream(seed, r), **kw), range(runs))


# --------------------------------------------------------------------------- checks


@dataclass(frozen=True)
class MartingaleResult:
    mean_gT: float
    stderr: float
    g0: float
    passed: bool


def martingale_check(
    base: Density, set_spec: TestSet, params: SDEParams, runs: int, seed: int = 0, mode=Mode.REWEIGHT, **kw
) -> MartingaleResult:
    """``E g_T = g_0`` within 4 standard errors of the paired run-wise differences."""
    if runs < 30:
        raise ValueError(f"martingale check needs at least 30 runs, got {runs}")
    if params.T == 0:
        paths = [init_localization(base, params.m, mode, stream(seed, r)).measure(set_spec) for r in range(runs)]
        g0 = gT = np.array(paths)
    else:
        out = run_many(base, params, [set_spec], seed, runs, mode=mode, track_spectrum=False, **kw)
        g0 = np.array([r.g[set_spec.label][0] for r in out])
        gT = np.array([r.g[set_spec.label][-1] for r in out])
    d = gT - g0
    se = float(d.std(ddof=1) / math.sqrt(runs))
    mean_d = float(d.mean())
    return MartingaleResult(float(gT.mean()), se, float(g0.mean()), abs(mean_d) <= 4 * se)


@dataclass(frozen=True)
class BandResult:
    exit_fraction: float
    bound: float
    stderr: float
    passed: bool


def band_check(log_inv_g: Sequence[np.ndarray], t: np.ndarray, D: float | None, gamma: float) -> BandResult:
    """Fraction of paths leaving ``log(1/g_0) - gamma <= log(1/g_t) <= log(1/g_0) + D^2 t / 2 + gamma``."""
    if D is None or not math.isfinite(D):
        raise ValueError("band check needs a base with bounded support (finite diameter D)")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    t = np.asarray(t, dtype=float)
    T = float(t[-1])
    exits = []
    for L in log_inv_g:
        L = np.asarray(L, dtype=float)
        upper = L[0] + 0.5 * D * D * t + gamma
        lower = L[0] - gamma
        exits.append(bool(np.any(L > upper) or np.any(L < lower)))
    N = len(exits)
    f = float(np.mean(exits))
    bound = 4 * math.exp(-gamma * gamma / (2 * T * D * D)) if T > 0 else 0.0
    se = math.sqrt(f * (1 - f) / N)
    return BandResult(f, bound, se, f <= bound + 4 * se)


@dataclass(frozen=True)
class QVResult:
    d_ratio: float | None
    d_stderr: float | None
    d_bound: float | None
    d_passed: bool | None
    log_ratio: float
    log_stderr: float
    log_bound: float
    log_passed: bool
    used: int
    skipped: int
    skipped_log: int


def _mean_se(per_run: list[float]) -> tuple[float, float]:
    a = np.asarray(per_run, dtype=float)
    if a.size < 2:
        return float(a.mean()) if a.size else 0.0, 0.0
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def qv_check(runs: Sequence[LocalizationRun], label: str, D: float | None) -> QVResult:
    """Empirical quadratic-variation rates of ``g_t`` against ``D^2`` and ``30 ||A_t||``.

    Increments starting at ``g`` in {0, 1} are skipped. The log-form bound needs
    ``log(1/g) >= 1`` (moment order at least one), so it is only evaluated on
    increments starting from ``g <= 1/e``.
    """
    r1_runs, r2_runs = [], []
    used = skipped = skipped_log = 0
    max_op = 0.0
    for run in runs:
        g = run.g[label]
        dt = np.diff(run.t)
        g0, dg = g[:-1], np.diff(g)
        ok = (g0 > 0) & (g0 < 1)
        skipped += int(np.count_nonzero(~ok))
        used += int(np.count_nonzero(ok))
        if np.any(ok):
            r1_runs.append(float(np.mean(dg[ok] ** 2 / (g0[ok] ** 2 * dt[ok]))))
        small = ok & (g0 <= math.exp(-1))
        skipped_log += int(np.count_nonzero(ok & ~small))
        if np.any(small):
            L = np.log(1.0 / g0[small])
            r2_runs.append(float(np.mean(dg[small] ** 2 / (g0[small] ** 2 * L * L * dt[small]))))
        if run.opnorm is None:
            raise ValueError("log-form bound needs ||A_t|| tracked (track_spectrum=True)")
        max_op = max(max_op, float(np.max(run.opnorm)))
    m2, s2 = _mean_se(r2_runs)
    log_bound = 30 * max_op
    if D is None or not math.isfinite(D):
        log.info("D-bound skipped: base has unbounded support")
        m1 = s1 = b1 = p1 = None
    else:
        m1, s1 = _mean_se(r1_runs)
        b1 = D * D
        p1 = m1 - 4 * s1 <= b1
    return QVResult(m1, s1, b1, p1, m2, s2, log_bound, m2 - 4 * s2 <= log_bound, used, skipped, skipped_log)


@dataclass(frozen=True)
class GSqrtResult:
    mean_T: float
    reference: float
    ratio: float
    soft_passed: bool


def _glog(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    out = np.zeros_like(g)
    pos = (g > 0) & (g <= 0.5)
    out[pos] = g[pos] * np.sqrt(np.log(1.0 / g[pos]))
    return out


def gsqrt_check(
    base: Density, set_spec: TestSet, T: float, runs: int, seed: int = 0, m: int = 4000, dt: float = 1e-3, **kw
) -> GSqrtResult:
    """Ratio of ``E[g_T sqrt(log 1/g_T) 1{g_T <= 1/2}]`` to its value at ``t = 0``.

    The lower bound 0.2 on the ratio is logged, not enforced.
    """
    if base.support is None:
        raise ValueError("gsqrt check needs a base with bounded support")
    params = SDEParams(dt=dt, T=max(T, dt), m=m)
    probe = init_localization(base, m, Mode.REWEIGHT, stream(seed, 0), oversample=kw.get("oversample"))
    if probe.measure(set_spec) > 0.05:
        raise ValueError("gsqrt check needs a set with g_0 <= 0.05")
    if T == 0:
        g0 = np.array(
            [init_localization(base, m, Mode.REWEIGHT, stream(seed, r), oversample=kw.get("oversample")).measure(set_spec) for r in range(runs)]
        )
        gT = g0
    else:
        out = run_many(base, params, [set_spec], seed, runs, track_spectrum=False, **kw)
        g0 = np.array([r.g[set_spec.label][0] for r in out])
        gT = np.array([r.g[set_spec.label][-1] for r in out])
    ref = float(np.mean(_glog(g0)))
    val = float(np.mean(_glog(gT)))
    ratio = val / ref
    ok = ratio >= 0.2
    if not ok:
        log.warning("gsqrt soft check: ratio %.3f below 0.2", ratio)
    return GSqrtResult(val, ref, ratio, ok)


@dataclass(frozen=True)
class AlphaKappa:
    alpha: np.ndarray
    kappa: float
    u: float
    ratio: float


def alpha_kappa_estimate(state: LocalizationState, q: int, phi: float | None = None, u: float | None = None) -> AlphaKappa:
    """Ensemble estimates of the martingale coefficient of ``du(A_t)`` and of ``tr((uI - A_t)^-(q+1))``."""
    mu, A = state.ensemble_mu, state.ensemble_A
    lam, V = np.linalg.eigh(A)
    if u is None:
        phi = 4.0 * state.dim if phi is None else phi
        u = solve_eigs(lam, q, phi).u
    if not u > lam[-1]:
        raise ValueError(f"u={u} must exceed lambda_max(A_t)={lam[-1]}")
    r = 1.0 / (u - lam)
    kappa = float(np.sum(r ** (q + 1)))
    y = (state.points - mu) @ V
    quad = np.einsum("ij,j,ij->i", y, r ** (q + 1), y)
    alpha = V @ ((state.weights * quad) @ y) / kappa
    return AlphaKappa(alpha, kappa, float(u), float(np.linalg.norm(alpha) / u**1.5))


@dataclass(frozen=True)
class PersistenceResult:
    fraction: float
    max_opnorm: float
    soft_passed: bool


def opnorm_persistence(base: Density, T: float, runs: int, seed: int = 0, m: int = 4000, dt: float = 1e-3, mode=Mode.REWEIGHT):
    """Fraction of paths where ``max_{t <= T} ||A_t||`` exceeds 2 (soft check at 10%)."""
    params = SDEParams(dt=dt, T=T, m=m)
    out = run_many(base, params, [], seed, runs, mode=mode)
    maxes = np.array([float(np.max(r.opnorm)) for r in out])
    frac = float(np.mean(maxes > 2.0))
    ok = frac <= 0.1
    if not ok:
        log.warning("||A_t|| exceeded 2 on %.0f%% of paths", 100 * frac)
    return PersistenceResult(frac, float(maxes.max()), ok)
