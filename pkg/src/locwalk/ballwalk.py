"""Ball walk with a Metropolis filter, local conductance, and the cone mixing/drift experiments.

A step proposes ``y = x + delta * u`` with ``u`` uniform in the unit ball. For a
uniform target the step is accepted iff ``y`` lies in the body; otherwise it is
accepted with probability ``min(1, p(y)/p(x))``. A *proper* step is one where
the point actually moves.

Randomness is consumed in fixed-size blocks of ``n + 2`` numbers per step
(direction, radius, acceptance uniform) so a chain's trajectory depends only on
its own stream, whether it runs alone or in lockstep with other chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .bodies import Cone, ConvexBody, Density, UniformOnBody, cone_start, uniform_unit_ball
from .rng import stream

BLOCK = 1024


@dataclass(frozen=True, eq=False)
class WalkState:
    x: np.ndarray
    proper_steps: int = 0
    total_steps: int = 0

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if not 0 <= self.proper_steps <= self.total_steps:
            raise ValueError("need 0 <= proper_steps <= total_steps")


@dataclass(frozen=True)
class WalkParams:
    delta: float
    max_steps: int
    thin: int = 1

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"step radius delta must be positive, got {self.delta}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")


class _Proposals:
    """Block-buffered proposal stream: unit-ball offsets and acceptance uniforms."""

    def __init__(self, dim: int, rng: np.random.Generator, block: int = BLOCK):
        self.dim, self.rng, self.block = dim, rng, block
        self._k = block

    def _refill(self):
        g = self.rng.standard_normal((self.block, self.dim))
        extra = self.rng.random((self.block, 2))
        r = extra[:, 0] ** (1.0 / self.dim)
        self.u = g * (r / np.linalg.norm(g, axis=1))[:, None]
        self.log_acc = np.log(extra[:, 1])
        self._k = 0

    def next(self) -> tuple[np.ndarray, float]:
        if self._k == self.block:
            self._refill()
        k = self._k
        self._k += 1
        return self.u[k], self.log_acc[k]


def _is_uniform(target) -> bool:
    return isinstance(target, (UniformOnBody, ConvexBody))


def _log_p(target, x: np.ndarray) -> float:
    if isinstance(target, ConvexBody):
        return 0.0 if target.contains(x) else -math.inf
    return target.log_density(x)


def acceptance_probability(target, x, y) -> float:
    """Filter probability of moving from ``x`` to a proposed ``y``."""
    lx, ly = _log_p(target, np.asarray(x, float)), _log_p(target, np.asarray(y, float))
    if not math.isfinite(ly):
        return 0.0
    if _is_uniform(target):
        return 1.0
    return min(1.0, math.exp(ly - lx))


def _accept(target, log_px: float, y: np.ndarray, log_u: float) -> tuple[bool, float]:
    ly = _log_p(target, y)
    if not math.isfinite(ly):
        return False, log_px
    if _is_uniform(target) or ly >= log_px or log_u < ly - log_px:
        return True, ly
    return False, log_px


def ball_walk_step(state: WalkState, target, delta: float, rng: np.random.Generator) -> tuple[WalkState, bool]:
    """One ball-walk step; a rejected step returns the identical point."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    log_px = _log_p(target, state.x)
    if not math.isfinite(log_px):
        raise ValueError("walk state lies outside the support of the target")
    props = _Proposals(state.x.size, rng, block=1)
    u, log_acc = props.next()
    y = state.x + delta * u
    ok, _ = _accept(target, log_px, y, log_acc)
    if ok:
        return WalkState(y, state.proper_steps + 1, state.total_steps + 1), True
    return WalkState(state.x, state.proper_steps, state.total_steps + 1), False


@dataclass(frozen=True)
class Conductance:
    estimate: float
    stderr: float


def local_conductance(body: ConvexBody, x, delta: float, m: int, rng: np.random.Generator) -> Conductance:
    """Fraction of ``m`` uniform probes of ``x + delta * B`` landing in the body."""
    if m < 1:
        raise ValueError("need at least one probe")
    x = np.asarray(x, dtype=float)
    probes = x + delta * uniform_unit_ball(m, x.size, rng)
    ell = float(np.mean(body.contains(probes)))
    return Conductance(ell, math.sqrt(ell * (1 - ell) / m))


@dataclass
class ChainResult:
    proper_steps: int
    total_steps: int
    positions: np.ndarray
    series: dict[str, np.ndarray] = field(default_factory=dict)
    final: np.ndarray | None = None

    @property
    def proper_fraction(self) -> float:
        return self.proper_steps / self.total_steps if self.total_steps else 0.0


def run_chain(
    target,
    x0,
    params: WalkParams,
    observers: Mapping[str, Callable[[np.ndarray], float]] | None = None,
    rng: np.random.Generator | None = None,
) -> ChainResult:
    """Run ``params.max_steps`` steps, recording the point and observers every ``thin`` steps."""
    if params.max_steps < 1:
        raise ValueError("max_steps must be positive")
    rng = rng if rng is not None else stream(0)
    x = np.array(x0, dtype=float)
    log_px = _log_p(target, x)
    if not math.isfinite(log_px):
        raise ValueError("x0 lies outside the support of the target")
    observers = dict(observers or {})
    props = _Proposals(x.size, rng)
    positions, series = [], {k: [] for k in observers}
    proper = 0
    delta = params.delta
    for step in range(1, params.max_steps + 1):
        u, log_acc = props.next()
        y = x + delta * u
        ok, log_py = _accept(target, log_px, y, log_acc)
        if ok:
            x, log_px = y, log_py
            proper += 1
        if step % params.thin == 0:
            positions.append(x)
            for k, f in observers.items():
                series[k].append(f(x))
    return ChainResult(
        proper_steps=proper,
        total_steps=params.max_steps,
        positions=np.array(positions).reshape(-1, x.size),
        series={k: np.asarray(v, dtype=float) for k, v in series.items()},
        final=x,
    )


# ------------------------------------------------------------------ cone experiments


def check_cone_range(n: int, D: float, min_n: int = 16):
    if n < min_n:
        raise ValueError(f"cone experiments need n >= {min_n}, got n={n}")
    if not 2 * math.sqrt(n) <= D <= n / 2:
        raise ValueError(f"need 2*sqrt(n) <= D <= n/2, got n={n}, D={D}")


def sample_cone_slab(cone: Cone, lo: float, hi: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points of ``cone ∩ {lo <= x1 <= hi}`` by rejection from the bounding cylinder."""
    n = cone.dim
    rmax = max(cone.slice_radius(min(hi, cone.height)), cone.slice_radius(lo))
    out, have = [], 0
    while have < count:
        k = max(64, 2 * (count - have))
        x1 = rng.uniform(lo, hi, size=(k, 1))
        rest = rmax * uniform_unit_ball(k, n - 1, rng)
        cand = np.hstack([x1, rest])
        keep = cand[cone.contains(cand)]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:count]


@dataclass(frozen=True)
class HittingResult:
    proper_steps: np.ndarray
    total_steps: np.ndarray
    censored: np.ndarray


def hitting_steps(
    body: ConvexBody,
    starts: np.ndarray,
    delta: float,
    target_x1: float,
    cap: int,
    rngs: list[np.random.Generator],
) -> HittingResult:
    """Uniform-target ball walks (one per start, run in lockstep) until ``x1 >= target_x1``."""
    starts = np.array(starts, dtype=float)
    C, n = starts.shape
    if len(rngs) != C:
        raise ValueError("need one generator per chain")
    x = starts.copy()
    proper = np.zeros(C, dtype=np.int64)
    total = np.zeros(C, dtype=np.int64)
    active = x[:, 0] < target_x1
    props = [_Proposals(n, r) for r in rngs]
    step = 0
    while active.any() and step < cap:
        k = step % BLOCK
        if k == 0:
            for p in props:
                p._refill()
            U = np.stack([p.u for p in props])
        y = x + delta * U[:, k, :]
        ok = active & body.contains(y)
        x[ok] = y[ok]
        proper += ok
        total += active
        active &= x[:, 0] < target_x1
        step += 1
    return HittingResult(proper, total, active.copy())


@dataclass(frozen=True)
class ConeMixingRow:
    chain_id: int
    n: int
    D: float
    delta: float
    proper_steps: int
    total_steps: int
    censored: bool


def cone_mixing_experiment(
    n: int, D: float, delta: float | None = None, chains: int = 32, seed: int = 0, cap: int | None = None
) -> list[ConeMixingRow]:
    """Proper steps for walks started uniform on the slab ``t0 <= x1 <= t0 + 1`` to reach ``x1 >= n - 1``.

    Chain ``i`` draws its start from stream ``(seed, i, 0)`` and its moves from
    ``(seed, i, 1)``; the default step cap is ``50 n^2 D``.
    """
    check_cone_range(n, D)
    delta = 1.0 / math.sqrt(n) if delta is None else float(delta)
    cap = int(50 * n * n * D) if cap is None else int(cap)
    cone = Cone(n, D)
    t0 = cone_start(n, D)
    starts = np.vstack([sample_cone_slab(cone, t0, t0 + 1, 1, stream(seed, i, 0)) for i in range(chains)])
    res = hitting_steps(cone, starts, delta, n - 1.0, cap, [stream(seed, i, 1) for i in range(chains)])
    return [
        ConeMixingRow(i, n, float(D), delta, int(res.proper_steps[i]), int(res.total_steps[i]), bool(res.censored[i]))
        for i in range(chains)
    ]


@dataclass(frozen=True)
class DriftEstimate:
    drift: float
    stderr: float
    m: int
    acceptance: float


def proper_step_drift(body: ConvexBody, starts: np.ndarray, delta: float, rng: np.random.Generator) -> DriftEstimate:
    """Mean ``x1' - x1`` over one proper step from each start (proposals redrawn until accepted)."""
    starts = np.asarray(starts, dtype=float)
    m, n = starts.shape
    if m == 0:
        raise ValueError("need at least one start (m >= 1)")
    moves = np.empty(m)
    pending = np.arange(m)
    tries = 0
    while pending.size:
        u = uniform_unit_ball(pending.size, n, rng)
        y = starts[pending] + delta * u
        ok = body.contains(y)
        moves[pending[ok]] = delta * u[ok, 0]
        tries += pending.size
        pending = pending[~ok]
    return DriftEstimate(float(moves.mean()), float(moves.std(ddof=1) / math.sqrt(m)) if m > 1 else math.inf, m, m / tries)


def drift_estimate(
    n: int, D: float, delta: float | None, slice_t: float | None, m: int, rng: np.random.Generator
) -> DriftEstimate:
    """Drift along ``e1`` per proper step from points uniform on the cone slice ``x1 = slice_t``."""
    if m < 1:
        raise ValueError("m must be positive")
    check_cone_range(n, D)
    cone = Cone(n, D)
    t0 = cone_start(n, D)
    slice_t = 0.5 * (t0 + n) if slice_t is None else float(slice_t)
    if not t0 < slice_t < n:
        raise ValueError(f"slice_t must lie in (t0, n) = ({t0:.4g}, {n})")
    delta = 1.0 / math.sqrt(n) if delta is None else float(delta)
    r = cone.slice_radius(slice_t)
    starts = np.hstack([np.full((m, 1), slice_t), r * uniform_unit_ball(m, n - 1, rng)])
    return proper_step_drift(cone, starts, delta, rng)

