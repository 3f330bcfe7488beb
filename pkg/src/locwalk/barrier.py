"""The Stieltjes barrier ``u(X)``: the unique ``u > lambda_max(X)`` with ``tr((uI - X)^-q) = Phi``.

All routines eigendecompose ``X`` once and work with the resolvent
``R = (uI - X)^{-1} = V diag(1/(u - lambda)) V^T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SYM_TOL = 1e-12


class BarrierError(ArithmeticError):
    pass


@dataclass(frozen=True)
class BarrierParams:
    q: int
    phi: float

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 1:
            raise ValueError(f"q must be an integer >= 1, got {self.q}")
        if not self.phi > 0:
            raise ValueError(f"Phi must be positive, got {self.phi}")


@dataclass(frozen=True)
class BarrierValue:
    u: float
    residual: float
    gap: float
    iterations: int


def check_symmetric(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    scale = max(1.0, float(np.max(np.abs(X)))) if X.size else 1.0
    if np.max(np.abs(X - X.T), initial=0.0) > SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (X + X.T)


def _potential(u: float, lam: np.ndarray, q: int) -> tuple[float, float]:
    inv = 1.0 / (u - lam)
    p = inv**q
    return float(p.sum()), float(-q * (p * inv).sum())


def solve_eigs(lam: np.ndarray, q: int, phi: float, tol: float = 1e-10, max_iter: int = 200) -> BarrierValue:
    """Root of ``sum (u - lam_i)^-q = Phi`` given the eigenvalues.

    Safeguarded Newton: the potential is smooth, convex and strictly decreasing on
    ``(lam_max, inf)``, so Newton from the left never overshoots the root; a
    bisection fallback guards the bracket anyway.
    """
    if not 0 < tol <= 1e-6:
        raise ValueError(f"tol must lie in (0, 1e-6], got {tol}")
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    lmax = float(lam.max())
    scale = (n / phi) ** (1.0 / q)
    lo, hi = lmax + 1e-3 * scale, lmax + 1e3 * scale
    # Newton from the left endpoint of the tight bracket [lmax + Phi^-1/q, lmax + (n/Phi)^1/q]
    u = lmax + phi ** (-1.0 / q)
    it = 0
    for it in range(1, max_iter + 1):
        f, df = _potential(u, lam, q)
        f -= phi
        if f > 0:
            lo = max(lo, u)
        else:
            hi = min(hi, u)
        step = -f / df
        nxt = u + step
        if not lo <= nxt <= hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - u) <= 4 * np.finfo(float).eps * max(abs(u), u - lmax):
            u = nxt
            break
        u = nxt
    f, _ = _potential(u, lam, q)
    residual = abs(f - phi) / phi
    if residual > tol:
        raise BarrierError(f"barrier solve stalled at residual {residual:.3e} after {it} iterations")
    return BarrierValue(u=u, residual=residual, gap=u - lmax, iterations=it)


def solve_u(X, q: int, phi: float, tol: float = 1e-10) -> BarrierValue:
    BarrierParams(q, phi)
    X = check_symmetric(X)
    return solve_eigs(np.linalg.eigvalsh(X), q, phi, tol)


class _Resolvent:
    """Eigenbasis of X at the solved u, with powers of the resolvent on demand."""

    def __init__(self, X, q: int, phi: float, tol: float = 1e-10):
        BarrierParams(q, phi)
        X = check_symmetric(X)
        self.q = q
        self.lam, self.V = np.linalg.eigh(X)
        self.value = solve_eigs(self.lam, q, phi, tol)
        self.r = 1.0 / (self.value.u - self.lam)
        self.kappa = float(np.sum(self.r ** (q + 1)))

    def rotate(self, H) -> np.ndarray:
        H = check_symmetric(H, "H")
        return self.V.T @ H @ self.V

    def tr_power(self, Hr: np.ndarray, k: int) -> float:
        # tr(R^k H) with H already in the eigenbasis
        return float(np.dot(self.r**k, np.diag(Hr)))


def du(X, q: int, phi: float, H) -> float:
    """Directional derivative ``tr(R^{q+1} H) / tr(R^{q+1})``."""
    res = _Resolvent(X, q, phi)
    return res.tr_power(res.rotate(H), q + 1) / res.kappa


def d2u(X, q: int, phi: float, H1, H2) -> float:
    """Second directional derivative ``D^2 u(X)[H1, H2]``."""
    res = _Resolvent(X, q, phi)
    A, B = res.rotate(H1), res.rotate(H2)
    r, kappa = res.r, res.kappa
    # sum_{k=1}^{q+1} tr(R^k A R^{q+2-k} B) = sum_ij A_ij B_ji sum_k r_i^k r_j^{q+2-k}
    kernel = sum(np.outer(r**k, r ** (q + 2 - k)) for k in range(1, q + 2))
    first = float(np.sum(kernel * A * B.T)) / kappa
    a1, a2 = res.tr_power(A, q + 1), res.tr_power(A, q + 2)
    b1, b2 = res.tr_power(B, q + 1), res.tr_power(B, q + 2)
    t2 = float(np.sum(r ** (q + 2)))
    return (
        first
        - (q + 1) * a1 * b2 / kappa**2
        - (q + 1) * b1 * a2 / kappa**2
        + (q + 1) * a1 * b1 * t2 / kappa**3
    )


def psi(u):
    """Potential ``-(u + 1)^-2``; exact for ``fractions.Fraction`` input."""
    if not u > -1:
        raise ValueError(f"psi needs u > -1, got {u}")
    return -1 / (u + 1) ** 2


def sym_power(A, alpha: float) -> np.ndarray:
    """Real power of a positive definite matrix by spectral calculus."""
    lam, V = np.linalg.eigh(check_symmetric(A, "A"))
    if lam[0] <= 0:
        raise ValueError("matrix is not positive definite")
    return (V * lam**alpha) @ V.T


@dataclass(frozen=True)
class TensorShift:
    lhs: float
    rhs: float

    @property
    def gap(self) -> float:
        return self.rhs - self.lhs


def tensor_shift_gap(A, delta, alpha: float, beta: float) -> TensorShift:
    """Both sides of ``tr(A^a D A^b D) <= tr(A^(a+b) D^2)``."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    A = check_symmetric(A, "A")
    delta = check_symmetric(delta, "delta")
    lam, V = np.linalg.eigh(A)
    if lam[0] <= 0:
        raise ValueError("A is not positive definite")
    Dr = V.T @ delta @ V
    D2 = Dr * Dr
    # in A's eigenbasis both traces are weighted sums of Delta_ij^2
    lhs = float(np.sum(np.outer(lam**alpha, lam**beta) * D2))
    rhs = float(np.sum((lam ** (alpha + beta))[:, None] * D2))
    return TensorShift(lhs, rhs)


def random_symmetric(n: int, rng: np.random.Generator, eigs=None) -> np.ndarray:
    """Random rotation of ``diag(eigs)``; Gaussian symmetric matrix when ``eigs`` is None."""
    if eigs is None:
        G = rng.standard_normal((n, n))
        return 0.5 * (G + G.T)
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    M = (Q * np.asarray(eigs, dtype=float)) @ Q.T
    return 0.5 * (M + M.T)


def opnorm(A) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(A))))


def fd_du(X, q, phi, H, eps: float = 1e-5) -> float:
    return (solve_u(X + eps * H, q, phi).u - solve_u(X - eps * H, q, phi).u) / (2 * eps)


def fd_d2u(X, q, phi, H1, H2, eps: float = 1e-4) -> float:
    u = lambda M: solve_u(M, q, phi).u  # noqa: E731
    return (
        u(X + eps * (H1 + H2)) - u(X + eps * (H1 - H2)) - u(X - eps * (H1 - H2)) + u(X - eps * (H1 + H2))
    ) / (4 * eps * eps)


def barrier_check_suite(seed: int = 0, instances: int = 20, n: int = 5, tensor_instances: int = 100):
    """Finite-difference, identity and tensor-shift checks as rows ``(test, id, metric, value, threshold, pass)``."""
    from .rng import stream

    rows = []
    for q in (1, 2, 3):
        rng = stream(seed, 1, q)
        for i in range(instances):
            X = random_symmetric(n, rng, eigs=rng.uniform(0.0, 0.9, n))
            phi = float(n)
            H1, H2 = random_symmetric(n, rng), random_symmetric(n, rng)
            u = solve_u(X, q, phi).u
            iid = f"q{q}-{i}"
            rows.append(("eig_range", iid, "lambda_max/u", float(np.linalg.eigvalsh(X)[-1] / u), 0.9, None))
            exact, approx = du(X, q, phi, H1), fd_du(X, q, phi, H1)
            rows.append(("du_fd", iid, "rel_err", abs(exact - approx) / max(abs(approx), 1.0), 1e-5, None))
            exact, approx = d2u(X, q, phi, H1, H2), fd_d2u(X, q, phi, H1, H2)
            rows.append(("d2u_fd", iid, "rel_err", abs(exact - approx) / max(abs(approx), 1.0), 1e-4, None))
            I = np.eye(n)
            rows.append(("du_identity", iid, "abs_err", abs(du(X, q, phi, I) - 1.0), 1e-10, None))
            rows.append(("d2u_identity", iid, "abs_err", abs(d2u(X, q, phi, I, I)), 1e-10, None))
            s = float(rng.uniform(-2, 2))
            rows.append(("translation", iid, "abs_err", abs(solve_u(X + s * I, q, phi).u - u - s), 1e-10, None))
    rng = stream(seed, 2)
    for i in range(tensor_instances):
        A = random_symmetric(n, rng, eigs=rng.uniform(0.05, 3.0, n))
        D = random_symmetric(n, rng)
        a, b = rng.uniform(0, 3, 2)
        ts = tensor_shift_gap(A, D, a, b)
        rows.append(("tensor_shift", f"t{i}", "neg_gap", -ts.gap, 1e-10, None))
    return [(t, i, m, v, thr, v <= thr) for t, i, m, v, thr, _ in rows]
