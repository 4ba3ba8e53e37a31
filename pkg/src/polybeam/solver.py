"""Equality-constrained least squares with Euclidean-ball constraints.

Solves::

    minimize    ||A x - b||^2
    subject to  E x = f
                ||B_i x|| <= rho,   i = 0 .. I-1

The equalities are eliminated with an orthonormal null-space basis
``x = x0 + Z z`` (SVD, so the rank check comes for free).  The balls are
handled by a log barrier on the squared constraints
``c_i(z) = ||B_i (x0 + Z z)||^2 - rho^2 <= 0`` and damped Newton steps with a
backtracking line search.  A phase-I problem ``min s  s.t. ||B_i x||^2 <= s``
over the same affine set supplies a strictly feasible start when the
minimum-norm point of ``E x = f`` is not interior.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la

log = logging.getLogger(__name__)


class InfeasibleError(ValueError):
    """The affine set misses the intersection of the balls.

    ``certificate`` is the phase-I optimum ``min_x max_i ||B_i x|| - rho``
    over ``E x = f`` (positive when infeasible).
    """

    def __init__(self, message, certificate):
        super().__init__(message)
        self.certificate = certificate


class NonConvergenceError(ArithmeticError):
    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


@dataclass
class SolverOptions:
    kkt_tol: float = 1e-7
    max_newton: int = 50
    max_stages: int = 12
    alpha: float = 0.3
    beta: float = 0.7
    mu_factor: float = 10.0
    newton_tol: float = 1e-10
    gap_tol: float = 1e-10
    raise_on_nonconvergence: bool = True


@dataclass
class QcqpInstance:
    A: np.ndarray
    b: np.ndarray
    E: np.ndarray
    f: np.ndarray
    ball_ops: Sequence[np.ndarray]
    rho: float

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.A.shape[1]
        self.b = np.asarray(self.b, dtype=float).ravel()
        E = np.asarray(self.E, dtype=float)
        self.E = E.reshape(0, n) if E.size == 0 else np.atleast_2d(E)
        self.f = np.asarray(self.f, dtype=float).ravel()
        self.ball_ops = [np.atleast_2d(np.asarray(B, dtype=float)) for B in self.ball_ops]
        if self.b.size != self.A.shape[0]:
            raise ValueError("A and b disagree in row count")
        if self.E.shape[1] != n or self.f.size != self.E.shape[0]:
            raise ValueError("E/f shapes inconsistent with A")
        if any(B.shape[1] != n for B in self.ball_ops):
            raise ValueError("ball operator column count must equal the variable count")
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ValueError("rho must be finite and positive")

    @property
    def num_vars(self) -> int:
        return self.A.shape[1]

    def objective(self, x) -> float:
        r = self.A @ x - self.b
        return float(r @ r)

    def ball_norms(self, x) -> np.ndarray:
        return np.array([np.linalg.norm(B @ x) for B in self.ball_ops])


@dataclass
class QcqpSolution:
    x: np.ndarray
    objective: float
    kkt_residual: float
    active_balls: tuple[int, ...]
    iterations: int
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duality_gap: float = 0.0
    stage_objectives: list = field(default_factory=list)


@dataclass
class _Reduced:
    """The instance rewritten in null-space coordinates ``x = x0 + Z z``.

    All constraint Hessians are constant and cached.
    """

    x0: np.ndarray
    Z: np.ndarray
    AZ: np.ndarray
    r0: np.ndarray
    C: np.ndarray  # (I, rows, k)
    d: np.ndarray  # (I, rows)
    rho2: float

    def __post_init__(self):
        self.H_obj = 2 * self.AZ.T @ self.AZ
        self.H_balls = 2 * np.einsum("irk,irl->ikl", self.C, self.C)

    def x(self, z):
        return self.x0 + self.Z @ z

    # objective ||AZ z + r0||^2
    def value(self, z):
        r = self.AZ @ z + self.r0
        return r @ r

    def derivs(self, z):
        r = self.AZ @ z + self.r0
        return r @ r, 2 * self.AZ.T @ r, self.H_obj

    # constraints ||C_i z + d_i||^2 - rho^2 <= 0
    def cons_value(self, z):
        u = np.einsum("irk,k->ir", self.C, z) + self.d
        return np.einsum("ir,ir->i", u, u) - self.rho2

    def cons_derivs(self, z):
        u = np.einsum("irk,k->ir", self.C, z) + self.d
        c = np.einsum("ir,ir->i", u, u) - self.rho2
        return c, 2 * np.einsum("irk,ir->ik", self.C, u), self.H_balls


class _PhaseOne:
    """``min s  s.t. ||C_i z + d_i||^2 <= s`` over ``y = (z, s)``."""

    def __init__(self, red: _Reduced):
        self.red = red
        k = red.Z.shape[1]
        self.k = k
        self._g = np.zeros(k + 1)
        self._g[-1] = 1.0
        self._H = np.zeros((k + 1, k + 1))
        m = red.C.shape[0]
        self._Hc = np.zeros((m, k + 1, k + 1))
        self._Hc[:, :k, :k] = red.H_balls

    def value(self, y):
        return y[-1]

    def derivs(self, y):
        return y[-1], self._g, self._H

    def norms2(self, y):
        return self.red.cons_value(y[:self.k]) + self.red.rho2

    def cons_value(self, y):
        return self.norms2(y) - y[-1]

    def cons_derivs(self, y):
        c, g, _ = self.red.cons_derivs(y[:self.k])
        gy = np.hstack([g, -np.ones((c.size, 1))])
        return c + self.red.rho2 - y[-1], gy, self._Hc


def _null_space(E: np.ndarray, f: np.ndarray, n: int, rank_tol: float = 1e-10):
    if E.shape[0] == 0:
        return np.zeros(n), np.eye(n)
    U, s, Vt = la.svd(E)
    if s.size < E.shape[0] or s[-1] <= rank_tol * s[0]:
        raise ValueError("equality constraint matrix is not of full row rank")
    r = E.shape[0]
    x0 = Vt[:r].T @ ((U.T @ f) / s)
    return x0, Vt[r:].T


def _reduce(inst: QcqpInstance) -> _Reduced:
    x0, Z = _null_space(inst.E, inst.f, inst.num_vars)
    k = Z.shape[1]
    if inst.ball_ops:
        C = np.stack([B @ Z for B in inst.ball_ops])
        d = np.stack([B @ x0 for B in inst.ball_ops])
    else:
        C = np.zeros((0, 0, k))
        d = np.zeros((0, 0))
    return _Reduced(x0, Z, inst.A @ Z, inst.A @ x0 - inst.b, C, d, inst.rho ** 2)


def _newton_solve(H, g):
    try:
        c = la.cho_factor(H, check_finite=False)
        return la.cho_solve(c, g, check_finite=False)
    except la.LinAlgError:
        return la.lstsq(H, g, check_finite=False)[0]


def _max_step(c, a, b):
    """Largest ``s`` keeping every ``c_i + s a_i + s^2 b_i < 0`` (``c < 0``, ``b >= 0``)."""
    s = np.full(c.shape, np.inf)
    quad = b > 0
    disc = np.sqrt(np.maximum(a * a - 4 * b * c, 0.0))
    pos = a >= 0
    # stable roots of b s^2 + a s + c
    q = -0.5 * (a + np.where(pos, disc, -disc))
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.where(pos, c / q, q / b)
        lin = np.where(a > 0, -c / a, np.inf)
    s = np.where(quad, root, lin)
    return float(np.min(s, initial=np.inf))


def _center(prob, y: np.ndarray, t: float, opts: SolverOptions, stop: Callable | None = None):
    """Minimize ``t*f(y) - sum(log(-c(y)))`` from a strictly feasible ``y``."""

    def phi(y):
        c = prob.cons_value(y)
        if np.any(c >= 0):
            return np.inf
        return t * prob.value(y) - np.sum(np.log(-c))

    steps = 0
    for steps in range(1, opts.max_newton + 1):
        _, g0, H0 = prob.derivs(y)
        c, cg, cH = prob.cons_derivs(y)
        inv = 1.0 / (-c)
        grad = t * g0 + cg.T @ inv
        hess = t * H0 + np.einsum("i,ikl->kl", inv, cH) + (cg.T * inv**2) @ cg
        dy = _newton_solve(hess, -grad)
        slope = grad @ dy
        phi0 = phi(y)
        # decrement below the rounding level of phi: no further progress possible
        if -slope / 2 <= max(opts.newton_tol, 1e-14 * abs(phi0)):
            break
        curv = 0.5 * np.einsum("k,ikl,l->i", dy, cH, dy)
        s = min(1.0, 0.99 * _max_step(c, cg @ dy, curv))
        for _ in range(60):
            y_new = y + s * dy
            if phi(y_new) <= phi0 + opts.alpha * s * slope:
                break
            s *= opts.beta
        else:
            break
        y = y_new
        if stop is not None and stop(y):
            break
    return y, steps


def _phase_one(red: _Reduced, opts: SolverOptions, margin: float = 1e-6):
    """Strictly feasible ``z`` for the balls, or :class:`InfeasibleError`."""
    prob = _PhaseOne(red)
    k = prob.k
    target = red.rho2 * (1 - margin) ** 2

    def done(y):
        return np.max(prob.norms2(y)) < target

    y = np.zeros(k + 1)
    s0 = np.max(prob.norms2(y))
    y[-1] = 1.1 * s0 + 1.0
    t = 1.0 / max(s0, 1e-12)
    for _ in range(2 * opts.max_stages):
        y, _ = _center(prob, y, t, opts, stop=done)
        if done(y):
            return y[:k]
        if red.d.shape[0] / t < 1e-12 * max(1.0, red.rho2):
            break
        t *= opts.mu_factor
    best = np.sqrt(np.max(prob.norms2(y)))
    rho = np.sqrt(red.rho2)
    if best < rho:
        return y[:k]
    raise InfeasibleError(
        f"no point of the affine set lies inside all balls (phase-I excess {best - rho:.3e})",
        best - rho,
    )


def feasible_start(inst: QcqpInstance) -> np.ndarray:
    """Strictly feasible start: the minimum-norm solution of ``E x = f`` or a phase-I point."""
    red = _reduce(inst)
    return red.x(_start(red, inst, SolverOptions()))


def _start(red: _Reduced, inst: QcqpInstance, opts: SolverOptions) -> np.ndarray:
    z = np.zeros(red.Z.shape[1])
    if not inst.ball_ops:
        return z
    norms = np.sqrt(np.maximum(red.cons_value(z) + red.rho2, 0.0))
    if np.all(norms <= inst.rho * (1 - 1e-9)):
        return z
    log.debug("minimum-norm point violates a ball; running phase I")
    return _phase_one(red, opts)


def _kkt(red: _Reduced, z, lam):
    _, g0, _ = red.derivs(z)
    c, cg, _ = red.cons_derivs(z)
    stat = g0 + cg.T @ lam if lam.size else g0
    r_stat = np.max(np.abs(stat), initial=0.0) / max(1.0, np.max(np.abs(g0), initial=0.0))
    r_comp = np.max(lam * np.abs(c), initial=0.0)
    r_feas = np.max(np.maximum(c, 0.0), initial=0.0) / red.rho2 if c.size else 0.0
    return max(r_stat, r_comp, r_feas)


def _polish(red: _Reduced, z, lam, iters: int = 8):
    """Newton on the KKT equations of the balls that are active at ``z``.

    Barrier multipliers ``1/(t*(-c_i))`` are only as good as the centering,
    which degrades as ``t`` grows; a few full Newton steps on
    ``grad f + sum lam_i grad c_i = 0, c_J = 0`` recover full accuracy.
    """
    c = red.cons_value(z)
    J = np.flatnonzero(-c <= 1e-4 * red.rho2)
    lam = lam.copy()
    lam[np.setdiff1d(np.arange(lam.size), J)] = 0.0
    k = z.size
    for _ in range(iters):
        _, g0, H0 = red.derivs(z)
        c, cg, cH = red.cons_derivs(z)
        HL = H0 + np.einsum("i,ikl->kl", lam[J], cH[J])
        Jc = cg[J]
        K = np.block([[HL, Jc.T], [Jc, np.zeros((J.size, J.size))]])
        rhs = -np.concatenate([g0 + cg.T @ lam, c[J]])
        try:
            step = la.solve(K, rhs, check_finite=False)
        except la.LinAlgError:
            return None
        z = z + step[:k]
        lam[J] += step[k:]
        if np.max(np.abs(step)) <= 1e-15 * max(1.0, np.max(np.abs(z))):
            break
    c = red.cons_value(z)
    if np.any(lam < 0) or np.any(c > 1e-12 * red.rho2):
        return None
    return z, lam


def solve(inst: QcqpInstance, opts: SolverOptions | None = None) -> QcqpSolution:
    """Globally solve the convex instance to ``opts.kkt_tol``."""
    opts = opts or SolverOptions()
    red = _reduce(inst)
    k = red.Z.shape[1]
    n_balls = len(inst.ball_ops)

    if k == 0:
        x = red.x0
        norms = inst.ball_norms(x)
        if np.any(norms > inst.rho * (1 + 1e-9)):
            raise InfeasibleError("equality constraints fix x outside a ball", float(norms.max() - inst.rho))
        return QcqpSolution(x, inst.objective(x), 0.0, tuple(np.flatnonzero(norms >= inst.rho * (1 - 1e-6))),
                            0, np.zeros(n_balls))

    if n_balls == 0:
        z = la.lstsq(red.AZ, -red.r0)[0]
        lam = np.zeros(0)
        x = red.x(z)
        return QcqpSolution(x, inst.objective(x), _kkt(red, z, lam), (), 1, lam)

    # ball constraints all slack at the equality-constrained LS point: that point is optimal
    z_ls, *_ = la.lstsq(red.AZ, -red.r0, check_finite=False)
    if np.all(red.cons_value(z_ls) < -1e-9 * red.rho2):
        lam = np.zeros(n_balls)
        x = red.x(z_ls)
        return QcqpSolution(x, inst.objective(x), _kkt(red, z_ls, lam), (), 1, lam, 0.0,
                            [inst.objective(x)])

    z = _start(red, inst, opts)
    f0, g0, _ = red.derivs(z)
    c, cg, _ = red.cons_derivs(z)
    g_bar = cg.T @ (1.0 / -c)
    gn = np.linalg.norm(g0)
    t = np.linalg.norm(g_bar) / gn if gn > 0 else 1.0
    # a start deep inside the balls gives a tiny ratio; keep enough stages to close the gap
    t_floor = n_balls / (1.0 + f0)
    t = float(np.clip(t, t_floor, 1e8))

    history = []
    total_steps = 0
    lam = np.zeros(n_balls)
    kkt = np.inf
    for stage in range(opts.max_stages):
        z, steps = _center(red, z, t, opts)
        total_steps += steps
        c = red.cons_value(z)
        lam = 1.0 / (t * -c)
        fval = red.value(z)
        history.append(float(fval))
        kkt = _kkt(red, z, lam)
        gap = n_balls / t
        if gap <= opts.gap_tol * (1 + abs(fval)) and kkt <= opts.kkt_tol:
            break
        t *= opts.mu_factor

    if kkt > 1e-3 * opts.kkt_tol:
        polished = _polish(red, z, lam)
        if polished is not None and _kkt(red, *polished) < kkt:
            z, lam = polished
            kkt = _kkt(red, z, lam)

    x = red.x(z)
    norms = inst.ball_norms(x)
    active = tuple(int(i) for i in np.flatnonzero(norms >= inst.rho * (1 - 1e-6)))
    sol = QcqpSolution(x, inst.objective(x), float(kkt), active, total_steps, lam,
                       n_balls / t, history)
    if kkt > opts.kkt_tol and opts.raise_on_nonconvergence:
        raise NonConvergenceError(f"KKT residual {kkt:.2e} above tolerance after {stage + 1} stages", sol)
    return sol
