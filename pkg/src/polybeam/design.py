"""Per-frequency RLSFI / RLSFIP weight design.

For every design frequency the complex problem

    minimize    sum_i || G D_i w - b_i ||^2
    subject to  a_i^T D_i w = 1,
                |a_i^T D_i w|^2 / ||D_i w||^2 >= gamma      for every PLD i

is handed to :mod:`polybeam.solver` after real stacking.  Because the
distortionless equality fixes the numerator to one, the white-noise-gain
ratio constraint is the same set as the norm ball ``||D_i w|| <= 1/sqrt(gamma)``.
That ball form is what the solver sees; the tests check the ratio form on
the returned weights.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Direction, DesignGrid, PolynomialOrderSpec, map_phi_to_D, pld_steering_matrix
from .solver import InfeasibleError, QcqpInstance, SolverOptions, solve
from .steer import SteeringSet

log = logging.getLogger(__name__)


class DesignError(RuntimeError):
    def __init__(self, message, freq_hz=None):
        super().__init__(message)
        self.freq_hz = freq_hz


def stack_vector(v: np.ndarray) -> np.ndarray:
    return np.concatenate([v.real, v.imag])


def unstack_vector(x: np.ndarray) -> np.ndarray:
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def stack_matrix(M: np.ndarray) -> np.ndarray:
    """Real form of ``M`` acting on ``[Re w; Im w]``."""
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


@dataclass(frozen=True)
class DesiredResponse:
    """Frequency-invariant desired magnitude over the look grid for one PLD."""

    values: np.ndarray
    look: Direction
    mainlobe_width_deg: float = 30.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("desired response values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def desired_response(grid: DesignGrid, look: Direction, mainlobe_width_deg: float = 30.0) -> DesiredResponse:
    """Raised-cosine main lobe of half-width ``mainlobe_width_deg`` around ``look``, zero elsewhere."""
    if mainlobe_width_deg <= 0:
        raise ValueError("main-lobe width must be positive")
    delta = np.abs(grid.phis_deg - look.phi)
    v = np.where(delta < mainlobe_width_deg,
                 0.5 * (1 + np.cos(np.pi * delta / mainlobe_width_deg)), 0.0)
    v[np.argmin(delta)] = 1.0
    return DesiredResponse(v, look, mainlobe_width_deg)


def db_to_linear(gamma_db: float) -> float:
    return 10.0 ** (gamma_db / 10.0)


@dataclass(frozen=True)
class FrequencyDesign:
    freq_hz: float
    weights: np.ndarray  # (N*(P+1),) complex, index n*(P+1) + p
    N: int
    P: int
    plds: tuple[Direction, ...]
    wng: np.ndarray  # per PLD, linear
    response: np.ndarray  # a_i^T D_i w per PLD
    objective: float
    kkt_residual: float
    active: tuple[int, ...] = ()

    @property
    def W(self) -> np.ndarray:
        """Weights as an ``N x (P+1)`` array ``W[n, p]``."""
        return self.weights.reshape(self.N, self.P + 1)


def build_instance(G: np.ndarray, steering: Sequence[np.ndarray], Ds: Sequence[float],
                   bhats: Sequence[np.ndarray], P: int, gamma: float) -> QcqpInstance:
    """Real-stacked instance for one frequency.

    ``G`` is ``M x N``; ``steering[i]`` the steering vector of PLD ``i``.
    """
    N = G.shape[1]
    A_rows, b_rows, E_rows, f_rows, balls = [], [], [], [], []
    for a, D, bhat in zip(steering, Ds, bhats):
        Dm = pld_steering_matrix(D, N, P)
        A_rows.append(stack_matrix(G @ Dm))
        b_rows.append(np.concatenate([bhat, np.zeros_like(bhat)]))
        E_rows.append(stack_matrix((a @ Dm)[None, :]))
        f_rows.append([1.0, 0.0])
        balls.append(stack_matrix(Dm.astype(complex)))
    return QcqpInstance(
        np.vstack(A_rows), np.concatenate(b_rows), np.vstack(E_rows),
        np.concatenate(f_rows), balls, 1.0 / np.sqrt(gamma),
    )


def _design_one(sset: SteeringSet, q: int, spec: PolynomialOrderSpec, bhats, gamma: float,
                opts: SolverOptions | None) -> FrequencyDesign:
    G = sset.G(q)
    idx = [sset.grid.index_of(d) for d in spec.plds]
    steering = [G[m] for m in idx]
    Ds = [map_phi_to_D(d.phi) for d in spec.plds]
    inst = build_instance(G, steering, Ds, [b.values for b in bhats], spec.P, gamma)
    f_hz = float(sset.grid.freqs_hz[q])
    try:
        sol = solve(inst, opts)
    except InfeasibleError as exc:
        raise DesignError(f"WNG bound infeasible at {f_hz:g} Hz", f_hz) from exc
    w = unstack_vector(sol.x)
    N = G.shape[1]
    wngs, resp = [], []
    for a, D in zip(steering, Ds):
        v = pld_steering_matrix(D, N, spec.P) @ w
        r = a @ v
        resp.append(r)
        wngs.append(abs(r) ** 2 / np.vdot(v, v).real)
    return FrequencyDesign(f_hz, w, N, spec.P, spec.plds, np.array(wngs), np.array(resp),
                           sol.objective, sol.kkt_residual, sol.active_balls)


def design_rlsfip(sset: SteeringSet, spec: PolynomialOrderSpec, bhats: Sequence[DesiredResponse],
                  gamma_db: float, opts: SolverOptions | None = None,
                  workers: int = 1) -> list[FrequencyDesign]:
    """Joint polynomial design over all PLDs, one :class:`FrequencyDesign` per frequency."""
    if len(bhats) != spec.I:
        raise ValueError("need one desired response per prototype look direction")
    for d in spec.plds:
        sset.grid.index_of(d)
    gamma = db_to_linear(gamma_db)
    qs = range(sset.grid.Q)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(lambda q: _design_one(sset, q, spec, bhats, gamma, opts), qs))
    return [_design_one(sset, q, spec, bhats, gamma, opts) for q in qs]


def design_rlsfi(sset: SteeringSet, look: Direction, bhat: DesiredResponse, gamma_db: float,
                 opts: SolverOptions | None = None, workers: int = 1) -> list[FrequencyDesign]:
    """Single-look-direction design (the ``P = 0``, ``I = 1`` case)."""
    look = sset.grid.look_grid[sset.grid.index_of(look)]
    return design_rlsfip(sset, PolynomialOrderSpec(0, (look,)), [bhat], gamma_db, opts, workers)


def extract_steered_weights(fd: FrequencyDesign, D: float, N: int | None = None,
                            P: int | None = None) -> np.ndarray:
    """Effective channel weights ``sum_p D^p W[n, p]`` for steering scalar ``D``."""
    N = fd.N if N is None else N
    P = fd.P if P is None else P
    powers = D ** np.arange(P + 1)
    return fd.weights.reshape(N, P + 1) @ powers


def steered_weights(designs: Sequence[FrequencyDesign], D: float) -> np.ndarray:
    """``(Q, N)`` effective weights of a whole design at steering scalar ``D``."""
    return np.stack([extract_steered_weights(fd, D) for fd in designs])


def weight_tensor(designs: Sequence[FrequencyDesign]) -> np.ndarray:
    """``(Q, N, P+1)`` stacked weights."""
    return np.stack([fd.W for fd in designs])
