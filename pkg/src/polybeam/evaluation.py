"""Signal-independent metrics: beampattern, white noise gain, MSE over steering.

Metrics take effective per-channel weights ``(Q, N)``.  Pre-FIR weights come
from :func:`polybeam.design.steered_weights`; post-FIR weights from
:func:`fir_weights`, which evaluates the synthesized filters with the
modeling delay removed.  Reports carry a ``stage`` label saying which one
they measure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import Direction, map_phi_to_D
from .design import FrequencyDesign, steered_weights
from .firsynth import FilterBank, bank_response
from .steer import SteeringSet

DB_FLOOR = -80.0


class UndefinedWNGError(ValueError):
    pass


def to_db(x, floor: float = DB_FLOOR, power: bool = False) -> np.ndarray:
    """``20 log10 |x|`` (or ``10 log10 x`` for powers), clipped below at ``floor``."""
    x = np.abs(np.asarray(x))
    with np.errstate(divide="ignore"):
        v = (10 if power else 20) * np.log10(x)
    return np.maximum(v, floor)


def beampattern(weights_by_freq: np.ndarray, sset: SteeringSet) -> np.ndarray:
    """Complex response ``B[q, m] = sum_n W_n(f_q) g_n(f_q, phi_m, theta_m)``."""
    W = np.asarray(weights_by_freq)
    if W.shape != (sset.grid.Q, sset.num_mics):
        raise ValueError(f"weights shape {W.shape} does not match steering set")
    return np.einsum("qmn,qn->qm", sset.responses, W)


def wng(weights: np.ndarray, steering: np.ndarray) -> float:
    """White noise gain ``|a^T w|^2 / ||w||^2`` (linear)."""
    w = np.asarray(weights)
    nrm = np.vdot(w, w).real
    if nrm == 0:
        raise UndefinedWNGError("white noise gain is undefined for all-zero weights")
    return float(abs(np.asarray(steering) @ w) ** 2 / nrm)


def wng_curve(weights_by_freq: np.ndarray, steering_by_freq: np.ndarray) -> np.ndarray:
    W = np.asarray(weights_by_freq)
    a = np.asarray(steering_by_freq)
    nrm = np.sum(np.abs(W) ** 2, axis=1)
    if np.any(nrm == 0):
        raise UndefinedWNGError("white noise gain is undefined for all-zero weights")
    return np.abs(np.sum(a * W, axis=1)) ** 2 / nrm


def mse(response: np.ndarray, desired: np.ndarray) -> float:
    """Mean over frequencies and angles of (|B| - |B_desired|)^2."""
    B = np.abs(np.asarray(response))
    d = np.abs(np.asarray(desired))
    return float(np.mean((B - d[None, :]) ** 2)) if B.ndim == 2 else float(np.mean((B - d) ** 2))


def steering_angles(phi_step: float = 5.0) -> np.ndarray:
    n = 180.0 / phi_step
    if abs(n - round(n)) > 1e-9:
        raise ValueError("phi_step must divide 180")
    return np.linspace(0.0, 180.0, int(round(n)) + 1)


def mse_vs_steering(weights_for_angle: Callable[[float], np.ndarray], sset: SteeringSet,
                    bhat_builder: Callable[[Direction], np.ndarray],
                    phi_step: float = 5.0) -> dict[float, float]:
    """``{phi_ld: MSE}`` over the steering range.

    ``weights_for_angle(phi)`` returns the ``(Q, N)`` effective weights for
    look azimuth ``phi``; ``bhat_builder(direction)`` the desired magnitudes.
    """
    theta = sset.grid.look_grid[0].theta
    table = {}
    for phi in steering_angles(phi_step):
        look = Direction(phi, theta)
        B = beampattern(weights_for_angle(phi), sset)
        table[float(phi)] = mse(B, bhat_builder(look))
    return table


def polynomial_weights(designs: Sequence[FrequencyDesign]) -> Callable[[float], np.ndarray]:
    """Pre-FIR steered weights of a polynomial design, as a function of azimuth."""
    return lambda phi: steered_weights(designs, map_phi_to_D(phi))


def fir_weights(bank: FilterBank, freqs_hz, compensate_delay: bool = True) -> Callable[[float], np.ndarray]:
    """Post-FIR steered weights on ``freqs_hz``, as a function of azimuth."""
    H = bank_response(bank, freqs_hz, compensate_delay=compensate_delay)
    powers = np.arange(bank.P + 1)
    return lambda phi: H @ (map_phi_to_D(phi) ** powers)


def beamwidth_deg(pattern_db_row: np.ndarray, phis_deg: np.ndarray, look_phi: float,
                  level_db: float = -6.0) -> float:
    """Width of the contiguous region around ``look_phi`` above ``level_db`` (relative to the look)."""
    m0 = int(np.argmin(np.abs(phis_deg - look_phi)))
    rel = pattern_db_row - pattern_db_row[m0]
    lo = m0
    while lo > 0 and rel[lo - 1] >= level_db:
        lo -= 1
    hi = m0
    while hi < rel.size - 1 and rel[hi + 1] >= level_db:
        hi += 1
    return float(phis_deg[hi] - phis_deg[lo])


def suppression_gain(target_dir: Direction, interferer_dir: Direction,
                     weights_by_freq: np.ndarray, sset: SteeringSet) -> float:
    """``10 log10`` of the mean over frequency of ``|B(target)|^2 / |B(interferer)|^2``, within +-80 dB."""
    grid = sset.grid
    W = np.asarray(weights_by_freq)
    bt = np.sum(sset.responses[:, grid.index_of(target_dir)] * W, axis=1)
    bi = np.sum(sset.responses[:, grid.index_of(interferer_dir)] * W, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(bt) ** 2 / np.abs(bi) ** 2
    ratio = np.where(np.isnan(ratio), 1.0, ratio)
    with np.errstate(divide="ignore"):
        g = 10 * np.log10(np.mean(ratio))
    return float(np.clip(g, -80.0, 80.0))


@dataclass
class EvalReport:
    freqs_hz: np.ndarray
    phis_deg: np.ndarray
    beampattern_db: np.ndarray  # (Q, M)
    wng_db: np.ndarray  # (Q,)
    mse_by_angle: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def write_csvs(self, prefix) -> dict[str, str]:
        paths = {
            "beampattern": f"{prefix}beampattern.csv",
            "wng": f"{prefix}wng.csv",
        }
        write_beampattern_csv(paths["beampattern"], self.freqs_hz, self.phis_deg, self.beampattern_db)
        write_wng_csv(paths["wng"], self.freqs_hz, self.wng_db)
        if self.mse_by_angle:
            paths["mse"] = f"{prefix}mse.csv"
            write_mse_csv(paths["mse"], self.mse_by_angle)
        return paths


def evaluate(weights_for_angle: Callable[[float], np.ndarray], sset: SteeringSet, look_phi: float,
             bhat_builder: Callable[[Direction], np.ndarray] | None = None,
             phi_step: float = 5.0, stage: str = "pre-fir") -> EvalReport:
    """Beampattern and WNG at ``look_phi``, plus the MSE table when a desired-response builder is given."""
    grid = sset.grid
    look = Direction(look_phi, grid.look_grid[0].theta)
    W = weights_for_angle(look_phi)
    bp = to_db(beampattern(W, sset))
    a = sset.responses[:, grid.index_of(look)]
    w = to_db(wng_curve(W, a), power=True)
    table = mse_vs_steering(weights_for_angle, sset, bhat_builder, phi_step) if bhat_builder else {}
    return EvalReport(np.asarray(grid.freqs_hz), grid.phis_deg, bp, w, table,
                      {"stage": stage, "look_phi_deg": look_phi, "source_kind": sset.source_kind})


def write_beampattern_csv(path, freqs_hz, phis_deg, db) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["f_hz", "phi_deg", "db"])
        for q, f in enumerate(freqs_hz):
            for m, p in enumerate(phis_deg):
                wr.writerow([repr(float(f)), repr(float(p)), repr(float(db[q, m]))])


def write_wng_csv(path, freqs_hz, db) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["f_hz", "db"])
        for f, v in zip(freqs_hz, db):
            wr.writerow([repr(float(f)), repr(float(v))])


def write_mse_csv(path, table: Mapping[float, float]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["phi_ld_deg", "mse"])
        for phi in sorted(table):
            wr.writerow([repr(float(phi)), repr(float(table[phi]))])


def read_csv_columns(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}
