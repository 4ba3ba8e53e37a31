"""Shared domain types, grids and the azimuth -> steering-scalar mapping.

Angles are kept in degrees everywhere outside trigonometric kernels.
Azimuth ``phi`` is measured from the positive x-axis, elevation ``theta``
from the positive z-axis (so ``theta = 90`` is the horizontal plane).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPEED_OF_SOUND = 343.0


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Direction:
    phi: float
    theta: float = 90.0

    def __post_init__(self):
        phi = float(self.phi) % 360.0
        # 359.9999999 % 360 can round to 360.0
        if phi >= 360.0:
            phi = 0.0
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "theta", float(self.theta))
        if not (0.0 <= self.theta <= 180.0) or not math.isfinite(self.phi):
            raise DomainError(f"invalid direction ({self.phi}, {self.theta})")

    def unit_vector(self) -> np.ndarray:
        """Cartesian unit vector pointing from the origin towards the direction."""
        p, t = np.deg2rad(self.phi), np.deg2rad(self.theta)
        return np.array([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])

    def angle_to(self, other: "Direction") -> float:
        """Great-circle angle between two directions, in degrees."""
        c = float(np.dot(self.unit_vector(), other.unit_vector()))
        return math.degrees(math.acos(min(1.0, max(-1.0, c))))

    def matches(self, other: "Direction", tol_deg: float = 0.5) -> bool:
        dphi = abs((self.phi - other.phi + 180.0) % 360.0 - 180.0)
        return dphi <= tol_deg and abs(self.theta - other.theta) <= tol_deg


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in meters (z up), optionally on a rigid sphere."""

    mics: np.ndarray
    head_radius: float | None = None
    label: str = ""

    def __post_init__(self):
        mics = _frozen(self.mics)
        if mics.ndim != 2 or mics.shape[1] != 3:
            raise DomainError("mics must have shape (N, 3)")
        if mics.shape[0] < 2:
            raise DomainError("an array needs at least two microphones")
        if not np.all(np.isfinite(mics)):
            raise DomainError("microphone positions must be finite")
        if self.head_radius is not None:
            if self.head_radius <= 0:
                raise DomainError("head radius must be positive")
            r = np.linalg.norm(mics, axis=1)
            if np.max(np.abs(r - self.head_radius)) > 1e-6:
                raise DomainError("microphones must lie on the sphere surface")
        object.__setattr__(self, "mics", mics)

    @property
    def num_mics(self) -> int:
        return self.mics.shape[0]

    def mic_directions(self) -> list[Direction]:
        """Directions of the microphones as seen from the sphere center."""
        out = []
        for x, y, z in self.mics:
            r = math.sqrt(x * x + y * y + z * z)
            theta = math.degrees(math.acos(z / r)) if r > 0 else 90.0
            phi = math.degrees(math.atan2(y, x)) if (x or y) else 0.0
            out.append(Direction(phi, theta))
        return out

    @classmethod
    def on_sphere(cls, radius: float, directions: Sequence[Direction], label: str = ""):
        mics = np.array([radius * d.unit_vector() for d in directions])
        return cls(mics, head_radius=radius, label=label)

    def to_dict(self) -> dict:
        return {
            "mics": self.mics.tolist(),
            "head_radius": self.head_radius,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArrayGeometry":
        if "mic_directions" in d:
            dirs = [Direction(*pd) for pd in d["mic_directions"]]
            return cls.on_sphere(float(d["head_radius"]), dirs, d.get("label", ""))
        return cls(np.asarray(d["mics"], dtype=float), d.get("head_radius"), d.get("label", ""))


def head_geometry(radius: float = 0.06) -> ArrayGeometry:
    """Five microphones spread over the forehead of a spherical head.

    The robot faces broadside (phi = 90 deg).  Microphones sit at 75 deg
    colatitude, 25 deg apart in azimuth, centred on the facing direction.
    """
    dirs = [Direction(90.0 + d, 75.0) for d in (-50.0, -25.0, 0.0, 25.0, 50.0)]
    return ArrayGeometry.on_sphere(radius, dirs, label="five-mic head array")


@dataclass(frozen=True)
class DesignGrid:
    freqs_hz: np.ndarray
    sample_rate_hz: float
    look_grid: tuple[Direction, ...]

    def __post_init__(self):
        f = _frozen(self.freqs_hz).ravel()
        if f.size < 1:
            raise DomainError("need at least one design frequency")
        if np.any(np.diff(f) <= 0):
            raise DomainError("design frequencies must be strictly increasing")
        if f[0] <= 0 or f[-1] >= self.sample_rate_hz / 2:
            raise DomainError("design frequencies must lie in (0, fs/2)")
        look = tuple(self.look_grid)
        if len(look) < 2:
            raise DomainError("look grid needs at least two directions")
        phis = np.array([d.phi for d in look])
        if np.any(np.diff(phis) <= 0):
            raise DomainError("look grid azimuths must be strictly increasing")
        object.__setattr__(self, "freqs_hz", f)
        object.__setattr__(self, "look_grid", look)

    @property
    def Q(self) -> int:
        return self.freqs_hz.size

    @property
    def M(self) -> int:
        return len(self.look_grid)

    @property
    def phis_deg(self) -> np.ndarray:
        return np.array([d.phi for d in self.look_grid])

    def index_of(self, direction: Direction, tol_deg: float = 0.5) -> int:
        for m, d in enumerate(self.look_grid):
            if d.matches(direction, tol_deg):
                return m
        raise LookupError(f"direction ({direction.phi}, {direction.theta}) is not on the grid")

    @classmethod
    def uniform(
        cls,
        f_lo: float = 300.0,
        f_hi: float = 5000.0,
        num_freqs: int = 129,
        sample_rate_hz: float = 16000.0,
        theta_deg: float = 56.4,
        phi_step_deg: float = 5.0,
        phi_max_deg: float = 180.0,
    ) -> "DesignGrid":
        freqs = np.linspace(f_lo, f_hi, num_freqs)
        n_phi = int(round(phi_max_deg / phi_step_deg)) + 1
        phis = np.linspace(0.0, phi_max_deg, n_phi)
        return cls(freqs, sample_rate_hz, tuple(Direction(p, theta_deg) for p in phis))


@dataclass(frozen=True)
class PolynomialOrderSpec:
    P: int
    plds: tuple[Direction, ...] = field(default_factory=tuple)

    def __post_init__(self):
        plds = tuple(self.plds)
        if self.P < 0:
            raise DomainError("polynomial order must be >= 0")
        if len(plds) < 1:
            raise DomainError("need at least one prototype look direction")
        phis = [d.phi for d in plds]
        if len(set(phis)) != len(phis):
            raise DomainError("prototype look directions must be distinct")
        if any(p < 0 or p > 180 for p in phis):
            raise DomainError("prototype azimuths must lie in [0, 180]")
        if len({d.theta for d in plds}) != 1:
            raise DomainError("prototype look directions must share one elevation")
        if len(plds) < self.P + 1:
            warnings.warn(
                f"{len(plds)} look directions for order {self.P}: polynomial is underdetermined",
                stacklevel=2,
            )
        object.__setattr__(self, "plds", plds)

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.plds)


def map_phi_to_D(phi_deg: float) -> float:
    """Steering scalar for azimuth ``phi_deg``: 0 deg -> -1, 90 deg -> 0, 180 deg -> 1."""
    if not (0.0 <= phi_deg <= 180.0):
        raise DomainError(f"steering azimuth {phi_deg} outside [0, 180]")
    return (phi_deg - 90.0) / 90.0


def map_D_to_phi(D: float) -> float:
    if not (-1.0 <= D <= 1.0):
        raise DomainError(f"steering scalar {D} outside [-1, 1]")
    return 90.0 * D + 90.0


def pld_steering_matrix(D: float, N: int, P: int) -> np.ndarray:
    """Real ``N x N(P+1)`` matrix ``I_N kron [1, D, ..., D^P]``.

    Applied to the stacked weights ``[W_00, ..., W_0P, W_10, ..., W_(N-1)P]``
    it returns the effective per-channel weights ``sum_p D^p W_np``.
    """
    if abs(D) > 1.0:
        warnings.warn(f"steering scalar {D} outside [-1, 1]", stacklevel=2)
    powers = np.array([D**p for p in range(P + 1)], dtype=float)
    out = np.zeros((N, N * (P + 1)))
    for n in range(N):
        out[n, n * (P + 1):(n + 1) * (P + 1)] = powers
    return out
