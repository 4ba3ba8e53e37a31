"""Sensor-response models and steering sets.

Three sources of sensor responses ``g_n(f, phi, theta)`` are supported:

* ``free_field`` -- plane-wave phase delays from the microphone positions;
* ``sphere``     -- plane wave scattered by a rigid sphere (head model);
* ``measured``   -- a transfer-function file, interpolated in frequency only.

All responses use the ``exp(+j w t)`` convention, consistent with the DTFT
``W(w) = sum_l w_l exp(-j w l)``: a microphone closer to the source sees a
positive phase (lead).  Responses are normalized to the free-field pressure
at the array origin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import SPEED_OF_SOUND, ArrayGeometry, DesignGrid, Direction

SOURCE_KINDS = ("free_field", "sphere", "measured")


class SphereConvergenceError(ArithmeticError):
    def __init__(self, ka, theta_deg):
        self.ka = ka
        self.theta_deg = theta_deg
        super().__init__(f"sphere series did not converge (ka={ka:g}, Theta={theta_deg:g} deg)")


class SteeringLoadError(IOError):
    pass


@dataclass(frozen=True)
class SteeringSet:
    grid: DesignGrid
    responses: np.ndarray  # (Q, M, N) complex
    source_kind: str

    def __post_init__(self):
        r = np.array(self.responses, dtype=complex)
        if r.ndim != 3 or r.shape[:2] != (self.grid.Q, self.grid.M):
            raise ValueError(f"responses shape {r.shape} does not match grid")
        if not np.all(np.isfinite(r)):
            raise ValueError("steering responses must be finite")
        if self.source_kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.source_kind!r}")
        r.setflags(write=False)
        object.__setattr__(self, "responses", r)

    @property
    def num_mics(self) -> int:
        return self.responses.shape[2]

    def G(self, q: int) -> np.ndarray:
        """``M x N`` sensor-response matrix at frequency index ``q``."""
        return self.responses[q]


# --------------------------------------------------------------------------
# free field


def free_field_response(geom: ArrayGeometry, direction: Direction, f_hz,
                        speed_of_sound: float = SPEED_OF_SOUND) -> np.ndarray:
    """Plane-wave response of every microphone; shape ``(N,)`` or ``(F, N)``."""
    proj = geom.mics @ direction.unit_vector()  # path advance towards the source
    k = 2 * np.pi * np.asarray(f_hz, dtype=float) / speed_of_sound
    return np.exp(1j * np.multiply.outer(k, proj))


# --------------------------------------------------------------------------
# rigid sphere


def spherical_hankel1(order: int, x: float) -> np.ndarray:
    """``h_0 .. h_order`` of the first kind at ``x`` by upward recurrence."""
    h = np.empty(order + 1, dtype=complex)
    e = np.exp(1j * x)
    h[0] = -1j * e / x
    if order >= 1:
        h[1] = -(x + 1j) * e / (x * x)
    for m in range(1, order):
        h[m + 1] = (2 * m + 1) / x * h[m] - h[m - 1]
    return h


def spherical_hankel1_derivative(order: int, x: float) -> np.ndarray:
    """``h'_0 .. h'_order`` via ``h'_m = h_(m-1) - (m+1)/x h_m``."""
    h = spherical_hankel1(order + 1, x)
    dh = np.empty(order + 1, dtype=complex)
    dh[0] = -h[1]
    m = np.arange(1, order + 1)
    dh[1:] = h[:-2] - (m + 1) / x * h[1:-1]
    return dh


def legendre_series(order: int, x) -> np.ndarray:
    """Legendre polynomials ``P_0 .. P_order`` at ``x``, stacked on axis 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty((order + 1,) + x.shape)
    out[0] = 1.0
    if order >= 1:
        out[1] = x
    for m in range(1, order):
        out[m + 1] = ((2 * m + 1) * x * out[m] - m * out[m - 1]) / (m + 1)
    return out


def _series_cap(ka: float) -> int:
    # 10 + ceil(2 ka) is too short for a 1e-10 tail when 0.7 < ka < 13
    return 20 + math.ceil(2 * ka)


def sphere_series(ka: float, cos_theta, rel_tol: float = 1e-10) -> np.ndarray:
    """Rigid-sphere surface pressure for a unit plane wave, summed over ``cos_theta``.

    ``cos_theta`` is the cosine of the angle between the microphone and the
    source direction.  The classical series (1/ka^2) sum (2m+1) P_m (-i)^(m-1) / h'_m
    is evaluated in the ``exp(-i w t)`` convention with outgoing Hankel
    functions and then conjugated to the package convention.
    """
    cos_theta = np.atleast_1d(np.asarray(cos_theta, dtype=float))
    if ka == 0.0:
        return np.ones(cos_theta.shape, dtype=complex)
    if ka < 0:
        raise ValueError("ka must be non-negative")
    cap = _series_cap(ka)
    dh = spherical_hankel1_derivative(cap, ka)
    leg = legendre_series(cap, cos_theta)
    total = np.zeros(cos_theta.shape, dtype=complex)
    small_run = np.zeros(cos_theta.shape, dtype=int)
    phase = 1j  # (-i)^(m-1) at m = 0
    for m in range(cap + 1):
        term = (2 * m + 1) * leg[m] * phase / dh[m]
        total += term
        phase *= -1j
        tiny = np.abs(term) < rel_tol * np.abs(total)
        small_run = np.where(tiny, small_run + 1, 0)
        if np.all(small_run >= 2):
            return np.conj(total / (ka * ka))
    bad = int(np.argmax(small_run < 2))
    raise SphereConvergenceError(ka, math.degrees(math.acos(np.clip(cos_theta[bad], -1, 1))))


def sphere_response(a: float, mic_dir: Direction, src_dir: Direction, f_hz: float,
                    speed_of_sound: float = SPEED_OF_SOUND) -> complex:
    """Pressure at a surface point of a rigid sphere of radius ``a`` (meters)."""
    if a <= 0:
        raise ValueError("sphere radius must be positive")
    if f_hz < 0:
        raise ValueError("frequency must be non-negative")
    ka = 2 * np.pi * f_hz * a / speed_of_sound
    c = float(np.dot(mic_dir.unit_vector(), src_dir.unit_vector()))
    return complex(sphere_series(ka, c)[0])


def sphere_array_response(geom: ArrayGeometry, direction: Direction, f_hz,
                          speed_of_sound: float = SPEED_OF_SOUND) -> np.ndarray:
    """Sphere-model response of all microphones; shape ``(F, N)`` for a frequency array."""
    if geom.head_radius is None:
        raise ValueError("sphere model needs a geometry with head_radius")
    a = geom.head_radius
    cos_t = (geom.mics / a) @ direction.unit_vector()
    freqs = np.atleast_1d(np.asarray(f_hz, dtype=float))
    out = np.empty((freqs.size, geom.num_mics), dtype=complex)
    for i, f in enumerate(freqs):
        out[i] = sphere_series(2 * np.pi * f * a / speed_of_sound, cos_t)
    return out


# --------------------------------------------------------------------------
# measured files


@dataclass(frozen=True)
class MeasuredResponses:
    sample_rate_hz: float
    directions: tuple[Direction, ...]
    freqs_hz: np.ndarray
    responses: np.ndarray  # (n_dirs, F, N) complex

    @property
    def mic_count(self) -> int:
        return self.responses.shape[2]

    def lookup(self, direction: Direction, tol_deg: float = 0.5) -> int:
        for i, d in enumerate(self.directions):
            if d.matches(direction, tol_deg):
                return i
        raise LookupError(f"no measurement for ({direction.phi}, {direction.theta})")

    def at(self, direction: Direction, f_hz) -> np.ndarray:
        """Responses for one measured direction at arbitrary in-range frequencies."""
        f = np.atleast_1d(np.asarray(f_hz, dtype=float))
        if f.min() < self.freqs_hz[0] or f.max() > self.freqs_hz[-1]:
            raise SteeringLoadError(
                f"frequencies outside measured range [{self.freqs_hz[0]}, {self.freqs_hz[-1]}] Hz")
        r = self.responses[self.lookup(direction)]
        out = np.empty((f.size, r.shape[1]), dtype=complex)
        for n in range(r.shape[1]):
            out[:, n] = (np.interp(f, self.freqs_hz, r[:, n].real)
                         + 1j * np.interp(f, self.freqs_hz, r[:, n].imag))
        return out


def write_steering_file(path, measured: MeasuredResponses) -> None:
    doc = {
        "sample_rate_hz": measured.sample_rate_hz,
        "mic_count": measured.mic_count,
        "directions": [{"phi": d.phi, "theta": d.theta} for d in measured.directions],
        "freqs_hz": [float(f) for f in measured.freqs_hz],
        "responses": [
            [[[float(z.real), float(z.imag)] for z in row] for row in per_dir]
            for per_dir in measured.responses
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def read_steering_file(path) -> MeasuredResponses:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SteeringLoadError(f"cannot read steering file {path}: {exc}") from exc
    try:
        raw = np.asarray(doc["responses"], dtype=float)
        dirs = tuple(Direction(d["phi"], d["theta"]) for d in doc["directions"])
        freqs = np.asarray(doc["freqs_hz"], dtype=float)
        n_mic = int(doc["mic_count"])
        fs = float(doc["sample_rate_hz"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SteeringLoadError(f"malformed steering file {path}: {exc}") from exc
    if raw.shape != (len(dirs), freqs.size, n_mic, 2):
        raise SteeringLoadError(f"responses shape {raw.shape} inconsistent with header")
    if np.any(np.diff(freqs) <= 0):
        raise SteeringLoadError("freqs_hz must be strictly increasing")
    return MeasuredResponses(fs, dirs, freqs, raw[..., 0] + 1j * raw[..., 1])


def steering_set_to_measured(sset: SteeringSet) -> MeasuredResponses:
    """Re-express a steering set in the measured-file layout."""
    return MeasuredResponses(
        sset.grid.sample_rate_hz,
        sset.grid.look_grid,
        np.asarray(sset.grid.freqs_hz),
        np.transpose(sset.responses, (1, 0, 2)),
    )


# --------------------------------------------------------------------------


def _resolve_kind(model) -> str:
    if isinstance(model, MeasuredResponses):
        return "measured"
    if isinstance(model, Mapping):
        return model.get("kind", "")
    return str(model)


def model_response(model, geom: ArrayGeometry | None, direction: Direction, f_hz,
                   speed_of_sound: float = SPEED_OF_SOUND) -> np.ndarray:
    """``(F, N)`` responses of ``model`` for one direction at arbitrary frequencies."""
    kind = _resolve_kind(model)
    if kind == "free_field":
        return free_field_response(geom, direction, np.atleast_1d(f_hz), speed_of_sound)
    if kind == "sphere":
        return sphere_array_response(geom, direction, f_hz, speed_of_sound)
    if kind == "measured":
        data = model if isinstance(model, MeasuredResponses) else read_steering_file(model["path"])
        return data.at(direction, f_hz)
    raise ValueError(f"unknown steering model {model!r}")


def build_steering_set(model, geom: ArrayGeometry | None, grid: DesignGrid,
                       speed_of_sound: float = SPEED_OF_SOUND) -> SteeringSet:
    """Populate the ``Q x M x N`` sensor-response tensor for ``grid``.

    ``model`` is ``"free_field"``, ``"sphere"``, a :class:`MeasuredResponses`,
    or a mapping ``{"kind": "measured", "path": ...}``.
    """
    kind = _resolve_kind(model)
    if kind not in SOURCE_KINDS:
        raise ValueError(f"unknown steering model {model!r}")
    if kind == "measured":
        data = model if isinstance(model, MeasuredResponses) else read_steering_file(model["path"])
        missing = []
        for d in grid.look_grid:
            try:
                data.lookup(d)
            except LookupError:
                missing.append((d.phi, d.theta))
        if missing:
            raise SteeringLoadError(f"measured file lacks directions: {missing}")
        if geom is not None and geom.num_mics != data.mic_count:
            raise SteeringLoadError("mic_count does not match array geometry")
        cols = [data.at(d, grid.freqs_hz) for d in grid.look_grid]
    else:
        cols = [model_response(kind, geom, d, grid.freqs_hz, speed_of_sound) for d in grid.look_grid]
    return SteeringSet(grid, np.stack(cols, axis=1), kind)


def steering_vector(sset: SteeringSet, direction: Direction, q: int) -> np.ndarray:
    """Sensor responses toward ``direction`` at frequency index ``q``."""
    m = sset.grid.index_of(direction)
    return sset.responses[q, m]


def steering_vectors(sset: SteeringSet, direction: Direction) -> np.ndarray:
    """``(Q, N)`` steering vectors toward an on-grid ``direction``."""
    return sset.responses[:, sset.grid.index_of(direction)]
