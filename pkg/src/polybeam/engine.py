"""Time-domain polynomial filter-and-sum processing.

Every channel ``x_n`` runs through the ``P+1`` filters ``w_{n,p}``; the filter
outputs of one ``p`` are summed into the FSU output ``y_p``, and the
polynomial post-filter forms ``y_D = sum_p D^p y_p``.  Filters are fixed at
runtime; only the scalar ``D`` changes, and only between blocks.

Convolution is direct form with an explicit input history, so the output
does not depend on how the signal is cut into blocks.
"""

from __future__ import annotations

import logging
import warnings
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

from .core import SPEED_OF_SOUND, ArrayGeometry, Direction, map_phi_to_D
from .firsynth import FilterBank, bank_response, synthesize_response
from .steer import SteeringSet, model_response

log = logging.getLogger(__name__)


class SampleRateError(ValueError):
    pass


class EngineState:
    """Streaming polynomial beamformer around an immutable :class:`FilterBank`.

    The filters of one channel share the channel's input, so the history is
    kept once per channel: ``L - 1`` past samples, which is exactly the
    history each ``(n, p)`` filter needs.
    """

    def __init__(self, bank: FilterBank, D: float = 0.0, block_size: int = 1024):
        if block_size < 1:
            raise ValueError("block_size must be positive")
        self.bank = bank
        self.block_size = int(block_size)
        self.history = np.zeros((bank.N, bank.L - 1))
        self.D = self._clamp(D)
        self._pending: float | None = None

    @staticmethod
    def _clamp(D: float) -> float:
        D = float(D)
        if not -1.0 <= D <= 1.0:
            warnings.warn(f"steering scalar D={D:g} clamped to [-1, 1]", RuntimeWarning, stacklevel=3)
            D = min(1.0, max(-1.0, D))
        return D

    def set_D(self, D: float) -> None:
        """Request a new steering scalar; it takes effect at the next block."""
        self._pending = self._clamp(D)

    def set_steering(self, phi_deg: float) -> None:
        self.set_D(map_phi_to_D(phi_deg))

    def reset(self) -> None:
        self.history[:] = 0.0

    def fsu_outputs(self, x: np.ndarray) -> np.ndarray:
        """``(P+1, B)`` FSU outputs ``y_p`` for one block; advances the history."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[0] != self.bank.N:
            raise ValueError(f"expected {self.bank.N} input channels, got shape {x.shape}")
        B = x.shape[1]
        ext = np.concatenate([self.history, x], axis=1)
        taps = self.bank.taps
        y = np.zeros((self.bank.P + 1, B))
        for n in range(self.bank.N):
            for p in range(self.bank.P + 1):
                y[p] += np.convolve(ext[n], taps[n, p], mode="valid")
        self.history = ext[:, ext.shape[1] - (self.bank.L - 1):].copy()
        return y

    def process_block(self, x: np.ndarray) -> np.ndarray:
        """Mono output ``y_D`` for an ``N x B`` block."""
        if self._pending is not None:
            self.D, self._pending = self._pending, None
        y = self.fsu_outputs(x)
        return (self.D ** np.arange(y.shape[0])) @ y

    def process(self, x: np.ndarray, schedule: Sequence[tuple[float, float]] | None = None) -> np.ndarray:
        """Process a whole signal in blocks of ``block_size``.

        ``schedule`` holds ``(time_sec, phi_deg)`` pairs; each entry applies
        from the first block starting at or after its time.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[0] != self.bank.N:
            raise ValueError(f"expected {self.bank.N} input channels, got shape {x.shape}")
        events = sorted(schedule or [], key=lambda e: e[0])
        fs = self.bank.sample_rate_hz
        out = np.empty(x.shape[1])
        k = 0
        for start in range(0, x.shape[1], self.block_size):
            while k < len(events) and events[k][0] * fs <= start + 1e-9:
                self.set_steering(events[k][1])
                k += 1
            stop = min(start + self.block_size, x.shape[1])
            out[start:stop] = self.process_block(x[:, start:stop])
        return out


def process_block(state: EngineState, x: np.ndarray) -> np.ndarray:
    return state.process_block(x)


def set_steering(state: EngineState, phi_deg: float) -> EngineState:
    state.set_steering(phi_deg)
    return state


def predict_sinusoid(bank: FilterBank, f_hz: float, D: float, amplitudes, phases) -> complex:
    """Complex steady-state output ``sum_p D^p sum_n W_{n,p}(f) X_n`` for inputs ``A_n cos(w k + ph_n)``."""
    H = bank_response(bank, [f_hz])[0]  # (N, P+1)
    X = np.asarray(amplitudes) * np.exp(1j * np.asarray(phases))
    return complex(X @ H @ (D ** np.arange(bank.P + 1)))


def read_schedule(path) -> list[tuple[float, float]]:
    """Lines ``time_sec phi_deg``; blank lines and ``#`` comments are ignored."""
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'time_sec phi_deg'")
            events.append((float(parts[0]), float(parts[1])))
    return events


# --------------------------------------------------------------------------
# synthetic scenes


def model_impulse_responses(model, geom: ArrayGeometry, fs: float, n_taps: int = 512,
                            speed_of_sound: float = SPEED_OF_SOUND) -> Callable[[Direction], np.ndarray]:
    """Direction -> ``(N, n_taps)`` impulse responses of a steering model.

    The model is sampled on the FFT grid up to ``fs/2``, delayed by
    ``n_taps // 2`` samples so the response is causal, inverse transformed
    and Tukey windowed.
    """
    freqs = np.fft.rfftfreq(n_taps, 1.0 / fs)
    delay = n_taps // 2
    shift = np.exp(-2j * np.pi * freqs / fs * delay)
    win = get_window(("tukey", 0.25), n_taps)

    def irs(direction: Direction) -> np.ndarray:
        H = model_response(model, geom, direction, freqs, speed_of_sound) * shift[:, None]
        H[0] = H[0].real
        if n_taps % 2 == 0:
            H[-1] = H[-1].real
        return np.fft.irfft(H, n_taps, axis=0).T * win

    return irs


def steering_set_impulse_responses(sset: SteeringSet, n_taps: int = 512,
                                   transition_hz: float = 50.0) -> Callable[[Direction], np.ndarray]:
    """Impulse responses from an on-grid steering set, band-limited to its design band."""
    grid = sset.grid

    def irs(direction: Direction) -> np.ndarray:
        G = sset.responses[:, grid.index_of(direction)]
        return synthesize_response(grid.freqs_hz, G, n_taps, grid.sample_rate_hz, transition_hz)

    return irs


def simulate_scene(sources: Sequence[tuple[np.ndarray, Direction]],
                   propagation: SteeringSet | Mapping | Callable[[Direction], np.ndarray],
                   n_taps: int = 512) -> np.ndarray:
    """Sum over sources of the per-channel convolutions with their impulse responses.

    ``propagation`` is a steering set, a callable ``Direction -> (N, T)``, or
    a mapping from directions to ``(N, T)`` arrays.  Output length is
    ``len(signal) + T - 1`` of the longest source.
    """
    if isinstance(propagation, SteeringSet):
        get = steering_set_impulse_responses(propagation, n_taps)
    elif isinstance(propagation, Mapping):
        table = dict(propagation)

        def get(d):
            for k, v in table.items():
                if k.matches(d):
                    return np.asarray(v, dtype=float)
            raise LookupError(f"no impulse response for ({d.phi}, {d.theta})")
    else:
        get = propagation
    if not sources:
        raise ValueError("scene has no sources")
    parts = []
    for sig, d in sources:
        h = np.atleast_2d(get(d))
        s = np.asarray(sig, dtype=float)
        parts.append(np.stack([np.convolve(s, hn) for hn in h]))
    n_out = max(p.shape[1] for p in parts)
    out = np.zeros((parts[0].shape[0], n_out))
    for p in parts:
        if p.shape[0] != out.shape[0]:
            raise ValueError("impulse responses disagree on the channel count")
        out[:, :p.shape[1]] += p
    return out


# --------------------------------------------------------------------------
# WAV I/O


def read_wav(path) -> tuple[float, np.ndarray]:
    """``(fs, x)`` with ``x`` shaped ``(channels, samples)`` in float64, integer PCM scaled to [-1, 1)."""
    fs, data = wavfile.read(path)
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(float) - 128.0) / 128.0
    else:
        x = data.astype(float)
    x = np.atleast_2d(x.T) if x.ndim == 2 else x[None, :]
    return float(fs), x


def write_wav(path, fs: float, y: np.ndarray, fmt: str = "float32") -> None:
    """Write ``(samples,)`` or ``(channels, samples)`` as PCM16 or 32-bit float."""
    y = np.asarray(y, dtype=float)
    data = y.T if y.ndim == 2 else y
    if fmt == "pcm16":
        if np.max(np.abs(data), initial=0.0) > 1.0:
            log.warning("clipping output to [-1, 1] for PCM16")
        data = np.round(np.clip(data, -1.0, 32767 / 32768) * 32768).astype(np.int16)
    elif fmt == "float32":
        data = data.astype(np.float32)
    else:
        raise ValueError(f"unknown sample format {fmt!r}")
    wavfile.write(path, int(round(fs)), data)


def check_sample_rate(bank: FilterBank, fs: float) -> None:
    if abs(float(fs) - bank.sample_rate_hz) > 1e-9:
        raise SampleRateError(
            f"input sample rate {fs:g} Hz does not match filter bank rate {bank.sample_rate_hz:g} Hz")
