"""FIR approximation of per-frequency weights by complex frequency sampling.

Each ``W[n, p](f)`` is interpolated (real and imaginary parts separately) onto a
dense half spectrum, tapered to zero outside the design band with short
raised-cosine transitions, given a bulk linear-phase modeling delay, inverse
transformed and Hann windowed to ``L`` taps.  Every step is linear in the
weights, so the synthesis commutes with the polynomial post-filter.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import get_window

from .design import FrequencyDesign, weight_tensor

MAX_TAPS = 8192
BANK_FORMAT = "polybeam-filterbank"


class SynthesisError(ValueError):
    pass


def modeling_delay(L: int) -> float:
    """``(L-1)/2`` for odd lengths, ``L/2`` for even lengths."""
    return (L - 1) / 2 if L % 2 else L / 2


@dataclass(frozen=True)
class FilterBank:
    taps: np.ndarray  # (N, P+1, L)
    sample_rate_hz: float
    modeling_delay_samples: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        taps = np.array(self.taps, dtype=float)
        if taps.ndim != 3 or taps.shape[2] < 2:
            raise ValueError("taps must have shape (N, P+1, L) with L >= 2")
        if not np.all(np.isfinite(taps)):
            raise ValueError("taps must be finite")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def N(self) -> int:
        return self.taps.shape[0]

    @property
    def P(self) -> int:
        return self.taps.shape[1] - 1

    @property
    def L(self) -> int:
        return self.taps.shape[2]


def band_taper(f: np.ndarray, f_lo: float, f_hi: float, transition_hz: float) -> np.ndarray:
    """1 inside ``[f_lo, f_hi]``, raised-cosine roll-off over ``transition_hz`` outside, else 0."""
    out = np.zeros_like(f, dtype=float)
    out[(f >= f_lo) & (f <= f_hi)] = 1.0
    if transition_hz > 0:
        lo = (f < f_lo) & (f > f_lo - transition_hz)
        out[lo] = 0.5 * (1 - np.cos(np.pi * (f[lo] - (f_lo - transition_hz)) / transition_hz))
        hi = (f > f_hi) & (f < f_hi + transition_hz)
        out[hi] = 0.5 * (1 + np.cos(np.pi * (f[hi] - f_hi) / transition_hz))
    return out


def synthesize_response(freqs_hz: np.ndarray, W: np.ndarray, L: int, fs: float,
                        transition_hz: float = 50.0, oversample: int = 4,
                        window: bool = True) -> np.ndarray:
    """Real ``L``-tap filters approximating ``W`` of shape ``(Q, ...)`` sampled at ``freqs_hz``.

    Returns taps with shape ``W.shape[1:] + (L,)``.  ``window=False`` returns
    the truncated taps before the Hann window.
    """
    if L > MAX_TAPS:
        raise SynthesisError(f"filter length {L} exceeds the cap of {MAX_TAPS}")
    if L < 2:
        raise SynthesisError("filter length must be at least 2")
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    W = np.asarray(W, dtype=complex)
    lead = W.shape[1:]
    Wf = W.reshape(W.shape[0], -1)

    K = oversample * L
    f_dense = np.linspace(0.0, fs / 2, K)
    taper = band_taper(f_dense, freqs_hz[0], freqs_hz[-1], transition_hz)
    delay = modeling_delay(L)
    shift = np.exp(-2j * np.pi * f_dense / fs * delay)

    nfft = 2 * (K - 1)
    win = get_window("hann", L, fftbins=(L % 2 == 0)) if window else np.ones(L)
    out = np.empty((Wf.shape[1], L))
    for j in range(Wf.shape[1]):
        H = (np.interp(f_dense, freqs_hz, Wf[:, j].real)
             + 1j * np.interp(f_dense, freqs_hz, Wf[:, j].imag)) * taper * shift
        H[0] = H[0].real
        H[-1] = H[-1].real
        full = np.concatenate([H, np.conj(H[-2:0:-1])])
        h = np.fft.ifft(full)
        scale = max(1.0, np.max(np.abs(h.real)))
        if np.max(np.abs(h.imag)) > 1e-9 * scale:
            raise SynthesisError("inverse transform is not real; spectrum lost conjugate symmetry")
        out[j] = h.real[:L] * win
    return out.reshape(lead + (L,))


def config_hash(config) -> str:
    """Stable short hash of a JSON-serializable configuration."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def synthesize(designs: Sequence[FrequencyDesign], L: int, fs: float,
               transition_hz: float = 50.0, metadata: dict | None = None) -> FilterBank:
    """Filter bank of shape ``(N, P+1, L)`` from a per-frequency design."""
    if not designs:
        raise SynthesisError("no designs to synthesize")
    freqs = np.array([fd.freq_hz for fd in designs])
    if np.any(freqs >= fs / 2):
        raise SynthesisError("design frequencies must lie below fs/2")
    taps = synthesize_response(freqs, weight_tensor(designs), L, fs, transition_hz)
    meta = {"f_lo_hz": float(freqs[0]), "f_hi_hz": float(freqs[-1]), "transition_hz": transition_hz}
    meta.update(metadata or {})
    return FilterBank(taps, fs, modeling_delay(L), meta)


def frequency_response(bank: FilterBank, n: int, p: int, f_hz) -> np.ndarray:
    """Exact DTFT ``sum_l w[l] exp(-j w l)`` of filter ``(n, p)`` at ``f_hz``."""
    f = np.asarray(f_hz, dtype=float)
    if np.any(f < 0) or np.any(f > bank.sample_rate_hz / 2):
        raise ValueError("frequency outside [0, fs/2]")
    omega = 2 * np.pi * f / bank.sample_rate_hz
    l = np.arange(bank.L)
    return np.exp(-1j * np.multiply.outer(omega, l)) @ bank.taps[n, p]


def bank_response(bank: FilterBank, f_hz, compensate_delay: bool = False) -> np.ndarray:
    """``(F, N, P+1)`` responses of all filters; optionally with the modeling delay removed."""
    f = np.atleast_1d(np.asarray(f_hz, dtype=float))
    omega = 2 * np.pi * f / bank.sample_rate_hz
    E = np.exp(-1j * np.outer(omega, np.arange(bank.L)))
    H = np.einsum("fl,npl->fnp", E, bank.taps)
    if compensate_delay:
        H *= np.exp(1j * omega * bank.modeling_delay_samples)[:, None, None]
    return H


# --------------------------------------------------------------------------
# file format: JSON header with base64 little-endian float64 taps in (n, p, l) order


def save_bank(path, bank: FilterBank) -> None:
    doc = {
        "format": BANK_FORMAT,
        "version": 1,
        "N": bank.N,
        "P": bank.P,
        "L": bank.L,
        "sample_rate_hz": bank.sample_rate_hz,
        "modeling_delay_samples": bank.modeling_delay_samples,
        "config_hash": bank.metadata.get("config_hash", ""),
        "metadata": bank.metadata,
        "taps_encoding": "base64-float64-le",
        "taps": base64.b64encode(bank.taps.astype("<f8").tobytes()).decode("ascii"),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_bank(path) -> FilterBank:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != BANK_FORMAT:
        raise ValueError(f"{path} is not a filter bank file")
    shape = (int(doc["N"]), int(doc["P"]) + 1, int(doc["L"]))
    raw = np.frombuffer(base64.b64decode(doc["taps"]), dtype="<f8")
    if raw.size != np.prod(shape):
        raise ValueError("tap payload does not match header dimensions")
    meta = dict(doc.get("metadata", {}))
    meta.setdefault("config_hash", doc.get("config_hash", ""))
    return FilterBank(raw.reshape(shape).astype(float), float(doc["sample_rate_hz"]),
                      float(doc["modeling_delay_samples"]), meta)
