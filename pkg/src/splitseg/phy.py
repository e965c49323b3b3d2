"""Modeled radio link: Gray-mapped QPSK/16QAM over AWGN, hard decisions.

SNR is interpreted as Es/N0 per complex symbol (average symbol energy is
normalized to 1 for both constellations), so the two modulations are
directly comparable on a shared SNR axis. Noise is N0/2 per real dimension
with N0 = 10^(-snr_db/10).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .codec import BitStream

QPSK = "qpsk"
QAM16 = "16qam"
MODULATIONS = (QPSK, QAM16)

_DEMOD_CHUNK = 1 << 18

# Gray-coded 4-PAM axis levels indexed by bit pair value: 00 01 10 11
_GRAY4 = np.array([-3.0, -1.0, 3.0, 1.0])


def _make_tables() -> dict[str, tuple[np.ndarray, int]]:
    codes4 = np.arange(4)
    qpsk = ((1 - 2 * (codes4 >> 1)) + 1j * (1 - 2 * (codes4 & 1))) / math.sqrt(2.0)
    codes16 = np.arange(16)
    qam = (_GRAY4[codes16 >> 2] + 1j * _GRAY4[codes16 & 3]) / math.sqrt(10.0)
    return {QPSK: (qpsk, 2), QAM16: (qam, 4)}


_TABLES = _make_tables()


def constellation(modulation: str) -> tuple[np.ndarray, int]:
    """Return (points indexed by bit-pattern value, bits per symbol)."""
    try:
        return _TABLES[modulation]
    except KeyError:
        raise ValueError(f"unknown modulation {modulation!r}, expected one of {MODULATIONS}") from None


@dataclass(frozen=True)
class ChannelConfig:
    """One AWGN link: modulation scheme, Es/N0 in dB, and noise seed."""

    modulation: str
    snr_db: float
    seed: int = 0

    def __post_init__(self):
        constellation(self.modulation)
        if not math.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")
        if not (0 <= self.seed < 1 << 64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass
class SymbolBlock:
    """Complex baseband samples plus the pre-padding bit count."""

    symbols: np.ndarray
    bit_count: int

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.complex128).reshape(-1)
        if self.bit_count < 0:
            raise ValueError(f"negative bit count {self.bit_count}")


def modulate(stream: BitStream, modulation: str) -> SymbolBlock:
    """Map a bit stream to constellation symbols, zero-padding to a symbol boundary."""
    points, bps = constellation(modulation)
    bits = stream.to_bits()
    pad = (-bits.size) % bps
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    weights = 1 << np.arange(bps - 1, -1, -1)
    codes = bits.reshape(-1, bps) @ weights
    return SymbolBlock(points[codes], int(stream.n_bits))


def apply_awgn(block: SymbolBlock, snr_db: float, rng: np.random.Generator) -> SymbolBlock:
    """Add complex Gaussian noise at the given Es/N0 (dB), Es = 1."""
    n0 = 10.0 ** (-snr_db / 10.0)
    sigma = math.sqrt(n0 / 2.0)
    noise = rng.normal(0.0, sigma, size=(block.symbols.size, 2))
    return SymbolBlock(block.symbols + noise[:, 0] + 1j * noise[:, 1], block.bit_count)


def demodulate(block: SymbolBlock, modulation: str) -> BitStream:
    """Minimum-distance hard decisions; ties pick the smallest bit pattern."""
    points, bps = constellation(modulation)
    n = block.symbols.size
    codes = np.empty(n, dtype=np.int64)
    for start in range(0, n, _DEMOD_CHUNK):
        y = block.symbols[start:start + _DEMOD_CHUNK]
        d = (y.real[:, None] - points.real[None, :]) ** 2
        d += (y.imag[:, None] - points.imag[None, :]) ** 2
        codes[start:start + _DEMOD_CHUNK] = np.argmin(d, axis=1)
    shifts = np.arange(bps - 1, -1, -1)
    bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.uint8).reshape(-1)
    return BitStream.from_bits(bits[: block.bit_count])


def qfunc(x) -> np.ndarray:
    """Gaussian tail probability Q(x)."""
    return 0.5 * special.erfc(np.asarray(x, dtype=np.float64) / math.sqrt(2.0))


def ber_theoretical(modulation: str, snr_db: float) -> float:
    """Closed-form bit error rate over AWGN at Es/N0 = snr_db.

    QPSK: Q(sqrt(2 Eb/N0)) with Eb/N0 = (Es/N0)/2. 16QAM: Gray-mapped
    nearest-neighbor approximation (3/4) Q(sqrt(0.2 Es/N0)).
    """
    g = 10.0 ** (snr_db / 10.0)
    if modulation == QPSK:
        return float(qfunc(math.sqrt(g)))
    if modulation == QAM16:
        return float(0.75 * qfunc(math.sqrt(0.2 * g)))
    raise ValueError(f"unknown modulation {modulation!r}, expected one of {MODULATIONS}")


def transmit(stream: BitStream, channel: ChannelConfig) -> BitStream:
    """modulate -> AWGN -> demodulate; output length equals input length."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(channel.seed)))
    block = modulate(stream, channel.modulation)
    noisy = apply_awgn(block, channel.snr_db, rng)
    return demodulate(noisy, channel.modulation)
