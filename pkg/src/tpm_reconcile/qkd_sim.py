"""Correlated key pairs standing in for sifted QKD output, and QBER sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import KeyMaterial
from .tpm import StructureError


class InvalidSample(ValueError):
    pass


@dataclass(frozen=True)
class KeyPair:
    key_a: KeyMaterial
    key_b: KeyMaterial
    true_error_count: int


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def hamming_distance(a: KeyMaterial, b: KeyMaterial) -> int:
    if a.length_bits != b.length_bits:
        raise StructureError(f"length mismatch: {a.length_bits} vs {b.length_bits}")
    return int(np.count_nonzero(a.bits != b.bits))


def generate_pair(length_bits: int, qber: float, seed: int) -> KeyPair:
    """Uniform key plus a copy with exactly ``round(qber * length_bits)`` flips."""
    if not 0.0 <= qber <= 0.5:
        raise ValueError(f"qber must lie in [0, 0.5], got {qber}")
    if length_bits < 1:
        raise ValueError("length_bits must be >= 1")
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, size=length_bits, dtype=np.uint8)
    errors = round_half_away(qber * length_bits)
    b = a.copy()
    b[rng.choice(length_bits, size=errors, replace=False)] ^= 1
    return KeyPair(KeyMaterial(a), KeyMaterial(b), errors)


def estimate_qber(
    key_a: KeyMaterial, key_b: KeyMaterial, sample_fraction: float, seed: int
) -> tuple[float, KeyMaterial, KeyMaterial]:
    """Compare a random sample of positions publicly and discard them.

    Returns the estimated error rate and both keys with the disclosed
    positions removed.
    """
    n = key_a.length_bits
    if key_b.length_bits != n:
        raise StructureError(f"length mismatch: {n} vs {key_b.length_bits}")
    if not 0.0 < sample_fraction < 1.0:
        raise InvalidSample(f"sample_fraction must lie in (0, 1), got {sample_fraction}")
    size = round_half_away(sample_fraction * n)
    if size == 0 or size >= n:
        raise InvalidSample(f"sample of {size} out of {n} bits is degenerate")
    rng = np.random.default_rng(seed)
    sample = rng.choice(n, size=size, replace=False)
    estimate = float(np.count_nonzero(key_a.bits[sample] != key_b.bits[sample])) / size
    keep = np.ones(n, dtype=bool)
    keep[sample] = False
    return estimate, KeyMaterial(key_a.bits[keep]), KeyMaterial(key_b.bits[keep])
