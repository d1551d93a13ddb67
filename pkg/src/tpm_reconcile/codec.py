"""Conversion between key bits and TPM weights, plus leakage accounting.

A key of ``m`` bits is cut into big-endian chunks of ``bits_per_weight(L)``
bits (the tail is zero-padded). Chunk value ``c`` becomes the weight
``(c mod (2L+1)) - L``. Decoding writes ``w + L`` back with the same width,
so equal weight matrices always decode to equal keys. Decoding does not
invert encoding when ``2**bits_per_weight > 2L+1``; the reconciled key is
whatever the synchronized weights say it is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tpm import StructureError, TpmParams


class EmptyKeyError(ValueError):
    """Leakage reduction would consume the whole key."""


@dataclass(frozen=True, eq=False)
class KeyMaterial:
    bits: np.ndarray  # uint8 array of 0/1

    def __post_init__(self) -> None:
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size < 1:
            raise StructureError("key must be a non-empty 1-d bit array")
        if np.any(bits > 1):
            raise StructureError("key bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def length_bits(self) -> int:
        return int(self.bits.size)

    def __len__(self) -> int:
        return self.length_bits

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KeyMaterial):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.length_bits, self.bits.tobytes()))

    def __repr__(self) -> str:
        return f"KeyMaterial(length_bits={self.length_bits}, hex={self.to_hex()!r})"

    @classmethod
    def from_bitstring(cls, s: str) -> KeyMaterial:
        return cls(np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0"))

    def to_bitstring(self) -> str:
        return (self.bits + ord("0")).tobytes().decode("ascii")

    @classmethod
    def from_hex(cls, text: str, length_bits: int | None = None) -> KeyMaterial:
        raw = bytes.fromhex(text.strip())
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
        if length_bits is not None:
            if length_bits > bits.size or length_bits <= bits.size - 8:
                raise StructureError(
                    f"{len(raw)} hex bytes cannot hold exactly {length_bits} bits"
                )
            bits = bits[:length_bits]
        return cls(bits)

    def to_hex(self) -> str:
        """MSB-first hex; a partial final byte is zero-padded."""
        return np.packbits(self.bits).tobytes().hex()


def read_key_file(path: str | Path, length_bits: int | None = None) -> list[KeyMaterial]:
    lines = Path(path).read_text().splitlines()
    return [KeyMaterial.from_hex(line, length_bits) for line in lines if line.strip()]


def write_key_file(path: str | Path, keys: list[KeyMaterial]) -> None:
    Path(path).write_text("".join(k.to_hex() + "\n" for k in keys))


def bits_per_weight(L: int) -> int:
    """Smallest bit width that can name all 2L+1 weight values."""
    if L < 1:
        raise StructureError(f"L must be >= 1, got {L}")
    # exact integer form of ceil(log2(2L+1))
    return (2 * L).bit_length()


def weight_count(key_length_bits: int, L: int) -> int:
    return -(-key_length_bits // bits_per_weight(L))


def enumerate_structures(key_length_bits: int, L: int) -> list[tuple[int, int]]:
    """All ``(N, K)`` with ``N * K`` equal to the weight count, K ascending."""
    if key_length_bits < bits_per_weight(L):
        raise StructureError(f"a {key_length_bits}-bit key cannot fill one weight at L={L}")
    n = weight_count(key_length_bits, L)
    return [(n // k, k) for k in range(1, n + 1) if n % k == 0]


def encode(key: KeyMaterial, L: int, params: TpmParams) -> np.ndarray:
    b = bits_per_weight(L)
    n = weight_count(key.length_bits, L)
    if params.weight_count != n or params.L != L:
        raise StructureError(
            f"{key.length_bits}-bit key at L={L} needs K*N={n}, got {params}"
        )
    padded = np.zeros(n * b, dtype=np.int64)
    padded[: key.length_bits] = key.bits
    place = 1 << np.arange(b - 1, -1, -1, dtype=np.int64)
    chunks = padded.reshape(n, b) @ place
    weights = chunks % (2 * L + 1) - L
    return weights.reshape(params.shape).astype(np.int8)


def decode(weights: np.ndarray, L: int, target_length_bits: int) -> KeyMaterial:
    b = bits_per_weight(L)
    flat = np.asarray(weights, dtype=np.int64).ravel() + L
    if target_length_bits > flat.size * b:
        raise StructureError(
            f"{flat.size} weights hold {flat.size * b} bits, asked for {target_length_bits}"
        )
    shifts = np.arange(b - 1, -1, -1, dtype=np.int64)
    bits = ((flat[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    return KeyMaterial(bits[:target_length_bits])


def leakage(iterations: int, L: int) -> float:
    """Public-discussion leakage ``log_{2L+1}(2**i)`` in (2L+1)-ary symbols."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if iterations == 0:
        return 0.0
    return math.log(2**iterations, 2 * L + 1)


def reduction_bits(Z: float, L: int) -> int:
    return math.ceil(Z) * bits_per_weight(L)


def apply_reduction(key: KeyMaterial, Z: float, L: int) -> KeyMaterial:
    """Drop ``ceil(Z)`` weights' worth of bits from the tail of the key."""
    drop = reduction_bits(Z, L)
    if drop >= key.length_bits:
        raise EmptyKeyError(
            f"reduction of {drop} bits leaves nothing of a {key.length_bits}-bit key"
        )
    if drop == 0:
        return key
    return KeyMaterial(key.bits[:-drop])
