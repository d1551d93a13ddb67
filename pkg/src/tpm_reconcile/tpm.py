"""Tree parity machine: structure, forward pass and Hebbian learning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# int8 storage; |w| + 1 must stay representable during an update.
MAX_L = 100
WEIGHT_DTYPE = np.int8


class StructureError(ValueError):
    """Shapes or parameters of machines, inputs or keys do not line up."""


@dataclass(frozen=True)
class TpmParams:
    K: int
    N: int
    L: int

    def __post_init__(self) -> None:
        for name in ("K", "N", "L"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise StructureError(f"{name} must be a positive integer, got {value!r}")
        if self.L > MAX_L:
            raise StructureError(f"L must be <= {MAX_L}, got {self.L}")

    @property
    def weight_count(self) -> int:
        return self.K * self.N

    @property
    def shape(self) -> tuple[int, int]:
        return (self.K, self.N)


class TpmOutput(NamedTuple):
    sigma: np.ndarray  # (K,) of +-1
    tau: int


class TreeParityMachine:
    """K hidden perceptrons with N inputs each and weights bounded by L.

    The machine is a plain mutable value. ``update`` modifies the weights in
    place; the module-level :func:`hebbian_update` returns a new machine.
    """

    __slots__ = ("params", "weights")

    def __init__(self, params: TpmParams, weights=None):
        self.params = params
        if weights is None:
            w = np.zeros(params.shape, dtype=WEIGHT_DTYPE)
        else:
            w = np.asarray(weights)
            if w.shape != params.shape:
                raise StructureError(f"weights shape {w.shape} != {params.shape}")
            if np.any(np.abs(w.astype(np.int64)) > params.L):
                raise StructureError(f"weights outside [-{params.L}, {params.L}]")
            w = w.astype(WEIGHT_DTYPE, copy=True)
        self.weights = w

    @classmethod
    def random(cls, params: TpmParams, rng: np.random.Generator) -> TreeParityMachine:
        w = rng.integers(-params.L, params.L + 1, size=params.shape)
        return cls(params, w)

    def copy(self) -> TreeParityMachine:
        return TreeParityMachine(self.params, self.weights)

    def __repr__(self) -> str:
        p = self.params
        return f"TreeParityMachine(K={p.K}, N={p.N}, L={p.L})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TreeParityMachine):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.weights, other.weights)

    def _check_input(self, x: np.ndarray) -> None:
        if x.shape != self.params.shape:
            raise StructureError(f"input shape {x.shape} != {self.params.shape}")

    def evaluate(self, x: np.ndarray) -> TpmOutput:
        self._check_input(x)
        fields = np.einsum("kn,kn->k", self.weights, x, dtype=np.int64)
        # sgn(0) = -1
        sigma = np.where(fields > 0, 1, -1).astype(WEIGHT_DTYPE)
        tau = -1 if np.count_nonzero(sigma < 0) % 2 else 1
        return TpmOutput(sigma, tau)

    def update(self, x: np.ndarray, out: TpmOutput) -> None:
        """Apply the Hebbian rule in place.

        Only hidden units whose sigma equals tau move; every weight is then
        clamped back into [-L, L]. The caller is responsible for checking that
        both parties' outputs agreed.
        """
        self._check_input(x)
        sigma = np.asarray(out.sigma)
        if sigma.shape != (self.params.K,):
            raise StructureError(f"sigma shape {sigma.shape} != ({self.params.K},)")
        active = sigma == out.tau
        if not active.any():
            return
        L = self.params.L
        rows = self.weights[active]
        rows += x[active] * sigma[active, None]
        np.clip(rows, -L, L, out=rows)
        self.weights[active] = rows


def clamp(z: int, L: int) -> int:
    if z <= -L:
        return -L
    if z >= L:
        return L
    return z


def evaluate(tpm: TreeParityMachine, x: np.ndarray) -> TpmOutput:
    return tpm.evaluate(x)


def hebbian_update(tpm: TreeParityMachine, x: np.ndarray, out: TpmOutput) -> TreeParityMachine:
    updated = tpm.copy()
    updated.update(x, out)
    return updated


def weight_distance(a: TreeParityMachine, b: TreeParityMachine) -> tuple[int, int]:
    """Return ``(matching, total)`` weight positions of two machines."""
    if a.params != b.params:
        raise StructureError(f"params differ: {a.params} vs {b.params}")
    total = a.params.weight_count
    return int(np.count_nonzero(a.weights == b.weights)), total


def random_input(params: TpmParams, rng: np.random.Generator) -> np.ndarray:
    return (rng.integers(0, 2, size=params.shape, dtype=WEIGHT_DTYPE) * 2 - 1).astype(WEIGHT_DTYPE)
