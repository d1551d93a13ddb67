"""Key reconciliation by mutual synchronization of tree parity machines."""

from .codec import (
    EmptyKeyError,
    KeyMaterial,
    apply_reduction,
    bits_per_weight,
    decode,
    encode,
    enumerate_structures,
    leakage,
)
from .qkd_sim import KeyPair, estimate_qber, generate_pair, hamming_distance
from .tpm import (
    StructureError,
    TpmOutput,
    TpmParams,
    TreeParityMachine,
    clamp,
    evaluate,
    hebbian_update,
    weight_distance,
)

__version__ = "0.1.0"
