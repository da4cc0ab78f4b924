"""Counter-based seed splitting so serial and parallel runs draw identical streams."""
import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed for the integer path ``keys`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))
