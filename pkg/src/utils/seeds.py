import hashlib

import numpy as np


def derive_seed(root: int, *labels) -> int:
    """
    Sub-seed for one consumer of randomness, derived by hashing the root seed
    with the consumer's labels. Adding a new label never shifts an existing
    stream.
    """
    text = ":".join([str(int(root))] + [str(label) for label in labels])
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def generator_for(root: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *labels))
