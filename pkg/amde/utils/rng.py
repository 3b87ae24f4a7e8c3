from typing import Union

import numpy as np

__all__ = ('derive_rng', 'rng_state', 'restore_rng')

SeedLike = Union[int, np.integer]


def derive_rng(seed: SeedLike, *path: SeedLike) -> np.random.Generator:
    """Returns an independent generator for the stream named by
    ``(seed, *path)``, e.g. ``derive_rng(seed, epoch, step)``.

    Streams never depend on how many numbers other streams consumed.
    """
    entropy = [int(seed)] + [int(p) for p in path]
    if any(e < 0 for e in entropy):
        raise ValueError(f'seed path must be non-negative, got {entropy}')
    return np.random.default_rng(np.random.SeedSequence(entropy))


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    name = state.get('bit_generator')
    bit_generator = getattr(np.random, name, None)
    if bit_generator is None:
        raise ValueError(f'unknown bit generator {name!r}')
    generator = bit_generator()
    generator.state = state
    return np.random.Generator(generator)
