"""Deterministic per-path random number substreams.

Every stochastic object in the laboratory draws from a stream addressed by
(master seed, absolute path index, stream id). The layout is:

    SeedSequence(entropy=seed, spawn_key=(path_index,)) -> PCG64 -> .jumped(stream)

Stream ids are fixed: four driving Gaussian streams W0..W3 for the bivariate
construction, plus one stream reserved for drift. Spectral synthesis draws its
real/imaginary normal arrays from W0 and W1 of the same layout.

Two properties the simulators rely on (and the tests check):

* Streams are independent PCG64 jumps of one another, so a simulator may skip
  drawing a stream whose coefficients are identically zero without perturbing
  any other stream.
* Seeding keys on the absolute path index, so a batch produced in chunks (or
  by several workers) is bit-identical to the same batch produced in one call.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

# Stream ids. W0..W3 drive the bivariate Gaussian construction; DRIFT is
# reserved for drift processes so drift stays independent of the price noise.
STREAM_W0 = 0
STREAM_W1 = 1
STREAM_W2 = 2
STREAM_W3 = 3
STREAM_DRIFT = 4

N_STREAMS = 5


def _check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return int(seed)


def path_generator(seed: int, path_index: int, stream: int) -> np.random.Generator:
    """Generator for one (seed, path, stream) address."""
    return path_generators(seed, path_index, (stream,))[0]


def path_generators(
    seed: int, path_index: int, streams: Sequence[int]
) -> list[np.random.Generator]:
    """Generators for several streams of one path, sharing one seeding pass.

    `streams` may list any subset of 0..N_STREAMS-1 in any order; each entry
    gets the same state it would get if all streams were instantiated.
    """
    seed = _check_seed(seed)
    if path_index < 0:
        raise ValueError(f"path_index must be nonnegative, got {path_index}")
    for k in streams:
        if not 0 <= k < N_STREAMS:
            raise ValueError(f"stream id {k} outside 0..{N_STREAMS - 1}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(path_index),))
    base = np.random.PCG64(ss)
    out = []
    for k in streams:
        bg = base.jumped(k) if k else base
        out.append(np.random.Generator(bg))
    return out
