"""Deterministic named random substreams derived from a single run seed.

Each consumer (price process per market, runtime draws, failure draws) gets
its own stream, so adding a consumer never perturbs the draws of the others.
"""

from __future__ import annotations

import hashlib
import math
import random
from typing import Mapping


def _digest_seed(text: str) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


def substream_seed(base_seed: int, name: str) -> int:
    return _digest_seed(f"{base_seed}:{name}")


def sweep_seed(base_seed: int, assignments: Mapping[str, object]) -> int:
    """Derive a run seed from the base seed plus one sweep point.

    Depends only on this point's own key=value pairs, so adding another
    value to a sweep axis never changes the seeds of existing points.
    """
    parts = "|".join(f"{key}={assignments[key]}" for key in sorted(assignments))
    return _digest_seed(f"{base_seed}|{parts}")


class RngStreams:
    """Lazily created random.Random instances, one per named substream."""

    def __init__(self, base_seed: int):
        self.base_seed = base_seed
        self._streams: dict[str, random.Random] = {}

    def stream(self, name: str) -> random.Random:
        rng = self._streams.get(name)
        if rng is None:
            rng = random.Random(substream_seed(self.base_seed, name))
            self._streams[name] = rng
        return rng


def poisson(rng: random.Random, lam: float) -> int:
    """Poisson sample via Knuth's product method.

    Only suitable for the small per-tick rates used here; guards against
    rates where the product method would underflow.
    """
    if lam <= 0.0:
        return 0
    if lam > 50.0:
        raise ValueError(f"poisson rate too large for product method: {lam}")
    limit = math.exp(-lam)
    count = -1
    product = 1.0
    while product > limit:
        count += 1
        product *= rng.random()
    return count
