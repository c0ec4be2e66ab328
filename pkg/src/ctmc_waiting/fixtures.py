"""Standard models used by tests, the CLI and the acceptance suite."""
from __future__ import annotations

import numpy as np

from .core import CtmcModel


def two_state(c0: float = 1.0, c1: float = 2.0, name: str = "") -> CtmcModel:
    """Two states ``0, 1`` that swap on every jump."""
    return CtmcModel((0, 1), (c0, c1), [[0.0, 1.0], [1.0, 0.0]], name=name or f"two_state_{c0:g}_{c1:g}")


def two_state_pair() -> tuple[CtmcModel, CtmcModel]:
    """``c = (1, 2)`` against ``c = (2, 1)``; relative entropy rate exactly 1/3."""
    return two_state(1.0, 2.0, "x"), two_state(2.0, 1.0, "y")


def cycle(q: float = 0.9, rate: float = 1.0, size: int = 3) -> CtmcModel:
    """Biased ring: forward with probability ``q``, backward with ``1 - q``."""
    jump = np.zeros((size, size))
    for x in range(size):
        jump[x, (x + 1) % size] += q
        jump[x, (x - 1) % size] += 1.0 - q
    return CtmcModel(tuple(range(size)), (rate,) * size, jump, name=f"cycle_q{q:g}")


def random_reversible(size: int, rng: np.random.Generator, density: float = 1.0) -> CtmcModel:
    """Reversible chain from a random ``mu`` and symmetric conductances.

    Rates are ``w(x, y) / mu(x)`` with ``w`` symmetric, so detailed balance
    holds by construction. A ring of edges keeps the chain irreducible.
    """
    mu = rng.uniform(0.2, 1.0, size)
    mu /= mu.sum()
    w = rng.uniform(0.1, 1.0, (size, size))
    w = np.triu(w, 1) * (rng.random((size, size)) < density)
    for x in range(size):
        y = (x + 1) % size
        lo, hi = min(x, y), max(x, y)
        if w[lo, hi] == 0:
            w[lo, hi] = rng.uniform(0.1, 1.0)
    w = w + w.T
    return CtmcModel.from_rates(tuple(range(size)), w / mu[:, None], name=f"reversible_{size}")


def random_chain(size: int, rng: np.random.Generator) -> CtmcModel:
    """Generic chain with all transitions allowed (usually irreversible)."""
    rates = rng.uniform(0.1, 2.0, (size, size))
    np.fill_diagonal(rates, 0.0)
    return CtmcModel.from_rates(tuple(range(size)), rates, name=f"random_{size}")


def standard() -> dict[str, CtmcModel]:
    x, y = two_state_pair()
    return {"two_state_x": x, "two_state_y": y, "cycle": cycle(0.9), "cycle_symmetric": cycle(0.5)}
