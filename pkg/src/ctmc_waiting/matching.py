"""Waiting, return, hitting and shadowing times on discretized symbol streams.

Index conventions (symbol ``i`` is the state at time ``i * delta``):

===============  ===========================  ==================  ==========
quantity         pattern                      match at indices    k range
===============  ===========================  ==================  ==========
waiting time     ``X_1 .. X_n``               ``k+1 .. k+n``      ``k >= 1``
hitting time     given block, length ``m``    ``k+1 .. k+m``      ``k >= 1``
return time      ``X_0 .. X_{n-1}``           ``k .. k+n-1``      ``k >= 1``
shadow time      ``gamma(0), .., gamma(n d)`` ``k .. k+n``        ``k >= 0``
===============  ===========================  ==================  ==========

All searches share one streaming matcher (Knuth-Morris-Pratt automaton,
O(1) memory per symbol). A target is a stored :class:`DiscretePath`, an
integer array, or a :class:`SymbolStream` extended on demand. A search that
reads ``budget`` target symbols without a match is *censored*; that is a
result, not an error.

For patterns whose expected waiting time is far beyond any scan budget the
module also provides the first-occurrence law itself (:class:`HittingLaw`):
for a stationary Markov target the first occurrence index is geometric with
parameter ``P(w) / Z_ww``, where ``Z_ww`` is the diagonal entry of the
fundamental matrix of the pattern automaton at the full-match state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np

from .errors import ValidationError
from .pathsim import DiscretePath, SymbolStream, Trajectory

DEFAULT_BUDGET = 10**8


@dataclass(frozen=True)
class MatchResult:
    """Outcome of one search.

    ``value`` is the index ``k`` (``None`` when censored); ``scanned`` counts
    target symbols read by the matcher. ``method`` is ``"stream"`` for an
    actual scan and ``"law"`` for a draw from the exact first-occurrence law.
    """

    value: int | None
    scanned: int
    method: str = "stream"
    log_value: float | None = None

    @property
    def censored(self) -> bool:
        return self.value is None

    @property
    def log(self) -> float:
        if self.value is None:
            raise ValueError("censored result has no value")
        if self.log_value is not None:
            return self.log_value
        return math.log(self.value)


def failure_function(pattern: Sequence[int]) -> np.ndarray:
    """KMP failure function: ``f[i]`` = longest proper border of ``pattern[:i]``.

    ``f[0] = -1``; for ``i > 0``, ``0 <= f[i] < i``.
    """
    pat = np.asarray(pattern, dtype=np.int64)
    m = pat.size
    f = np.empty(m + 1, dtype=np.int64)
    f[0] = -1
    k = -1
    for i in range(1, m + 1):
        while k >= 0 and pat[k] != pat[i - 1]:
            k = f[k]
        k += 1
        f[i] = k
    return f


def borders(pattern: Sequence[int]) -> list[int]:
    """Lengths of all proper nonempty borders (prefix == suffix) of ``pattern``."""
    f = failure_function(pattern)
    out = []
    b = int(f[len(pattern)])
    while b > 0:
        out.append(b)
        b = int(f[b])
    return out


@numba.njit(cache=True)
def _kmp_scan(chunk, pat, fail, j, limit):
    # Feed chunk[0:limit] to the automaton in state j; return
    # (position after the completing symbol or -1, new state).
    m = pat.size
    for i in range(limit):
        c = chunk[i]
        while j >= 0 and pat[j] != c:
            j = fail[j]
        j += 1
        if j == m:
            return i + 1, j
    return -1, j


def _chunks(target, start: int) -> Iterable[np.ndarray]:
    """Yield target symbols from index ``start`` on, in chunks."""
    if isinstance(target, DiscretePath):
        target = target.symbols
    if isinstance(target, SymbolStream):
        skipped = 0
        for chunk in target:
            if skipped + chunk.size <= start:
                skipped += chunk.size
                continue
            yield chunk[max(0, start - skipped):]
            skipped += chunk.size
        return
    if isinstance(target, np.ndarray) or isinstance(target, (list, tuple)):
        arr = np.asarray(target, dtype=np.int64)
        if start < arr.size:
            yield arr[start:]
        return
    # Arbitrary iterable of chunks or symbols.
    skipped = 0
    for chunk in target:
        chunk = np.atleast_1d(np.asarray(chunk, dtype=np.int64))
        if skipped + chunk.size <= start:
            skipped += chunk.size
            continue
        yield chunk[max(0, start - skipped):]
        skipped += chunk.size


def find_first(pattern: Sequence[int], target, first_start: int, budget: int = DEFAULT_BUDGET) -> MatchResult:
    """Least start index ``s >= first_start`` of ``pattern`` in ``target``.

    Returns a :class:`MatchResult` whose ``value`` is ``s``.
    """
    pat = np.ascontiguousarray(pattern, dtype=np.int64)
    m = pat.size
    if m == 0:
        raise ValidationError("pattern must be nonempty")
    if budget < m:
        raise ValidationError("budget must be at least the pattern length")
    fail = failure_function(pat)
    j = 0
    scanned = 0
    for chunk in _chunks(target, first_start):
        chunk = np.ascontiguousarray(chunk, dtype=np.int64)
        limit = min(chunk.size, budget - scanned)
        end, j = _kmp_scan(chunk, pat, fail, j, limit)
        if end >= 0:
            scanned += end
            return MatchResult(first_start + scanned - m, scanned)
        scanned += limit
        if scanned >= budget:
            break
    return MatchResult(None, scanned)


def _shift(res: MatchResult, offset: int) -> MatchResult:
    if res.value is None:
        return res
    return MatchResult(res.value + offset, res.scanned, res.method, res.log_value)


def _symbols(path) -> np.ndarray:
    return path.symbols if isinstance(path, DiscretePath) else np.asarray(path, dtype=np.int64)


def hitting_time(pattern: Sequence[int], target, budget: int = DEFAULT_BUDGET) -> MatchResult:
    """Least ``k >= 1`` with ``target[k+1 .. k+m] == pattern``."""
    return _shift(find_first(pattern, target, 2, budget), -1)


def waiting_time(x_path, target, n: int, budget: int = DEFAULT_BUDGET) -> MatchResult:
    """``W_n(X|Y)``: least ``k >= 1`` with ``X_1..X_n == Y_{k+1}..Y_{k+n}``."""
    xs = _symbols(x_path)
    if n < 1:
        raise ValidationError("n must be >= 1")
    if xs.size < n + 1:
        raise ValidationError(f"x path needs at least n+1={n + 1} symbols, has {xs.size}")
    return hitting_time(xs[1 : n + 1], target, budget)


def return_time(path, n: int, budget: int = DEFAULT_BUDGET) -> MatchResult:
    """``R_n(X)``: least ``k >= 1`` with ``X_0..X_{n-1} == X_k..X_{k+n-1}``.

    ``path`` is a stored path or a :class:`SymbolStream` (whose first ``n``
    symbols form the pattern).
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if isinstance(path, SymbolStream):
        head = path.take(n)
        rest = path

        def target():
            yield head
            yield from rest

        return find_first(head, target(), 1, budget)
    xs = _symbols(path)
    if xs.size < n:
        raise ValidationError("path shorter than the block length")
    return find_first(xs[:n], xs, 1, budget)


def shadow_pattern(gamma: Trajectory, delta: float, n: int) -> np.ndarray:
    """Symbols ``gamma(0), gamma(delta), ..., gamma(n delta)``."""
    if n * delta > gamma.horizon * (1 + 1e-12):
        raise ValidationError("gamma must be defined on [0, n*delta]")
    return gamma.state_at(np.arange(n + 1) * delta)


def shadow_hitting_time(gamma: Trajectory, target, delta: float, n: int,
                        budget: int = DEFAULT_BUDGET) -> MatchResult:
    """``T_n(gamma|X)``: least ``k >= 0`` with ``X_k..X_{k+n}`` reproducing ``gamma``."""
    return find_first(shadow_pattern(gamma, delta, n), target, 0, budget)


# -- exact first-occurrence law ------------------------------------------------


def log_block_probability(pattern: Sequence[int], trans: np.ndarray, mu: np.ndarray) -> float:
    """``log P(X_1..X_m = pattern)`` for the stationary chain (chain rule)."""
    pat = np.asarray(pattern, dtype=np.int64)
    with np.errstate(divide="ignore"):
        lp = math.log(mu[pat[0]]) if mu[pat[0]] > 0 else -math.inf
        steps = np.log(trans[pat[:-1], pat[1:]])
    return float(lp + steps.sum())


@dataclass(frozen=True)
class HittingLaw:
    """First-occurrence law of a fixed pattern in a stationary Markov target.

    ``log_prob`` is ``log P(w)``; ``z`` is the fundamental-matrix entry
    ``Z_ww`` of the pattern automaton, so the exponential-law parameter of
    the rescaled hitting time is ``eta = 1 / z`` and the per-step occurrence
    probability is ``eps = P(w) / z``.
    """

    log_prob: float
    z: float
    length: int

    @property
    def eta(self) -> float:
        return 1.0 / self.z

    @property
    def log_eps(self) -> float:
        return self.log_prob - math.log(self.z)

    @property
    def mean(self) -> float:
        return math.exp(-self.log_eps)

    def sample(self, rng: np.random.Generator, first_start: int = 0) -> MatchResult:
        """Draw a first-occurrence start index ``s >= first_start``.

        Accurate to O(eps * (m + mixing time)) in total variation; intended
        for patterns far too rare to scan for.
        """
        e = rng.standard_exponential()
        eps = math.exp(self.log_eps)
        rate = -math.log1p(-eps) if eps > 1e-12 else eps
        if rate > 0:
            log_g = math.log(e) - math.log(rate)
        else:
            log_g = math.log(e) - self.log_eps
        if log_g < 700:
            g = int(math.floor(math.exp(log_g)))
        else:
            shift = int((log_g - 50) / math.log(2))
            g = int(math.exp(log_g - shift * math.log(2))) << shift
        value = first_start + g
        log_value = math.log(value) if value < (1 << 1000) else log_g
        return MatchResult(value, 0, "law", log_value if value > 0 else None)


def hitting_law(pattern: Sequence[int], trans: np.ndarray, mu: np.ndarray,
                fundamental: np.ndarray | None = None) -> HittingLaw:
    """Exact first-occurrence parameters of ``pattern`` in the chain ``trans``.

    ``Z_ww = sum_{k >= 0} (K^k(w, w) - P(w))`` for the automaton kernel ``K``:
    self-overlaps of ``w`` contribute the probability of completing the
    shifted copy, and non-overlapping returns contribute through the
    fundamental matrix of ``trans``.
    """
    pat = np.asarray(pattern, dtype=np.int64)
    m = pat.size
    trans = np.asarray(trans, dtype=float)
    mu = np.asarray(mu, dtype=float)
    log_p = log_block_probability(pat, trans, mu)
    if log_p == -math.inf:
        raise ValidationError("pattern has zero probability under the target chain")
    log_steps = np.log(trans[pat[:-1], pat[1:]]) if m > 1 else np.zeros(0)
    # suffix sums: log prod_{i=a}^{m-2} trans(w_i, w_{i+1})
    suffix = np.concatenate((np.cumsum(log_steps[::-1])[::-1], [0.0]))
    z = 1.0
    for b in borders(pat):
        z += math.exp(suffix[b - 1])
    prob = math.exp(log_p)
    z -= m * prob
    if fundamental is None:
        fundamental = fundamental_matrix(trans, mu)
    # sum_{j>=1} (P^j - 1 mu)(w_m, w_1) = (Z - I)(w_m, w_1)
    tail = fundamental[pat[-1], pat[0]] - (1.0 if pat[-1] == pat[0] else 0.0)
    z += math.exp(suffix[0]) * tail
    return HittingLaw(log_p, z, m)


def fundamental_matrix(trans: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """``(I - P + 1 mu)^{-1}``."""
    k = trans.shape[0]
    return np.linalg.solve(np.eye(k) - trans + np.outer(np.ones(k), mu), np.eye(k))


# -- sandwich bounds -------------------------------------------------------------


@dataclass(frozen=True)
class SandwichReport:
    n_grid: np.ndarray
    violation_fraction: np.ndarray
    kappa1: float
    kappa2: float
    fitted_kappa1: np.ndarray
    fitted_kappa2: np.ndarray


def sandwich_bounds(n: np.ndarray, kappa1: float, kappa2: float, delta_n=None) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper bands for ``log(W * P(block))``.

    Fixed ``delta``: ``[-k1 log n, log(k2 log n)]``; with a schedule
    ``delta_n``: ``[-k1 log n / delta_n, log(k2 log n / delta_n)]``.
    """
    n = np.asarray(n, dtype=float)
    scale = 1.0 if delta_n is None else np.asarray(delta_n, dtype=float)
    lo = -kappa1 * np.log(n) / scale
    hi = np.log(kappa2 * np.log(n) / scale)
    return lo, hi


def sandwich_diagnostic(n_grid, log_wp, kappa1: float = 10.0, kappa2: float = 10.0, delta_n=None) -> SandwichReport:
    """Fraction of samples outside the sandwich band for each ``n``.

    ``log_wp[i]`` holds samples of ``log(W_n * P(X_1^n))`` for ``n_grid[i]``.
    ``fitted_kappa1/2`` are the smallest constants containing every sample
    at that ``n``.
    """
    n_grid = np.asarray(n_grid)
    fracs, k1s, k2s = [], [], []
    for i, n in enumerate(n_grid):
        vals = np.asarray(log_wp[i], dtype=float)
        dn = None if delta_n is None else np.asarray(delta_n)[i]
        lo, hi = sandwich_bounds(n, kappa1, kappa2, dn)
        fracs.append(float(((vals < lo) | (vals > hi)).mean()) if vals.size else float("nan"))
        scale = 1.0 if dn is None else dn
        ln = math.log(n) / scale
        k1s.append(float(max(0.0, -vals.min() / ln)) if vals.size else float("nan"))
        k2s.append(float(math.exp(vals.max()) / ln) if vals.size else float("nan"))
    return SandwichReport(n_grid, np.array(fracs), kappa1, kappa2, np.array(k1s), np.array(k2s))
