"""Simulation of CTMC trajectories, delta-discretization and path functionals.

Trajectories are stored by their jumps (initial state, jump times, states
entered), so memory grows with the number of jumps and any number of time
steps ``delta`` can be read off one path. States are stored as integer
indices into ``model.states``.
"""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field

import numba
import numpy as np

from . import core
from .core import CtmcModel
from .errors import AbsoluteContinuityError, ValidationError
from .rng import Seed, as_seed

_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Right-continuous piecewise-constant path on ``[0, horizon]``."""

    initial: int
    jump_times: np.ndarray
    post_jump_states: np.ndarray
    horizon: float
    labels: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.jump_times, dtype=float)
        s = np.asarray(self.post_jump_states, dtype=np.int64)
        t.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "post_jump_states", s)
        if not self.horizon > 0:
            raise ValidationError("horizon must be > 0")
        if t.shape != s.shape:
            raise ValidationError("jump_times and post_jump_states must have equal length")
        if t.size:
            if t[0] <= 0 or (np.diff(t) <= 0).any() or t[-1] > self.horizon:
                raise ValidationError("jump times must be strictly increasing in (0, horizon]")
            prev = np.concatenate(([self.initial], s[:-1]))
            if (prev == s).any():
                raise ValidationError("consecutive states must differ (no self-jumps)")

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    @property
    def visited(self) -> np.ndarray:
        """States in visiting order, starting with the initial one."""
        return np.concatenate(([self.initial], self.post_jump_states)).astype(np.int64)

    def state_at(self, times) -> np.ndarray:
        """Value of the path at ``times`` (right-continuous at jumps)."""
        idx = np.searchsorted(self.jump_times, np.asarray(times, dtype=float), side="right")
        return self.visited[idx]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.initial == other.initial
            and self.horizon == other.horizon
            and np.array_equal(self.jump_times, other.jump_times)
            and np.array_equal(self.post_jump_states, other.post_jump_states)
        )

    def to_bytes(self) -> bytes:
        return (
            np.int64(self.initial).tobytes()
            + np.float64(self.horizon).tobytes()
            + self.jump_times.tobytes()
            + self.post_jump_states.tobytes()
        )


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Symbols ``s_i`` = state at time ``i * delta``, ``i = 0..m``."""

    delta: float
    symbols: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        if not self.delta > 0:
            raise ValidationError("delta must be > 0")
        s = np.asarray(self.symbols, dtype=np.int64)
        s.setflags(write=False)
        object.__setattr__(self, "symbols", s)

    def __len__(self) -> int:
        return int(self.symbols.size)

    def __eq__(self, other):
        if not isinstance(other, DiscretePath):
            return NotImplemented
        return self.delta == other.delta and np.array_equal(self.symbols, other.symbols)


@numba.njit(cache=True)
def _advance(state, t, horizon, holds, unif, rates, cum_jump, times_out, states_out):
    # Consumes one holding draw and one uniform per jump; returns the number
    # of jumps written, the final state/time, and whether the horizon was hit.
    k = 0
    n = holds.size
    m = cum_jump.shape[1]
    while k < n:
        t_next = t + holds[k] / rates[state]
        if t_next > horizon:
            return k, state, t, True
        u = unif[k]
        nxt = 0
        while nxt < m - 1 and cum_jump[state, nxt] <= u:
            nxt += 1
        t = t_next
        state = nxt
        times_out[k] = t
        states_out[k] = state
        k += 1
    return k, state, t, False


def _cum_rows(mat: np.ndarray) -> np.ndarray:
    cum = np.cumsum(mat, axis=1)
    for i in range(mat.shape[0]):
        # columns from the last positive entry onwards absorb rounding, so a
        # zero-probability tail column is never selected
        last = np.flatnonzero(mat[i] > 0)[-1]
        cum[i, last:] = 1.0
    return np.ascontiguousarray(cum)


def _initial_state(model: CtmcModel, initial, rng: np.random.Generator) -> int:
    if isinstance(initial, str) and initial == "stationary":
        mu = core.stationary(model)
        return int(np.searchsorted(np.cumsum(mu), rng.random(), side="right").clip(max=model.size - 1))
    return model.index(initial)


def simulate(model: CtmcModel, horizon: float, seed: int | Seed, initial="stationary") -> Trajectory:
    """Exact simulation of ``model`` on ``[0, horizon]``.

    Holding times in ``x`` are Exponential(``c(x)``); the next state is drawn
    from ``p(x, .)``. ``initial`` is a state label or ``"stationary"``.
    """
    if not horizon > 0:
        raise ValidationError("horizon must be > 0")
    seed = as_seed(seed)
    rng = seed.generator()
    state = _initial_state(model, initial, rng)
    start = state
    rates = np.ascontiguousarray(model.escape_rates, dtype=float)
    cum = _cum_rows(np.asarray(model.jump_matrix))
    chunk = max(_CHUNK, int(1.2 * horizon * rates.max()))
    t = 0.0
    times, states = [], []
    done = False
    while not done:
        holds = rng.standard_exponential(chunk)
        unif = rng.random(chunk)
        t_out = np.empty(chunk)
        s_out = np.empty(chunk, dtype=np.int64)
        k, state, t, done = _advance(state, t, float(horizon), holds, unif, rates, cum, t_out, s_out)
        times.append(t_out[:k])
        states.append(s_out[:k])
    return Trajectory(
        start,
        np.concatenate(times),
        np.concatenate(states),
        float(horizon),
        model.states,
        {"seed": seed.seed, "index": seed.index, "stream": seed.stream},
    )


def discretize(traj: Trajectory, delta: float, n_symbols: int | None = None) -> DiscretePath:
    """Sample ``traj`` at ``0, delta, 2 delta, ...`` (``n_symbols`` values).

    Raises :class:`ValidationError` if the path is too short; the caller
    should simulate a longer horizon rather than truncate silently.
    """
    if not delta > 0:
        raise ValidationError("delta must be > 0")
    if n_symbols is None:
        n_symbols = int(np.floor(traj.horizon / delta * (1 + 1e-12))) + 1
    if n_symbols < 1:
        raise ValidationError("n_symbols must be >= 1")
    if (n_symbols - 1) * delta > traj.horizon * (1 + 1e-12):
        raise ValidationError(
            f"trajectory horizon {traj.horizon} too short for {n_symbols} symbols at delta={delta}"
        )
    grid = np.arange(n_symbols) * delta
    return DiscretePath(float(delta), traj.state_at(grid), traj.labels)


@numba.njit(cache=True)
def _chain_fill(state, cum, unif, out):
    m = cum.shape[1]
    for i in range(unif.size):
        u = unif[i]
        nxt = 0
        while nxt < m - 1 and cum[state, nxt] <= u:
            nxt += 1
        state = nxt
        out[i] = state
    return state


class SymbolStream:
    """Lazily generated symbols of a stationary ``delta``-discretized chain.

    Draws ``X_0 ~ mu`` and then ``X_{i+1} ~ exp(delta L)(X_i, .)``, which has
    exactly the law of sampling a continuous path at spacing ``delta``.
    Symbols are produced in chunks so that the target of a search can be
    extended on demand.
    """

    def __init__(self, model: CtmcModel | None, delta: float, seed: int | Seed, initial="stationary",
                 transition: np.ndarray | None = None, mu: np.ndarray | None = None):
        self.seed = as_seed(seed)
        self._rng = self.seed.generator()
        if transition is None:
            transition = core.discretized_transition_matrix(model, delta)
        self.transition = np.asarray(transition, dtype=float)
        self._cum = _cum_rows(self.transition)
        if isinstance(initial, str) and initial == "stationary":
            if mu is None:
                mu = core.stationary(model)
            first = int(min(np.searchsorted(np.cumsum(mu), self._rng.random(), side="right"), mu.size - 1))
        else:
            first = model.index(initial) if model is not None else int(initial)
        self._state = first
        self._pending = np.array([first], dtype=np.int64)
        self.produced = 0

    def next_chunk(self, size: int = 1 << 16) -> np.ndarray:
        if self._pending.size:
            out, self._pending = self._pending, self._pending[:0]
            self.produced += out.size
            return out
        unif = self._rng.random(size)
        out = np.empty(size, dtype=np.int64)
        self._state = _chain_fill(self._state, self._cum, unif, out)
        self.produced += size
        return out

    def take(self, n: int) -> np.ndarray:
        parts, got = [], 0
        while got < n:
            c = self.next_chunk(min(1 << 16, max(1, n - got)))
            parts.append(c)
            got += c.size
        return np.concatenate(parts)[:n]

    def __iter__(self):
        while True:
            yield self.next_chunk()


def sample_discrete_path(model: CtmcModel, delta: float, n_symbols: int, seed: int | Seed) -> DiscretePath:
    """Stationary ``delta``-discretized path of ``n_symbols`` symbols (chain sampler)."""
    return DiscretePath(float(delta), SymbolStream(model, delta, seed).take(n_symbols), model.states)


def _log_rate_ratio(mx: CtmcModel, my: CtmcModel) -> np.ndarray:
    rx, ry = mx.rates, my.rates
    bad = (rx > 0) & (ry <= 0)
    out = np.full_like(rx, np.nan)
    ok = (rx > 0) & (ry > 0)
    out[ok] = np.log(rx[ok] / ry[ok])
    out[bad] = np.inf
    return out


def _occupation(traj: Trajectory, t: float) -> np.ndarray:
    """Time spent in each state on ``[0, t]`` (length = max state + 1)."""
    times = traj.jump_times[traj.jump_times <= t]
    visited = traj.visited[: times.size + 1]
    edges = np.concatenate(([0.0], times, [t]))
    return np.bincount(visited, weights=np.diff(edges), minlength=len(traj.labels) or visited.max() + 1)


def girsanov_log_ratio(traj: Trajectory, mx: CtmcModel, my: CtmcModel, t: float | None = None,
                       include_initial: bool = True) -> float:
    """``log dP/dP~`` restricted to ``[0, t]`` evaluated on ``traj``.

    ``log mu(w0)/mu~(w0) + sum_jumps log[c p / (c~ p~)] - int (c - c~) du``;
    the occupation integral is exact over holding intervals.
    """
    if t is None:
        t = traj.horizon
    if t > traj.horizon * (1 + 1e-12) or t < 0:
        raise ValidationError("t must lie in [0, horizon]")
    if mx.states != my.states:
        raise ValidationError("models must share the same state space")
    ratio = _log_rate_ratio(mx, my)
    n = int(np.searchsorted(traj.jump_times, t, side="right"))
    vis = traj.visited
    frm, to = vis[:n], vis[1 : n + 1]
    jumps = ratio[frm, to]
    if np.isinf(jumps).any():
        i = int(np.flatnonzero(np.isinf(jumps))[0])
        raise AbsoluteContinuityError(
            f"jump {mx.states[frm[i]]!r}->{mx.states[to[i]]!r} has zero rate under the reference chain"
        )
    occ = np.zeros(mx.size)
    o = _occupation(traj, t)
    occ[: o.size] = o
    value = float(jumps.sum()) - float(occ @ (mx.escape_rates - my.escape_rates))
    if include_initial:
        mu, mut = core.stationary(mx), core.stationary(my)
        value += float(np.log(mu[traj.initial] / mut[traj.initial]))
    return value


def entropy_production_sample(traj: Trajectory, model: CtmcModel, t: float | None = None) -> tuple[float, dict]:
    """Entropy production ``S_t = log dP~/dP`` with ``P~`` the time reversal.

    Returns ``(S_t, meta)``; ``meta["sign"]`` records the convention, under
    which ``S_t / t`` tends to minus the entropy production rate.
    """
    rev = core.reverse(model)
    value = -girsanov_log_ratio(traj, model, rev, t)
    return value, {"sign": "log dPrev/dP", "limit_of_S_over_t": -core.entropy_production_rate(model)}


def jump_pair_counts(traj: Trajectory, t: float | None = None, by_label: bool = False) -> dict:
    """Number of jumps ``x -> y`` up to time ``t`` (only nonzero pairs)."""
    if t is None:
        t = traj.horizon
    n = int(np.searchsorted(traj.jump_times, t, side="right"))
    vis = traj.visited
    counts = Counter(zip(vis[:n].tolist(), vis[1 : n + 1].tolist()))
    if by_label and traj.labels:
        return {(traj.labels[a], traj.labels[b]): c for (a, b), c in counts.items()}
    return dict(counts)


def relabel(traj: Trajectory, perm) -> Trajectory:
    """Apply the state permutation ``i -> perm[i]``."""
    perm = np.asarray(perm, dtype=np.int64)
    return Trajectory(int(perm[traj.initial]), traj.jump_times, perm[traj.post_jump_states],
                      traj.horizon, traj.labels)


def trajectory_to_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    buf.write(f"# seed={traj.meta.get('seed', '')} index={traj.meta.get('index', '')} "
              f"horizon={traj.horizon!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "state"])
    lab = traj.labels or None
    w.writerow([0.0, lab[traj.initial] if lab else traj.initial])
    for t, s in zip(traj.jump_times.tolist(), traj.post_jump_states.tolist()):
        w.writerow([repr(t), lab[s] if lab else s])
    return buf.getvalue()


def trajectory_from_csv(text: str, states=None) -> Trajectory:
    """Parse :func:`trajectory_to_csv` output (e.g. a shadowing target file)."""
    horizon = None
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("horizon="):
                    horizon = float(tok.split("=", 1)[1])
            continue
        if line.strip():
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    if [h.strip() for h in header] != ["time", "state"]:
        raise ValidationError("trajectory CSV must have header 'time,state'")
    data = list(reader)
    if not data:
        raise ValidationError("trajectory CSV has no rows")
    labels = tuple(states) if states is not None else ()

    def idx(tok):
        if labels:
            for i, lab in enumerate(labels):
                if str(lab) == tok:
                    return i
            raise ValidationError(f"unknown state {tok!r} in trajectory file")
        return int(tok)

    times = [float(r[0]) for r in data]
    st = [idx(r[1].strip()) for r in data]
    if horizon is None:
        horizon = times[-1] if times[-1] > 0 else 1.0
    return Trajectory(st[0], times[1:], st[1:], horizon, labels)


def discrete_path_to_text(path: DiscretePath) -> str:
    lab = path.labels or None
    lines = [f"# delta={path.delta!r}"]
    lines += [str(lab[s]) if lab else str(s) for s in path.symbols.tolist()]
    return "\n".join(lines) + "\n"
