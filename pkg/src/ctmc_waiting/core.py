"""Finite-state CTMC models and their exact (deterministic) oracles.

A chain is given by strictly positive escape rates ``c(x)`` and a jump
matrix ``p(x, y)`` with zero diagonal; its generator is
``L(x, y) = c(x) p(x, y)`` off the diagonal and ``L(x, x) = -c(x)``.

All functions in this module are pure and use no randomness.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from . import linalg
from .errors import AbsoluteContinuityError, DomainError, NumericError, ValidationError

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
DEFAULT_P_GRID = np.linspace(-0.95, 0.95, 41)
SLOPE_EPS = 1e-3
CONVEXITY_TOL = 1e-8
FD_STEP = 1e-4


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CtmcModel:
    """Continuous-time Markov chain on a finite, ordered state space.

    Parameters
    ----------
    states : sequence of hashable labels
    escape_rates : sequence of float
        ``c(x)`` in the order of ``states``.
    jump_matrix : array_like
        Row-stochastic ``p(x, y)`` with zero diagonal.
    """

    states: tuple
    escape_rates: np.ndarray
    jump_matrix: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "escape_rates", _frozen(self.escape_rates))
        object.__setattr__(self, "jump_matrix", _frozen(self.jump_matrix))
        self.validate()

    def validate(self) -> None:
        """Raise :class:`ValidationError` naming the first violated invariant."""
        k = len(self.states)
        c, p = self.escape_rates, self.jump_matrix
        if k < 2:
            raise ValidationError("state space must contain at least 2 states")
        if len(set(self.states)) != k:
            raise ValidationError("state labels must be distinct")
        if c.shape != (k,):
            raise ValidationError(f"escape_rates must have length {k}, got shape {c.shape}")
        if p.shape != (k, k):
            raise ValidationError(f"jump_matrix must be {k}x{k}, got shape {p.shape}")
        if not np.all(np.isfinite(c)) or not np.all(np.isfinite(p)):
            raise ValidationError("rates and jump probabilities must be finite")
        bad = np.flatnonzero(c <= 0)
        if bad.size:
            raise ValidationError(
                f"escape rate of state {self.states[bad[0]]!r} must be strictly positive"
            )
        if (p < 0).any():
            i, j = np.argwhere(p < 0)[0]
            raise ValidationError(f"jump_matrix[{i}][{j}] is negative")
        diag = np.flatnonzero(np.diag(p) != 0)
        if diag.size:
            raise ValidationError(f"jump_matrix[{diag[0]}][{diag[0]}] must be 0 (no self-jumps)")
        sums = p.sum(axis=1)
        rows = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if rows.size:
            r = rows[0]
            raise ValidationError(f"jump_matrix row {r} sums to {sums[r]:.12g}, not 1 (row-stochasticity)")
        if not _strongly_connected(p > 0):
            raise ValidationError("chain is not irreducible (transition graph not strongly connected)")

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self, state: Hashable) -> int:
        return self.states.index(state)

    @property
    def rates(self) -> np.ndarray:
        """Transition rate matrix ``c(x) p(x, y)`` (zero diagonal)."""
        return self.escape_rates[:, None] * self.jump_matrix

    def scaled(self, factor: float) -> "CtmcModel":
        return CtmcModel(self.states, self.escape_rates * factor, self.jump_matrix, self.name)

    def to_dict(self) -> dict:
        return {
            "states": list(self.states),
            "escape_rates": self.escape_rates.tolist(),
            "jump_matrix": self.jump_matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict, name: str = "") -> "CtmcModel":
        for key in ("states", "escape_rates", "jump_matrix"):
            if key not in data:
                raise ValidationError(f"model is missing required key {key!r}")
        return cls(data["states"], data["escape_rates"], data["jump_matrix"], name)

    @classmethod
    def from_rates(cls, states: Sequence, rates, name: str = "") -> "CtmcModel":
        """Build a model from an off-diagonal rate matrix ``c(x, y)``."""
        r = np.array(rates, dtype=float)
        np.fill_diagonal(r, 0.0)
        c = r.sum(axis=1)
        if (c <= 0).any():
            raise ValidationError("every state needs a positive total exit rate")
        return cls(states, c, r / c[:, None], name)

    def __eq__(self, other):
        if not isinstance(other, CtmcModel):
            return NotImplemented
        return (
            self.states == other.states
            and np.array_equal(self.escape_rates, other.escape_rates)
            and np.array_equal(self.jump_matrix, other.jump_matrix)
        )

    def __hash__(self):
        return hash((self.states, self.escape_rates.tobytes(), self.jump_matrix.tobytes()))

    def allclose(self, other: "CtmcModel", atol: float = 1e-12) -> bool:
        return (
            self.states == other.states
            and np.allclose(self.escape_rates, other.escape_rates, rtol=0, atol=atol)
            and np.allclose(self.jump_matrix, other.jump_matrix, rtol=0, atol=atol)
        )


def _strongly_connected(adj: np.ndarray) -> bool:
    k = adj.shape[0]

    def reach(a):
        seen = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(a[i]):
                if j not in seen:
                    seen.add(int(j))
                    stack.append(int(j))
        return len(seen) == k

    return reach(adj) and reach(adj.T)


def build_generator(model: CtmcModel) -> np.ndarray:
    """Generator matrix ``L`` of ``model`` (rows sum to zero)."""
    model.validate()
    gen = model.rates.copy()
    np.fill_diagonal(gen, -model.escape_rates)
    return gen


def stationary_distribution(gen: np.ndarray) -> np.ndarray:
    """Unique ``mu`` with ``mu L = 0`` and ``sum(mu) = 1``.

    Solves the square system obtained from ``L^T mu = 0`` by replacing its
    last equation with the normalisation.
    """
    gen = np.asarray(gen, dtype=float)
    k = gen.shape[0]
    a = gen.T.copy()
    a[-1, :] = 1.0
    rhs = np.zeros(k)
    rhs[-1] = 1.0
    mu = linalg.solve_dense(a, rhs)
    if (mu <= 0).any():
        raise NumericError("stationary solve returned non-positive weights (reducible generator?)")
    mu = mu / mu.sum()
    resid = np.abs(mu @ gen).max()
    if resid > STATIONARY_TOL * max(1.0, np.abs(gen).max()):
        raise NumericError(f"stationary residual {resid:.3g} exceeds tolerance")
    return mu


def stationary(model: CtmcModel) -> np.ndarray:
    return stationary_distribution(build_generator(model))


def reverse(model: CtmcModel, mu: np.ndarray | None = None) -> CtmcModel:
    """Time reversal: rates ``c(y) p(y, x) mu(y) / mu(x)``, re-factored."""
    if mu is None:
        mu = stationary(model)
    mu = np.asarray(mu, dtype=float)
    rev_rates = (model.rates * mu[:, None]).T / mu[:, None]
    name = f"{model.name}~reversed" if model.name else ""
    rev = CtmcModel.from_rates(model.states, rev_rates, name)
    check = np.abs(mu @ build_generator(rev)).max()
    if check > STATIONARY_TOL * max(1.0, model.escape_rates.max()):
        raise NumericError("reversed chain does not preserve the stationary law")
    return rev


def _check_pair(mx: CtmcModel, my: CtmcModel) -> None:
    if mx.states != my.states:
        raise ValidationError("models must share the same ordered state space")


def _support_violation(num: np.ndarray, den: np.ndarray, states) -> None:
    bad = np.argwhere((num > 0) & (den <= 0))
    if bad.size:
        i, j = bad[0]
        raise AbsoluteContinuityError(
            f"transition {states[i]!r}->{states[j]!r} has positive weight under the first "
            "measure but zero under the reference; relative entropy is infinite"
        )


def relative_entropy_rate(mx: CtmcModel, my: CtmcModel) -> float:
    """Relative entropy per unit time of the path law of ``mx`` w.r.t. ``my``.

    ``sum mu c p log(c p / c~ p~) - sum mu (c - c~)`` with ``mu`` the
    stationary law of ``mx``; ``0 log 0 = 0``.
    """
    _check_pair(mx, my)
    rx, ry = mx.rates, my.rates
    _support_violation(rx, ry, mx.states)
    mu = stationary(mx)
    pos = rx > 0
    logs = np.zeros_like(rx)
    logs[pos] = np.log(rx[pos] / ry[pos])
    jump_part = float((mu[:, None] * rx * logs).sum())
    return jump_part - float(mu @ (mx.escape_rates - my.escape_rates))


def entropy_production_rate(model: CtmcModel) -> float:
    """Mean entropy production per unit time: ``s(P | P reversed)``."""
    return relative_entropy_rate(model, reverse(model))


def is_reversible(model: CtmcModel, tol: float = 1e-12) -> bool:
    flux = stationary(model)[:, None] * model.rates
    return bool(np.abs(flux - flux.T).max() <= tol)


def discretized_transition_matrix(model: CtmcModel, delta: float) -> np.ndarray:
    """Transition matrix ``exp(delta L)`` of the ``delta``-sampled chain."""
    if not delta > 0:
        raise ValidationError(f"time step delta must be > 0, got {delta!r}")
    pd = linalg.expm(delta * build_generator(model))
    # Rounding can leave entries of order -1e-17.
    pd = np.clip(pd, 0.0, None)
    return pd / pd.sum(axis=1, keepdims=True)


def spectral_gap(gen: np.ndarray) -> float:
    """``-max Re(lambda)`` over the nonzero eigenvalues of the generator."""
    ev = np.linalg.eigvals(np.asarray(gen, dtype=float))
    ev = ev[np.argsort(-ev.real)]
    # ev[0] is the zero eigenvalue of an irreducible generator.
    return float(-ev[1].real)


@dataclass(frozen=True)
class ScgfCurve:
    """A scaled cumulant generating function sampled on a grid.

    ``kind`` is ``"E"`` (continuous time) or ``"F"`` (``delta``-discretized).
    ``slopes`` holds the one-sided slopes near ``p = -1`` and ``p = +1``
    that bound the rate-function domain, when they were computed.
    """

    p: np.ndarray
    values: np.ndarray
    kind: str
    delta: float | None = None
    slopes: tuple[float, float] | None = None

    def value_at(self, p: float) -> float:
        idx = np.flatnonzero(np.isclose(self.p, p, rtol=0, atol=1e-12))
        if not idx.size:
            raise KeyError(f"p={p} not on grid")
        return float(self.values[idx[0]])

    def is_convex(self, tol: float = CONVEXITY_TOL) -> bool:
        slopes = np.diff(self.values) / np.diff(self.p)
        return bool((np.diff(slopes) >= -tol).all())


def tilted_generator(mx: CtmcModel, my: CtmcModel, p: float) -> np.ndarray:
    """Tilted matrix whose Perron root is ``E(p)``."""
    rx, ry = mx.rates, my.rates
    pos = rx > 0
    m = np.zeros_like(rx)
    m[pos] = rx[pos] * (rx[pos] / ry[pos]) ** p
    np.fill_diagonal(m, -mx.escape_rates - p * (mx.escape_rates - my.escape_rates))
    return m


def scgf_value(mx: CtmcModel, my: CtmcModel, p: float, tol: float = 1e-13) -> float:
    m = tilted_generator(mx, my, p)
    sigma = float(mx.escape_rates.max() * (1 + abs(p)) + 1.0)
    # Keep the shifted matrix nonnegative when c~ >> c.
    sigma = max(sigma, float(-np.diag(m).min()) + 1.0)
    lam, _ = linalg.perron_root(m, shift=sigma, tol=tol)
    return lam


def continuous_scgf(mx: CtmcModel, my: CtmcModel, p_grid=None) -> ScgfCurve:
    """``E(p)``: SCGF of the log Radon-Nikodym derivative ``log dP/dP~``."""
    _check_pair(mx, my)
    _support_violation(mx.rates, my.rates, mx.states)
    grid = np.asarray(DEFAULT_P_GRID if p_grid is None else p_grid, dtype=float)
    vals = np.array([scgf_value(mx, my, p) for p in grid])
    e = SLOPE_EPS
    lo = (scgf_value(mx, my, -1 + 2 * e) - scgf_value(mx, my, -1 + e)) / e
    hi = (scgf_value(mx, my, 1 - e) - scgf_value(mx, my, 1 - 2 * e)) / e
    return ScgfCurve(grid, vals, "E", None, (lo, hi))


def _tilted_discrete(pdx: np.ndarray, pdy: np.ndarray, p: float) -> np.ndarray:
    pos = pdx > 0
    a = np.zeros_like(pdx)
    a[pos] = pdx[pos] ** (1 + p) * pdy[pos] ** (-p)
    return a


def discrete_log_eigenvalue(pdx: np.ndarray, pdy: np.ndarray, p: float, tol: float = 1e-15) -> float:
    """``log lambda_max(A_p)`` with ``A_p = PX^(1+p) PY^(-p)`` entrywise."""
    lam, _ = linalg.perron_root(_tilted_discrete(pdx, pdy, p), tol=tol)
    return float(np.log(lam))


def _check_discrete(pdx, pdy, states=None):
    pdx = np.asarray(pdx, dtype=float)
    pdy = np.asarray(pdy, dtype=float)
    if pdx.shape != pdy.shape or pdx.ndim != 2:
        raise ValidationError("transition matrices must be square and of equal shape")
    _support_violation(pdx, pdy, states if states is not None else list(range(pdx.shape[0])))
    return pdx, pdy


def discrete_scgf(pdx, pdy, mu_check=None, delta: float = 1.0, p_grid=None) -> ScgfCurve:
    """``F^delta(p) = log lambda_max(A_p) / delta`` for ``|p| < 1``.

    ``mu_check``, when given, must be stationary for ``pdx`` (sanity check).
    """
    pdx, pdy = _check_discrete(pdx, pdy)
    if not delta > 0:
        raise ValidationError("delta must be > 0")
    grid = np.asarray(DEFAULT_P_GRID if p_grid is None else p_grid, dtype=float)
    if (np.abs(grid) >= 1).any():
        raise DomainError("F^delta(p) = infinity for |p| >= 1; the p-grid must lie in (-1, 1)")
    if mu_check is not None:
        mu_check = np.asarray(mu_check, dtype=float)
        if np.abs(mu_check @ pdx - mu_check).max() > STATIONARY_TOL:
            raise ValidationError("mu_check is not stationary for the first transition matrix")
    vals = np.array([discrete_log_eigenvalue(pdx, pdy, p) / delta for p in grid])
    e = SLOPE_EPS
    f = lambda q: discrete_log_eigenvalue(pdx, pdy, q) / delta  # noqa: E731
    slopes = ((f(-1 + 2 * e) - f(-1 + e)) / e, (f(1 - e) - f(1 - 2 * e)) / e)
    return ScgfCurve(grid, vals, "F", float(delta), slopes)


@dataclass(frozen=True)
class RateFunction:
    """Legendre transform of an :class:`ScgfCurve` tabulated on a q-grid."""

    q: np.ndarray
    values: np.ndarray
    domain: tuple[float, float]
    curve: ScgfCurve

    def __call__(self, q) -> np.ndarray | float:
        q_arr = np.atleast_1d(np.asarray(q, dtype=float))
        out = (np.outer(q_arr, self.curve.p) - self.curve.values[None, :]).max(axis=1)
        return float(out[0]) if np.ndim(q) == 0 else out


def legendre_transform(curve: ScgfCurve, n_q: int = 201) -> RateFunction:
    """``I(q) = max_p (p q - F(p))`` over the curve's grid, on ``[c-, c+]``."""
    p, f = np.asarray(curve.p), np.asarray(curve.values)
    if p.size < 3:
        raise ValidationError("need at least three grid points")
    slopes = np.diff(f) / np.diff(p)
    if (np.diff(slopes) < -CONVEXITY_TOL).any():
        raise NumericError("SCGF curve is not convex on its grid")
    lo, hi = curve.slopes if curve.slopes is not None else (slopes[0], slopes[-1])
    if abs(hi - lo) < 1e-12:
        q = np.array([0.5 * (lo + hi)])
    else:
        q = np.linspace(lo, hi, n_q)
    vals = (np.outer(q, p) - f[None, :]).max(axis=1)
    return RateFunction(q, vals, (float(lo), float(hi)), curve)


def discrete_mean_and_variance(pdx, pdy, mu, delta: float = 1.0) -> tuple[float, float]:
    """Per-step mean ``m_delta`` and asymptotic variance ``sigma_delta^2``.

    ``sigma_delta^2`` is the second derivative at ``p = 0`` of
    ``p -> log lambda_max(A_p)`` (central differences, step ``FD_STEP``).
    ``delta`` is accepted for signature symmetry; the results are per step.
    """
    pdx, pdy = _check_discrete(pdx, pdy)
    mu = np.asarray(mu, dtype=float)
    pos = pdx > 0
    logs = np.zeros_like(pdx)
    logs[pos] = np.log(pdx[pos] / pdy[pos])
    mean = float((mu[:, None] * pdx * logs).sum())
    if np.abs(logs).max() == 0:
        return mean, 0.0
    h = FD_STEP
    fp = discrete_log_eigenvalue(pdx, pdy, h)
    fm = discrete_log_eigenvalue(pdx, pdy, -h)
    var = (fp + fm) / h**2  # log lambda(0) = 0 exactly
    return mean, float(var)


def continuous_variance(mx: CtmcModel, my: CtmcModel, h: float = FD_STEP) -> float:
    """``theta^2 = E''(0)`` by central differences."""
    if mx.allclose(my, atol=0):
        return 0.0
    return (scgf_value(mx, my, h, tol=1e-15) + scgf_value(mx, my, -h, tol=1e-15)) / h**2


def scgf_derivative_at_zero(mx: CtmcModel, my: CtmcModel, h: float = 1e-5) -> float:
    return (scgf_value(mx, my, h, tol=1e-15) - scgf_value(mx, my, -h, tol=1e-15)) / (2 * h)


def poisson_asymptotic_variance(trans: np.ndarray, mu: np.ndarray, f: np.ndarray) -> float:
    """Asymptotic variance of ``sum_i f(X_i, X_{i+1})`` for a stationary chain.

    Independent of the eigenvalue route: solves the Poisson equation
    ``(I - P) g = fbar - m`` with ``fbar(x) = sum_y P(x, y) f(x, y)``.
    """
    trans = np.asarray(trans, dtype=float)
    k = trans.shape[0]
    fbar = (trans * f).sum(axis=1)
    m = float(mu @ fbar)
    fund = linalg.solve_dense(np.eye(k) - trans + np.outer(np.ones(k), mu), np.eye(k))
    g = fund @ (fbar - m)
    # martingale increment: f(x,y) - m + g(y) - g(x)
    inc = f - m + g[None, :] - g[:, None]
    return float((mu[:, None] * trans * inc**2).sum())
