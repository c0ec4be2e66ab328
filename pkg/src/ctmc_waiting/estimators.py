"""Replicated Monte-Carlo experiments compared against exact oracles.

Each ``run_*`` function takes an :class:`ExperimentPlan`, draws independent
replicas from seeded streams and returns a report holding the point
estimate, its standard error, the censoring rate and the oracle value.
Replicas are reduced in index order, so a plan and seed always give the
same report.

Waiting times for long blocks are astronomically large (``log W`` grows
like ``n`` times the entropy of the discretized chain), so a replica either
scans a symbol stream or, when the expected scan exceeds the budget, draws
from the exact first-occurrence law (see :mod:`ctmc_waiting.matching`).
The ``method`` field of a plan selects ``"stream"``, ``"law"`` or
``"auto"``.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from . import core, matching, pathsim
from .core import CtmcModel
from .errors import ExperimentError, ValidationError
from .rng import Seed

log = logging.getLogger(__name__)

KINDS = ("lln", "lln_schedule", "clt", "ldp_empirical", "expolaw", "shadow", "naive_return")
METHODS = ("auto", "stream", "law")
# stream only if the expected scan is this many times below the budget
AUTO_MARGIN = 20.0
MIN_ESS = 30.0
LDP_P_LIMIT = 0.8


@dataclass(frozen=True)
class Schedule:
    """``delta_n = a * n**(-b)``."""

    a: float
    b: float

    def __call__(self, n: int) -> float:
        return self.a * float(n) ** (-self.b)

    def validate(self) -> None:
        if not self.a > 0:
            raise ValidationError("schedule coefficient a must be > 0")
        if not self.b > 0:
            raise ValidationError("schedule exponent b must be > 0 so that delta_n -> 0")
        if not self.b < 0.5:
            raise ValidationError(
                f"schedule delta_n = {self.a}*n^(-{self.b}) violates the hypothesis "
                "log n / (n delta_n^2) -> 0 of the coupled (n, delta_n) law of large numbers "
                "(requires b < 1/2)"
            )


@dataclass(frozen=True)
class ExperimentPlan:
    kind: str
    model_x: CtmcModel
    model_y: CtmcModel | str = "reversed"
    delta: float | None = 0.1
    schedule: Schedule | None = None
    n_grid: tuple = (200,)
    replicas: int = 200
    budget: int = matching.DEFAULT_BUDGET
    seed: int = 0
    method: str = "auto"
    p_grid: tuple = (-0.75, -0.5, -0.25, 0.0, 0.25, 0.5)
    epsilon: float = 0.1
    delta_grid: tuple = (0.2, 0.1, 0.05, 0.025)
    n_patterns: int = 20
    target_log_return: float = 13.0
    gamma_model: CtmcModel | None = None
    gamma: pathsim.Trajectory | None = None
    workers: int = 1
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "p_grid", tuple(float(p) for p in self.p_grid))
        object.__setattr__(self, "delta_grid", tuple(float(d) for d in self.delta_grid))

    @property
    def reference(self) -> CtmcModel:
        if isinstance(self.model_y, str):
            if self.model_y != "reversed":
                raise ValidationError(f"model_y must be a model or 'reversed', got {self.model_y!r}")
            return core.reverse(self.model_x)
        return self.model_y

    def validate(self) -> "ExperimentPlan":
        """Raise :class:`ValidationError` naming the violated requirement."""
        if self.kind not in KINDS:
            raise ValidationError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}")
        if self.replicas < 1:
            raise ValidationError("replicas must be >= 1")
        if not self.n_grid or min(self.n_grid) < 1:
            raise ValidationError("n_grid must contain positive block lengths")
        if self.budget < max(self.n_grid) + 1:
            raise ValidationError("budget must be at least the block length")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        ref = self.reference
        if ref.states != self.model_x.states:
            raise ValidationError("model_x and model_y must share the state space")
        if self.kind == "lln_schedule":
            if self.schedule is None:
                raise ValidationError("lln_schedule needs a delta_n schedule")
            self.schedule.validate()
        elif self.kind != "naive_return":
            if self.delta is None or not self.delta > 0:
                raise ValidationError("delta must be > 0")
        if self.kind == "ldp_empirical":
            bad = [p for p in self.p_grid if abs(p) > LDP_P_LIMIT]
            if bad:
                raise ValidationError(
                    f"empirical SCGF p-grid must lie in [-{LDP_P_LIMIT}, {LDP_P_LIMIT}] "
                    f"(moments diverge as |p| -> 1); got {bad}"
                )
        if self.kind == "naive_return" and any(d <= 0 for d in self.delta_grid):
            raise ValidationError("delta_grid entries must be > 0")
        if self.kind == "shadow" and self.gamma is None and self.gamma_model is None:
            pass  # gamma drawn from model_x
        return self


@dataclass
class EstimateReport:
    kind: str
    estimate: float
    stderr: float
    replicas: int
    censoring_rate: float
    oracle: float
    z: float
    params: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def summary(self) -> dict:
        """JSON-ready summary; non-finite numbers become ``null``."""
        return _jsonable({
            "kind": self.kind,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "oracle": self.oracle,
            "z": self.z,
            "censoring_rate": self.censoring_rate,
            "replicas": self.replicas,
            "params": self.params,
            "details": self.details,
        })


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def z_score(estimate: float, oracle: float, stderr: float) -> float:
    if stderr > 0:
        return (estimate - oracle) / stderr
    return 0.0 if estimate == oracle else math.copysign(math.inf, estimate - oracle)


def _mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), se


def _params(plan: ExperimentPlan) -> dict:
    return {
        "kind": plan.kind,
        "delta": plan.delta,
        "n_grid": list(plan.n_grid),
        "replicas": plan.replicas,
        "budget": plan.budget,
        "seed": plan.seed,
        "method": plan.method,
        "schedule": None if plan.schedule is None else asdict(plan.schedule),
    }


def _map(plan: ExperimentPlan, fn: Callable[[int], dict]) -> list:
    if plan.workers > 1:
        with ThreadPoolExecutor(plan.workers) as pool:
            return list(pool.map(fn, range(plan.replicas)))
    return [fn(r) for r in range(plan.replicas)]


class _Chain:
    """Per-(model, delta) cache of exact matrices."""

    def __init__(self, model: CtmcModel, delta: float):
        self.model = model
        self.delta = delta
        self.trans = core.discretized_transition_matrix(model, delta)
        self.mu = core.stationary(model)
        self.fund = matching.fundamental_matrix(self.trans, self.mu)

    def stream(self, seed: Seed) -> pathsim.SymbolStream:
        return pathsim.SymbolStream(self.model, self.delta, seed, transition=self.trans, mu=self.mu)

    def law(self, pattern) -> matching.HittingLaw:
        return matching.hitting_law(pattern, self.trans, self.mu, self.fund)


def search(pattern, chain: _Chain, seed: Seed, first_start: int, budget: int, method: str) -> matching.MatchResult:
    """First start index ``>= first_start`` of ``pattern`` in a fresh stationary target."""
    if method != "stream":
        law = chain.law(pattern)
        if method == "law" or law.mean * AUTO_MARGIN > budget:
            return law.sample(seed.generator(), first_start)
    return matching.find_first(pattern, chain.stream(seed), first_start, budget)


def waiting_pair(x_symbols: np.ndarray, n: int, cy: _Chain, cx: _Chain, seed: Seed, budget: int,
                 method: str) -> dict:
    """One replica of ``W_n(X|Y)`` and ``W_n(X|X')`` for a given X path."""
    pattern = np.asarray(x_symbols[1 : n + 1])
    wy = search(pattern, cy, seed.child("Y"), 2, budget, method)
    wx = search(pattern, cx, seed.child("Xprime"), 2, budget, method)
    # convert start index s to k = s - 1 (k >= 1)
    row = {
        "n": n,
        "log_w_xy": None if wy.censored else _log_k(wy),
        "log_w_xxp": None if wx.censored else _log_k(wx),
        "censored": wy.censored or wx.censored,
        "method_y": wy.method,
        "method_xp": wx.method,
        "scanned": wy.scanned + wx.scanned,
        "log_block_y": matching.log_block_probability(pattern, cy.trans, cy.mu),
        "log_block_x": matching.log_block_probability(pattern, cx.trans, cx.mu),
    }
    return row


def _log_k(res: matching.MatchResult) -> float:
    """``log(s - 1)`` for a start index ``s >= 2``."""
    if res.method == "law" and res.log_value is not None and res.log_value > 30:
        return res.log_value + math.log1p(-math.exp(-res.log_value))
    return math.log(res.value - 1)


def _x_symbols(chain: _Chain, seed: Seed, n: int) -> np.ndarray:
    return chain.stream(seed.child("X")).take(n + 1)


def _waiting_rows(plan: ExperimentPlan, n: int, delta: float, stream_tag: str = "") -> list[dict]:
    mx, my = plan.model_x, plan.reference
    cx, cy = _Chain(mx, delta), _Chain(my, delta)

    def one(r):
        seed = Seed(plan.seed, r, f"{plan.kind}{stream_tag}/n{n}")
        xs = _x_symbols(cx, seed, n)
        row = waiting_pair(xs, n, cy, cx, seed, plan.budget, plan.method)
        row["replica"] = r
        row["delta"] = delta
        if not row["censored"]:
            row["log_ratio"] = row["log_w_xy"] - row["log_w_xxp"]
        else:
            row["log_ratio"] = None
        return row

    return _map(plan, one)


def _usable(rows: list[dict]) -> tuple[np.ndarray, float]:
    ok = [r["log_ratio"] for r in rows if not r["censored"]]
    rate = 1.0 - len(ok) / len(rows) if rows else 1.0
    if not ok:
        raise ExperimentError(
            f"all {len(rows)} replicas censored (budget exhausted); increase budget or decrease n"
        )
    return np.asarray(ok, dtype=float), rate


def fixed_delta_oracles(mx: CtmcModel, my: CtmcModel, delta: float) -> dict:
    """Exact per-step mean/variance of the discretized log-likelihood ratio."""
    px = core.discretized_transition_matrix(mx, delta)
    py = core.discretized_transition_matrix(my, delta)
    mu = core.stationary(mx)
    m, v = core.discrete_mean_and_variance(px, py, mu, delta)
    return {"m_delta": m, "sigma2_delta": v, "m_delta_over_delta": m / delta}


def run_lln(plan: ExperimentPlan) -> EstimateReport:
    """Waiting-time estimate of the relative entropy rate at fixed ``delta``."""
    plan.validate()
    oracle = core.relative_entropy_rate(plan.model_x, plan.reference)
    per_n, all_rows = [], []
    for n in plan.n_grid:
        rows = _waiting_rows(plan, n, plan.delta)
        vals, cens = _usable(rows)
        est, se = _mean_stderr(vals / (n * plan.delta))
        per_n.append({"n": n, "estimate": est, "stderr": se, "censoring_rate": cens})
        all_rows.extend(rows)
    last = per_n[-1]
    fixed = fixed_delta_oracles(plan.model_x, plan.reference, plan.delta)
    methods = {m: sum(1 for r in all_rows if r["method_y"] == m) for m in ("stream", "law")}
    return EstimateReport(
        "lln", last["estimate"], last["stderr"], len(rows) - round(last["censoring_rate"] * len(rows)),
        last["censoring_rate"], oracle, z_score(last["estimate"], oracle, last["stderr"]), _params(plan),
        {
            "per_n": per_n,
            "fixed_delta_oracle": fixed["m_delta_over_delta"],
            "z_fixed_delta": z_score(last["estimate"], fixed["m_delta_over_delta"], last["stderr"]),
            "methods": methods,
        },
        all_rows,
    )


def run_lln_schedule(plan: ExperimentPlan) -> EstimateReport:
    """Coupled ``(n, delta_n)`` estimator; tracks the fraction within ``epsilon``."""
    plan.validate()
    oracle = core.relative_entropy_rate(plan.model_x, plan.reference)
    traj, all_rows = [], []
    for n in plan.n_grid:
        dn = plan.schedule(n)
        rows = _waiting_rows(plan, n, dn)
        vals, cens = _usable(rows)
        est = vals / (n * dn)
        m, se = _mean_stderr(est)
        frac = float((np.abs(est - oracle) <= plan.epsilon).mean())
        traj.append({"n": n, "delta_n": dn, "estimate": m, "stderr": se, "fraction_within": frac,
                     "censoring_rate": cens})
        all_rows.extend(rows)
    last = traj[-1]
    return EstimateReport(
        "lln_schedule", last["estimate"], last["stderr"], plan.replicas, last["censoring_rate"], oracle,
        z_score(last["estimate"], oracle, last["stderr"]), _params(plan),
        {"trajectory": traj, "fraction_within_at_largest_n": last["fraction_within"],
         "epsilon": plan.epsilon},
        all_rows,
    )


def run_clt(plan: ExperimentPlan) -> EstimateReport:
    """Fluctuations of the waiting-time log-ratio at fixed ``delta``.

    The statistic ``(log W(X|Y) - log W(X|X') - n m_delta) / sqrt(n)`` is
    tested against ``Normal(0, sigma_delta^2)`` from the exact oracle.
    """
    plan.validate()
    n = plan.n_grid[-1]
    fixed = fixed_delta_oracles(plan.model_x, plan.reference, plan.delta)
    s = core.relative_entropy_rate(plan.model_x, plan.reference)
    rows = _waiting_rows(plan, n, plan.delta)
    vals, cens = _usable(rows)
    stat = (vals - n * fixed["m_delta"]) / math.sqrt(n)
    stat_paper = (vals - n * s) / math.sqrt(n)
    var = fixed["sigma2_delta"]
    details = {
        "n": n,
        "sigma2_delta": var,
        "m_delta": fixed["m_delta"],
        "sample": stat.tolist(),
        "mean_centered_m_delta": float(stat.mean()),
        "mean_centered_n_s": float(stat_paper.mean()),
        "mean_centered_n_delta_s": float(((vals - n * plan.delta * s) / math.sqrt(n)).mean()),
        # each log W carries an independent log-exponential term of variance pi^2/6
        "finite_n_variance_ratio": 1.0 + 2 * (math.pi**2 / 6) / (n * var) if var > 0 else math.nan,
    }
    if var <= 0:
        details.update(degenerate=True, ks_statistic=math.nan, ks_pvalue=math.nan, variance_ratio=math.nan)
        est, se = _mean_stderr(stat)
        return EstimateReport("clt", est, se, vals.size, cens, 0.0, z_score(est, 0.0, se), _params(plan),
                              details, rows)
    ks = stats.kstest(stat, "norm", args=(0.0, math.sqrt(var)))
    ratio = float(stat.var(ddof=1) / var)
    details.update(degenerate=False, ks_statistic=float(ks.statistic), ks_pvalue=float(ks.pvalue),
                   variance_ratio=ratio)
    est, se = _mean_stderr(stat)
    return EstimateReport("clt", est, se, vals.size, cens, 0.0, z_score(est, 0.0, se), _params(plan),
                          details, rows)


def run_ldp_empirical(plan: ExperimentPlan) -> EstimateReport:
    """Empirical SCGF ``(1/(n delta)) log mean (W(X|Y)/W(X|X'))^p``."""
    plan.validate()
    n = plan.n_grid[-1]
    mx, my = plan.model_x, plan.reference
    rows = _waiting_rows(plan, n, plan.delta)
    vals, cens = _usable(rows)
    px = core.discretized_transition_matrix(mx, plan.delta)
    py = core.discretized_transition_matrix(my, plan.delta)
    grid = np.asarray(plan.p_grid)
    f_curve = core.discrete_scgf(px, py, None, plan.delta, grid)
    e_curve = core.continuous_scgf(mx, my, grid)
    emp, ess = [], []
    for p in grid:
        w = p * vals
        emp.append(float((logsumexp(w) - math.log(vals.size)) / (n * plan.delta)))
        lw = w - w.max()
        ess_p = float(np.exp(2 * logsumexp(lw) - logsumexp(2 * lw)))
        ess.append(ess_p)
        if ess_p < MIN_ESS:
            warnings.warn(f"effective sample size {ess_p:.1f} < {MIN_ESS} at p={p}; heavy tails", RuntimeWarning)
    emp = np.array(emp)
    sym = {}
    for p in grid:
        q = -1.0 - p
        j = np.flatnonzero(np.isclose(grid, q, atol=1e-12))
        if j.size:
            sym[float(p)] = float(abs(emp[np.flatnonzero(np.isclose(grid, p))[0]] - emp[j[0]]))
    dev = np.abs(emp - f_curve.values)
    return EstimateReport(
        "ldp_empirical", float(dev.max()), math.nan, vals.size, cens, 0.0, math.nan, _params(plan),
        {
            "p": grid.tolist(),
            "empirical": emp.tolist(),
            "F_delta": f_curve.values.tolist(),
            "E": e_curve.values.tolist(),
            "ess": ess,
            "symmetry_residual": sym,
        },
        rows,
    )


def _pattern(cx: _Chain, seed: Seed, n: int) -> np.ndarray:
    return cx.stream(seed).take(n + 1)[1:]


def run_expolaw(plan: ExperimentPlan) -> EstimateReport:
    """Hitting times of sampled blocks rescaled by their exact probability.

    Patterns ``x_1^n`` are drawn from the chain; each gets ``replicas //
    n_patterns`` hitting times in fresh stationary targets (always scanned,
    never drawn from the law). Per pattern the exponential parameter is
    fitted by maximum likelihood and tested by Kolmogorov-Smirnov; the
    rescaled, normalised samples are also pooled into one test.
    """
    plan.validate()
    cx = _Chain(plan.model_x, plan.delta)
    per_pattern = max(1, plan.replicas // plan.n_patterns)
    results, pooled, rows = [], [], []
    censored = total = 0
    for n in plan.n_grid:
        for j in range(plan.n_patterns):
            pseed = Seed(plan.seed, j, f"expolaw/n{n}/pattern")
            pat = _pattern(cx, pseed, n)
            log_p = matching.log_block_probability(pat, cx.trans, cx.mu)
            times = []
            for r in range(per_pattern):
                tseed = Seed(plan.seed, r, f"expolaw/n{n}/p{j}/target")
                res = matching.hitting_time(pat, cx.stream(tseed), plan.budget)
                total += 1
                if res.censored:
                    censored += 1
                    continue
                times.append(res.value)
            if len(times) < 2:
                results.append({"n": n, "pattern": pat.tolist(), "inconclusive": True})
                continue
            t = np.asarray(times, dtype=float) * math.exp(log_p)
            eta_hat = 1.0 / t.mean()
            ks = stats.kstest(t, "expon", args=(0.0, 1.0 / eta_hat))
            eta_exact = cx.law(pat).eta
            results.append({
                "n": n, "pattern": pat.tolist(), "log_block_probability": log_p, "eta_hat": eta_hat,
                "eta_exact": eta_exact, "ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue),
                "samples": len(times), "inconclusive": False,
            })
            pooled.extend((t * eta_hat).tolist())
            rows.extend({"n": n, "pattern_index": j, "rescaled": float(v)} for v in t)
    cens_rate = censored / total if total else 1.0
    if not pooled:
        return EstimateReport("expolaw", math.nan, math.nan, 0, cens_rate, math.nan, math.nan, _params(plan),
                              {"inconclusive": True, "patterns": results}, rows)
    pooled = np.asarray(pooled)
    ks = stats.kstest(pooled, "expon")
    etas = np.array([r["eta_hat"] for r in results if not r["inconclusive"]])
    return EstimateReport(
        "expolaw", float(np.median(etas)), float(etas.std(ddof=1) / math.sqrt(etas.size)) if etas.size > 1 else math.nan,
        pooled.size, cens_rate, math.nan, math.nan, _params(plan),
        {
            "inconclusive": False,
            "pooled_ks_statistic": float(ks.statistic),
            "pooled_ks_pvalue": float(ks.pvalue),
            "eta_min": float(etas.min()),
            "eta_max": float(etas.max()),
            "eta_spread": float(etas.max() - etas.min()),
            "patterns": results,
        },
        rows,
    )


def expansion_oracle(model: CtmcModel, delta: float) -> float:
    """Small-``delta`` expansion of ``lim -(1/n) log R_n``.

    ``sum mu (1 - d c) log(1 - d c) + sum mu d c p log(d c p)``; requires
    ``delta * max c < 1``.
    """
    mu = core.stationary(model)
    c = model.escape_rates
    if (delta * c >= 1).any():
        raise ValidationError("expansion needs delta * c(x) < 1 for every state")
    stay = float(mu @ ((1 - delta * c) * np.log(1 - delta * c)))
    r = delta * model.rates
    pos = r > 0
    move = float((mu[:, None] * np.where(pos, r * np.log(np.where(pos, r, 1.0)), 0.0)).sum())
    return stay + move


def exact_return_limit(model: CtmcModel, delta: float) -> float:
    """``E log p_delta(X_0, X_1)``: the exact fixed-``delta`` limit."""
    pd = core.discretized_transition_matrix(model, delta)
    mu = core.stationary(model)
    return float((mu[:, None] * pd * np.log(pd)).sum())


def fit_delta_log_delta(deltas, values) -> np.ndarray:
    """Least-squares fit of ``a + b d + c d log d``; returns ``(a, b, c)``."""
    d = np.asarray(deltas, dtype=float)
    design = np.column_stack([np.ones_like(d), d, d * np.log(d)])
    coef, *_ = np.linalg.lstsq(design, np.asarray(values, dtype=float), rcond=None)
    return coef


def median_with_stderr(values) -> tuple[float, float]:
    """Sample median and a standard error from the 95% order-statistic interval."""
    v = np.sort(np.asarray(values, dtype=float))
    size = v.size
    med = float(np.median(v))
    half = 1.96 * math.sqrt(size) / 2
    lo, hi = int(math.floor(size / 2 - half)), int(math.ceil(size / 2 + half))
    lo, hi = max(lo, 0), min(hi, size - 1)
    se = float((v[hi] - v[lo]) / (2 * 1.96))
    return med, se if math.isfinite(se) else math.inf


def run_naive_return(plan: ExperimentPlan) -> EstimateReport:
    """``-(1/n) log R_n`` across ``delta`` and the ``delta log delta`` obstruction.

    For each ``delta`` the block length is chosen so that ``log R_n`` is
    about ``target_log_return`` (unless ``n_grid`` lists one ``n`` per
    ``delta``), keeping the scan affordable. Return times are heavy-tailed
    across patterns, so the per-``delta`` estimate is the median, with a
    censored replica ranked below every observed value.
    """
    plan.validate()
    mx = plan.model_x
    per_delta, rows = [], []
    censored = total = 0
    for i, d in enumerate(plan.delta_grid):
        h = -exact_return_limit(mx, d)
        if len(plan.n_grid) == len(plan.delta_grid):
            n = plan.n_grid[i]
        else:
            n = max(1, int(round(plan.target_log_return / h)))
        chain = _Chain(mx, d)
        vals = []
        for r in range(plan.replicas):
            seed = Seed(plan.seed, r, f"naive_return/d{d!r}")
            res = matching.return_time(chain.stream(seed), n, plan.budget)
            total += 1
            if res.censored:
                censored += 1
                v = -math.inf
            else:
                v = -math.log(res.value) / n
            vals.append(v)
            rows.append({"delta": d, "n": n, "replica": r, "value": v, "censored": res.censored})
        est, se = median_with_stderr(vals)
        per_delta.append({
            "delta": d, "n": n, "estimate": est, "stderr": se,
            "expansion": expansion_oracle(mx, d), "exact_limit": exact_return_limit(mx, d),
        })
    deltas = [p["delta"] for p in per_delta]
    ests = [p["estimate"] for p in per_delta]
    coef = fit_delta_log_delta(deltas, ests)
    exp_coef = fit_delta_log_delta(deltas, [p["expansion"] for p in per_delta])
    mean_rate = float(core.stationary(mx) @ mx.escape_rates)
    for p in per_delta:
        fitted = coef[0] + coef[1] * p["delta"] + coef[2] * p["delta"] * math.log(p["delta"])
        p["fitted"] = float(fitted)
        p["relative_error"] = float(abs(fitted - p["expansion"]) / abs(p["expansion"]))
    worst = max(p["relative_error"] for p in per_delta)
    return EstimateReport(
        "naive_return", float(coef[2]), math.nan, total - censored, censored / total if total else 1.0,
        mean_rate, math.nan, _params(plan),
        {
            "per_delta": per_delta,
            "fit": {"a": coef[0], "b": coef[1], "c_delta_log_delta": coef[2]},
            "expansion_fit": {"a": exp_coef[0], "b": exp_coef[1], "c_delta_log_delta": exp_coef[2]},
            "delta_log_delta_coefficient_exact": mean_rate,
            "max_relative_error": worst,
        },
        rows,
    )


def flux_oracle(q_model: CtmcModel, mx: CtmcModel, my: CtmcModel) -> float:
    """Shadowing limit for a path drawn from the stationary chain ``q_model``."""
    mu_q = core.stationary(q_model)
    flux = mu_q[:, None] * q_model.rates
    rx, ry = mx.rates, my.rates
    pos = flux > 0
    if ((rx <= 0) & pos).any() or ((ry <= 0) & pos).any():
        raise ValidationError("gamma's chain uses a transition impossible under X or Y")
    logs = np.zeros_like(rx)
    logs[pos] = np.log(rx[pos] / ry[pos])
    return float((flux * logs).sum() + mu_q @ (my.escape_rates - mx.escape_rates))


def run_shadow(plan: ExperimentPlan) -> EstimateReport:
    """Shadowing a trajectory ``gamma`` with two chains.

    Per replica: ``(1/(n delta)) [log T(gamma|Y) - log T(gamma|X)]``,
    compared with the pathwise functional of ``gamma`` (jump term plus
    occupation term over ``[0, n delta]``) and, when ``gamma`` is random,
    with the flux oracle of its chain.
    """
    plan.validate()
    n, d = plan.n_grid[-1], plan.delta
    mx, my = plan.model_x, plan.reference
    cx, cy = _Chain(mx, d), _Chain(my, d)
    q_model = plan.gamma_model if plan.gamma is None else None
    if plan.gamma is None and q_model is None:
        q_model = mx

    def one(r):
        seed = Seed(plan.seed, r, f"shadow/n{n}")
        if plan.gamma is not None:
            gamma = plan.gamma
        else:
            gamma = pathsim.simulate(q_model, n * d + d, seed.child("gamma"))
        pat = matching.shadow_pattern(gamma, d, n)
        ty = search(pat, cy, seed.child("Y"), 0, plan.budget, plan.method)
        tx = search(pat, cx, seed.child("X"), 0, plan.budget, plan.method)
        functional = pathsim.girsanov_log_ratio(gamma, mx, my, n * d, include_initial=False) / (n * d)
        row = {"replica": r, "censored": ty.censored or tx.censored, "functional": functional,
               "method_y": ty.method, "method_x": tx.method}
        if not row["censored"]:
            # T = 0 is possible for a stream match at the first index
            row["value"] = (_log_t(ty) - _log_t(tx)) / (n * d)
        else:
            row["value"] = None
        return row

    rows = _map(plan, one)
    ok = [r for r in rows if not r["censored"]]
    if not ok:
        raise ExperimentError("all shadowing replicas censored")
    vals = np.array([r["value"] for r in ok])
    func = np.array([r["functional"] for r in ok])
    est, se = _mean_stderr(vals)
    diff, diff_se = _mean_stderr(vals - func)
    details = {"functional_mean": float(func.mean()), "difference_vs_functional": diff,
               "difference_stderr": diff_se}
    oracle = float(func.mean())
    if q_model is not None:
        oracle = flux_oracle(q_model, mx, my)
        details["flux_oracle"] = oracle
        if q_model is mx:
            details["relative_entropy_rate"] = core.relative_entropy_rate(mx, my)
    cens = 1.0 - len(ok) / len(rows)
    return EstimateReport("shadow", est, se, len(ok), cens, oracle, z_score(est, oracle, se), _params(plan),
                          details, rows)


def _log_t(res: matching.MatchResult) -> float:
    # T(gamma|X) can be 0; log(T + 1) differs by O(1/T) only for tiny T
    if res.method == "law":
        return res.log
    return math.log(res.value) if res.value > 0 else 0.0


RUNNERS = {
    "lln": run_lln,
    "lln_schedule": run_lln_schedule,
    "clt": run_clt,
    "ldp_empirical": run_ldp_empirical,
    "expolaw": run_expolaw,
    "shadow": run_shadow,
    "naive_return": run_naive_return,
}


def run(plan: ExperimentPlan) -> EstimateReport:
    return RUNNERS[plan.kind](plan)


def with_overrides(plan: ExperimentPlan, **kw) -> ExperimentPlan:
    return replace(plan, **{k: v for k, v in kw.items() if v is not None})
