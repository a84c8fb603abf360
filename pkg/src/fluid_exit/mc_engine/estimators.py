"""Monte Carlo estimators for passage and exit functionals."""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numba
import numpy as np

from ..errors import BadTimeOrder, HorizonTooSmall, PreconditionViolated, SideMismatch
from ..model import ValidatedModel, propagate
from ..payoff import ExpDecayFunction
from . import _kernels
from ._rng import DOMAIN_INNER, DOMAIN_PATHS, DOMAIN_REFERENCE, domain_key
from .paths import _schedule_args

CENSOR_RTOL = 1e-4


def _configure_threads() -> None:
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # old TBB builds only trigger a warning; prefer the other layers
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    cap = os.environ.get("FLUID_EXIT_THREADS")
    if cap:
        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


_configure_threads()


@dataclass(frozen=True)
class OneSided:
    side: str
    level: float
    g: ExpDecayFunction


@dataclass(frozen=True)
class TwoSidedXi:
    side: str
    lminus: float
    lplus: float
    g: ExpDecayFunction


@dataclass(frozen=True)
class JointExit:
    lminus: float
    lplus: float
    gplus: ExpDecayFunction
    gminus: ExpDecayFunction


@dataclass(frozen=True)
class PreExitLaw:
    h: tuple
    T: float
    lminus: float
    lplus: float


Query = Union[OneSided, TwoSidedXi, JointExit, PreExitLaw]


@dataclass(frozen=True)
class EstimateWithCI:
    mean: float
    stderr: float
    n: int
    seed: int
    horizon: float = math.inf
    censored_bound: float = 0.0
    counts: dict = field(default_factory=dict)

    def ci(self, z: float = 1.96) -> tuple:
        return self.mean - z * self.stderr, self.mean + z * self.stderr

    def to_dict(self) -> dict:
        return {
            "mean": self.mean, "stderr": self.stderr, "n": self.n, "seed": self.seed,
            "horizon": self.horizon, "censoredBound": self.censored_bound, "counts": dict(self.counts),
        }


@dataclass(frozen=True)
class BatchOutcome:
    """Per-path results of a batch run (arrays indexed by path)."""

    kind: np.ndarray
    time: np.ndarray
    state: np.ndarray
    final: np.ndarray
    payoff: np.ndarray

    def counts(self) -> dict:
        k = self.kind
        return {
            "up": int(np.sum(k == _kernels.UP)),
            "down": int(np.sum(k == _kernels.DOWN)),
            "neither": int(np.sum((k == _kernels.NEITHER) | (k == _kernels.KILLED))),
            "killed": int(np.sum(k == _kernels.KILLED)),
            "censored": int(np.sum(k == _kernels.NEITHER)),
        }


def mean_and_stderr(values: np.ndarray) -> tuple:
    """Sample mean and standard error; summation order is fixed by the array."""
    n = values.size
    if n and values.min() == values.max():
        # degenerate sample: exact value, no rounding noise
        return float(values[0]), 0.0
    mean = float(np.sum(values) / n)
    if n < 2:
        return mean, 0.0
    var = float(np.sum((values - mean) ** 2) / (n - 1))
    return mean, math.sqrt(var / n)


def default_horizon(model: ValidatedModel, s: float, c: float, rtol: float = CENSOR_RTOL) -> float:
    """Horizon beyond which the censored mass is at most ``rtol`` (relative).

    Needs uniform discounting or killing: ``c + killing_floor > 0``.
    """
    rate = c + model.killing_floor
    if rate <= 0:
        raise PreconditionViolated(
            "no decay and no killing: pass an explicit horizon (censoring cannot be bounded)"
        )
    return s + math.log(1.0 / rtol) / rate


def censored_bound(model: ValidatedModel, s: float, c: float, horizon: float, sup: float) -> float:
    """Upper bound on ``|E g(tau) 1{tau > H}|`` for ``g = exp(-c t) f``, ``|f| <= sup``."""
    rate = c + model.killing_floor
    if math.isinf(horizon):
        return 0.0
    if rate <= 0:
        return sup
    return sup * math.exp(-c * s - rate * (horizon - s))


def run_batch(model: ValidatedModel, s: float, i: int, lminus: float, lplus: float,
              horizon: float, n: int, seed: int, domain: int = DOMAIN_PATHS,
              follow: bool = False):
    """Raw exit outcomes for ``n`` paths from ``(s, i)``."""
    mats, bps, R = _schedule_args(model)
    key = domain_key(seed, domain)
    return _kernels.exit_batch(mats, bps, model.velocities, R, float(s), int(i),
                               float(lminus), float(lplus), float(horizon), key, int(n), bool(follow))


def _levels(query: Query) -> tuple:
    if isinstance(query, OneSided):
        if query.level < 0:
            raise ValueError("level must be nonnegative")
        if query.side == "+":
            return math.inf, float(query.level)
        if query.side == "-":
            return float(query.level), math.inf
        raise ValueError(f"side must be '+' or '-', got {query.side!r}")
    if query.lminus < 0 or query.lplus < 0:
        raise ValueError("levels must be nonnegative")
    return float(query.lminus), float(query.lplus)


def _payoff_table(model: ValidatedModel, query: Query) -> tuple:
    """(decay for up-exits, f over E for up-exits, decay for down, f for down)."""
    zero = np.zeros(model.m)
    if isinstance(query, (OneSided, TwoSidedXi)):
        if query.side not in ("+", "-"):
            raise ValueError(f"side must be '+' or '-', got {query.side!r}")
        query.g.check(model, query.side)
        f = query.g.on_states(model)
        if query.side == "+":
            return query.g.c, f, 0.0, zero
        return 0.0, zero, query.g.c, f
    query.gplus.check(model, "+")
    query.gminus.check(model, "-")
    return query.gplus.c, query.gplus.on_states(model), query.gminus.c, query.gminus.on_states(model)


def simulate(model: ValidatedModel, query: Query, s: float, i, n: int, seed: int,
             horizon: Optional[float] = None, rtol: float = CENSOR_RTOL):
    """Run ``n`` paths for ``query`` and return ``(EstimateWithCI, BatchOutcome)``."""
    if n < 2:
        raise PreconditionViolated(f"need at least 2 paths, got {n}")
    if s < 0:
        raise BadTimeOrder("start time must be nonnegative")
    i = model.index(i)
    if isinstance(query, PreExitLaw):
        return _pre_exit_hybrid(model, query, s, i, n, seed)
    lminus, lplus = _levels(query)
    cu, fu, cd, fd = _payoff_table(model, query)
    c_min_decay = min(cu if np.any(fu) else math.inf, cd if np.any(fd) else math.inf)
    if math.isinf(c_min_decay):
        c_min_decay = 0.0
    if horizon is None:
        horizon = default_horizon(model, s, c_min_decay, rtol)
    elif not horizon > s:
        raise BadTimeOrder("horizon must exceed the start time")
    kind, xt, xs, final = run_batch(model, s, i, lminus, lplus, horizon, n, seed)
    payoff = np.zeros(n)
    up = kind == _kernels.UP
    down = kind == _kernels.DOWN
    payoff[up] = np.exp(-cu * xt[up]) * fu[xs[up]]
    payoff[down] = np.exp(-cd * xt[down]) * fd[xs[down]]
    sup = max(float(np.abs(fu).max()), float(np.abs(fd).max()))
    bound = censored_bound(model, s, c_min_decay, horizon, sup)
    outcome = BatchOutcome(kind, xt, xs, final, payoff)
    counts = outcome.counts()
    if model.killing_floor + c_min_decay <= 0:
        # no analytic bound: report the empirical censored fraction instead
        bound = sup * counts["censored"] / n
    if bound > rtol * max(sup, 1e-300) * (1 + 1e-12):
        warnings.warn(
            f"censored mass bound {bound:.3e} exceeds tolerance at horizon {horizon}",
            HorizonTooSmall, stacklevel=2,
        )
    mean, se = mean_and_stderr(payoff)
    return EstimateWithCI(mean, se, n, int(seed), float(horizon), float(bound), counts), outcome


def estimate(model: ValidatedModel, query: Query, s: float, i, n: int, seed: int,
             horizon: Optional[float] = None, rtol: float = CENSOR_RTOL) -> EstimateWithCI:
    """Monte Carlo estimate of a passage/exit functional started at ``(s, i)``.

    * ``OneSided(side, level, g)``: ``E[g(tau_level^side, X)]``;
    * ``TwoSidedXi(side, lminus, lplus, g)``: the exit functional restricted to
      exits through ``side``;
    * ``JointExit(lminus, lplus, gplus, gminus)``: ``E[g(exit time, X)]`` with
      ``g = gplus`` on E+ and ``gminus`` on E- (one side contributes per path);
    * ``PreExitLaw(h, T, lminus, lplus)``: ``E[h(X_T) 1{exit <= T}]`` with the
      post-exit part evaluated exactly through the transition matrices.

    Paths whose stopping time exceeds the horizon contribute 0; the horizon
    defaults to the point where this censoring costs at most ``rtol``.
    """
    return simulate(model, query, s, i, n, seed, horizon, rtol)[0]


def _pre_exit_hybrid(model, query: PreExitLaw, s, i, n, seed):
    T = float(query.T)
    if T < s:
        raise BadTimeOrder(f"need s <= T, got s={s}, T={T}")
    h = np.asarray(query.h, dtype=float)
    if h.shape != (model.m,):
        raise SideMismatch(f"h needs {model.m} entries, got {h.shape}")
    kind, xt, xs, final = run_batch(model, s, i, query.lminus, query.lplus, T, n, seed)
    # an exit exactly at T counts; the kernel only reports exits before the horizon
    hit = (kind == _kernels.UP) | (kind == _kernels.DOWN)
    payoff = np.zeros(n)
    if s == T:
        # degenerate horizon: only an immediate exit qualifies
        payoff[:] = _immediate_exit(model, i, query.lminus, query.lplus) * h[i]
        kind = np.where(payoff != 0, _kernels.UP, _kernels.NEITHER).astype(np.int8)
    elif np.any(hit):
        values = propagate(model, np.minimum(xt[hit], T), T, h)
        payoff[hit] = values[np.arange(values.shape[0]), xs[hit]]
    outcome = BatchOutcome(kind, xt, xs, final, payoff)
    mean, se = mean_and_stderr(payoff)
    return EstimateWithCI(mean, se, n, int(seed), T, 0.0, outcome.counts()), outcome


def _immediate_exit(model, i, lminus, lplus) -> float:
    v = model.velocities[i]
    return 1.0 if (v > 0 and lplus == 0) or (v < 0 and lminus == 0) else 0.0


def direct_pre_exit(model: ValidatedModel, h, T: float, lminus: float, lplus: float,
                    s: float, i, n: int, seed: int, domain: int = DOMAIN_REFERENCE,
                    complement: bool = False) -> EstimateWithCI:
    """Plain Monte Carlo of ``h(X_T) 1{exit <= T}``: every path is run to ``T``.

    With ``complement=True`` the estimand is ``h(X_T) 1{exit > T}`` instead.
    """
    i = model.index(i)
    h = np.asarray(h, dtype=float)
    if T < s:
        raise BadTimeOrder(f"need s <= T, got s={s}, T={T}")
    if T == s:
        exits = _immediate_exit(model, i, lminus, lplus)
        val = (1.0 - exits if complement else exits) * h[i]
        return EstimateWithCI(val, 0.0, n, int(seed), T)
    kind, xt, xs, final = run_batch(model, s, i, lminus, lplus, T, n, seed, domain, follow=True)
    exited = (kind == _kernels.UP) | (kind == _kernels.DOWN)
    keep = (~exited if complement else exited) & (final >= 0)
    payoff = np.where(keep, h[np.maximum(final, 0)], 0.0)
    mean, se = mean_and_stderr(payoff)
    return EstimateWithCI(mean, se, n, int(seed), T)


def first_jump_probability(model: ValidatedModel, s: float, i, T: float, n: int,
                           seed: int) -> tuple:
    """Empirical ``P(gamma(s) <= T)`` (first jump or kill) and its exact value.

    The exact value is ``1 - exp(int_s^T L_u(i, i) du)``.
    """
    i = model.index(i)
    if T < s:
        raise BadTimeOrder("need s <= T")
    mats, bps, R = _schedule_args(model)
    key = domain_key(seed, DOMAIN_PATHS)
    times = _kernels.first_event_batch(mats, bps, R, float(s), i, float(T), key, int(n))
    hits = np.isfinite(times).astype(float)
    mean, se = mean_and_stderr(hits)
    edges = np.concatenate(([0.0], model.breakpoints, [np.inf]))
    integral = 0.0
    for k in range(model.matrices.shape[0]):
        lo, hi = max(s, edges[k]), min(T, edges[k + 1])
        if hi > lo:
            integral += (hi - lo) * model.matrices[k][i, i]
    return EstimateWithCI(mean, se, n, int(seed), T), 1.0 - math.exp(integral)


@dataclass(frozen=True)
class DecompositionReport:
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    z: float
    n_outer: int
    n_inner: int
    seed: int
    note: str = (
        "inner estimates are unbiased and enter linearly, so nesting adds variance but no bias"
    )

    @property
    def pooled_stderr(self) -> float:
        return math.hypot(self.lhs_stderr, self.rhs_stderr)

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs, "lhsStderr": self.lhs_stderr, "rhs": self.rhs,
            "rhsStderr": self.rhs_stderr, "pooledStderr": self.pooled_stderr, "z": self.z,
            "nOuter": self.n_outer, "nInner": self.n_inner, "seed": self.seed, "note": self.note,
        }


def z_score(a: float, sa: float, b: float, sb: float) -> float:
    pooled = math.hypot(sa, sb)
    diff = a - b
    if pooled == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / pooled


def verify_decomposition(model: ValidatedModel, c: float, lminus: float, lplus: float,
                         s: float, i, n_outer: int, n_inner: int, seed: int,
                         rtol: float = CENSOR_RTOL) -> DecompositionReport:
    """Statistical test of the one-sided/two-sided decomposition with ``g = exp(-c t)`` on E+.

    LHS: ``E_{s,i}[exp(-c tau^+_{lplus})]`` by direct simulation.
    RHS: ``E[exp(-c xi^+) ; up-exit] + E[(inner value)(xi^-, X) ; down-exit]``
    where the inner value ``E_{t,j}[exp(-c tau^+_{lminus+lplus})]`` is itself
    estimated with ``n_inner`` fresh paths. Works for any schedule.
    """
    if not (c > 0 or model.killing_floor > 0):
        raise PreconditionViolated("need c > 0 or a positive killing floor")
    if n_outer < 2 or n_inner < 1:
        raise PreconditionViolated("need n_outer >= 2 and n_inner >= 1")
    i = model.index(i)
    horizon = default_horizon(model, s, c, rtol)
    span = horizon - s
    kind, xt, xs, _ = run_batch(model, s, i, math.inf, lplus, horizon, n_outer, seed, DOMAIN_REFERENCE)
    lhs_vals = np.where(kind == _kernels.UP, np.exp(-c * xt), 0.0)
    lhs, lhs_se = mean_and_stderr(lhs_vals)

    mats, bps, R = _schedule_args(model)
    rhs_vals, _ = _kernels.nested_batch(
        mats, bps, model.velocities, R, float(s), i, float(lminus), float(lplus), horizon,
        float(c), True, float(lminus + lplus), float(c), span, math.inf,
        domain_key(seed, DOMAIN_PATHS), domain_key(seed, DOMAIN_INNER), int(n_outer), int(n_inner),
    )
    rhs, rhs_se = mean_and_stderr(rhs_vals)
    return DecompositionReport(lhs, lhs_se, rhs, rhs_se, z_score(rhs, rhs_se, lhs, lhs_se),
                               int(n_outer), int(n_inner), int(seed))


@dataclass(frozen=True)
class CompositeBound:
    estimate: EstimateWithCI
    bound: float

    @property
    def holds(self) -> bool:
        return self.estimate.mean <= self.bound + 3.0 * self.estimate.stderr


def composite_indicator_bound(model: ValidatedModel, T: float, lminus: float, lplus: float,
                              s: float, i, n_outer: int, n_inner: int, seed: int) -> CompositeBound:
    """Nested estimate of the down-then-up composite applied to ``1{t <= T}``.

    From ``(s, i)`` with ``i`` in E+, the composite equals
    ``E[ 1{tau^-_L <= T} P_{tau^-_L, X}(tau^+_L <= T) ]`` with ``L = lminus + lplus``.
    It is compared with ``1{s <= T} (1 - exp(-K (T - s)))^2``.
    """
    i = model.index(i)
    if model.velocities[i] <= 0:
        raise SideMismatch("the composite is defined for start states in E+")
    L = float(lminus + lplus)
    bound = (1.0 - math.exp(-model.uniform_bound * (T - s))) ** 2 if s <= T else 0.0
    if s > T:
        return CompositeBound(EstimateWithCI(0.0, 0.0, n_outer, int(seed), T), 0.0)
    mats, bps, R = _schedule_args(model)
    vals, _ = _kernels.nested_batch(
        mats, bps, model.velocities, R, float(s), i, L, math.inf, float(T),
        0.0, False, L, 0.0, math.inf, float(T),
        domain_key(seed, DOMAIN_PATHS), domain_key(seed, DOMAIN_INNER), int(n_outer), int(n_inner),
    )
    mean, se = mean_and_stderr(vals)
    return CompositeBound(EstimateWithCI(mean, se, n_outer, int(seed), T), bound)
