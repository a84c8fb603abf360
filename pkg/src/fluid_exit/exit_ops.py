"""Two-sided exit operators for time-homogeneous models.

Payoffs are restricted to ``g(t, j) = exp(-c t) f(j)``. For such payoffs every
passage operator reduces to a matrix built from the Wiener-Hopf factors of the
tilted generator ``L - c I``:

* one-sided up-passage of level ``l``: ``[I; Jplus] expm(l Qplus)`` (stacked over E+, E-),
* two-sided exit through the top of ``[-lminus, lplus]``:

      Xi+ = ([I; Jplus] P+(lplus) - [Jminus; I] P-(lminus) Jplus P+(L)) (I - M+)^-1,
      M+  = Jminus P-(L) Jplus P+(L),   L = lminus + lplus,

  with ``P+(l) = expm(l Qplus)``, and the mirror formula for the bottom.

Vectors returned by this module are indexed by the model's states in their
original order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    BadTimeOrder,
    DivergenceDetected,
    FactorizationFailed,
    NonPositiveArgument,
    NoConvergence,
    PreconditionViolated,
    ShapeMismatch,
    SingularMatrix,
)
from .mc_engine import EstimateWithCI, PreExitLaw, estimate
from .model import ValidatedModel, evolution_matrix
from .numerics import inf_norm, matrix_exp, solve_linear
from .payoff import ExpDecayFunction
from .wh_factor import DEFAULT_TOL, WienerHopfFactors, tilt_factorize

NEUMANN_TOL = 1e-12
METHODS = ("resolvent", "neumann")


def contraction_constant(K: float, c: float) -> float:
    """``int_0^1 (1 - (1 - x)^(K/c))^2 dx = 1 - 2/(a+1) + 1/(2a+1)`` with ``a = K/c``.

    Bounds the sup-norm of one down-up round trip applied to ``exp(-c t)``
    when generator entries are bounded by ``K``.
    """
    if not (K > 0 and c > 0):
        raise NonPositiveArgument(f"K and c must be positive, got K={K}, c={c}")
    a = K / c
    return 1.0 - 2.0 / (a + 1.0) + 1.0 / (2.0 * a + 1.0)


def _require_decay(model: ValidatedModel, c: float) -> None:
    if not (c > 0 or model.killing_floor > 0):
        raise PreconditionViolated(
            "need a positive decay rate, or a model with a positive killing floor"
        )


def _factors(model: ValidatedModel, c: float, tol: float) -> WienerHopfFactors:
    try:
        return tilt_factorize(model.generator(), model.velocities, c, tol=tol)
    except (NoConvergence, SingularMatrix) as exc:
        raise FactorizationFailed(str(exc)) from exc


def _stack(model: ValidatedModel, top, bottom, top_side: str) -> np.ndarray:
    """Place row blocks for E+ and E- back into original state order."""
    out = np.empty((model.m,) + np.shape(top)[1:])
    plus, minus = list(model.plus_states), list(model.minus_states)
    if top_side == "+":
        out[plus], out[minus] = top, bottom
    else:
        out[minus], out[plus] = top, bottom
    return out


def one_sided(model: ValidatedModel, g: ExpDecayFunction, side: str, level: float,
              s: float = 0.0, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``E_{s,i}[g(tau^side_level, X)]`` for every state ``i``."""
    if side not in ("+", "-"):
        raise ValueError(f"side must be '+' or '-', got {side!r}")
    if level < 0:
        raise ValueError("level must be nonnegative")
    g.check(model, side)
    _require_decay(model, g.c)
    F = _factors(model, g.c, tol)
    if side == "+":
        P = matrix_exp(level * F.Qplus)
        mat = _stack(model, P, F.Jplus @ P, "+")
    else:
        P = matrix_exp(level * F.Qminus)
        mat = _stack(model, P, F.Jminus @ P, "-")
    return math.exp(-g.c * s) * (mat @ g.vector)


@dataclass(frozen=True)
class NeumannResult:
    value: np.ndarray
    tail_bound: float
    n_terms: int
    contraction: float


def neumann_apply(M, f, n_terms: Optional[int] = None, K: Optional[float] = None,
                  c: Optional[float] = None, tol: float = NEUMANN_TOL) -> NeumannResult:
    """Partial sum ``sum_{n=0}^{N} M^n f`` with a certified geometric tail bound.

    The contraction rate is ``contraction_constant(K, c)`` when both are given,
    otherwise ``||M||_inf``. The tail bound is ``C^(N+1) / (1 - C) * ||f||_inf``.
    With ``n_terms=None`` the smallest ``N`` meeting ``tol`` is used.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    f = np.asarray(f, dtype=float)
    if M.shape[0] != M.shape[1] or M.shape[1] != f.shape[0]:
        raise ShapeMismatch(f"M {M.shape} and f {f.shape} are not conformable")
    if K is not None and c is not None:
        C = contraction_constant(K, c) if K > 0 else 0.0
    else:
        C = inf_norm(M)
    fnorm = inf_norm(f)
    if n_terms is None:
        if C >= 1.0:
            raise DivergenceDetected(f"contraction rate {C} is not below 1")
        if fnorm == 0.0 or C == 0.0:
            N = 0
        else:
            # smallest N with C^(N+1) / (1 - C) * |f| <= tol
            N = max(0, math.ceil(math.log(tol * (1.0 - C) / fnorm) / math.log(C)) - 1)
    else:
        if n_terms < 0:
            raise ValueError("n_terms must be nonnegative")
        N = int(n_terms)
    total = f.copy()
    term = f.copy()
    limit = fnorm * (1.0 + 1e-9) + 1e-300
    for _ in range(N):
        term = M @ term
        if not np.all(np.isfinite(term)) or inf_norm(term) > limit:
            raise DivergenceDetected("Neumann terms are not shrinking")
        total = total + term
    tail = math.inf if C >= 1.0 else C ** (N + 1) / (1.0 - C) * fnorm
    return NeumannResult(total, tail, N, C)


@dataclass(frozen=True, eq=False)
class ExitMatrices:
    """Matrices of the two exit operators (rows: states in original order).

    ``xi_plus`` is ``m x m+`` (columns follow ``model.plus_states``) and
    ``xi_minus`` is ``m x m-``. ``outer_*`` and ``round_trip_*`` are the two
    factors of each operator before inversion.
    """

    xi_plus: np.ndarray
    xi_minus: np.ndarray
    outer_plus: np.ndarray
    outer_minus: np.ndarray
    round_trip_plus: np.ndarray
    round_trip_minus: np.ndarray
    factors_plus: WienerHopfFactors
    factors_minus: WienerHopfFactors


def _outer_and_round_trip(model, F: WienerHopfFactors, lminus, lplus, side):
    L = lminus + lplus
    Pp_l, Pm_l = matrix_exp(lplus * F.Qplus), matrix_exp(lminus * F.Qminus)
    Pp_L, Pm_L = matrix_exp(L * F.Qplus), matrix_exp(L * F.Qminus)
    up = _stack(model, Pp_l, F.Jplus @ Pp_l, "+")      # [I; J+] P+(lplus)
    down = _stack(model, Pm_l, F.Jminus @ Pm_l, "-")   # [J-; I] P-(lminus)
    if side == "+":
        return up - down @ F.Jplus @ Pp_L, F.Jminus @ Pm_L @ F.Jplus @ Pp_L
    return down - up @ F.Jminus @ Pm_L, F.Jplus @ Pp_L @ F.Jminus @ Pm_L


def _apply_boundary_cases(model, xi_plus, xi_minus, lminus, lplus):
    plus, minus = list(model.plus_states), list(model.minus_states)
    if lplus == 0:
        xi_plus[plus] = np.eye(len(plus))
        xi_minus[plus] = 0.0
    if lminus == 0:
        xi_minus[minus] = np.eye(len(minus))
        xi_plus[minus] = 0.0


def exit_matrices(model: ValidatedModel, lminus: float, lplus: float, c_plus: float,
                  c_minus: Optional[float] = None, tol: float = DEFAULT_TOL) -> ExitMatrices:
    """Exit-operator matrices via the resolvent ``(I - M)^-1``."""
    c_minus = c_plus if c_minus is None else c_minus
    if lminus < 0 or lplus < 0:
        raise ValueError("levels must be nonnegative")
    _require_decay(model, c_plus)
    _require_decay(model, c_minus)
    Fp = _factors(model, c_plus, tol)
    Fm = Fp if c_minus == c_plus else _factors(model, c_minus, tol)
    op, Mp = _outer_and_round_trip(model, Fp, lminus, lplus, "+")
    om, Mm = _outer_and_round_trip(model, Fm, lminus, lplus, "-")
    xp = solve_linear((np.eye(Mp.shape[0]) - Mp).T, op.T).T
    xm = solve_linear((np.eye(Mm.shape[0]) - Mm).T, om.T).T
    _apply_boundary_cases(model, xp, xm, lminus, lplus)
    return ExitMatrices(xp, xm, op, om, Mp, Mm, Fp, Fm)


@dataclass(frozen=True, eq=False)
class TwoSidedResult:
    xi_plus: np.ndarray
    xi_minus: np.ndarray
    joint: np.ndarray
    method: str
    n_terms: Optional[int]
    tail_bound: float
    truncation_bound: float
    tilt_plus: float
    tilt_minus: float

    def to_dict(self, states=None) -> dict:
        d = {
            "xiPlus": self.xi_plus.tolist(),
            "xiMinus": self.xi_minus.tolist(),
            "joint": self.joint.tolist(),
            "method": self.method,
            "nTerms": self.n_terms,
            "tailBound": self.tail_bound,
            "truncationBound": self.truncation_bound,
            "tiltPlus": self.tilt_plus,
            "tiltMinus": self.tilt_minus,
        }
        if states is not None:
            d["states"] = list(states)
        return d


def two_sided(model: ValidatedModel, gplus: ExpDecayFunction, gminus: ExpDecayFunction,
              lminus: float, lplus: float, s: float = 0.0, method: str = "resolvent",
              tol: float = NEUMANN_TOL, wh_tol: float = DEFAULT_TOL) -> TwoSidedResult:
    """Values at time ``s`` of both exit operators and their sum (the joint exit value).

    Each side is computed with its own decay rate. ``method="neumann"`` sums
    the round-trip series up to the bound-driven truncation for ``tol``, using
    the contraction constant for the model's entry bound ``K`` and the
    effective decay ``c + killing_floor``; ``truncation_bound`` then bounds the
    error of every returned entry. ``method="resolvent"`` solves with
    ``I - M`` directly.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if lminus < 0 or lplus < 0:
        raise ValueError("levels must be nonnegative")
    if s < 0:
        raise BadTimeOrder("s must be nonnegative")
    gplus.check(model, "+")
    gminus.check(model, "-")
    _require_decay(model, gplus.c)
    _require_decay(model, gminus.c)
    try:
        mats = exit_matrices(model, lminus, lplus, gplus.c, gminus.c, wh_tol)
    except SingularMatrix as exc:
        raise DivergenceDetected(f"I - M is singular: {exc}") from exc

    if method == "resolvent":
        xp = mats.xi_plus @ gplus.vector
        xm = mats.xi_minus @ gminus.vector
        n_terms, tail, trunc = None, 0.0, 0.0
    else:
        K = model.uniform_bound
        cp, cm = gplus.c + model.killing_floor, gminus.c + model.killing_floor
        rp = neumann_apply(mats.round_trip_plus, gplus.vector, K=K, c=cp, tol=tol)
        rm = neumann_apply(mats.round_trip_minus, gminus.vector, K=K, c=cm, tol=tol)
        xp = mats.outer_plus @ rp.value
        xm = mats.outer_minus @ rm.value
        tail = max(rp.tail_bound, rm.tail_bound)
        trunc = max(inf_norm(mats.outer_plus) * rp.tail_bound,
                    inf_norm(mats.outer_minus) * rm.tail_bound)
        n_terms = max(rp.n_terms, rm.n_terms)
        # boundary rows are exact in either method
        _apply_boundary_vectors(model, xp, xm, gplus, gminus, lminus, lplus)
    xp = math.exp(-gplus.c * s) * xp
    xm = math.exp(-gminus.c * s) * xm
    return TwoSidedResult(xp, xm, xp + xm, method, n_terms, tail, trunc, gplus.c, gminus.c)


def _apply_boundary_vectors(model, xp, xm, gplus, gminus, lminus, lplus):
    plus, minus = list(model.plus_states), list(model.minus_states)
    if lplus == 0:
        xp[plus] = gplus.vector
        xm[plus] = 0.0
    if lminus == 0:
        xm[minus] = gminus.vector
        xp[minus] = 0.0


def decomposition_residual(model: ValidatedModel, c: float, lminus: float, lplus: float,
                           tol: float = DEFAULT_TOL) -> float:
    """Max entry of ``[I; J+]P+(lplus) - Xi+ - Xi- J+ P+(L)`` and of the mirror identity."""
    em = exit_matrices(model, lminus, lplus, c, c, tol)
    F = em.factors_plus
    L = lminus + lplus
    Pp_l, Pm_l = matrix_exp(lplus * F.Qplus), matrix_exp(lminus * F.Qminus)
    Pp_L, Pm_L = matrix_exp(L * F.Qplus), matrix_exp(L * F.Qminus)
    up = _stack(model, Pp_l, F.Jplus @ Pp_l, "+")
    down = _stack(model, Pm_l, F.Jminus @ Pm_l, "-")
    r_plus = up - em.xi_plus - em.xi_minus @ F.Jplus @ Pp_L
    r_minus = down - em.xi_minus - em.xi_plus @ F.Jminus @ Pm_L
    return float(max(np.abs(r_plus).max(), np.abs(r_minus).max()))


def evolution_operator(model: ValidatedModel, s: float, t: float) -> np.ndarray:
    """Matrix of ``f -> E_{s,.}[f(X_t)]``; killed mass shows as a row-sum deficit.

    Piecewise-constant schedules are handled exactly by chaining segment exponentials.
    """
    return evolution_matrix(model, s, t)


@dataclass(frozen=True)
class PreExitResult:
    """``E[h(X_T) 1{exit <= T}]`` and its complement ``E[h(X_T) 1{exit > T}]``."""

    after_exit: EstimateWithCI
    unconditional: float
    before_exit: float

    def to_dict(self) -> dict:
        return {
            "exitByT": self.after_exit.to_dict(),
            "unconditional": self.unconditional,
            "noExitByT": self.before_exit,
            "noExitByTStderr": self.after_exit.stderr,
        }


def pre_exit_law(model: ValidatedModel, h, T: float, lminus: float, lplus: float,
                 s: float, i, n: int, seed: int) -> PreExitResult:
    """Hybrid estimate of ``E_{s,i}[h(X_T) 1{exit <= T}]``.

    Exits are simulated; at an exit ``(t, j)`` with ``t <= T`` the remaining
    expectation ``E_{t,j}[h(X_T)]`` is evaluated exactly. The complement on
    ``{exit > T}`` follows from ``E_{s,i}[h(X_T)] = (U_{s,T} h)(i)``.
    """
    if T < s:
        raise BadTimeOrder(f"need s <= T, got s={s}, T={T}")
    h = np.asarray(h, dtype=float)
    if h.shape != (model.m,):
        raise ShapeMismatch(f"h needs {model.m} entries, got {h.shape}")
    i = model.index(i)
    est = estimate(model, PreExitLaw(tuple(h), T, lminus, lplus), s, i, n, seed)
    total = float((evolution_matrix(model, s, T) @ h)[i])
    return PreExitResult(est, total, total - est.mean)


__all__ = [
    "ExitMatrices", "NeumannResult", "PreExitResult", "TwoSidedResult", "contraction_constant",
    "decomposition_residual", "evolution_operator", "exit_matrices", "neumann_apply", "one_sided",
    "pre_exit_law", "two_sided",
]
