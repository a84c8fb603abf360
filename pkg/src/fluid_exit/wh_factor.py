"""Wiener-Hopf factors of a time-homogeneous fluid model.

For a constant sub-Markovian generator ``L`` and velocities ``v`` the factors
are

* ``Jplus``  (m- x m+): ``Jplus[i, k] = P_i(tau_0^+ < zeta, X = k)`` for ``i`` in E-,
* ``Qplus``  (m+ x m+): generator of the up-passage semigroup, ``P_i(tau_l^+ < zeta,
  X = k) = expm(l * Qplus)[i, k]``,

and the mirror pair ``Jminus``, ``Qminus``. They solve the block equations

    Qplus = V+^-1 (L++ + L+- Jplus)
    Jplus Qplus + |V-|^-1 L-- Jplus + |V-|^-1 L-+ = 0

(and symmetrically for the minus side). ``Jplus`` is the minimal nonnegative
solution of the quadratic equation; both solvers below start from zero and
increase monotonically towards it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, ShapeMismatch, SingularMatrix
from .numerics import solve_sylvester

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
METHODS = ("newton", "fixed_point")


@dataclass(frozen=True, eq=False)
class WienerHopfFactors:
    Qplus: np.ndarray
    Qminus: np.ndarray
    Jplus: np.ndarray
    Jminus: np.ndarray
    tilt: float
    residual_norm: float
    iterations: int
    plus_index: tuple
    minus_index: tuple

    def to_dict(self) -> dict:
        return {
            "Qplus": self.Qplus.tolist(),
            "Qminus": self.Qminus.tolist(),
            "Jplus": self.Jplus.tolist(),
            "Jminus": self.Jminus.tolist(),
            "tilt": self.tilt,
            "residualNorm": self.residual_norm,
            "iterations": self.iterations,
            "plusIndex": list(self.plus_index),
            "minusIndex": list(self.minus_index),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WienerHopfFactors":
        return cls(
            Qplus=np.array(data["Qplus"], dtype=float),
            Qminus=np.array(data["Qminus"], dtype=float),
            Jplus=np.array(data["Jplus"], dtype=float),
            Jminus=np.array(data["Jminus"], dtype=float),
            tilt=float(data["tilt"]),
            residual_norm=float(data["residualNorm"]),
            iterations=int(data.get("iterations", 0)),
            plus_index=tuple(data["plusIndex"]),
            minus_index=tuple(data["minusIndex"]),
        )


def _check_inputs(L, v):
    L = np.asarray(L, dtype=float)
    v = np.asarray(v, dtype=float).reshape(-1)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] != v.size:
        raise ShapeMismatch(f"generator {L.shape} and velocities {v.shape} are not conformable")
    if np.any(v == 0):
        raise ValueError("velocities must be nonzero")
    plus, minus = np.flatnonzero(v > 0), np.flatnonzero(v < 0)
    if plus.size == 0 or minus.size == 0:
        raise ValueError("velocities must take both signs")
    return L, v, plus, minus


def _side_blocks(L, v, up, down):
    """Scaled blocks for the passage problem in the direction of ``up``.

    Returns ``(Auu, Aud, Bdd, Ddu)`` with ``Q(J) = Auu + Aud J`` and
    ``F(J) = J Q(J) + Bdd J + Ddu``.
    """
    su = 1.0 / np.abs(v[up])[:, None]
    sd = 1.0 / np.abs(v[down])[:, None]
    return (
        su * L[np.ix_(up, up)],
        su * L[np.ix_(up, down)],
        sd * L[np.ix_(down, down)],
        sd * L[np.ix_(down, up)],
    )


def _riccati_residual(J, Auu, Aud, Bdd, Ddu):
    Q = Auu + Aud @ J
    return J @ Q + Bdd @ J + Ddu, Q


def _solve_side(blocks, tol, max_iter, method):
    Auu, Aud, Bdd, Ddu = blocks
    J = np.zeros_like(Ddu)
    res = np.inf
    for it in range(1, max_iter + 1):
        F, Q = _riccati_residual(J, *blocks)
        try:
            if method == "newton":
                step = solve_sylvester(Bdd + J @ Aud, Q, -F)
                J_new = J + step
            else:
                J_new = solve_sylvester(Bdd, Q, -Ddu)
        except SingularMatrix:
            # the critical (zero-drift) case makes the Newton operator singular
            # right at the solution; accept if we are already there
            if np.abs(F).max() <= tol and it > 1:
                return J, it - 1
            raise
        change = np.abs(J_new - J).max()
        J = J_new
        res = np.abs(_riccati_residual(J, *blocks)[0]).max()
        if change <= tol and res <= tol:
            return J, it
    raise NoConvergence(max_iter, float(res))


def factorize(L, v, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
              method: str = "newton") -> WienerHopfFactors:
    """Compute ``(Qplus, Qminus, Jplus, Jminus)`` for generator ``L`` and velocities ``v``.

    ``method="fixed_point"`` runs the plain iteration ``J <- X`` where
    ``X Q(J) + |V-|^-1 L-- X = -|V-|^-1 L-+``; ``method="newton"`` solves the
    linearised equation for the increment at each step instead. Both start at
    ``J = 0``. Newton converges quadratically in general and linearly (rate
    1/2) for zero-drift conservative models, where the fixed point is very slow.

    Rows and columns of the factors follow the order of ``plus_index`` /
    ``minus_index`` (ascending positions of positive / negative velocities).
    """
    if not 0.0 < tol <= 1e-6:
        raise ValueError(f"tol must lie in (0, 1e-6], got {tol}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    L, v, plus, minus = _check_inputs(L, v)
    up_blocks = _side_blocks(L, v, plus, minus)
    down_blocks = _side_blocks(L, v, minus, plus)
    Jp, it_p = _solve_side(up_blocks, tol, max_iter, method)
    Jm, it_m = _solve_side(down_blocks, tol, max_iter, method)
    Qp = up_blocks[0] + up_blocks[1] @ Jp
    Qm = down_blocks[0] + down_blocks[1] @ Jm
    factors = WienerHopfFactors(
        Qplus=Qp, Qminus=Qm, Jplus=Jp, Jminus=Jm, tilt=0.0, residual_norm=0.0,
        iterations=it_p + it_m, plus_index=tuple(plus.tolist()), minus_index=tuple(minus.tolist()),
    )
    res = residual(factors, L, v)
    if res > tol:
        raise NoConvergence(max_iter, res)
    return WienerHopfFactors(**{**factors.__dict__, "residual_norm": res})


def tilt_factorize(L, v, c: float, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                   method: str = "newton") -> WienerHopfFactors:
    """Factors of ``L - c I``: uniform extra killing at rate ``c``.

    With these factors, ``E_{s,i}[exp(-c tau) f(X_tau)] = exp(-c s) [expm(l Qplus) f]_i``
    for up-passage of level ``l`` from ``i`` in E+.
    """
    if not c >= 0:
        raise ValueError(f"tilt must be nonnegative, got {c}")
    L = np.asarray(L, dtype=float)
    f = factorize(L - c * np.eye(L.shape[0]), v, tol=tol, max_iter=max_iter, method=method)
    if c == 0:
        return f
    res = residual(WienerHopfFactors(**{**f.__dict__, "tilt": float(c)}), L, v)
    return WienerHopfFactors(**{**f.__dict__, "tilt": float(c), "residual_norm": res})


def residual(factors: WienerHopfFactors, L, v) -> float:
    """Max-norm of the four block-equation residuals, evaluated on ``L - tilt I``."""
    L, v, plus, minus = _check_inputs(L, v)
    mp, mm = plus.size, minus.size
    shapes = {
        "Qplus": (mp, mp), "Qminus": (mm, mm), "Jplus": (mm, mp), "Jminus": (mp, mm),
    }
    for name, shape in shapes.items():
        if np.shape(getattr(factors, name)) != shape:
            raise ShapeMismatch(f"{name} has shape {np.shape(getattr(factors, name))}, expected {shape}")
    Lc = L - factors.tilt * np.eye(L.shape[0])
    out = 0.0
    for J, Q, up, down in (
        (factors.Jplus, factors.Qplus, plus, minus),
        (factors.Jminus, factors.Qminus, minus, plus),
    ):
        Auu, Aud, Bdd, Ddu = _side_blocks(Lc, v, up, down)
        r_gen = Q - (Auu + Aud @ J)
        r_pass = J @ Q + Bdd @ J + Ddu
        out = max(out, float(np.abs(r_gen).max()), float(np.abs(r_pass).max()))
    return out
