"""Model description: state space, velocities and a piecewise-constant generator schedule."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import (
    BadBreakpoints,
    BadTimeOrder,
    EmptySidePartition,
    ModelError,
    NegativeOffDiagonal,
    NegativeTime,
    PositiveRowSum,
    ShapeMismatch,
    ZeroVelocity,
)
from .numerics import matrix_exp

# Row sums within this of zero are treated as exactly conservative.
ROW_SUM_ATOL = 1e-12


@dataclass(frozen=True)
class Constant:
    matrix: Sequence[Sequence[float]]


@dataclass(frozen=True)
class PiecewiseConstant:
    """Matrix ``k`` is active on ``[t_{k-1}, t_k)`` with ``t_0 = 0``; the last one on ``[t_B, inf)``."""

    breakpoints: Sequence[float]
    matrices: Sequence[Sequence[Sequence[float]]]


Schedule = Union[Constant, PiecewiseConstant]


@dataclass(frozen=True)
class ModelSpec:
    states: Sequence[str]
    velocities: Sequence[float]
    generator: Schedule


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ValidatedModel:
    """A checked model.

    Arrays are stored in the user's state order. ``perm`` lists the original
    indices with every E+ state ahead of every E- state, which is the block
    layout used by the analytic routines.
    """

    states: tuple
    velocities: np.ndarray
    breakpoints: np.ndarray
    matrices: np.ndarray  # shape (segments, m, m)
    plus_states: tuple
    minus_states: tuple
    uniform_bound: float
    killing_floor: float
    perm: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.states)

    @property
    def is_homogeneous(self) -> bool:
        return self.matrices.shape[0] == 1

    @property
    def max_speed(self) -> float:
        return float(np.abs(self.velocities).max())

    @property
    def rate_bound(self) -> float:
        """Largest total jump intensity (including killing) over the schedule."""
        diag = np.diagonal(self.matrices, axis1=1, axis2=2)
        return float(max(0.0, (-diag).max()))

    def index(self, state) -> int:
        """Resolve a state label (or an integer index) to an index."""
        if isinstance(state, (int, np.integer)) and not isinstance(state, bool):
            if not 0 <= state < self.m:
                raise KeyError(f"state index {state} out of range")
            return int(state)
        try:
            return self.states.index(state)
        except ValueError:
            raise KeyError(f"unknown state {state!r}") from None

    def generator(self) -> np.ndarray:
        """The single generator of a homogeneous model."""
        if not self.is_homogeneous:
            raise ModelError("analytic path requires constant schedule")
        return self.matrices[0]

    def summary(self) -> dict:
        return {
            "m": self.m,
            "states": list(self.states),
            "plusStates": [self.states[k] for k in self.plus_states],
            "minusStates": [self.states[k] for k in self.minus_states],
            "uniformBound": self.uniform_bound,
            "killingFloor": self.killing_floor,
            "segments": int(self.matrices.shape[0]),
            "homogeneous": self.is_homogeneous,
        }


def validate_model(spec: ModelSpec) -> ValidatedModel:
    states = tuple(str(s) for s in spec.states)
    m = len(states)
    if m < 2:
        raise ModelError("need at least two states")
    if len(set(states)) != m:
        raise ModelError("state labels must be unique")
    v = np.asarray(spec.velocities, dtype=float)
    if v.shape != (m,):
        raise ShapeMismatch(f"expected {m} velocities, got {v.shape}")
    for k in range(m):
        if not np.isfinite(v[k]):
            raise ModelError(f"velocity of state {states[k]!r} is not finite")
        if v[k] == 0.0:
            raise ZeroVelocity(states[k])
    plus = tuple(int(k) for k in np.flatnonzero(v > 0))
    minus = tuple(int(k) for k in np.flatnonzero(v < 0))
    if not plus:
        raise EmptySidePartition("plus")
    if not minus:
        raise EmptySidePartition("minus")

    gen = spec.generator
    if isinstance(gen, Constant):
        bps = np.zeros(0)
        mats = np.asarray(gen.matrix, dtype=float)[None, ...]
    elif isinstance(gen, PiecewiseConstant):
        bps = np.asarray(gen.breakpoints, dtype=float).reshape(-1)
        mats = np.asarray(gen.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[0] != bps.size + 1:
            raise BadBreakpoints(
                f"{bps.size} breakpoints need {bps.size + 1} matrices, got "
                f"{mats.shape[0] if mats.ndim == 3 else 'malformed input'}"
            )
        if bps.size and (
            not np.all(np.isfinite(bps)) or bps[0] < 0 or np.any(np.diff(bps) <= 0)
        ):
            raise BadBreakpoints("breakpoints must be finite, nonnegative and strictly increasing")
    else:
        raise ModelError(f"unknown generator schedule {type(gen).__name__}")
    if mats.shape[1:] != (m, m):
        raise ShapeMismatch(f"generator matrices must be {m}x{m}, got {mats.shape[1:]}")
    if not np.all(np.isfinite(mats)):
        raise ModelError("generator entries must be finite")

    off = ~np.eye(m, dtype=bool)
    for seg, a in enumerate(mats):
        bad = np.argwhere((a < 0) & off)
        if bad.size:
            i, j = bad[0]
            raise NegativeOffDiagonal(states[i], states[j], seg)
        rows = a.sum(axis=1)
        over = np.flatnonzero(rows > ROW_SUM_ATOL)
        if over.size:
            raise PositiveRowSum(states[over[0]], seg)

    deficits = -mats.sum(axis=2)
    deficits[np.abs(deficits) <= ROW_SUM_ATOL] = 0.0
    return ValidatedModel(
        states=states,
        velocities=_frozen(v),
        breakpoints=_frozen(bps),
        matrices=_frozen(mats),
        plus_states=plus,
        minus_states=minus,
        uniform_bound=float(np.abs(mats).max()),
        killing_floor=float(max(0.0, deficits.min())),
        perm=_frozen(plus + minus, dtype=int),
    )


def as_spec(model: ValidatedModel) -> ModelSpec:
    if model.is_homogeneous:
        gen: Schedule = Constant(model.matrices[0].tolist())
    else:
        gen = PiecewiseConstant(model.breakpoints.tolist(), model.matrices.tolist())
    return ModelSpec(list(model.states), model.velocities.tolist(), gen)


def segment_index(model: ValidatedModel, s: float) -> int:
    # right-continuous: a breakpoint belongs to the segment it opens
    return int(np.searchsorted(model.breakpoints, s, side="right"))


def generator_at(model: ValidatedModel, s: float) -> np.ndarray:
    """Generator active at time ``s``."""
    if not s >= 0:
        raise NegativeTime(f"time must be nonnegative, got {s}")
    return model.matrices[segment_index(model, s)]


def _segment_pieces(model: ValidatedModel, s: float, t: float):
    edges = np.concatenate(([0.0], model.breakpoints, [np.inf]))
    for k in range(model.matrices.shape[0]):
        lo, hi = max(s, edges[k]), min(t, edges[k + 1])
        if hi > lo:
            yield k, hi - lo


def evolution_matrix(model: ValidatedModel, s: float, t: float) -> np.ndarray:
    """Transition matrix of the (killed) chain between times ``s <= t``.

    Row sums fall short of one by the mass sent to the coffin state.
    """
    if not 0 <= s <= t:
        raise BadTimeOrder(f"need 0 <= s <= t, got s={s}, t={t}")
    out = np.eye(model.m)
    for k, dt in _segment_pieces(model, s, t):
        out = out @ matrix_exp(dt * model.matrices[k])
    return out


def propagate(model: ValidatedModel, times, T: float, h) -> np.ndarray:
    """Evaluate ``(U_{t_k,T} h)`` for a batch of start times ``t_k <= T``.

    Returns an array of shape ``(len(times), m)``.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    h = np.asarray(h, dtype=float)
    if times.size and (times.min() < 0 or times.max() > T):
        raise BadTimeOrder("every start time must lie in [0, T]")
    out = np.broadcast_to(h, (times.size, model.m)).copy()
    edges = np.concatenate(([0.0], model.breakpoints, [np.inf]))
    # walk segments backwards from T, applying each piece to the running vector
    for k in range(model.matrices.shape[0] - 1, -1, -1):
        lo, hi = edges[k], min(edges[k + 1], T)
        if hi <= lo:
            continue
        dt = hi - np.maximum(times, lo)
        active = dt > 0
        if not np.any(active):
            continue
        exps = matrix_exp(dt[active, None, None] * model.matrices[k])
        out[active] = np.einsum("nij,nj->ni", exps, out[active])
    return out


_TOP_KEYS = {"states", "velocities", "generator"}


def model_from_dict(data: dict) -> ModelSpec:
    if not isinstance(data, dict):
        raise ModelError("model must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ModelError(f"unknown top-level keys: {sorted(unknown)}")
    missing = _TOP_KEYS - set(data)
    if missing:
        raise ModelError(f"missing keys: {sorted(missing)}")
    gen = data["generator"]
    if not isinstance(gen, dict) or "type" not in gen:
        raise ModelError("generator must be an object with a 'type' field")
    kind = gen["type"]
    try:
        if kind == "constant":
            schedule: Schedule = Constant(gen["matrix"])
        elif kind == "piecewise":
            schedule = PiecewiseConstant(gen["breakpoints"], gen["matrices"])
        else:
            raise ModelError(f"unknown generator type {kind!r}")
        return ModelSpec(list(data["states"]), [float(x) for x in data["velocities"]], schedule)
    except KeyError as exc:
        raise ModelError(f"generator is missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed model: {exc}") from exc


def model_to_dict(model: ValidatedModel) -> dict:
    if model.is_homogeneous:
        gen = {"type": "constant", "matrix": model.matrices[0].tolist()}
    else:
        gen = {
            "type": "piecewise",
            "breakpoints": model.breakpoints.tolist(),
            "matrices": model.matrices.tolist(),
        }
    return {"states": list(model.states), "velocities": model.velocities.tolist(), "generator": gen}


def load_model(path) -> ValidatedModel:
    """Read and validate a JSON model file. I/O errors propagate as ``OSError``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc}") from exc
    return validate_model(model_from_dict(data))


def homogeneous(states, velocities, matrix) -> ValidatedModel:
    """Shorthand for a validated model with a constant generator."""
    return validate_model(ModelSpec(list(states), list(velocities), Constant(matrix)))
