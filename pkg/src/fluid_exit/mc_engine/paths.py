"""Single-path simulation and exact level-crossing detection."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..errors import BadTimeOrder, NegativeTime
from ..model import ValidatedModel
from . import _kernels
from ._rng import path_key


class Outcome(str, Enum):
    UP = "UpExit"
    DOWN = "DownExit"
    NEITHER = "Neither"


KIND_TO_OUTCOME = {
    _kernels.NEITHER: Outcome.NEITHER,
    _kernels.KILLED: Outcome.NEITHER,
    _kernels.UP: Outcome.UP,
    _kernels.DOWN: Outcome.DOWN,
}


@dataclass(frozen=True, eq=False)
class PathSample:
    """A trajectory on ``[start_time, horizon]``.

    ``states[k]`` is occupied from ``epochs[k]`` until the next epoch (or the
    kill time, or the horizon). ``epochs[0]`` is the start time.
    """

    start_time: float
    start_state: int
    epochs: np.ndarray
    states: np.ndarray
    kill_time: Optional[float]
    horizon: float

    @property
    def killed(self) -> bool:
        return self.kill_time is not None

    @property
    def end_time(self) -> float:
        return self.kill_time if self.killed else self.horizon

    def state_at(self, t: float) -> int:
        """State at time ``t``; ``-1`` once killed."""
        if t < self.start_time or t > self.horizon:
            raise BadTimeOrder(f"time {t} outside [{self.start_time}, {self.horizon}]")
        if self.killed and t >= self.kill_time:
            return -1
        return int(self.states[np.searchsorted(self.epochs, t, side="right") - 1])


@dataclass(frozen=True)
class CrossingResult:
    kind: Outcome
    time: Optional[float] = None
    state: Optional[int] = None


def _schedule_args(model: ValidatedModel):
    return (np.ascontiguousarray(model.matrices), np.ascontiguousarray(model.breakpoints),
            model.rate_bound)


def sample_path(model: ValidatedModel, s: float, i, horizon: float, key=(0, 0)) -> PathSample:
    """Simulate the chain from ``(s, i)`` up to ``horizon``.

    ``key`` is either ``(seed, path_index)`` or a raw 64-bit stream key. The
    draws match those of the batch estimators for the same ``(seed, index)``.
    """
    if s < 0:
        raise NegativeTime(f"start time must be nonnegative, got {s}")
    if not horizon > s:
        raise BadTimeOrder("horizon must exceed the start time")
    i = model.index(i)
    stream = path_key(*key) if isinstance(key, tuple) else np.uint64(key)
    mats, bps, R = _schedule_args(model)
    epochs, states, kill = _kernels.record_path(mats, bps, R, float(s), i, float(horizon), stream)
    return PathSample(
        start_time=float(s),
        start_state=i,
        epochs=epochs,
        states=states.astype(int),
        kill_time=None if np.isnan(kill) else float(kill),
        horizon=float(horizon),
    )


def crossing(path: PathSample, model: ValidatedModel, lminus: float, lplus: float) -> CrossingResult:
    """First strict exit of ``phi`` from ``[-lminus, lplus]`` along ``path``.

    ``phi`` is piecewise linear with slope ``v(state)``; the crossing time is
    the root of the linear piece. Touching a level exactly at a switch into an
    opposite-velocity state does not count.
    """
    if lminus < 0 or lplus < 0:
        raise ValueError("levels must be nonnegative")
    v = model.velocities
    ends = np.append(path.epochs[1:], path.end_time)
    phi = 0.0
    for t0, t1, j in zip(path.epochs, ends, path.states):
        vj = v[j]
        d = t1 - t0
        if vj > 0 and phi + vj * d > lplus:
            return CrossingResult(Outcome.UP, t0 + max(0.0, (lplus - phi) / vj), int(j))
        if vj < 0 and phi + vj * d < -lminus:
            return CrossingResult(Outcome.DOWN, t0 + max(0.0, (-lminus - phi) / vj), int(j))
        phi += vj * d
    return CrossingResult(Outcome.NEITHER)
