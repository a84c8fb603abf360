"""Exponentially decaying payoffs ``g(t, j) = exp(-c t) f(j)``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, SideMismatch
from .model import ValidatedModel

SIDES = ("+", "-", "E")


@dataclass(frozen=True, eq=False)
class ExpDecayFunction:
    """``g(t, j) = exp(-c t) * f(j)`` with ``g(inf, coffin) = 0``.

    ``f`` is indexed by the states of ``side``: the E+ states (in model order)
    for ``"+"``, the E- states for ``"-"``, or every state for ``"E"``.
    """

    c: float
    f: tuple
    side: str = "+"

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")
        if not (self.c >= 0 and np.isfinite(self.c)):
            raise ValueError(f"decay rate must be finite and nonnegative, got {self.c}")
        object.__setattr__(self, "f", tuple(float(x) for x in np.ravel(self.f)))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.f, dtype=float)

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.vector).max()) if self.f else 0.0

    def side_indices(self, model: ValidatedModel) -> tuple:
        if self.side == "+":
            return model.plus_states
        if self.side == "-":
            return model.minus_states
        return tuple(range(model.m))

    def check(self, model: ValidatedModel, side: str | None = None) -> None:
        if side is not None and self.side != side:
            raise SideMismatch(f"payoff lives on side {self.side!r}, operator needs {side!r}")
        expected = len(self.side_indices(model))
        if len(self.f) != expected:
            raise ShapeMismatch(f"payoff has {len(self.f)} entries, side {self.side!r} has {expected} states")

    def on_states(self, model: ValidatedModel) -> np.ndarray:
        """``f`` spread over all of E (zero off its side)."""
        self.check(model)
        out = np.zeros(model.m)
        out[list(self.side_indices(model))] = self.vector
        return out

    def __call__(self, t: float, f_value: float) -> float:
        return float(np.exp(-self.c * t) * f_value)


def split(c: float, f_all, model: ValidatedModel) -> tuple:
    """Split ``exp(-c t) f(j)`` on E into its E+ and E- parts."""
    f_all = np.asarray(f_all, dtype=float)
    if f_all.shape != (model.m,):
        raise ShapeMismatch(f"expected {model.m} entries, got {f_all.shape}")
    return (
        ExpDecayFunction(c, f_all[list(model.plus_states)], "+"),
        ExpDecayFunction(c, f_all[list(model.minus_states)], "-"),
    )
