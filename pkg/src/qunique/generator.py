"""State space, lazily evaluated Q-matrices and finite windows.

A model never stores a diagonal: the total rate ``q_i`` is always recomputed
as the sum of the outgoing rates, so every model is conservative by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence

from .errors import (
    EvaluationError,
    ModelDefinitionError,
    RateOverflowError,
    ResourceError,
    UsageError,
)

DEFAULT_MAX_WINDOW_STATES = 5_000_000


class StateVec(tuple):
    """A point of ``Z_+^d``; immutable, hashable, ordered lexicographically."""

    __slots__ = ()

    def __new__(cls, coords: Iterable[int] = ()):
        coords = tuple(coords)
        for c in coords:
            if isinstance(c, bool) or not isinstance(c, int):
                raise UsageError(f"state coordinates must be integers, got {c!r}")
            if c < 0:
                raise UsageError(f"state coordinates must be nonnegative, got {coords}")
        return tuple.__new__(cls, coords)

    @classmethod
    def _trusted(cls, coords) -> "StateVec":
        # Skips validation; callers guarantee nonnegative ints.
        return tuple.__new__(cls, coords)

    @property
    def coords(self) -> tuple:
        return tuple(self)

    @property
    def level(self) -> int:
        return sum(self)

    @property
    def dimension(self) -> int:
        return len(self)

    def __repr__(self) -> str:
        return f"StateVec({tuple(self)!r})"


def as_state(value, dimension: Optional[int] = None) -> StateVec:
    """Coerce an int or a sequence of ints into a :class:`StateVec`."""
    if isinstance(value, StateVec):
        state = value
    elif isinstance(value, int) and not isinstance(value, bool):
        state = StateVec((value,))
    else:
        state = StateVec(value)
    if dimension is not None and len(state) != dimension:
        raise UsageError(f"state {tuple(state)} has dimension {len(state)}, model has {dimension}")
    return state


class Transition(NamedTuple):
    target: StateVec
    rate: float


TransitionFn = Callable[[StateVec], Iterable[tuple]]


@dataclass(frozen=True, eq=False)
class GeneratorModel:
    """A conservative, totally stable Q-matrix on ``Z_+^d`` given row by row.

    Parameters
    ----------
    dimension : int
        Number of coordinates ``d``.
    transitions_fn : callable
        Maps a state to an iterable of ``(target, rate)`` pairs. Must be pure.
    name : str
        Human-readable identifier used in reports.
    params : mapping
        Parameter record, reported verbatim.
    explosion_time_bound : callable, optional
        A function ``V >= 0`` (``inf`` allowed) with ``Omega V <= -1`` at every
        state where it is finite, and whose finite set is closed under
        transitions. ``V(i)`` then bounds the mean explosion time from ``i``
        and ``exp(-lam * V)`` is a global subsolution of ``Pi(lam) u = u``.
        Only supply it when it is known analytically.
    metadata : mapping
        Free-form extras, e.g. ``pure_birth_rate`` for pure-birth models.
    """

    dimension: int
    transitions_fn: TransitionFn
    name: str = "model"
    params: Mapping[str, float] = field(default_factory=dict)
    explosion_time_bound: Optional[Callable[[StateVec], float]] = None
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.dimension, int) or self.dimension < 1:
            raise UsageError(f"dimension must be a positive integer, got {self.dimension!r}")

    def transitions_of(self, state) -> tuple:
        """Validated outgoing transitions of ``state`` (zero rates dropped)."""
        state = as_state(state, self.dimension)
        try:
            raw = list(self.transitions_fn(state))
        except OverflowError as exc:
            raise RateOverflowError(
                f"{self.name}: rate overflow at state {tuple(state)}: {exc}") from exc
        out = []
        for target, rate in raw:
            if type(target) is not StateVec:
                target = as_state(target)
            try:
                rate = float(rate)
            except OverflowError as exc:
                raise RateOverflowError(
                    f"{self.name}: rate overflow at state {tuple(state)} -> {tuple(target)}") from exc
            if not math.isfinite(rate):
                if math.isinf(rate):
                    raise RateOverflowError(
                        f"{self.name}: infinite rate at state {tuple(state)} -> {tuple(target)}")
                raise ModelDefinitionError(
                    f"{self.name}: NaN rate at state {tuple(state)} -> {tuple(target)}")
            if rate < 0:
                raise ModelDefinitionError(
                    f"{self.name}: negative rate {rate} at state {tuple(state)} -> {tuple(target)}")
            if rate == 0:
                continue
            if len(target) != self.dimension:
                raise ModelDefinitionError(
                    f"{self.name}: transition {tuple(state)} -> {tuple(target)} changes dimension")
            if target == state:
                raise ModelDefinitionError(
                    f"{self.name}: self-transition at state {tuple(state)}; "
                    "the diagonal is implied and must not be given")
            out.append(Transition(target, rate))
        return tuple(out)

    def total_rate(self, state) -> float:
        return total_rate(self, state)

    def __repr__(self) -> str:
        return f"GeneratorModel(name={self.name!r}, dimension={self.dimension})"


def total_rate(model: GeneratorModel, state) -> float:
    """``q_i``: the sum of all outgoing rates from ``state``."""
    q = 0.0
    for tr in model.transitions_of(state):
        q += tr.rate
    if not math.isfinite(q):
        raise RateOverflowError(f"{model.name}: total rate overflows at state {tuple(state)}")
    return q


def _finite(f, state, what="f"):
    try:
        value = float(f(state))
    except (ArithmeticError, ValueError) as exc:
        raise EvaluationError(f"{what} cannot be evaluated at state {tuple(state)}: {exc}") from exc
    if not math.isfinite(value):
        raise EvaluationError(f"{what} is not finite at state {tuple(state)}: {value}")
    return value


def apply_generator(model: GeneratorModel, f: Callable[[StateVec], float], state) -> float:
    """``Omega f(i) = sum_j q_ij (f(j) - f(i))``."""
    state = as_state(state, model.dimension)
    fi = _finite(f, state)
    acc = 0.0
    for target, rate in model.transitions_of(state):
        acc += rate * (_finite(f, target) - fi)
    return acc


def states_at_level(level: int, dimension: int) -> Iterator[StateVec]:
    """All states of ``Z_+^d`` with coordinate sum ``level``, lexicographically."""
    if dimension == 1:
        yield StateVec._trusted((level,))
        return

    def rec(remaining, parts):
        if parts == 1:
            yield (remaining,)
            return
        for head in range(remaining + 1):
            for tail in rec(remaining - head, parts - 1):
                yield (head,) + tail

    for coords in rec(level, dimension):
        yield StateVec._trusted(coords)


def window_size(level_cap: int, dimension: int) -> int:
    return math.comb(level_cap + dimension, dimension)


def graded_key(state: StateVec):
    return (sum(state), tuple(state))


@dataclass(frozen=True)
class Window:
    """A finite set ``{i : |i| <= level_cap}`` and its one-step exterior.

    ``states`` are in graded order (by level, then lexicographic), so the
    window of a smaller cap is always a prefix of a larger one.
    """

    states: tuple
    boundary: tuple
    level_cap: Optional[int] = None

    def __post_init__(self):
        if set(self.states) & set(self.boundary):
            raise UsageError("window states and boundary overlap")

    @cached_property
    def index(self) -> dict:
        return {s: k for k, s in enumerate(self.states)}

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, state) -> bool:
        return state in self.index


def enumerate_window(model: GeneratorModel, level_cap: int,
                     max_states: int = DEFAULT_MAX_WINDOW_STATES) -> Window:
    """Enumerate ``E_n = {i : |i| <= level_cap}`` and its one-step boundary."""
    if isinstance(level_cap, bool) or not isinstance(level_cap, int) or level_cap < 0:
        raise UsageError(f"level_cap must be a nonnegative integer, got {level_cap!r}")
    size = window_size(level_cap, model.dimension)
    if size > max_states:
        raise ResourceError(
            f"window with level_cap={level_cap} in dimension {model.dimension} has {size} states "
            f"(limit {max_states}); use a smaller level_cap")
    states = [s for lvl in range(level_cap + 1) for s in states_at_level(lvl, model.dimension)]
    inside = set(states)
    boundary = set()
    for s in states:
        for target, _ in model.transitions_of(s):
            if target not in inside:
                boundary.add(target)
    return Window(tuple(states), tuple(sorted(boundary, key=graded_key)), level_cap)


def shell(window: Window, level: int) -> list:
    """States of ``window`` sitting exactly at ``level``."""
    return [s for s in window.states if sum(s) == level]


def check_dimension(model: GeneratorModel, states: Sequence) -> None:
    for s in states:
        as_state(s, model.dimension)
