"""Constructors for the standard example models.

Explosive fixtures carry an ``explosion_time_bound`` ``V`` with
``Omega V <= -1`` wherever ``V`` is finite. The resolvent and embedded-chain
engines turn it into certified lower brackets. Every bound below is proven
in the comment next to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import polygamma

from .errors import ModelDefinitionError, UsageError
from .generator import GeneratorModel, StateVec

_primes = np.array([2, 3, 5, 7, 11, 13], dtype=np.int64)


def nth_prime(n: int) -> int:
    """``nth_prime(1) == 2``."""
    global _primes
    if n < 1:
        raise UsageError("primes are indexed from 1")
    while len(_primes) < n:
        # p_n < n (log n + log log n) for n >= 6
        m = max(2 * len(_primes), n)
        limit = int(m * (math.log(m) + math.log(math.log(m)))) + 10
        sieve = np.ones(limit + 1, dtype=bool)
        sieve[:2] = False
        for p in range(2, int(limit ** 0.5) + 1):
            if sieve[p]:
                sieve[p * p::p] = False
        _primes = np.flatnonzero(sieve).astype(np.int64)
    return int(_primes[n - 1])


# ---------------------------------------------------------------------------
# one-dimensional chains

def pure_birth(rate_fn: Callable[[int], float], name: str = "pure_birth",
               tail: Optional[Callable[[int], float]] = None) -> GeneratorModel:
    """Pure birth process ``n -> n+1`` at rate ``rate_fn(n)``.

    ``tail(n)`` may bound ``sum_{j >= n} 1/rate_fn(j)`` from above with
    ``tail(n) - tail(n+1) >= 1/rate_fn(n)``; it becomes the model's
    explosion-time bound.
    """

    def transitions(state):
        n = state[0]
        rate = rate_fn(n)
        if not rate > 0:
            raise ModelDefinitionError(f"{name}: pure-birth rate at {n} must be positive, got {rate}")
        return ((StateVec._trusted((n + 1,)), rate),)

    bound = None
    if tail is not None:
        def bound(state):
            return tail(state[0])
    metadata = {"pure_birth_rate": rate_fn}
    if tail is not None:
        metadata["nonuniqueness_phi"] = _pure_birth_nonuniqueness_phi(tail)
    return GeneratorModel(1, transitions, name=name, explosion_time_bound=bound, metadata=metadata)


def _pure_birth_nonuniqueness_phi(tail):
    # phi_k = 1/2 - T(max(k, 1)); Omega phi(k) = q_k (T(k) - T(k+1)) >= 1 >= phi_k
    def phi(state):
        return 0.5 - tail(max(state[0], 1))
    phi.bound = 0.5
    phi.c = 1.0
    return phi


def birth_death(b: Callable[[int], float], a: Callable[[int], float], name: str = "birth_death",
                explosion_time_bound: Optional[Callable[[StateVec], float]] = None) -> GeneratorModel:
    """Birth–death chain on ``Z_+``: ``n -> n+1`` at ``b(n)``, ``n -> n-1`` at ``a(n)``."""
    if a(0) != 0:
        raise ModelDefinitionError(f"{name}: a(0) must be 0, got {a(0)}; the chain would leave Z_+")

    def transitions(state):
        n = state[0]
        up = b(n)
        if not up > 0:
            raise ModelDefinitionError(f"{name}: birth rate b({n}) must be positive, got {up}")
        out = [(StateVec._trusted((n + 1,)), up)]
        if n > 0:
            down = a(n)
            if not down > 0:
                raise ModelDefinitionError(f"{name}: death rate a({n}) must be positive, got {down}")
            out.append((StateVec._trusted((n - 1,)), down))
        return out

    return GeneratorModel(1, transitions, name=name, explosion_time_bound=explosion_time_bound,
                          metadata={"birth": b, "death": a})


# ---------------------------------------------------------------------------
# Schlögl's second model

def _uniform_p(sites: int) -> Optional[np.ndarray]:
    if sites < 2:
        return None
    p = np.full((sites, sites), 1.0 / (sites - 1))
    np.fill_diagonal(p, 0.0)
    return p


@dataclass(frozen=True)
class SchloglParams:
    sites: int = 2
    beta0: float = 1.0
    beta2: float = 1.0
    delta1: float = 1.0
    delta3: float = 1.0
    p: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.sites, int) or self.sites < 1:
            raise UsageError(f"sites must be a positive integer, got {self.sites!r}")
        for key in ("beta0", "beta2", "delta1", "delta3"):
            if not getattr(self, key) > 0:
                raise UsageError(f"{key} must be positive, got {getattr(self, key)}")
        p = self.p if self.p is not None else _uniform_p(self.sites)
        if p is not None:
            p = np.asarray(p, dtype=float)
            if p.shape != (self.sites, self.sites):
                raise UsageError(f"p must be {self.sites}x{self.sites}")
            if np.any(p < 0) or np.any(np.diag(p) != 0):
                raise UsageError("p must be nonnegative with zero diagonal")
            if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
                raise UsageError("rows of p must sum to 1")
        object.__setattr__(self, "p", p)

    def birth(self, k: int) -> float:
        return self.beta0 + self.beta2 * k * (k - 1)

    def death(self, k: int) -> float:
        return self.delta1 * k + self.delta3 * k * (k - 1) * (k - 2)


def schlogl(params: SchloglParams = SchloglParams()) -> GeneratorModel:
    """Reaction–diffusion chain on ``Z_+^S``: per-site birth/death plus hopping."""
    d = params.sites
    b, a, p = params.birth, params.death, params.p
    pairs = [] if p is None else [(u, v, float(p[u, v])) for u in range(d) for v in range(d)
                                  if u != v and p[u, v] > 0]

    def transitions(state):
        out = []
        for u in range(d):
            up = list(state)
            up[u] += 1
            out.append((StateVec._trusted(up), b(state[u])))
        for u in range(d):
            if state[u] > 0:
                down = list(state)
                down[u] -= 1
                out.append((StateVec._trusted(down), a(state[u])))
        for u, v, puv in pairs:
            if state[u] > 0:
                hop = list(state)
                hop[u] -= 1
                hop[v] += 1
                out.append((StateVec._trusted(hop), state[u] * puv))
        return out

    return GeneratorModel(
        d, transitions, name=f"schlogl{d}",
        params={"sites": d, "beta0": params.beta0, "beta2": params.beta2,
                "delta1": params.delta1, "delta3": params.delta3},
        metadata={"schlogl": params},
    )


# ---------------------------------------------------------------------------
# odd/even interleaving

def interleaved(q1: GeneratorModel, q2: GeneratorModel, bridge: bool = False,
                name: str = "interleaved") -> GeneratorModel:
    """Run ``q1`` on the odd integers and ``q2`` on the even integers.

    Odd state ``2m+1`` behaves like state ``m`` of ``q1``; even state ``2m``
    like state ``m`` of ``q2``. The two halves never communicate unless
    ``bridge`` adds ``0 <-> 1`` at rate 1.
    """
    if q1.dimension != 1 or q2.dimension != 1:
        raise UsageError("interleaved() needs two one-dimensional models")

    def transitions(state):
        n = state[0]
        if n % 2:
            out = [(StateVec._trusted((2 * t[0] + 1,)), r) for t, r in q1.transitions_of((n // 2,))]
        else:
            out = [(StateVec._trusted((2 * t[0],)), r) for t, r in q2.transitions_of((n // 2,))]
        if bridge and n in (0, 1):
            out.append((StateVec._trusted((1 - n,)), 1.0))
        return out

    bound = None
    if q2.explosion_time_bound is not None and (not bridge or "pure_birth_rate" in q2.metadata):
        inner = q2.explosion_time_bound

        # odd states never explode-bound (inf); with the bridge, state 0 can
        # escape to the odd half and pure-birth evens never return to 0
        def bound(state):
            n = state[0]
            if n % 2 or (bridge and n == 0):
                return math.inf
            return inner(StateVec._trusted((n // 2,)))

    return GeneratorModel(1, transitions, name=name, explosion_time_bound=bound,
                          metadata={"odd": q1, "even": q2, "bridge": bridge})


# ---------------------------------------------------------------------------
# named fixtures

def _one(n):
    return 1.0


def _unit_death(n):
    return 1.0 if n > 0 else 0.0


def bounded_birth_death() -> GeneratorModel:
    return birth_death(_one, _unit_death, name="bounded_birth_death")


def pure_birth_linear() -> GeneratorModel:
    return pure_birth(lambda n: float(n + 1), name="pure_birth_linear")


def pure_birth_prime() -> GeneratorModel:
    # q_{n,n+1} is the (n+1)-th prime, so q_0 = 2
    return pure_birth(lambda n: float(nth_prime(n + 1)), name="pure_birth_prime")


def _trigamma_tail(n):
    # sum_{j >= n} 1/(j+1)^2, exact
    return float(polygamma(1, n + 1))


def pure_birth_quadratic() -> GeneratorModel:
    return pure_birth(lambda n: float((n + 1) ** 2), name="pure_birth_quadratic", tail=_trigamma_tail)


def pure_birth_exp2() -> GeneratorModel:
    # sum_{j >= n} 2^-j = 2^(1-n), exact
    return pure_birth(lambda n: 2.0 ** n, name="pure_birth_exp2", tail=lambda n: 2.0 ** (1 - n))


def _loglog_rate(n):
    return (n + 1) * math.log(n + 2) ** 2


def _loglog_tail(n):
    # for n >= 2: 1/log(n) - 1/log(n+1) = int_n^{n+1} dx/(x log^2 x)
    #   >= 1/((n+1) log^2(n+1)) >= 1/rate(n)
    if n >= 2:
        return 1.0 / math.log(n)
    return 1.0 / _loglog_rate(n) + _loglog_tail(n + 1)


def pure_birth_loglog() -> GeneratorModel:
    return pure_birth(_loglog_rate, name="pure_birth_loglog", tail=_loglog_tail)


def _cubic_bd_bound(cutoff: int = 64):
    # Passage time k -> k+1 has mean m_k = 1/b_k + (a_k/b_k) m_{k-1} with
    # b_k = (k+1)^3, a_k = k. Induction gives m_k <= 3/(k+1)^3 (m_0 = 1,
    # m_1 = 1/4, then (1 + 3/k^2)/(k+1)^3 <= 3/(k+1)^3 for k >= 2).
    # V(n) = sum_{n <= k < cutoff} m_k + 3 sum_{k >= max(n, cutoff)} (k+1)^-3.
    # At n >= cutoff: Omega V = -3 + 3 a_n/n^3 <= -1; below it Omega V = -1.
    m = [1.0]
    for k in range(1, cutoff):
        m.append(1.0 / (k + 1) ** 3 + k / (k + 1) ** 3 * m[-1])
    head = np.concatenate([np.cumsum(m[::-1])[::-1], [0.0]])

    def tail(n):
        # sum_{k >= n} (k+1)^-3
        return -0.5 * float(polygamma(2, n + 1))

    def bound(state):
        n = state[0]
        if n >= cutoff:
            return 3.0 * tail(n)
        return float(head[n]) + 3.0 * tail(cutoff)
    return bound


def birth_death_cubic() -> GeneratorModel:
    return birth_death(lambda n: float((n + 1) ** 3), lambda n: float(n), name="birth_death_cubic",
                       explosion_time_bound=_cubic_bd_bound())


def birth_death_quartic() -> GeneratorModel:
    return birth_death(lambda n: 1.0 + n * n, lambda n: float(n) ** 4, name="birth_death_quartic")


def interleaved_bounded_quadratic(bridge: bool = False) -> GeneratorModel:
    return interleaved(bounded_birth_death(), pure_birth_quadratic(), bridge=bridge,
                       name="interleaved_bounded_quadratic")


def interleaved_bounded_linear(bridge: bool = False) -> GeneratorModel:
    return interleaved(bounded_birth_death(), pure_birth_linear(), bridge=bridge,
                       name="interleaved_bounded_linear")


@dataclass(frozen=True)
class Fixture:
    name: str
    build: Callable[..., GeneratorModel]
    expected: str  # "unique" or "non-unique"
    description: str


FIXTURES = {f.name: f for f in [
    Fixture("bounded_birth_death", bounded_birth_death, "unique", "b = a = 1"),
    Fixture("pure_birth_linear", pure_birth_linear, "unique", "q_{n,n+1} = n+1"),
    Fixture("pure_birth_prime", pure_birth_prime, "unique", "q_{n,n+1} = (n+1)-th prime"),
    Fixture("pure_birth_quadratic", pure_birth_quadratic, "non-unique", "q_{n,n+1} = (n+1)^2"),
    Fixture("pure_birth_exp2", pure_birth_exp2, "non-unique", "q_{n,n+1} = 2^n"),
    Fixture("pure_birth_loglog", pure_birth_loglog, "non-unique", "q_{n,n+1} = (n+1) log^2(n+2)"),
    Fixture("birth_death_cubic", birth_death_cubic, "non-unique", "b = (n+1)^3, a = n"),
    Fixture("birth_death_quartic", birth_death_quartic, "unique", "b = 1+n^2, a = n^4"),
    Fixture("schlogl", lambda sites=2, **kw: schlogl(SchloglParams(sites=int(sites), **kw)), "unique",
            "Schlögl's second model, uniform hopping"),
    Fixture("interleaved_bounded_quadratic", interleaved_bounded_quadratic, "non-unique",
            "bounded chain on odds, quadratic births on evens"),
    Fixture("interleaved_bounded_linear", interleaved_bounded_linear, "unique",
            "bounded chain on odds, linear births on evens"),
]}


def build_fixture(name: str, **params) -> GeneratorModel:
    if name not in FIXTURES:
        raise UsageError(f"unknown zoo model {name!r}; choose from {', '.join(sorted(FIXTURES))}")
    fx = FIXTURES[name]
    try:
        return fx.build(**params)
    except TypeError as exc:
        raise UsageError(f"bad parameters for zoo model {name!r}: {exc}") from exc
