"""Exact exponent bookkeeping: Sobolev conjugates, bootstrap chains, product rules.

Finite exponents are ``fractions.Fraction``. Three symbols cover the rest:
``INF`` (p = infinity), ``ANY_SMALL`` (a reciprocal that may be taken as small
as we like) and ``ANY_LARGE`` (the matching exponent).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering

from .errors import HypothesisViolation


@total_ordering
class _Symbol:
    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return self.name

    __str__ = __repr__

    def __eq__(self, other):
        return self is other

    def __hash__(self):
        return hash(self.name)

    def __lt__(self, other):
        if self is INF:
            return False
        raise TypeError(f"{self.name} has no order")

    def __gt__(self, other):
        if self is INF:
            return other is not INF
        raise TypeError(f"{self.name} has no order")


INF = _Symbol("inf")
ANY_SMALL = _Symbol("any_small")
ANY_LARGE = _Symbol("any_large")


def as_rational(x):
    """Fraction from int, Fraction, ``"num/den"`` or ``"inf"``; symbols pass through."""
    if isinstance(x, _Symbol):
        return x
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "infinity", "oo"):
            return INF
        try:
            return Fraction(s)
        except (ValueError, ZeroDivisionError) as exc:
            raise HypothesisViolation(f"not a rational number: {x!r}") from exc
    if isinstance(x, float):
        raise TypeError("floats are not accepted; pass a Fraction or a 'num/den' string")
    return Fraction(x)


def reciprocal(x):
    x = as_rational(x)
    if x is INF:
        return Fraction(0)
    if x is ANY_LARGE:
        return ANY_SMALL
    if x is ANY_SMALL:
        return ANY_LARGE
    if x == 0:
        return INF
    return 1 / x


def fmt(x) -> str:
    if isinstance(x, _Symbol):
        return x.name
    return str(x)


def sobolev_conjugate(p, n: int) -> Fraction:
    p = as_rational(p)
    if p is INF or not (1 <= p < n):
        raise HypothesisViolation(f"Sobolev conjugate requires 1 <= p < n (p={fmt(p)}, n={n})")
    return n * p / (n - p)


@dataclass(frozen=True)
class BootstrapResult:
    sequence: tuple
    k0: int
    exit_reason: str  # "reached_n" | "reached_target" | "immediate"
    stop: object

    def rows(self):
        return [(k, fmt(p), fmt(reciprocal(p))) for k, p in enumerate(self.sequence)]


def bootstrap_sequence(p, q, n: int, target=None) -> BootstrapResult:
    """``1/p_k = 1/p_{k-1} + 1/q - 1/n`` until ``p_k >= n`` (or ``>= target``)."""
    p, q = as_rational(p), as_rational(q)
    if not (q is INF or q > n):
        raise HypothesisViolation(
            f"bootstrap requires q > n (q={fmt(q)}, n={n}); the increment 1/q - 1/n must be negative")
    if p is INF or not (1 < p and (q is INF or p <= q)):
        raise HypothesisViolation(f"bootstrap requires 1 < p <= q (p={fmt(p)}, q={fmt(q)})")
    stop = n if target is None else as_rational(target)
    if target is not None and not (q is INF or stop is INF or stop <= q):
        raise HypothesisViolation(f"target s requires s <= q (s={fmt(stop)}, q={fmt(q)})")
    reached = "reached_n" if target is None else "reached_target"
    if stop is not INF and p >= stop:
        return BootstrapResult((p,), 0, "immediate", stop)
    inc = reciprocal(q) - Fraction(1, n)
    r = 1 / p
    seq = [p]
    while True:
        r += inc
        pk = INF if r <= 0 else 1 / r
        seq.append(pk)
        if pk is INF or (stop is not INF and pk >= stop):
            break
    return BootstrapResult(tuple(seq), len(seq) - 2, reached, stop)


def _recip_case(k: int, recip: Fraction, n: int):
    """Three-case reciprocal ``1/r - k/n`` / ANY_SMALL / 0 split at ``k = n/r``."""
    threshold = n * recip  # n / r
    if k < threshold:
        return recip - Fraction(k, n)
    if k == threshold:
        return ANY_SMALL
    return Fraction(0)


def embedding_exponent(k: int, p, n: int):
    """Exponent q_k of the embedding ``W^{k,p} in L^{q_k}``."""
    if k < 0:
        raise HypothesisViolation(f"k must be >= 0 (k={k})")
    p = as_rational(p)
    if p is not INF and p < 1:
        raise HypothesisViolation(f"requires p >= 1 (p={fmt(p)})")
    if k == 0:
        return p
    return reciprocal(_recip_case(k, reciprocal(p), n))


@dataclass(frozen=True)
class WitnessRow:
    k: int
    recip_pk: object  # 1/p_k(l)
    recip_q: object  # 1/q_{m-k}
    holds: bool
    any_small: bool


@dataclass(frozen=True)
class MultiplierResult:
    admissible: bool
    p_of_l: object
    table: tuple

    @property
    def witness_ok(self) -> bool:
        return all(r.holds for r in self.table)


def _witness(a, b, bound: Fraction):
    """``a + b <= bound`` where a, b may be ANY_SMALL (then strict on the rest)."""
    small = a is ANY_SMALL or b is ANY_SMALL
    finite = sum((x for x in (a, b) if x is not ANY_SMALL), Fraction(0))
    return (finite < bound if small else finite <= bound), small


def multiplier_admissible(p, q, n: int, m: int, l: int) -> MultiplierResult:
    """Product rule ``W^{m,p(l)} x W^{m,q} -> W^{m,p}`` and its per-k witness table."""
    p, q = as_rational(p), as_rational(q)
    if m < 1 or l < 0:
        raise HypothesisViolation(f"requires m >= 1 and l >= 0 (m={m}, l={l})")
    if not (p is INF or p >= 1) or (p is INF and q is not INF) or (
            p is not INF and q is not INF and q < p):
        raise HypothesisViolation(f"requires 1 <= p <= q <= inf (p={fmt(p)}, q={fmt(q)})")
    if p is INF:
        if l != 0:
            raise HypothesisViolation(f"requires n - p l > 0 (p=inf, l={l})")
        p_l = INF
    else:
        if n - p * l <= 0:
            raise HypothesisViolation(f"requires n - p l > 0 (n={n}, p={fmt(p)}, l={l})")
        p_l = n * p / (n - p * l)
    admissible = q is INF or q > Fraction(n, m + l)
    rp, rq, rpl = reciprocal(p), reciprocal(q), reciprocal(p_l)
    rows = []
    for k in range(m + 1):
        a = _recip_case(k, rpl, n)
        b = _recip_case(m - k, rq, n)
        holds, small = _witness(a, b, rp)
        rows.append(WitnessRow(k, a, b, holds, small))
    return MultiplierResult(admissible, p_l, tuple(rows))
