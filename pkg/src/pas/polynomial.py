"""Sparse multivariate polynomials with exact rational coefficients."""

from __future__ import annotations

from fractions import Fraction
from numbers import Real
from typing import Mapping


class ParameterError(KeyError):
    pass


def _coerce(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    # shortest decimal repr keeps coefficients readable (0.66 -> 33/50)
    return Fraction(repr(float(value)))


class Polynomial:
    """Polynomial as a map from monomial to coefficient.

    A monomial is a sorted tuple of ``(variable, exponent)`` pairs; the empty
    tuple is the constant term. Zero coefficients are never stored, so two
    equal polynomials have identical term maps.
    """

    __slots__ = ("terms", "_compiled")

    def __init__(self, terms: Mapping[tuple, Fraction] | None = None):
        self.terms = {m: c for m, c in (terms or {}).items() if c != 0}
        self._compiled = None

    @classmethod
    def constant(cls, value) -> "Polynomial":
        return cls({(): _coerce(value)})

    @classmethod
    def variable(cls, name: str) -> "Polynomial":
        return cls({((name, 1),): Fraction(1)})

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(sorted({v for mono in self.terms for v, _ in mono}))

    def exponent_vectors(self) -> dict[tuple[int, ...], Fraction]:
        """Terms keyed by dense exponent vectors over ``variables``, sorted."""
        names = self.variables
        pos = {v: i for i, v in enumerate(names)}
        out = {}
        for mono, c in self.terms.items():
            vec = [0] * len(names)
            for v, e in mono:
                vec[pos[v]] = e
            out[tuple(vec)] = c
        return dict(sorted(out.items()))

    def degree(self, among: set[str] | None = None) -> int:
        best = 0
        for mono in self.terms:
            best = max(best, sum(e for v, e in mono if among is None or v in among))
        return best

    def _lift(self, other) -> "Polynomial":
        return other if isinstance(other, Polynomial) else Polynomial.constant(other)

    def __add__(self, other):
        other = self._lift(other)
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, 0) + c
        return Polynomial(terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        terms: dict = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                terms[m] = terms.get(m, 0) + c1 * c2
        return Polynomial(terms)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, (Polynomial, Real)):
            return self.terms == self._lift(other).terms
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self):
        return f"Polynomial({self})"

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for mono, c in sorted(self.terms.items()):
            factors = [f"{v}^{e}" if e > 1 else v for v, e in mono]
            if not factors:
                parts.append(str(c))
            elif c == 1:
                parts.append("*".join(factors))
            else:
                parts.append("*".join([f"({c})"] + factors))
        return " + ".join(parts)

    def evaluate(self, values: Mapping[str, float]) -> float:
        """Numeric value at a point; cost depends on the term count only."""
        if self._compiled is None:
            self._compiled = [(float(c), mono) for mono, c in self.terms.items()]
        total = 0.0
        try:
            for c, mono in self._compiled:
                term = c
                for v, e in mono:
                    term *= values[v] ** e if e > 1 else values[v]
                total += term
        except KeyError as exc:
            raise ParameterError(f"no value bound for polynomial variable {exc.args[0]!r}") from None
        return total

    def exact(self, values: Mapping[str, Fraction]) -> Fraction:
        total = Fraction(0)
        for mono, c in self.terms.items():
            term = c
            for v, e in mono:
                if v not in values:
                    raise ParameterError(f"no value bound for polynomial variable {v!r}")
                term *= _coerce(values[v]) ** e
            total += term
        return total


def _mono_mul(a: tuple, b: tuple) -> tuple:
    if not a:
        return b
    if not b:
        return a
    merged = dict(a)
    for v, e in b:
        merged[v] = merged.get(v, 0) + e
    return tuple(sorted(merged.items()))
