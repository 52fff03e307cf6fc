"""Polyexponential function algebra and region-diversity identifiability checks.

A polyexponential function is a finite sum ``sum_j lambda_j * exp(mu_j * t)``
with pairwise-distinct exponents; the generalized version allows polynomial
coefficients in front of each exponential.  These classes parametrize arterial
input curves, and the solutions of linear compartment systems driven by them
live in the generalized class.

The identifiability checks answer, for a given multi-region measurement
setup, whether the region kinetics are diverse enough for the tissue curves
to pin down the model parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

#: Absolute tolerance for all "equals zero" / "pairwise distinct" decisions
#: in the diversity checks and in term canonicalization.  Exact real-number
#: conditions are not decidable in floating point; ties closer than this are
#: treated as equal.
EQ_TOL = 1e-10


def _as_term_tuple(terms) -> tuple[tuple[float, float], ...]:
    return tuple((float(lam), float(mu)) for lam, mu in terms)


@dataclass(frozen=True)
class PolyExp:
    """Finite weighted sum of exponentials ``t -> sum_j lambda_j * e^(mu_j t)``.

    Terms are canonicalized on construction: exponents closer than
    :data:`EQ_TOL` are merged by summing their coefficients, terms whose
    coefficient sums to exactly zero are dropped, and the remainder is sorted
    by exponent.  The empty sum is the zero function (degree 0).

    Parameters
    ----------
    terms :
        Iterable of ``(lambda_j, mu_j)`` pairs; ``lambda_j`` is the weight,
        ``mu_j`` the exponent (1/time).
    """

    terms: tuple[tuple[float, float], ...]

    def __init__(self, terms: Sequence[tuple[float, float]]):
        raw = sorted(_as_term_tuple(terms), key=lambda term: term[1])
        merged: list[list[float]] = []
        for lam, mu in raw:
            if merged and abs(mu - merged[-1][1]) <= EQ_TOL:
                merged[-1][0] += lam
            else:
                merged.append([lam, mu])
        cleaned = tuple((lam, mu) for lam, mu in merged if lam != 0.0)
        object.__setattr__(self, "terms", cleaned)

    @property
    def degree(self) -> int:
        return len(self.terms)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([lam for lam, _ in self.terms], dtype=float)

    @property
    def exponents(self) -> np.ndarray:
        return np.array([mu for _, mu in self.terms], dtype=float)

    def __call__(self, t):
        return eval_polyexp(self, t)

    def __add__(self, other: "PolyExp") -> "PolyExp":
        return PolyExp(self.terms + other.terms)

    def __mul__(self, scalar: float) -> "PolyExp":
        return PolyExp(tuple((scalar * lam, mu) for lam, mu in self.terms))

    __rmul__ = __mul__

    def to_records(self) -> list[dict]:
        """Serialize as a list of ``{"lambda": .., "mu": ..}`` records."""
        return [{"lambda": lam, "mu": mu} for lam, mu in self.terms]

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "PolyExp":
        return cls([(rec["lambda"], rec["mu"]) for rec in records])


def eval_polyexp(g: PolyExp, t):
    """Evaluate ``g(t) = sum_j lambda_j * e^(mu_j t)``.

    ``t`` may be a scalar or an array; the result matches its shape.  The
    zero function (degree 0) evaluates to exactly 0.
    """
    t = np.asarray(t, dtype=float)
    if g.degree == 0:
        out = np.zeros_like(t)
        return float(out) if out.ndim == 0 else out
    vals = g.coefficients @ np.exp(np.outer(g.exponents, np.atleast_1d(t)))
    return float(vals[0]) if t.ndim == 0 else vals


@dataclass(frozen=True)
class GenPolyExp:
    """Generalized polyexponential ``t -> sum_l P_l(t) * e^(mu_l t)``.

    Each group holds an exponent ``mu_l`` and the coefficients
    ``c_0 .. c_{m_l - 1}`` of its polynomial ``P_l`` in increasing order of
    power.  Canonicalization merges groups with exponents closer than
    :data:`EQ_TOL`, trims trailing (leading-power) zero coefficients, drops
    groups whose polynomial is identically zero, and sorts by exponent.
    The degree is the total coefficient count ``sum_l m_l``.
    """

    groups: tuple[tuple[float, tuple[float, ...]], ...]

    def __init__(self, groups: Sequence[tuple[float, Sequence[float]]]):
        raw = sorted(
            ((float(mu), [float(c) for c in coeffs]) for mu, coeffs in groups),
            key=lambda grp: grp[0],
        )
        merged: list[tuple[float, list[float]]] = []
        for mu, coeffs in raw:
            if merged and abs(mu - merged[-1][0]) <= EQ_TOL:
                prev = merged[-1][1]
                if len(coeffs) > len(prev):
                    prev.extend([0.0] * (len(coeffs) - len(prev)))
                for i, c in enumerate(coeffs):
                    prev[i] += c
            else:
                merged.append((mu, list(coeffs)))
        cleaned = []
        for mu, coeffs in merged:
            while coeffs and coeffs[-1] == 0.0:
                coeffs.pop()
            if coeffs:
                cleaned.append((mu, tuple(coeffs)))
        object.__setattr__(self, "groups", tuple(cleaned))

    @property
    def degree(self) -> int:
        return sum(len(coeffs) for _, coeffs in self.groups)

    def __call__(self, t):
        return eval_genpolyexp(self, t)


def eval_genpolyexp(g: GenPolyExp, t):
    """Evaluate ``sum_l P_l(t) * e^(mu_l t)``, polynomials by Horner's scheme."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(np.atleast_1d(t))
    for mu, coeffs in g.groups:
        poly = np.zeros_like(out)
        for c in reversed(coeffs):
            poly = poly * np.atleast_1d(t) + c
        out = out + poly * np.exp(mu * np.atleast_1d(t))
    return float(out[0]) if t.ndim == 0 else out


def max_roots_bound(g: GenPolyExp | PolyExp) -> int:
    """Upper bound on the number of real roots of a nonzero (generalized)
    polyexponential: its degree minus one.

    Raises
    ------
    ValueError
        If ``g`` is the zero function (every point is a root; no bound).
    """
    if g.degree == 0:
        raise ValueError("bound undefined for zero function")
    return g.degree - 1


@dataclass(frozen=True)
class DiversityWitness:
    """Three regions certifying diversity for one arterial exponent."""

    exponent_index: int
    regions: tuple[int, int, int]
    margin: float


@dataclass(frozen=True)
class DiversityReport:
    """Outcome of :func:`region_diversity_report`.

    ``satisfied`` is true iff a witness triple exists for every arterial
    exponent.  ``margin`` is the smallest magnitude among the strict
    non-degeneracy quantities of the selected witnesses; values near
    :data:`EQ_TOL` flag borderline configurations.
    """

    satisfied: bool
    witnesses: tuple[DiversityWitness, ...] = ()
    violations: tuple[str, ...] = ()
    margin: float = float("inf")


def _triple_margin(mu0, mu, lam, k2, k3, regions, tol):
    """Return the margin of the diversity clauses for one region triple.

    The margin is the minimum over all quantities required to be nonzero;
    a nonpositive-or-below-tolerance value means the corresponding clause
    fails, and the name of the first failing clause is returned alongside.
    """
    quantities: list[float] = []
    k3s = [k3[i] for i in regions]
    betas = [k2[i] + k3[i] for i in regions]
    for a, b in combinations(range(3), 2):
        gap = abs(k3s[a] - k3s[b])
        if gap <= tol:
            return None, "k3 not pairwise distinct"
        quantities.append(gap)
        gap = abs(betas[a] - betas[b])
        if gap <= tol:
            return None, "k2+k3 not pairwise distinct"
        quantities.append(gap)
    for i, beta in zip(regions, betas):
        shift = abs(mu0 + k3[i])
        if shift <= tol:
            return None, f"mu + k3 vanishes in region {i}"
        quantities.append(shift)
        if abs(mu0 + beta) <= tol:
            # Resonant region: the disjunction holds through its first branch.
            continue
        denom = beta + mu
        keep = np.abs(denom) > tol
        total = float(np.sum(lam[keep] / denom[keep]))
        if abs(total) <= tol:
            return None, f"coefficient sum vanishes in region {i}"
        quantities.append(abs(total))
    return min(quantities), None


def region_diversity_report(
    mu: Sequence[float],
    lam: Sequence[float],
    kinetics: Sequence,
    tol: float = EQ_TOL,
) -> DiversityReport:
    """Check the region-diversity condition behind unique identifiability.

    For every arterial exponent ``mu_j0`` there must be three regions whose
    ``k3`` and ``k2 + k3`` values are pairwise distinct, whose ``mu_j0 + k3``
    does not vanish, and in which either ``mu_j0 + k2 + k3 = 0`` or the sum
    ``sum_j lambda_j / (k2 + k3 + mu_j)`` over non-resonant terms is nonzero.
    When this holds, the tissue curves of the three regions carry enough
    independent exponential structure to separate the kinetic rates.

    Parameters
    ----------
    mu, lam :
        Arterial exponents and weights (equal length, exponents distinct).
    kinetics :
        Per-region rate parameters with ``K1``/``k2``/``k3`` attributes.
    tol :
        Absolute tolerance for the equality decisions.

    Returns
    -------
    DiversityReport
        With one witness triple per exponent when satisfied, otherwise the
        failing clauses of every candidate triple.
    """
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if mu.size == 0 or lam.size != mu.size:
        raise ValueError("mu and lambda must be nonempty and of equal length")
    n = len(kinetics)
    if n < 3:
        return DiversityReport(
            satisfied=False, violations=(f"n < 3 (only {n} regions)",), margin=0.0
        )
    k2 = np.array([k.k2 for k in kinetics], dtype=float)
    k3 = np.array([k.k3 for k in kinetics], dtype=float)

    witnesses = []
    violations = []
    for j0, mu0 in enumerate(mu):
        best = None
        for triple in combinations(range(n), 3):
            margin, failure = _triple_margin(mu0, mu, lam, k2, k3, triple, tol)
            if failure is not None:
                violations.append(
                    f"exponent {j0}, regions {triple}: {failure}"
                )
            elif best is None or margin > best.margin:
                best = DiversityWitness(j0, triple, margin)
        if best is None:
            return DiversityReport(
                satisfied=False,
                witnesses=tuple(witnesses),
                violations=tuple(violations),
                margin=0.0,
            )
        witnesses.append(best)
    return DiversityReport(
        satisfied=True,
        witnesses=tuple(witnesses),
        margin=min(w.margin for w in witnesses),
    )


def has_distinct_rate_regions(
    kinetics: Sequence, p: int, tol: float = EQ_TOL
) -> bool:
    """Sufficient diversity test: is there a subset of ``p + 3`` regions whose
    ``k3`` values are pairwise distinct and whose ``k2 + k3`` values are
    pairwise distinct?

    This implies the condition checked by :func:`region_diversity_report`
    but is not necessary for it.
    """
    if p < 1:
        raise ValueError("polyexponential degree p must be >= 1")
    need = p + 3
    if len(kinetics) < need:
        return False
    k3 = np.array([k.k3 for k in kinetics], dtype=float)
    beta = np.array([k.k2 + k.k3 for k in kinetics], dtype=float)

    def pairwise_distinct(values) -> bool:
        srt = np.sort(values)
        return bool(np.all(np.diff(srt) > tol))

    for subset in combinations(range(len(kinetics)), need):
        idx = list(subset)
        if pairwise_distinct(k3[idx]) and pairwise_distinct(beta[idx]):
            return True
    return False
