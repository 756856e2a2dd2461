"""Closed-form marginal and joint exposure probabilities for CRD and Bernoulli designs."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .model import Exposure, KNeighborhoods, all_exposures


@dataclass(frozen=True)
class Design:
    """Completely randomized (``n_t`` treated of ``n``) or Bernoulli(``p``) design."""

    n: int
    n_t: int | None = None
    p: float | None = None

    def __post_init__(self) -> None:
        if (self.n_t is None) == (self.p is None):
            raise ValueError("give exactly one of n_t (CRD) or p (Bernoulli)")
        if self.n < 2:
            raise ValueError("design needs n >= 2")
        if self.n_t is not None and not 0 < self.n_t < self.n:
            raise ValueError(f"CRD needs 0 < n_t < n, got n_t={self.n_t}, n={self.n}")
        if self.p is not None and not 0.0 < self.p < 1.0:
            raise ValueError(f"Bernoulli needs 0 < p < 1, got {self.p}")

    @classmethod
    def crd(cls, n: int, n_t: int) -> Design:
        return cls(n=n, n_t=n_t)

    @classmethod
    def bernoulli(cls, n: int, p: float) -> Design:
        return cls(n=n, p=p)

    @property
    def is_crd(self) -> bool:
        return self.n_t is not None

    def describe(self) -> str:
        if self.is_crd:
            return f"CRD(n={self.n}, n_t={self.n_t})"
        return f"Bernoulli(n={self.n}, p={self.p})"


def binom(n: int, k: int) -> int:
    """Exact binomial coefficient, zero outside 0 <= k <= n."""
    if n < 0 or k < 0 or k > n:
        return 0
    return math.comb(n, k)


def binom_ratio(n1: int, k1: int, n2: int, k2: int) -> float:
    """C(n1, k1) / C(n2, k2) correctly rounded; zero when the numerator vanishes.

    Python's int / int division rounds the exact rational, so there is no overflow
    or cancellation at any N.
    """
    num = binom(n1, k1)
    if num == 0:
        return 0.0
    den = binom(n2, k2)
    if den == 0:
        raise ZeroDivisionError(f"C({n2}, {k2}) is zero")
    return num / den


@dataclass(frozen=True)
class PairOverlap:
    b_ij: int
    compatible: bool
    n_itK: int
    n_icK: int
    n_jitK: int
    n_jicK: int


def _check_unit(nbr: KNeighborhoods, i: int) -> None:
    if not 0 <= i < nbr.n:
        raise IndexError(f"unit index {i} out of range for n={nbr.n}")


def _check_k(nbr: KNeighborhoods, *exposures: Exposure) -> None:
    for e in exposures:
        if e.k != nbr.k:
            raise ValueError(f"exposure {e} has K={e.k}, neighborhoods have K={nbr.k}")


def check_compatibility(
    nbr: KNeighborhoods, i: int, e_i: Exposure, j: int, e_j: Exposure
) -> PairOverlap:
    """Overlap counts of two closed neighborhoods and whether e_i, e_j can co-occur."""
    _check_unit(nbr, i)
    _check_unit(nbr, j)
    if i == j:
        raise ValueError("compatibility is defined for two distinct units")
    _check_k(nbr, e_i, e_j)
    closed_i = [i, *nbr.neighbors[i].tolist()]
    closed_j = [j, *nbr.neighbors[j].tolist()]
    bit_i = dict(zip(closed_i, e_i.bits))
    compatible = True
    b = n_jit = n_jic = 0
    for u, bj in zip(closed_j, e_j.bits):
        if u in bit_i:
            b += 1
            compatible &= bit_i[u] == bj
        elif bj:
            n_jit += 1
        else:
            n_jic += 1
    n_it = e_i.n_treated
    return PairOverlap(b, compatible, n_it, nbr.k + 1 - n_it, n_jit, n_jic)


def _check_design(design: Design, nbr: KNeighborhoods) -> None:
    if design.n != nbr.n:
        raise ValueError(f"design has n={design.n} but neighborhoods have n={nbr.n}")


def exposure_probability(design: Design, k: int, n_treated: int) -> float:
    """Probability that a given closed neighborhood of size K+1 shows a pattern
    with ``n_treated`` treated units. The same for every unit."""
    n_control = k + 1 - n_treated
    if design.is_crd:
        return binom_ratio(design.n - k - 1, design.n_t - n_treated, design.n, design.n_t)
    return design.p**n_treated * (1.0 - design.p) ** n_control


def marginal_probability(
    design: Design, nbr: KNeighborhoods, i: int, e: Exposure
) -> float:
    _check_design(design, nbr)
    _check_unit(nbr, i)
    _check_k(nbr, e)
    return exposure_probability(design, nbr.k, e.n_treated)


def _joint_from_counts(design: Design, k: int, b: int, n_it: int, n_jit: int) -> float:
    n_jic = k + 1 - b - n_jit
    if design.is_crd:
        # C(N-K-1, Nt-n_it)/C(N,Nt) * C(N-2K-2+b, Nt-n_it-n_jit)/C(N-K-1, Nt-n_it)
        return binom_ratio(
            design.n - 2 * k - 2 + b, design.n_t - n_it - n_jit, design.n, design.n_t
        )
    p = design.p
    return p ** (n_it + n_jit) * (1.0 - p) ** (k + 1 - n_it + n_jic)


def joint_probability(
    design: Design, nbr: KNeighborhoods, i: int, e_i: Exposure, j: int, e_j: Exposure
) -> float:
    """P(unit i shows e_i and unit j shows e_j) for distinct units."""
    _check_design(design, nbr)
    ov = check_compatibility(nbr, i, e_i, j, e_j)
    if not ov.compatible:
        return 0.0
    return _joint_from_counts(design, nbr.k, ov.b_ij, ov.n_itK, ov.n_jitK)


def all_marginals(design: Design, nbr: KNeighborhoods, i: int) -> dict[Exposure, float]:
    _check_design(design, nbr)
    _check_unit(nbr, i)
    return {e: exposure_probability(design, nbr.k, e.n_treated) for e in all_exposures(nbr.k)}


def position_matrix(nbr: KNeighborhoods) -> np.ndarray:
    """``pos[i, u]`` = position of unit u in i's closed neighborhood, or -1."""
    n, k = nbr.n, nbr.k
    pos = np.full((n, n), -1, dtype=np.int8)
    rows = np.repeat(np.arange(n), k + 1)
    pos[rows, nbr.closed.ravel()] = np.tile(np.arange(k + 1), n)
    return pos


@dataclass(frozen=True)
class PairTable:
    """Joint probabilities of (e1 at row unit, e2 at column unit) over all ordered pairs.

    The diagonal holds P(unit i shows e1 and e2), i.e. pi_i(e1) when e1 == e2 and
    0 otherwise. ``q`` is (pi_ij - pi_i pi_j) / pi_ij where pi_ij > 0 and 0 elsewhere;
    ``zero_rows[i]`` / ``zero_cols[j]`` count the zero-probability cells per row / column.
    """

    joint: np.ndarray
    pi1: float
    pi2: float
    q: np.ndarray
    zero: np.ndarray
    zero_rows: np.ndarray
    zero_cols: np.ndarray


class JointTables:
    """Per-(design, neighborhoods) cache of exposure-pair probability matrices.

    Everything here is a function of the design and the neighborhoods only, so a
    simulation can share one instance across replications.
    """

    def __init__(self, design: Design, nbr: KNeighborhoods) -> None:
        _check_design(design, nbr)
        self.design = design
        self.nbr = nbr
        self._lock = threading.Lock()
        self._cache: dict[tuple[Exposure, Exposure], PairTable] = {}
        self._overlap: np.ndarray | None = None

    def marginal(self, e: Exposure) -> float:
        _check_k(self.nbr, e)
        return exposure_probability(self.design, self.nbr.k, e.n_treated)

    def _positions(self) -> np.ndarray:
        # P[i, j, q] = position in i's closed neighborhood of the q-th unit of j's, or -1
        if self._overlap is None:
            self._overlap = position_matrix(self.nbr)[:, self.nbr.closed]
        return self._overlap

    def joint_matrix(self, e1: Exposure, e2: Exposure) -> np.ndarray:
        _check_k(self.nbr, e1, e2)
        k = self.nbr.k
        pos = self._positions()
        b1 = np.array([*e1.bits, 2], dtype=np.int8)
        b2 = np.array(e2.bits, dtype=np.int8)
        v = b1[pos]  # e1's bit for each of j's closed units, 2 where not shared
        shared = v != 2
        conflict = (shared & (v != b2)).any(axis=2)
        b = shared.sum(axis=2)
        n_jit = ((~shared) & (b2 == 1)).sum(axis=2)
        n_it = e1.n_treated
        lut = np.array(
            [[_joint_from_counts(self.design, k, bb, n_it, m) for m in range(k + 2)]
             for bb in range(k + 2)]
        )
        out = lut[b, n_jit]
        out[conflict] = 0.0
        return out

    def pair(self, e1: Exposure, e2: Exposure) -> PairTable:
        key = (e1, e2)
        tab = self._cache.get(key)
        if tab is not None:
            return tab
        joint = self.joint_matrix(e1, e2)
        pi1, pi2 = self.marginal(e1), self.marginal(e2)
        zero = joint == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(zero, 0.0, (joint - pi1 * pi2) / joint)
        tab = PairTable(
            joint=joint,
            pi1=pi1,
            pi2=pi2,
            q=q,
            zero=zero,
            zero_rows=zero.sum(axis=1).astype(float),
            zero_cols=zero.sum(axis=0).astype(float),
        )
        with self._lock:
            self._cache.setdefault(key, tab)
        return self._cache[key]
