"""Interaction structure: distances, K-neighborhoods and exposure classification."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterator, Literal, Sequence

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Pairwise interaction distances; row ``i`` holds unit i's view of the others.

    Smaller values mean stronger interaction. ``+inf`` marks a pair that never
    interacts. The diagonal is ignored.
    """

    d: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {d.shape}")
        if d.shape[0] < 2:
            raise ValueError("need at least 2 units")
        off = ~np.eye(d.shape[0], dtype=bool)
        if np.isnan(d[off]).any():
            raise ValueError("distance matrix contains NaN")
        if (d[off] < 0).any():
            raise ValueError("distances must be nonnegative")
        object.__setattr__(self, "d", _frozen(d))

    @property
    def n(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True, eq=False)
class KNeighborhoods:
    """Ordered K nearest neighbors of every unit (0-based indices).

    ``neighbors[i, l]`` is the (l+1)-th nearest neighbor of unit ``i``.
    """

    neighbors: np.ndarray

    def __post_init__(self) -> None:
        nb = np.asarray(self.neighbors, dtype=np.intp)
        if nb.ndim != 2 or nb.shape[1] < 1:
            raise ValueError("neighbors must be an (n, K) array with K >= 1")
        n, k = nb.shape
        if k > n - 1:
            raise ValueError(f"K={k} too large for n={n}")
        if nb.min() < 0 or nb.max() >= n:
            raise ValueError("neighbor index out of range")
        if (nb == np.arange(n)[:, None]).any():
            raise ValueError("a unit cannot be its own neighbor")
        srt = np.sort(nb, axis=1)
        if (srt[:, 1:] == srt[:, :-1]).any():
            raise ValueError("duplicate neighbor in a row")
        object.__setattr__(self, "neighbors", _frozen(nb))

    @property
    def n(self) -> int:
        return self.neighbors.shape[0]

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]

    @property
    def closed(self) -> np.ndarray:
        """(n, K+1) array: each unit followed by its ordered neighbors."""
        return np.column_stack([np.arange(self.n), self.neighbors])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KNeighborhoods):
            return NotImplemented
        return np.array_equal(self.neighbors, other.neighbors)

    def __hash__(self) -> int:
        return hash(self.neighbors.tobytes())


@dataclass(frozen=True, order=True)
class Exposure:
    """Treatment pattern on a closed neighborhood: own bit plus K ordered neighbor bits."""

    own: int
    neigh: tuple[int, ...]

    def __post_init__(self) -> None:
        neigh = tuple(int(b) for b in self.neigh)
        if self.own not in (0, 1) or any(b not in (0, 1) for b in neigh):
            raise ValueError("exposure bits must be 0 or 1")
        if not neigh:
            raise ValueError("exposure needs at least one neighbor bit")
        object.__setattr__(self, "own", int(self.own))
        object.__setattr__(self, "neigh", neigh)

    @property
    def k(self) -> int:
        return len(self.neigh)

    @property
    def bits(self) -> tuple[int, ...]:
        return (self.own, *self.neigh)

    @property
    def n_treated(self) -> int:
        return sum(self.bits)

    @property
    def code(self) -> int:
        """Integer code: own bit is the most significant, the nearest neighbor next."""
        c = 0
        for b in self.bits:
            c = (c << 1) | b
        return c

    @classmethod
    def from_code(cls, code: int, k: int) -> Exposure:
        if not 0 <= code < 2 ** (k + 1):
            raise ValueError(f"code {code} out of range for K={k}")
        bits = [(code >> (k - p)) & 1 for p in range(k + 1)]
        return cls(bits[0], tuple(bits[1:]))

    def label(self) -> str:
        return f"({self.own},{''.join(map(str, self.neigh))})"

    def __str__(self) -> str:
        return self.label()


def all_exposures(k: int) -> list[Exposure]:
    """All 2^(K+1) exposures in code order."""
    return [Exposure(b[0], b[1:]) for b in product((0, 1), repeat=k + 1)]


def build_k_neighborhoods(dist: DistanceMatrix, k: int) -> KNeighborhoods:
    """K nearest neighbors per unit; ties go to the smaller unit index."""
    n = dist.n
    if not 1 <= k <= n - 1:
        raise ValueError(f"K must be in [1, {n - 1}], got {k}")
    d = np.array(dist.d, dtype=float)
    # NaN sorts after +inf, so the unit itself always lands last.
    np.fill_diagonal(d, np.nan)
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    picked = np.take_along_axis(d, order, axis=1)
    if not np.isfinite(picked).all():
        bad = sorted(set(np.nonzero(~np.isfinite(picked))[0].tolist()))
        raise ValueError(
            f"non-finite distance needed to fill K={k} neighbors for units {bad}"
        )
    return KNeighborhoods(order)


def classify_exposure(nbr: KNeighborhoods, w: Sequence[int], i: int) -> Exposure:
    w = np.asarray(w)
    if w.shape != (nbr.n,):
        raise ValueError(f"assignment length {w.shape} does not match n={nbr.n}")
    if not 0 <= i < nbr.n:
        raise IndexError(f"unit index {i} out of range")
    return Exposure(int(w[i]), tuple(int(b) for b in w[nbr.neighbors[i]]))


def exposure_codes(nbr: KNeighborhoods, w: Sequence[int]) -> np.ndarray:
    """Exposure code of every unit under assignment ``w`` (vectorized classify)."""
    w = np.asarray(w, dtype=np.int64)
    if w.shape[-1] != nbr.n:
        raise ValueError(f"assignment length {w.shape[-1]} does not match n={nbr.n}")
    k = nbr.k
    weights = 1 << np.arange(k, -1, -1)
    # works for a single assignment (n,) or a stack of them (m, n)
    return (w[..., nbr.closed] * weights).sum(axis=-1)


def canonical_exposure(
    kind: Literal["all_ones", "all_zeros", "w_star"],
    own: int,
    k: int,
    ell: int | None = None,
) -> Exposure:
    """The reference exposures used by the effect estimators.

    ``w_star`` treats the first ``ell`` nearest neighbors and controls the rest.
    """
    if kind == "all_ones":
        ell = k
    elif kind == "all_zeros":
        ell = 0
    elif kind == "w_star":
        if ell is None or not 0 <= ell <= k:
            raise ValueError(f"ell must be in [0, {k}], got {ell}")
    else:
        raise ValueError(f"unknown canonical exposure kind {kind!r}")
    return Exposure(own, (1,) * ell + (0,) * (k - ell))


def w_star(ell: int, own: int, k: int) -> Exposure:
    return canonical_exposure("w_star", own, k, ell)


def exposure_counts(nbr: KNeighborhoods, w: Sequence[int]) -> dict[Exposure, int]:
    """Observed count of every exposure (zeros included), keyed in code order."""
    codes = exposure_codes(nbr, w)
    counts = np.bincount(codes, minlength=2 ** (nbr.k + 1))
    return {e: int(counts[e.code]) for e in all_exposures(nbr.k)}


def count_grid(counts: dict[Exposure, int], k: int) -> Iterator[tuple[str, list[int]]]:
    """Rows (Treated, Control) by neighbor pattern columns, like a Direct x Indirect table."""
    patterns = list(product((0, 1), repeat=k))
    for own, name in ((1, "Treated"), (0, "Control")):
        yield name, [counts[Exposure(own, p)] for p in patterns]


def neighbor_patterns(k: int) -> list[str]:
    return ["(" + ",".join(map(str, p)) + ")" for p in product((0, 1), repeat=k)]
