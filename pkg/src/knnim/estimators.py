"""Horvitz-Thompson exposure means and the effect estimators built from them."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .design import Design, JointTables
from .model import Exposure, KNeighborhoods, canonical_exposure, exposure_codes, w_star

log = logging.getLogger(__name__)

Kind = Literal["total", "direct", "indirect", "nn"]
Assumption = Literal["A1", "A2"]

MIN_EXPOSURE_COUNT = 30


def _label(kind: str, assumption: str, ell: int | None) -> str:
    base = {"total": "tot", "direct": "dir", "indirect": "ind"}.get(kind, f"nn{ell}")
    return base + ("*" if assumption == "A2" else "")


class PositivityError(ValueError):
    """An exposure required by an estimator has zero probability for some units."""

    def __init__(self, exposure: Exposure, units: Sequence[int]):
        self.exposure = exposure
        self.units = list(units)
        shown = ", ".join(map(str, self.units[:10]))
        more = "" if len(self.units) <= 10 else f" (+{len(self.units) - 10} more)"
        super().__init__(
            f"exposure {exposure} has zero probability for units {shown}{more}"
        )


@dataclass(frozen=True)
class Weights:
    c1: float = 0.5
    c2: float = 0.5

    def __post_init__(self) -> None:
        if not math.isclose(self.c1 + self.c2, 1.0, rel_tol=0.0, abs_tol=1e-12):
            raise ValueError(f"weights must sum to 1, got {self.c1} + {self.c2}")

    @property
    def is_default(self) -> bool:
        return self.c1 == 0.5 and self.c2 == 0.5


@dataclass(frozen=True)
class Contrast:
    """An estimator as a signed combination of HT exposure means.

    A1 contrasts are ``mean(plus[0]) - mean(minus[0])``. A2 contrasts are
    ``c1 (mean(e) - mean(e')) + c2 (mean(e*) - mean(e*'))`` with
    ``(e, e', e*, e*') = (plus[0], minus[0], plus[1], minus[1])``.
    """

    kind: Kind
    assumption: Assumption
    plus: tuple[Exposure, ...]
    minus: tuple[Exposure, ...]
    weights: Weights = Weights()
    ell: int | None = None

    @property
    def label(self) -> str:
        return _label(self.kind, self.assumption, self.ell)

    @property
    def exposures(self) -> tuple[Exposure, ...]:
        return tuple(dict.fromkeys(self.plus + self.minus))

    def coefficients(self) -> dict[Exposure, float]:
        coefs: dict[Exposure, float] = {}
        scale = (1.0,) if self.assumption == "A1" else (self.weights.c1, self.weights.c2)
        for c, ep, em in zip(scale, self.plus, self.minus):
            coefs[ep] = coefs.get(ep, 0.0) + c
            coefs[em] = coefs.get(em, 0.0) - c
        return coefs


def contrast(
    kind: Kind,
    assumption: Assumption,
    k: int,
    ell: int | None = None,
    weights: Weights | None = None,
) -> Contrast:
    """Build the contrast behind one row of the estimate table."""
    weights = weights or Weights()
    if kind == "nn":
        if ell is None or not 1 <= ell <= k:
            raise ValueError(f"nn estimator needs 1 <= ell <= K={k}, got {ell}")
    elif ell is not None:
        raise ValueError(f"ell only applies to nn estimators, not {kind!r}")
    ones = lambda own: canonical_exposure("all_ones", own, k)  # noqa: E731
    zeros = lambda own: canonical_exposure("all_zeros", own, k)  # noqa: E731
    if kind == "total":
        if assumption != "A1":
            raise ValueError("the total effect has a single (A1) estimator")
        return Contrast("total", "A1", (ones(1),), (zeros(0),))
    if assumption == "A1":
        pairs = {
            "direct": (ones(1), ones(0)),
            "indirect": (ones(0), zeros(0)),
        }
        if kind == "nn":
            hi, lo = w_star(ell, 0, k), w_star(ell - 1, 0, k)
        else:
            hi, lo = pairs[kind]
        return Contrast(kind, "A1", (hi,), (lo,), ell=ell)
    if assumption != "A2":
        raise ValueError(f"unknown assumption {assumption!r}")
    if kind == "direct":
        plus, minus = (ones(1), zeros(1)), (ones(0), zeros(0))
    elif kind == "indirect":
        plus, minus = (ones(1), ones(0)), (zeros(1), zeros(0))
    elif kind == "nn":
        plus = (w_star(ell, 1, k), w_star(ell, 0, k))
        minus = (w_star(ell - 1, 1, k), w_star(ell - 1, 0, k))
    else:
        raise ValueError(f"unknown estimator kind {kind!r}")
    return Contrast(kind, "A2", plus, minus, weights=weights, ell=ell)


def table_contrasts(k: int, weights: Weights | None = None) -> list[Contrast]:
    """Row set of the estimate table: tot, dir, dir*, ind, ind*, nn1, nn1*, ..."""
    rows = [contrast("total", "A1", k)]
    for kind in ("direct", "indirect"):
        rows += [contrast(kind, "A1", k), contrast(kind, "A2", k, weights=weights)]
    for ell in range(1, k + 1):
        rows += [contrast("nn", "A1", k, ell), contrast("nn", "A2", k, ell, weights)]
    return rows


@dataclass(frozen=True, eq=False)
class ExperimentData:
    """A realized experiment: neighborhoods, design, assignment and responses."""

    nbr: KNeighborhoods
    design: Design
    w: np.ndarray
    y: np.ndarray
    tables: JointTables | None = field(default=None, repr=False)
    codes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        w = np.asarray(self.w)
        y = np.array(self.y, dtype=float)
        n = self.nbr.n
        if self.design.n != n:
            raise ValueError(f"design has n={self.design.n}, neighborhoods have n={n}")
        if w.shape != (n,) or y.shape != (n,):
            raise ValueError(f"assignment and responses must have length {n}")
        if not np.isin(w, (0, 1)).all():
            raise ValueError("assignment entries must be 0 or 1")
        if not np.isfinite(y).all():
            raise ValueError("responses must be finite")
        if self.design.is_crd and int(w.sum()) != self.design.n_t:
            raise ValueError(
                f"assignment treats {int(w.sum())} units but the CRD fixes n_t={self.design.n_t}"
            )
        w = w.astype(np.int8)
        w.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "y", y)
        codes = exposure_codes(self.nbr, w)
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)
        tables = self.tables
        if tables is None:
            tables = JointTables(self.design, self.nbr)
        elif tables.design != self.design or tables.nbr != self.nbr:
            raise ValueError("shared probability tables belong to another design or graph")
        object.__setattr__(self, "tables", tables)
        for code in np.unique(codes):
            e = Exposure.from_code(int(code), self.nbr.k)
            if tables.marginal(e) <= 0.0:
                raise PositivityError(e, np.nonzero(codes == code)[0].tolist())

    @property
    def n(self) -> int:
        return self.nbr.n

    def indicator(self, e: Exposure) -> np.ndarray:
        return (self.codes == e.code).astype(float)

    def count(self, e: Exposure) -> int:
        return int((self.codes == e.code).sum())


@dataclass(frozen=True)
class EffectEstimate:
    kind: Kind
    assumption: Assumption
    estimate: float
    variance: float
    ell: int | None = None

    @property
    def se(self) -> float:
        return math.sqrt(self.variance)

    @property
    def label(self) -> str:
        return _label(self.kind, self.assumption, self.ell)


def require_positive(data: ExperimentData, exposures: Sequence[Exposure]) -> None:
    for e in exposures:
        if data.tables.marginal(e) <= 0.0:
            raise PositivityError(e, range(data.n))


def ht_mean(data: ExperimentData, e: Exposure) -> float:
    """HT estimate of the average potential outcome under exposure ``e``."""
    mask = data.codes == e.code
    if not mask.any():
        return 0.0
    pi = data.tables.marginal(e)
    if pi <= 0.0:
        raise PositivityError(e, np.nonzero(mask)[0].tolist())
    return float(data.y[mask].sum() / pi / data.n)


def evaluate(data: ExperimentData, c: Contrast, *, floor: bool = True) -> EffectEstimate:
    """Point estimate and conservative variance of one contrast."""
    from . import variance

    require_positive(data, c.exposures)
    means = {e: ht_mean(data, e) for e in c.exposures}
    if c.assumption == "A1":
        est = means[c.plus[0]] - means[c.minus[0]]
        var = variance.var_difference_hat(data, c.plus[0], c.minus[0], floor=floor)
    else:
        w = c.weights
        est = w.c1 * (means[c.plus[0]] - means[c.minus[0]]) + w.c2 * (
            means[c.plus[1]] - means[c.minus[1]]
        )
        var = variance.var_halfsum_hat(
            data, c.plus[0], c.minus[0], c.plus[1], c.minus[1], w, floor=floor
        )
    return EffectEstimate(c.kind, c.assumption, est, var, c.ell)


def estimate_a1(data: ExperimentData, kind: Kind, ell: int | None = None) -> EffectEstimate:
    return evaluate(data, contrast(kind, "A1", data.nbr.k, ell))


def estimate_a2(
    data: ExperimentData,
    kind: Kind,
    weights: Weights | None = None,
    ell: int | None = None,
) -> EffectEstimate:
    """Pooled estimator valid under no weak direct/indirect interaction.

    The total effect has no pooled form; ``kind="total"`` returns the A1 estimate.
    """
    if kind == "total":
        return estimate_a1(data, "total")
    return evaluate(data, contrast(kind, "A2", data.nbr.k, ell, weights))


def estimate_all(data: ExperimentData, weights: Weights | None = None) -> list[EffectEstimate]:
    return [evaluate(data, c) for c in table_contrasts(data.nbr.k, weights)]


def low_count_exposures(
    data: ExperimentData, weights: Weights | None = None, threshold: int = MIN_EXPOSURE_COUNT
) -> dict[Exposure, int]:
    """Estimator-relevant exposures observed fewer than ``threshold`` times."""
    needed: dict[Exposure, None] = {}
    for c in table_contrasts(data.nbr.k, weights):
        needed.update(dict.fromkeys(c.exposures))
    low = {e: data.count(e) for e in sorted(needed)}
    low = {e: n for e, n in low.items() if n < threshold}
    for e, n in low.items():
        log.warning("exposure %s observed %d times (< %d)", e, n, threshold)
    return low


def decomposition_gaps(
    estimates: Sequence[EffectEstimate], weights: Weights | None = None
) -> dict[str, float]:
    """Absolute gaps of the additive identities among estimates of one realization.

    The pooled (A2) identities only hold at c1 = c2 = 1/2.
    """
    weights = weights or Weights()
    if not weights.is_default:
        raise ValueError("decomposition identities require c1 = c2 = 1/2")
    by = {e.label: e.estimate for e in estimates}
    k = sum(1 for lbl in by if lbl.startswith("nn") and not lbl.endswith("*"))
    nn = sum(by[f"nn{l}"] for l in range(1, k + 1))
    nn_star = sum(by[f"nn{l}*"] for l in range(1, k + 1))
    return {
        "tot=dir+ind": abs(by["tot"] - by["dir"] - by["ind"]),
        "ind=sum nn": abs(by["ind"] - nn),
        "tot=dir*+ind*": abs(by["tot"] - by["dir*"] - by["ind*"]),
        "ind*=sum nn*": abs(by["ind*"] - nn_star),
    }
