"""Exhaustive-enumeration ground truth for small experiments.

Every quantity here is computed by listing the whole assignment distribution of the
design, so it is independent of the closed forms in ``design`` and ``variance``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import variance
from .design import Design, JointTables
from .estimators import Contrast, ExperimentData, evaluate, table_contrasts
from .model import (
    DistanceMatrix,
    Exposure,
    KNeighborhoods,
    all_exposures,
    build_k_neighborhoods,
    exposure_codes,
)

MAX_ASSIGNMENTS = 10**6


class EnumerationTooLarge(ValueError):
    pass


def n_assignments(design: Design) -> int:
    return math.comb(design.n, design.n_t) if design.is_crd else 2**design.n


def _guard(design: Design) -> None:
    m = n_assignments(design)
    if m > MAX_ASSIGNMENTS:
        raise EnumerationTooLarge(
            f"{design.describe()} has {m} assignments (limit {MAX_ASSIGNMENTS})"
        )


def enumerate_assignments(design: Design) -> Iterator[tuple[np.ndarray, float]]:
    """Every assignment of the design with its probability."""
    _guard(design)
    n = design.n
    if design.is_crd:
        prob = 1.0 / math.comb(n, design.n_t)
        for treated in itertools.combinations(range(n), design.n_t):
            w = np.zeros(n, dtype=np.int8)
            w[list(treated)] = 1
            yield w, prob
    else:
        p = design.p
        for bits in itertools.product((0, 1), repeat=n):
            t = sum(bits)
            yield np.array(bits, dtype=np.int8), p**t * (1 - p) ** (n - t)


def assignment_table(design: Design) -> tuple[np.ndarray, np.ndarray]:
    """All assignments stacked as an (M, n) array plus their probabilities."""
    rows, probs = zip(*enumerate_assignments(design))
    return np.vstack(rows), np.array(probs)


def exact_marginals(design: Design, nbr: KNeighborhoods) -> np.ndarray:
    """(n, 2^(K+1)) matrix of exposure probabilities by enumeration, columns in code order."""
    a, probs = assignment_table(design)
    codes = exposure_codes(nbr, a)
    out = np.zeros((nbr.n, 2 ** (nbr.k + 1)))
    for c in range(out.shape[1]):
        out[:, c] = probs @ (codes == c)
    return out


def exact_exposure_probability(design: Design, nbr: KNeighborhoods, i: int, e: Exposure) -> float:
    a, probs = assignment_table(design)
    return float(probs @ (exposure_codes(nbr, a)[:, i] == e.code))


def enumerated_codes(design: Design, nbr: KNeighborhoods) -> tuple[np.ndarray, np.ndarray]:
    """Exposure codes under every assignment, (M, n), and the assignment probabilities."""
    a, probs = assignment_table(design)
    return exposure_codes(nbr, a), probs


def exact_joint_matrix(
    design: Design,
    nbr: KNeighborhoods,
    e1: Exposure,
    e2: Exposure,
    *,
    precomputed: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """P(unit i shows e1 and unit j shows e2) for all ordered pairs, diagonal included.

    Pass ``precomputed=enumerated_codes(design, nbr)`` when calling repeatedly.
    """
    codes, probs = precomputed or enumerated_codes(design, nbr)
    ind1 = (codes == e1.code).astype(float)
    ind2 = (codes == e2.code).astype(float)
    return (ind1 * probs[:, None]).T @ ind2


def exact_joint(
    design: Design, nbr: KNeighborhoods, i: int, e_i: Exposure, j: int, e_j: Exposure
) -> float:
    a, probs = assignment_table(design)
    codes = exposure_codes(nbr, a)
    return float(probs @ ((codes[:, i] == e_i.code) & (codes[:, j] == e_j.code)))


@dataclass(frozen=True, eq=False)
class PotentialOutcomeTable:
    """y_i(e) for every unit and every exposure; column index is the exposure code."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("potential outcomes must be an (n, 2^(K+1)) array")
        k = int(round(math.log2(v.shape[1]))) - 1
        if k < 1 or 2 ** (k + 1) != v.shape[1]:
            raise ValueError(f"{v.shape[1]} columns is not 2^(K+1) for any K >= 1")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return int(round(math.log2(self.values.shape[1]))) - 1

    def outcomes(self, e: Exposure) -> np.ndarray:
        return self.values[:, e.code]

    def mean(self, e: Exposure) -> float:
        return float(self.outcomes(e).mean())

    def responses(self, codes: np.ndarray) -> np.ndarray:
        """Observed responses for exposure codes of shape (n,) or (m, n)."""
        return self.values[np.arange(self.n), codes]

    @classmethod
    def random(cls, rng: np.random.Generator, n: int, k: int, scale: float = 1.0):
        return cls(rng.normal(0.0, scale, size=(n, 2 ** (k + 1))))

    @classmethod
    def additive(cls, baseline: np.ndarray, delta_t: float, deltas) -> PotentialOutcomeTable:
        """y_i(e) = baseline_i + delta_t * own + sum_l deltas[l] * neigh[l]."""
        deltas = np.asarray(deltas, dtype=float)
        k = deltas.size
        shift = np.array([delta_t * e.own + deltas @ e.neigh for e in all_exposures(k)])
        return cls(np.asarray(baseline, float)[:, None] + shift[None, :])

    @classmethod
    def no_weak_interaction(cls, rng: np.random.Generator, n: int, k: int):
        """Random table whose average direct contrast is the same for every neighbor pattern."""
        m = 2**k
        control = rng.normal(size=(n, m))
        noise = rng.normal(size=(n, m))
        noise -= noise.mean(axis=0, keepdims=True)
        treated = control + rng.normal(size=(n, 1)) + noise
        return cls(np.hstack([control, treated]))


def estimand(pot: PotentialOutcomeTable, c: Contrast) -> float:
    """Population value the contrast is unbiased for under the design."""
    return sum(coef * pot.mean(e) for e, coef in c.coefficients().items())


def estimand_a1(pot: PotentialOutcomeTable, c: Contrast) -> float:
    """The effect an estimator targets: its A1 contrast of the same kind.

    Equal to ``estimand(pot, c)`` for A2 contrasts only when the table has no weak
    interaction between direct and indirect effects.
    """
    from .estimators import contrast

    return estimand(pot, contrast(c.kind, "A1", pot.k, c.ell))


def exact_estimator_moments(
    design: Design, nbr: KNeighborhoods, pot: PotentialOutcomeTable, c: Contrast
) -> tuple[float, float]:
    """Exact mean and variance of the contrast's estimate over the design.

    Exposure probabilities are themselves enumerated, not taken from the closed forms.
    """
    if pot.n != nbr.n or pot.k != nbr.k:
        raise ValueError("potential outcome table does not match the neighborhoods")
    a, probs = assignment_table(design)
    codes = exposure_codes(nbr, a)
    y = pot.responses(codes)
    est = np.zeros(len(probs))
    for e, coef in c.coefficients().items():
        hit = codes == e.code
        pi = probs @ hit
        if (pi <= 0).any():
            raise ValueError(f"exposure {e} has zero probability under {design.describe()}")
        est += coef * (hit * y / pi).sum(axis=1) / nbr.n
    mean = float(probs @ est)
    return mean, float(probs @ (est - mean) ** 2)


def closed_form_variance(
    design: Design,
    nbr: KNeighborhoods,
    pot: PotentialOutcomeTable,
    c: Contrast,
    tables: JointTables | None = None,
) -> float:
    """Variance from the difference (two-exposure) or pooled (four-exposure) formula."""
    tables = tables or JointTables(design, nbr)
    if c.assumption == "A1":
        e1, e2 = c.plus[0], c.minus[0]
        return variance.difference_variance(tables, e1, pot.outcomes(e1), e2, pot.outcomes(e2))
    ex = (c.plus[0], c.minus[0], c.plus[1], c.minus[1])
    return variance.halfsum_variance(
        tables, ex, tuple(pot.outcomes(e) for e in ex), c.weights
    )


@dataclass(frozen=True)
class ConservativenessReport:
    exact_var: float
    expected_var_estimate: float

    @property
    def slack(self) -> float:
        return self.expected_var_estimate - self.exact_var


@dataclass(frozen=True)
class Moments:
    """Moments of the production estimator over the whole design, one entry per contrast."""

    mean: list[float]
    var: list[float]
    expected_var_estimate: list[float]


def estimator_moments(
    design: Design,
    nbr: KNeighborhoods,
    pot: PotentialOutcomeTable,
    contrasts: list[Contrast],
    *,
    floor: bool = False,
) -> Moments:
    """Run ``estimators.evaluate`` on every assignment and average point and variance estimates."""
    tables = JointTables(design, nbr)
    probs, ests, vars_ = [], [], []
    for w, prob in enumerate_assignments(design):
        y = pot.responses(exposure_codes(nbr, w))
        data = ExperimentData(nbr, design, w, y, tables=tables)
        res = [evaluate(data, c, floor=floor) for c in contrasts]
        probs.append(prob)
        ests.append([r.estimate for r in res])
        vars_.append([r.variance for r in res])
    probs = np.array(probs)
    ests, vars_ = np.array(ests), np.array(vars_)
    mean = probs @ ests
    var = probs @ (ests - mean) ** 2
    return Moments(mean.tolist(), var.tolist(), (probs @ vars_).tolist())


def expected_variance_estimate(
    design: Design,
    nbr: KNeighborhoods,
    pot: PotentialOutcomeTable,
    contrasts: list[Contrast],
    *,
    floor: bool = False,
) -> list[float]:
    """E[variance estimate] for each contrast over all assignments."""
    return estimator_moments(design, nbr, pot, contrasts, floor=floor).expected_var_estimate


def verify_conservative(
    design: Design, nbr: KNeighborhoods, pot: PotentialOutcomeTable, c: Contrast
) -> ConservativenessReport:
    exact = exact_estimator_moments(design, nbr, pot, c)[1]
    expected = expected_variance_estimate(design, nbr, pot, [c])[0]
    return ConservativenessReport(exact, expected)


# Verification battery shared by the CLI and the acceptance suite.


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""


@dataclass
class Battery:
    seed: int
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, worst: float, tol: float, *, lower: bool = False, detail: str = ""):
        """Record a check; ``worst`` must be <= tol, or >= -tol when ``lower``."""
        ok = worst >= -tol if lower else worst <= tol
        self.checks.append(CheckResult(name, bool(ok), float(worst), tol, detail))


def random_instance(
    rng: np.random.Generator, n: int, k: int, crd: bool, p: float = 0.5
) -> tuple[Design, KNeighborhoods]:
    d = rng.uniform(0.0, 1.0, size=(n, n))
    if rng.random() < 0.3:
        d = np.round(d * 4) / 4  # coarse grid forces distance ties
    nbr = build_k_neighborhoods(DistanceMatrix(d), k)
    design = Design.crd(n, n // 2) if crd else Design.bernoulli(n, p)
    return design, nbr


def check_probabilities(design: Design, nbr: KNeighborhoods) -> float:
    """Largest gap between closed-form and enumerated marginal/joint probabilities."""
    a, probs = assignment_table(design)
    codes = exposure_codes(nbr, a)
    tables = JointTables(design, nbr)
    exposures = all_exposures(nbr.k)
    marg = exact_marginals(design, nbr)
    worst = max(abs(marg[:, e.code] - tables.marginal(e)).max() for e in exposures)
    for e1 in exposures:
        for e2 in exposures:
            exact = exact_joint_matrix(design, nbr, e1, e2, precomputed=(codes, probs))
            worst = max(worst, float(abs(exact - tables.joint_matrix(e1, e2)).max()))
    return worst


def run_battery(
    seed: int = 0,
    *,
    n_prob_instances: int = 50,
    prob_sizes: tuple[int, ...] = (6, 8, 10, 12),
    n_tables: int = 20,
    table_n: int = 8,
    table_ks: tuple[int, ...] = (1, 2),
) -> Battery:
    """Closed forms, unbiasedness, variance identities and conservativeness vs enumeration."""
    rng = np.random.default_rng(seed)
    bat = Battery(seed)

    worst = 0.0
    for idx in range(n_prob_instances):
        n = prob_sizes[idx % len(prob_sizes)]
        k = (1, 2, 3)[(idx // len(prob_sizes)) % 3]
        design, nbr = random_instance(rng, n, k, crd=idx % 2 == 0, p=rng.uniform(0.2, 0.8))
        worst = max(worst, check_probabilities(design, nbr))
    bat.add("probabilities: closed form vs enumeration", worst, 1e-12)

    unbiased = unbiased_a2 = agree = var_gap = 0.0
    slack = math.inf
    for idx in range(n_tables):
        k = table_ks[idx % len(table_ks)]
        for crd in (True, False):
            design, nbr = random_instance(rng, table_n, k, crd)
            tables = JointTables(design, nbr)
            contrasts = table_contrasts(k)
            pot = PotentialOutcomeTable.random(rng, table_n, k)
            nwi = PotentialOutcomeTable.no_weak_interaction(rng, table_n, k)
            prod = estimator_moments(design, nbr, pot, contrasts)
            prod_nwi = estimator_moments(design, nbr, nwi, contrasts)
            for ic, c in enumerate(contrasts):
                mean, var = exact_estimator_moments(design, nbr, pot, c)
                agree = max(agree, abs(mean - prod.mean[ic]), abs(var - prod.var[ic]))
                unbiased = max(unbiased, abs(mean - estimand(pot, c)), abs(prod.mean[ic] - estimand(pot, c)))
                var_gap = max(
                    var_gap, abs(var - closed_form_variance(design, nbr, pot, c, tables))
                )
                slack = min(slack, prod.expected_var_estimate[ic] - var)
                unbiased_a2 = max(unbiased_a2, abs(prod_nwi.mean[ic] - estimand_a1(nwi, c)))
    bat.add("estimator moments: production path = oracle path", agree, 1e-10)
    bat.add("unbiasedness: E[estimate] = estimand", unbiased, 1e-10)
    bat.add("unbiasedness (A2 tables): E[estimate] = effect", unbiased_a2, 1e-10)
    bat.add("closed-form variance = enumerated variance", var_gap, 1e-10)
    bat.add("conservativeness: E[var estimate] - Var", slack, 1e-10, lower=True)
    return bat
