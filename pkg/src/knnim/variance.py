"""Conservative variance estimation for HT exposure means and their contrasts.

Pairs with zero joint probability cannot be estimated unbiasedly; their share of the
variance is bounded with Young's inequality, which gives the ``a_var`` correction for
variances and the lower / upper covariance bounds ``cov_a`` / ``cov_b``.

All pair sums run over ordered pairs (i, j). The diagonal i == j is governed by the
joint table: for one exposure it has probability pi_i > 0 and is the usual
(1 - pi_i)(Y_i / pi_i)^2 term, for two distinct exposures it has probability 0 and
falls into the correction set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .design import JointTables
from .model import Exposure

if TYPE_CHECKING:
    from .estimators import ExperimentData, Weights

log = logging.getLogger(__name__)


def _pair_terms(data: ExperimentData, e1: Exposure, e2: Exposure) -> tuple[float, float]:
    """(HT pair sum over nonzero-probability cells, Young correction) for (e1, e2)."""
    tab = data.tables.pair(e1, e2)
    y = data.y
    n2 = float(data.n) ** 2
    idx1 = np.flatnonzero(data.codes == e1.code)
    idx2 = np.flatnonzero(data.codes == e2.code)
    if idx1.size == 0 and idx2.size == 0:
        return 0.0, 0.0
    u1 = y[idx1] / tab.pi1
    u2 = y[idx2] / tab.pi2
    ht = float(u1 @ tab.q[np.ix_(idx1, idx2)] @ u2) if idx1.size and idx2.size else 0.0
    corr = (y[idx1] ** 2 / (2 * tab.pi1)) @ tab.zero_rows[idx1]
    corr += (y[idx2] ** 2 / (2 * tab.pi2)) @ tab.zero_cols[idx2]
    return ht / n2, float(corr) / n2


def _require_positive(data: ExperimentData, *exposures: Exposure) -> None:
    from .estimators import require_positive

    require_positive(data, exposures)


def var_ht_hat(data: ExperimentData, e: Exposure) -> float:
    """Standard HT variance estimate of the exposure mean, zero-probability pairs skipped."""
    _require_positive(data, e)
    return _pair_terms(data, e, e)[0]


def a_var_hat(data: ExperimentData, e: Exposure) -> float:
    """Young's-inequality correction for pairs that can never share exposure ``e``."""
    _require_positive(data, e)
    return _pair_terms(data, e, e)[1]


def var_a(data: ExperimentData, e: Exposure) -> float:
    """Conservative variance estimate of the HT mean for ``e``."""
    _require_positive(data, e)
    ht, corr = _pair_terms(data, e, e)
    return ht + corr


def _distinct(*exposures: Exposure) -> None:
    if len(set(exposures)) != len(exposures):
        raise ValueError(f"exposures must be distinct, got {[str(e) for e in exposures]}")


def cov_ht_hat(data: ExperimentData, e1: Exposure, e2: Exposure) -> float:
    _distinct(e1, e2)
    _require_positive(data, e1, e2)
    return _pair_terms(data, e1, e2)[0]


def cov_bounds(data: ExperimentData, e1: Exposure, e2: Exposure) -> tuple[float, float]:
    """Estimates whose expectations bracket Cov(mean(e1), mean(e2)) from below and above."""
    _distinct(e1, e2)
    _require_positive(data, e1, e2)
    ht, corr = _pair_terms(data, e1, e2)
    return ht - corr, ht + corr


def _floored(value: float, what: str, floor: bool) -> float:
    if value < 0.0 and floor:
        log.warning("negative variance estimate %.6g for %s floored at 0", value, what)
        return 0.0
    return value


def var_difference_hat(
    data: ExperimentData, e1: Exposure, e2: Exposure, *, floor: bool = True
) -> float:
    """Conservative variance of mean(e1) - mean(e2)."""
    _distinct(e1, e2)
    _require_positive(data, e1, e2)
    value = var_a(data, e1) + var_a(data, e2) - 2.0 * cov_bounds(data, e1, e2)[0]
    return _floored(value, f"{e1} - {e2}", floor)


def halfsum_coefficients(
    weights: Weights,
) -> tuple[tuple[float, float, float, float], dict[tuple[int, int], float]]:
    """Variance and covariance coefficients of c1 (m0 - m1) + c2 (m2 - m3)."""
    c1, c2 = weights.c1, weights.c2
    var = (c1 * c1, c1 * c1, c2 * c2, c2 * c2)
    cov = {
        (0, 1): -2 * c1 * c1,
        (0, 2): 2 * c1 * c2,
        (0, 3): -2 * c1 * c2,
        (1, 2): -2 * c1 * c2,
        (1, 3): 2 * c1 * c2,
        (2, 3): -2 * c2 * c2,
    }
    return var, cov


def var_halfsum_hat(
    data: ExperimentData,
    e: Exposure,
    e_prime: Exposure,
    e_star: Exposure,
    e_star_prime: Exposure,
    weights: Weights | None = None,
    *,
    floor: bool = True,
) -> float:
    """Conservative variance of c1 (mean(e) - mean(e')) + c2 (mean(e*) - mean(e*')).

    Covariances entering with a negative coefficient use the lower bound ``cov_a``,
    those with a positive coefficient the upper bound ``cov_b``. At c1 = c2 = 1/2
    that is cov_b for (e, e*) and (e', e*') and cov_a for the other four pairs.
    """
    from .estimators import Weights

    weights = weights or Weights()
    ex = (e, e_prime, e_star, e_star_prime)
    _distinct(*ex)
    _require_positive(data, *ex)
    var_coef, cov_coef = halfsum_coefficients(weights)
    total = sum(c * var_a(data, x) for c, x in zip(var_coef, ex) if c != 0.0)
    for (a, b), c in cov_coef.items():
        if c == 0.0:
            continue
        lo, hi = cov_bounds(data, ex[a], ex[b])
        total += c * (lo if c < 0 else hi)
    return _floored(total, "pooled contrast", floor)


@dataclass(frozen=True)
class VarianceComponents:
    var_ht: dict[Exposure, float]
    a_var: dict[Exposure, float]
    cov_ht: dict[tuple[Exposure, Exposure], float]
    cov_a: dict[tuple[Exposure, Exposure], float]
    cov_b: dict[tuple[Exposure, Exposure], float]


def variance_components(data: ExperimentData, exposures: list[Exposure]) -> VarianceComponents:
    """Every per-exposure and per-pair building block for the given exposures."""
    _require_positive(data, *exposures)
    var_ht, a_var, cov_ht, cov_a, cov_b = {}, {}, {}, {}, {}
    for x in exposures:
        var_ht[x], a_var[x] = _pair_terms(data, x, x)
    for ia, x in enumerate(exposures):
        for z in exposures[ia + 1 :]:
            ht, corr = _pair_terms(data, x, z)
            cov_ht[x, z], cov_a[x, z], cov_b[x, z] = ht, ht - corr, ht + corr
    return VarianceComponents(var_ht, a_var, cov_ht, cov_a, cov_b)


# Population quantities from known potential outcomes.


def true_covariance(
    tables: JointTables, e1: Exposure, y1: np.ndarray, e2: Exposure, y2: np.ndarray
) -> float:
    """Exact Cov(mean(e1), mean(e2)) given y_i(e1), y_i(e2); Var when e1 == e2."""
    tab = tables.pair(e1, e2)
    if tab.pi1 <= 0 or tab.pi2 <= 0:
        raise ValueError("exact moments need positive exposure probabilities")
    u1 = np.asarray(y1, dtype=float) / tab.pi1
    u2 = np.asarray(y2, dtype=float) / tab.pi2
    n2 = float(tables.nbr.n) ** 2
    return float(u1 @ (tab.joint - tab.pi1 * tab.pi2) @ u2) / n2


def zero_pair_sum(
    tables: JointTables, e1: Exposure, y1: np.ndarray, e2: Exposure, y2: np.ndarray
) -> float:
    """(1/N^2) sum of y_i(e1) y_j(e2) over ordered pairs that can never co-occur.

    The HT variance estimate has expectation Var + this sum; the HT covariance
    estimate has expectation Cov + this sum.
    """
    tab = tables.pair(e1, e2)
    n2 = float(tables.nbr.n) ** 2
    return float(np.asarray(y1, float) @ tab.zero.astype(float) @ np.asarray(y2, float)) / n2


def difference_variance(
    tables: JointTables, e1: Exposure, y1: np.ndarray, e2: Exposure, y2: np.ndarray
) -> float:
    """Var(mean(e1) - mean(e2)) = Var1 + Var2 - 2 Cov."""
    return (
        true_covariance(tables, e1, y1, e1, y1)
        + true_covariance(tables, e2, y2, e2, y2)
        - 2.0 * true_covariance(tables, e1, y1, e2, y2)
    )


def halfsum_variance(
    tables: JointTables,
    exposures: tuple[Exposure, Exposure, Exposure, Exposure],
    outcomes: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    weights: Weights | None = None,
) -> float:
    """Exact variance of c1 (m(e) - m(e')) + c2 (m(e*) - m(e*')), four-exposure form."""
    from .estimators import Weights

    var_coef, cov_coef = halfsum_coefficients(weights or Weights())
    total = sum(
        c * true_covariance(tables, x, yx, x, yx)
        for c, x, yx in zip(var_coef, exposures, outcomes)
    )
    for (a, b), c in cov_coef.items():
        total += c * true_covariance(tables, exposures[a], outcomes[a], exposures[b], outcomes[b])
    return total
