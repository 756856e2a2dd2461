"""Simulation study: synthetic populations, the nine interference models, replicated designs."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np

from .design import Design, JointTables
from .estimators import (
    Contrast,
    ExperimentData,
    Weights,
    decomposition_gaps,
    evaluate,
    table_contrasts,
)
from .model import DistanceMatrix, KNeighborhoods, build_k_neighborhoods

DesignKind = Literal["crd", "bernoulli"]


@dataclass(frozen=True)
class InterferenceModel:
    """Additive response model: ``deltas[l]`` for the (l+1)-th neighbor, ``delta_t`` direct."""

    deltas: tuple[float, ...]
    delta_t: float

    @property
    def k(self) -> int:
        return len(self.deltas)


MODELS: dict[int, InterferenceModel] = {
    1: InterferenceModel((0.0, 0.0, 0.0), 0.0),
    2: InterferenceModel((0.0, 0.0, 0.0), 1.0),
    3: InterferenceModel((0.0, 0.0, 0.0), 4.0),
    4: InterferenceModel((2.0, 1.0, 0.5), 0.0),
    5: InterferenceModel((2.0, 1.0, 0.5), 1.0),
    6: InterferenceModel((2.0, 1.0, 0.5), 4.0),
    7: InterferenceModel((3.0, 2.0, 1.0), 0.0),
    8: InterferenceModel((3.0, 2.0, 1.0), 1.0),
    9: InterferenceModel((3.0, 2.0, 1.0), 4.0),
}


def get_model(model_id: int) -> InterferenceModel:
    try:
        return MODELS[model_id]
    except KeyError:
        raise ValueError(f"model id must be 1..9, got {model_id}") from None


@dataclass(frozen=True)
class TruthTable:
    direct: float
    nn: tuple[float, ...]

    @property
    def indirect(self) -> float:
        return sum(self.nn)

    @property
    def total(self) -> float:
        return self.direct + self.indirect

    def value(self, c: Contrast) -> float:
        if c.kind == "total":
            return self.total
        if c.kind == "direct":
            return self.direct
        if c.kind == "indirect":
            return self.indirect
        return self.nn[c.ell - 1]


def truth(model: InterferenceModel) -> TruthTable:
    return TruthTable(model.delta_t, tuple(model.deltas))


def generate_population(n: int, seed: int | Sequence[int]) -> tuple[np.ndarray, DistanceMatrix]:
    """Three standard-normal covariates per unit and their squared Euclidean distances."""
    if n < 2:
        raise ValueError("population needs n >= 2")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = rng.standard_normal((n, 3))
    diff = x[:, None, :] - x[None, :, :]
    return x, DistanceMatrix((diff**2).sum(axis=2))


def respond(
    model: InterferenceModel, covariates: np.ndarray, nbr: KNeighborhoods, w: np.ndarray
) -> np.ndarray:
    """Y_i = sum of covariates + sum_l delta_l W_(l-th neighbor of i) + delta_t W_i."""
    if model.k != nbr.k:
        raise ValueError(f"model has {model.k} neighbor effects but K={nbr.k}")
    w = np.asarray(w, dtype=float)
    return (
        covariates.sum(axis=1)
        + w[nbr.neighbors] @ np.asarray(model.deltas, dtype=float)
        + model.delta_t * w
    )


def make_design(kind: DesignKind, n: int) -> Design:
    if kind == "crd":
        if n % 2:
            raise ValueError("the half-treated CRD needs an even n")
        return Design.crd(n, n // 2)
    if kind == "bernoulli":
        return Design.bernoulli(n, 0.5)
    raise ValueError(f"unknown design kind {kind!r}")


def draw_assignment(design: Design, rng: np.random.Generator) -> np.ndarray:
    w = np.zeros(design.n, dtype=np.int8)
    if design.is_crd:
        w[rng.choice(design.n, size=design.n_t, replace=False)] = 1
    else:
        w[rng.random(design.n) < design.p] = 1
    return w


@dataclass(frozen=True)
class SimRow:
    label: str
    truth: float
    emp_ev: float
    emp_var: float
    mean_var_est: float
    n_floored: int = 0

    @property
    def emp_sd(self) -> float:
        return math.sqrt(self.emp_var)


@dataclass
class SimSummary:
    model_id: int
    design: str
    n: int
    reps: int
    seed: int
    k: int
    rows: list[SimRow] = field(default_factory=list)
    max_decomposition_gap: float = 0.0

    def row(self, label: str) -> SimRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_dict(self) -> dict:
        d = asdict(self)
        for r, row in zip(d["rows"], self.rows):
            r["emp_sd"] = row.emp_sd
        return d


def _replicate(
    rep: int,
    seed: int,
    model: InterferenceModel,
    design: Design,
    population: tuple[np.ndarray, KNeighborhoods, JointTables] | None,
    contrasts: list[Contrast],
) -> tuple[np.ndarray, np.ndarray, float]:
    if population is None:
        x, dist = generate_population(design.n, [seed, rep, 1])
        nbr = build_k_neighborhoods(dist, model.k)
        tables = JointTables(design, nbr)
    else:
        x, nbr, tables = population
    rng = np.random.default_rng(np.random.SeedSequence([seed, rep]))
    w = draw_assignment(design, rng)
    data = ExperimentData(nbr, design, w, respond(model, x, nbr, w), tables=tables)
    res = [evaluate(data, c, floor=False) for c in contrasts]
    gap = max(decomposition_gaps(res).values())
    return (
        np.array([r.estimate for r in res]),
        np.array([r.variance for r in res]),
        gap,
    )


def run_simulation(
    model_id: int,
    design_kind: DesignKind,
    n: int = 256,
    reps: int = 1000,
    seed: int = 0,
    *,
    redraw_population: bool = False,
    workers: int = 1,
) -> SimSummary:
    """Replicate the experiment ``reps`` times and summarize every estimator.

    The population (covariates, distances, neighborhoods) is drawn once from ``seed``
    and only assignments are redrawn, unless ``redraw_population``. Replication r uses
    its own generator seeded by (seed, r), so results do not depend on ``workers``.
    Negative variance estimates are floored at 0 before averaging; the count of
    floored replications is reported per row.
    """
    model = get_model(model_id)
    design = make_design(design_kind, n)
    contrasts = table_contrasts(model.k, Weights())
    population = None
    if not redraw_population:
        x, dist = generate_population(n, seed)
        nbr = build_k_neighborhoods(dist, model.k)
        population = (x, nbr, JointTables(design, nbr))
        # build every pair table up front so worker threads only read the cache
        exposures = sorted({e for c in contrasts for e in c.exposures})
        for e1 in exposures:
            for e2 in exposures:
                population[2].pair(e1, e2)

    def one(rep: int):
        return _replicate(rep, seed, model, design, population, contrasts)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(reps)))
    else:
        results = [one(r) for r in range(reps)]

    est = np.vstack([r[0] for r in results])
    var = np.vstack([r[1] for r in results])
    floored = (var < 0).sum(axis=0)
    var = np.maximum(var, 0.0)
    tt = truth(model)
    summary = SimSummary(
        model_id, design_kind, n, reps, seed, model.k,
        max_decomposition_gap=max(r[2] for r in results),
    )
    ddof = 1 if reps > 1 else 0
    for ic, c in enumerate(contrasts):
        summary.rows.append(
            SimRow(
                label=c.label,
                truth=tt.value(c),
                emp_ev=float(est[:, ic].mean()),
                emp_var=float(est[:, ic].var(ddof=ddof)),
                mean_var_est=float(var[:, ic].mean()),
                n_floored=int(floored[ic]),
            )
        )
    return summary
