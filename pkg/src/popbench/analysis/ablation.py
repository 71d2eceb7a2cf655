"""Feature-sufficiency grid: ranked features added progressively per family."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from popbench._rng import derive_seed
from popbench.analysis._cells import STREAM_ABLATION, fit_and_evaluate, parallel_map
from popbench.datamodel import Dataset, Family, fmt
from popbench.errors import DataError
from popbench.evaluation import EvalConfig
from popbench.models import ModelSpec
from popbench.splits import SplitPlan

EMBEDDINGS_ONLY = "EmbeddingsOnly"
COVARIATES_ONLY = "CovariatesOnly"
COMBINED = "Combined"

DEFAULT_EMBEDDING_COUNTS = (1, 2, 4, 8, 16, 32, 64, 128, 256, 330)
DEFAULT_COVARIATE_COUNTS = tuple(range(1, 24))

ABLATION_COLUMNS = ("family_combination", "n_embeddings", "n_covariates", "iteration", "r2", "kl")


@dataclass(frozen=True)
class AblationCell:
    family_combination: str
    n_embeddings: int
    n_covariates: int
    iteration: int
    r2: float
    kl: float


def ablation_layout(n_emb_total: int, n_cov_total: int, counts_embeddings, counts_covariates) -> list[tuple[str, int, int]]:
    """(combination, n_embeddings, n_covariates) for every grid cell.

    Combined cells hold one family complete and grow the other from zero,
    in both directions; the fully combined cell appears once.
    """
    layout = [(EMBEDDINGS_ONLY, k, 0) for k in counts_embeddings]
    layout += [(COVARIATES_ONLY, 0, k) for k in counts_covariates]
    seen = set()
    for k in (0, *counts_covariates):
        seen.add((n_emb_total, k))
        layout.append((COMBINED, n_emb_total, k))
    for k in (0, *counts_embeddings):
        if (k, n_cov_total) not in seen:
            seen.add((k, n_cov_total))
            layout.append((COMBINED, k, n_cov_total))
    return layout


def run_ablation(
    dataset: Dataset,
    rankings: Mapping[str, Sequence[str]],
    counts_embeddings: Sequence[int],
    counts_covariates: Sequence[int],
    plan: SplitPlan,
    spec: ModelSpec,
    seed: int,
    cfg: EvalConfig = EvalConfig(),
    n_jobs: int = 1,
) -> list[AblationCell]:
    """Evaluate every grid cell on every iteration of ``plan``.

    All cells of one iteration share the split and the model seed, so cells
    with identical feature sets give identical results.
    """
    emb = list(rankings[Family.EMBEDDINGS.value])
    cov = list(rankings[Family.COVARIATES.value])
    for name, counts, avail in (("embedding", counts_embeddings, emb), ("covariate", counts_covariates, cov)):
        for k in counts:
            if not 1 <= k <= len(avail):
                raise DataError(f"{name} count {k} exceeds the {len(avail)} ranked features")
    layout = ablation_layout(len(emb), len(cov), counts_embeddings, counts_covariates)
    cells = [(it, cell) for it in plan for cell in layout]

    def run(item) -> AblationCell:
        it, (combo, ke, kc) = item
        columns = [(Family.EMBEDDINGS, emb[:ke]), (Family.COVARIATES, cov[:kc])]
        r2, kl = fit_and_evaluate(dataset, columns, spec, sorted(it.train_units), sorted(it.validation_units),
                                  derive_seed(seed, STREAM_ABLATION, it.iteration), cfg)
        return AblationCell(combo, ke, kc, it.iteration, r2, kl)

    return parallel_map(run, cells, n_jobs)


def write_ablation_csv(cells: Sequence[AblationCell], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ABLATION_COLUMNS)
        for c in cells:
            w.writerow([c.family_combination, c.n_embeddings, c.n_covariates, c.iteration, fmt(c.r2), fmt(c.kl)])


def read_ablation_csv(path) -> list[AblationCell]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [AblationCell(r["family_combination"], int(r["n_embeddings"]), int(r["n_covariates"]),
                             int(r["iteration"]), float(r["r2"]), float(r["kl"])) for r in csv.DictReader(fh)]
