"""Within-country benchmark: every (iteration, family, model) cell of a split plan."""

from __future__ import annotations

from typing import Sequence

from popbench._rng import derive_seed
from popbench.analysis._cells import STREAM_MODEL, fit_and_evaluate, parallel_map
from popbench.datamodel import Dataset, Family
from popbench.evaluation import EvalConfig, MetricRecord
from popbench.models import ModelSpec
from popbench.splits import SplitPlan


def cell_seed(seed: int, iteration: int, family: Family, spec: ModelSpec) -> int:
    return derive_seed(seed, STREAM_MODEL, iteration, family.ordinal, spec.kind.ordinal)


def run_benchmark(
    dataset: Dataset,
    families: Sequence[Family],
    specs: Sequence[ModelSpec],
    plan: SplitPlan,
    seed: int,
    cfg: EvalConfig = EvalConfig(),
    n_jobs: int = 1,
) -> list[MetricRecord]:
    """Fit each model on each family's training units and score the validation units.

    Records come out ordered by iteration, then family, then spec.
    """
    families = [Family.parse(f) for f in families]
    cells = [(it, fam, spec) for it in plan for fam in families for spec in specs]

    def run(cell) -> MetricRecord:
        it, fam, spec = cell
        train = sorted(it.train_units)
        val = sorted(it.validation_units)
        r2, kl = fit_and_evaluate(dataset, [(fam, None)], spec, train, val,
                                  cell_seed(seed, it.iteration, fam, spec), cfg)
        return MetricRecord(it.iteration, dataset.country_tag, spec.name, fam.value, r2, kl, len(val),
                            it.train_unit_frac, it.train_pop_frac)

    return parallel_map(run, cells, n_jobs)
