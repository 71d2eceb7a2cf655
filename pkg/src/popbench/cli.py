"""``popbench`` command line: run experiments from a TOML config.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from popbench.analysis import (
    ablation,
    benchmark,
    importance,
    sensitivity,
    transfer,
)
from popbench.config import RunConfig, load_config
from popbench.datamodel import (
    Family,
    assemble_dataset,
    geometry_set,
    load_boundaries,
    load_feature_table,
    load_population,
)
from popbench.errors import ConfigError, DataError, GeometryError, PopbenchError
from popbench.evaluation import write_metrics_csv
from popbench.linkage import FixtureGeocoder, load_places, match_all, read_review_csv, write_review_csv
from popbench.models import ModelKind
from popbench.reports import emit_reports, load_results
from popbench.splits import GroupedIndex, monte_carlo_splits, write_splits_csv
from popbench.synth import SynthParams, synth_country

COMMANDS = ("link", "benchmark", "importance", "ablate", "transfer", "sensitivity", "synth", "report", "validate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# --- validation --------------------------------------------------------------

@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    info: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def lines(self) -> list[str]:
        out = [f"ERROR: {m}" for m in self.errors] + [f"WARNING: {m}" for m in self.warnings]
        out += [f"ok: {m}" for m in self.info]
        if self.ok and not self.warnings:
            out.append("all checks passed")
        return out


def _ids(ids, limit=10) -> str:
    shown = ", ".join(ids[:limit])
    return shown + (f" (+{len(ids) - limit} more)" if len(ids) > limit else "")


def validate_inputs(cfg: RunConfig) -> ValidationReport:
    """Load every input in check mode, probe split feasibility, dry-run linkage."""
    rep = ValidationReport()
    for key in ("boundaries", "population", "embeddings", "covariates"):
        if getattr(cfg, key) is None:
            rep.errors.append(f"config key {key!r} is not set")
    for m in cfg.missing_paths():
        rep.errors.append(f"file not found: {m}")
    if rep.errors:
        return rep

    loaded = {}
    loaders = {
        "boundaries": lambda: load_boundaries(cfg.boundaries),
        "embeddings": lambda: load_feature_table(cfg.embeddings, Family.EMBEDDINGS),
        "covariates": lambda: load_feature_table(cfg.covariates, Family.COVARIATES),
        "population": lambda: load_population(cfg.population),
    }
    for name, load in loaders.items():
        try:
            loaded[name] = load()
        except (DataError, GeometryError) as exc:
            rep.errors.append(f"{name}: {exc}")
    if rep.errors:
        return rep
    rep.info.append(f"{len(loaded['boundaries'])} boundaries, {len(loaded['population'].unit_ids)} population rows")

    try:
        ds = assemble_dataset([u for u, _ in loaded["boundaries"]],
                              [loaded["embeddings"], loaded["covariates"]], loaded["population"], cfg.country)
    except DataError as exc:
        rep.errors.append(f"join: {exc}")
        return rep
    for source, ids in ds.join_report.missing.items():
        if ids:
            rep.errors.append(f"ids missing from {source}: {_ids(list(ids))}")
    rep.info.append(f"{len(ds.units)} units joined across all sources")

    try:
        index = GroupedIndex.from_dataset(ds)
        probe = dataclasses.replace(cfg.constraints, max_attempts=10)
        monte_carlo_splits(index, ds.shares, probe, n_iter=1, seed=cfg.seed)
        rep.info.append(f"split constraints feasible ({len(index.groups)} groups)")
    except PopbenchError as exc:
        rep.warnings.append(f"split feasibility probe failed after 10 attempts: {exc}")

    if cfg.places is not None:
        try:
            records = load_places(cfg.places)
            keep = set(ds.unit_ids)
            geocoder = FixtureGeocoder(cfg.geocoder_fixture) if cfg.geocoder_fixture else None
            geoms = geometry_set([(u, g) for u, g in loaded["boundaries"] if u.id in keep])
            _, qa = match_all(records, geoms, ds.units, cfg.match, geocoder, cfg.region_names)
            rep.info.append(f"linkage dry run: {len(records)} records, {qa.n_low_similarity} low similarity, "
                            f"{qa.n_outside_polygon} outside polygon, {qa.n_both} both")
        except PopbenchError as exc:
            rep.errors.append(f"linkage: {exc}")
    return rep


# --- commands ----------------------------------------------------------------

def _plan(cfg: RunConfig, ds, n_jobs: int, out: Path):
    index = GroupedIndex.from_dataset(ds)
    plan = monte_carlo_splits(index, ds.shares, cfg.constraints, cfg.n_iterations, cfg.seed, n_jobs)
    write_splits_csv(plan, index, out / "splits.csv")
    return plan


def _summarize(out: Path) -> None:
    res = load_results(out)
    if not res.empty():
        emit_reports(res, out, write_csvs=False)


def cmd_link(cfg, out, n_jobs):
    if cfg.places is None:
        raise ConfigError("config key 'places' is required for link")
    ds, geoms = cfg.load_dataset()
    geocoder = FixtureGeocoder(cfg.geocoder_fixture) if cfg.geocoder_fixture else None
    results, qa = match_all(load_places(cfg.places), geoms, ds.units, cfg.match, geocoder, cfg.region_names, n_jobs)
    write_review_csv(results, out / "linkage_review.csv")
    _log(f"linked {len(results)} records: {qa.n_low_similarity} low similarity, "
         f"{qa.n_outside_polygon} outside polygon, {qa.n_both} both")


def cmd_benchmark(cfg, out, n_jobs):
    ds, _ = cfg.load_dataset()
    plan = _plan(cfg, ds, n_jobs, out)
    records = benchmark.run_benchmark(ds, cfg.families, cfg.specs, plan, cfg.seed, cfg.eval, n_jobs)
    write_metrics_csv(records, out / "metrics.csv")
    _log(f"wrote {len(records)} metric rows")
    _summarize(out)


def _importance(cfg, ds, plan, n_jobs, specs):
    tables = [importance.permutation_importance(ds, fam, spec, plan, cfg.seed, n_jobs)
              for spec in specs for fam in cfg.families]
    merged = importance.ImportanceTable()
    for t in tables:
        merged = merged + t
    return merged


def cmd_importance(cfg, out, n_jobs):
    ds, _ = cfg.load_dataset()
    plan = _plan(cfg, ds, n_jobs, out)
    table = _importance(cfg, ds, plan, n_jobs, cfg.importance_specs)
    importance.write_importance_csv([table], out / "importance.csv")
    _log(f"wrote {len(table.rows)} importance rows")
    _summarize(out)


def cmd_ablate(cfg, out, n_jobs):
    ds, _ = cfg.load_dataset()
    plan = _plan(cfg, ds, n_jobs, out)
    path = out / "importance.csv"
    if path.exists():
        _log(f"ranking features from {path}")
        table = importance.read_importance_csv(path)
        own = [r for r in table.rows if r.model == cfg.ablation_model.name]
        if own:
            table = importance.ImportanceTable(own)
    else:
        _log("no importance.csv found; computing importance for the ablation model first")
        table = _importance(cfg, ds, plan, n_jobs, [cfg.ablation_model])
        importance.write_importance_csv([table], path)
    rankings = importance.rank_features([table])
    for fam in (Family.EMBEDDINGS, Family.COVARIATES):
        if fam.value not in rankings:
            raise DataError(f"importance results contain no {fam.value} features")
    n_emb, n_cov = len(rankings[Family.EMBEDDINGS.value]), len(rankings[Family.COVARIATES.value])
    counts_e = sorted({min(k, n_emb) for k in cfg.ablation_embedding_counts})
    counts_c = sorted({min(k, n_cov) for k in cfg.ablation_covariate_counts})
    cells = ablation.run_ablation(ds, rankings, counts_e, counts_c, plan, cfg.ablation_model, cfg.seed,
                                  cfg.eval, n_jobs)
    ablation.write_ablation_csv(cells, out / "ablation.csv")
    _log(f"wrote {len(cells)} ablation rows")
    _summarize(out)


def cmd_transfer(cfg, out, n_jobs):
    ds, _ = cfg.load_dataset()
    datasets, matches = [ds], {}
    review = out / "linkage_review.csv"
    if review.exists():
        matches[ds.country_tag] = read_review_csv(review)
    for path in cfg.transfer_countries:
        other = load_config(path)
        ods, _ = other.load_dataset()
        if ods.country_tag in {d.country_tag for d in datasets}:
            raise ConfigError(f"duplicate country tag {ods.country_tag!r} in transfer_countries")
        datasets.append(ods)
        orev = other.output_dir / "linkage_review.csv"
        if orev.exists():
            matches[ods.country_tag] = read_review_csv(orev)
    res = transfer.run_transferability(datasets, cfg.spec(ModelKind.RANDOM_FOREST), cfg.seed, cfg.descriptor_columns, matches,
                                       cfg.pooled_training, cfg.eval, n_jobs)
    for note in res.skipped:
        _log(f"skipped {note}")
    transfer.write_transfer_csv(res.records, out / "transfer.csv")
    rows, notes = transfer.ols_table(res.records)
    for note in notes:
        _log(f"ols: {note}")
    transfer.write_ols_csv(rows, out / "ols.csv")
    _log(f"wrote {len(res.records)} transfer rows and {len(rows)} OLS rows")
    _summarize(out)


def cmd_sensitivity(cfg, out, n_jobs):
    ds, _ = cfg.load_dataset()
    res = sensitivity.run_sensitivity(ds, cfg.spec(ModelKind.RANDOM_FOREST), cfg.aggregation, cfg.seed,
                                      cfg.descriptor_columns, cfg.eval, n_jobs)
    for note in res.skipped:
        _log(f"skipped {note}")
    write_metrics_csv(res.metrics, out / "sensitivity.csv")
    sensitivity.write_sensitivity_delta_csv(res.deltas, out / "sensitivity_delta.csv")
    _log(f"aggregated {len(ds.units)} units to {len(res.aggregated.units)}; "
         f"wrote {len(res.metrics)} sensitivity rows")
    _summarize(out)


def cmd_report(cfg, out, n_jobs):
    res = load_results(out)
    if res.empty():
        raise DataError(f"no experiment outputs found in {out}")
    written = emit_reports(res, out, write_csvs=False)
    _log(f"wrote {len(written)} report files under {out}")


def cmd_validate(cfg, out, n_jobs):
    rep = validate_inputs(cfg)
    for line in rep.lines():
        print(line)
    return 0 if rep.ok else 1


_COMMANDS = {
    "link": cmd_link,
    "benchmark": cmd_benchmark,
    "importance": cmd_importance,
    "ablate": cmd_ablate,
    "transfer": cmd_transfer,
    "sensitivity": cmd_sensitivity,
    "report": cmd_report,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="popbench", description="Population-share benchmarking harness.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        if name == "synth":
            continue
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path, help="run configuration (TOML)")
        s.add_argument("--out", type=Path, help="override output_dir from the config")
        s.add_argument("--threads", type=int, help="worker threads (default: $POPBENCH_THREADS or all cores)")
    s = sub.add_parser("synth", help="write a synthetic country bundle")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", required=True, type=int)
    defaults = SynthParams()
    for f in dataclasses.fields(SynthParams):
        if f.name == "seed":
            continue
        s.add_argument("--" + f.name.replace("_", "-"), type=type(getattr(defaults, f.name)),
                       default=getattr(defaults, f.name))
    return p


def _threads(arg: int | None, cfg: RunConfig | None) -> int:
    if arg is None:
        env = os.environ.get("POPBENCH_THREADS")
        if env:
            try:
                arg = int(env)
            except ValueError:
                raise UsageError(f"POPBENCH_THREADS must be an integer, got {env!r}") from None
    if arg is None and cfg is not None:
        arg = cfg.threads
    if arg is None:
        arg = os.cpu_count() or 1
    if arg < 1:
        raise UsageError("thread count must be >= 1")
    return arg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "synth":
            kwargs = {f.name: getattr(args, f.name) for f in dataclasses.fields(SynthParams) if f.name != "seed"}
            paths = synth_country(SynthParams(seed=args.seed, **kwargs), args.out)
            _log(f"wrote synthetic bundle to {args.out} ({len(paths)} files)")
            return 0
        cfg = load_config(args.config)
        n_jobs = _threads(args.threads, cfg)
        out = args.out if args.out is not None else cfg.output_dir
        if args.command != "validate":
            out.mkdir(parents=True, exist_ok=True)
        code = _COMMANDS[args.command](cfg, out, n_jobs)
        return code or 0
    except UsageError as exc:
        _log(str(exc))
        return 1
    except (DataError, GeometryError) as exc:
        _log(f"error: {exc}")
        return 1
    except (PopbenchError, OSError) as exc:
        _log(f"failed: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
