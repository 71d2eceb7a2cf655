"""Run configuration: a flat TOML file, paths resolved relative to it."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from popbench.analysis.ablation import DEFAULT_COVARIATE_COUNTS, DEFAULT_EMBEDDING_COUNTS
from popbench.analysis.sensitivity import DEFAULT_RULES
from popbench.analysis.transfer import DEFAULT_DESCRIPTOR_COLUMNS
from popbench.datamodel import (
    Dataset,
    Family,
    assemble_dataset,
    geometry_set,
    load_boundaries,
    load_feature_table,
    load_population,
)
from popbench.errors import ConfigError
from popbench.evaluation import EvalConfig
from popbench.geometry import GeometrySet
from popbench.linkage import MatchConfig
from popbench.models import ModelKind, ModelSpec
from popbench.models.base import ElasticNetParams, GradientBoostingParams, RandomForestParams
from popbench.splits import SplitConstraints

EXPERIMENTS = ("link", "benchmark", "importance", "ablate", "transfer", "sensitivity")

# key prefix -> model kind whose hyperparameters it overrides, e.g. rf_n_trees = 99
_HP_PREFIX = {
    "rf_": (ModelKind.RANDOM_FOREST, RandomForestParams),
    "gbt_": (ModelKind.GRADIENT_BOOSTING, GradientBoostingParams),
    "en_": (ModelKind.ELASTIC_NET, ElasticNetParams),
}

_PATH_KEYS = ("boundaries", "population", "embeddings", "covariates", "places", "geocoder_fixture")
_SCALARS = {
    "country": str,
    "output_dir": str,
    "n_iterations": int,
    "threads": int,
    "group_sample_frac": float,
    "unit_frac_min": float,
    "unit_frac_max": float,
    "pop_frac_min": float,
    "pop_frac_max": float,
    "max_attempts": int,
    "epsilon": float,
    "similarity_margin": float,
    "low_similarity_threshold": float,
    "winkler_prefix_weight": float,
    "ablation_model": str,
    "aggregation_embeddings": str,
    "aggregation_covariates": str,
    "pooled_training": bool,
}
_LISTS = ("models", "importance_models", "families", "ablation_embedding_counts", "ablation_covariate_counts",
          "transfer_countries", "region_names", "experiments")


@dataclass
class RunConfig:
    seed: int
    source: Path
    country: str = "country"
    output_dir: Path = Path("out")
    boundaries: Path | None = None
    population: Path | None = None
    embeddings: Path | None = None
    covariates: Path | None = None
    places: Path | None = None
    geocoder_fixture: Path | None = None
    n_iterations: int = 100
    threads: int | None = None
    constraints: SplitConstraints = field(default_factory=SplitConstraints)
    eval: EvalConfig = field(default_factory=EvalConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    specs: tuple[ModelSpec, ...] = ()
    importance_specs: tuple[ModelSpec, ...] = ()
    families: tuple[Family, ...] = (Family.EMBEDDINGS, Family.COVARIATES)
    ablation_model: ModelSpec | None = None
    ablation_embedding_counts: tuple[int, ...] = DEFAULT_EMBEDDING_COUNTS
    ablation_covariate_counts: tuple[int, ...] = DEFAULT_COVARIATE_COUNTS
    aggregation: dict = field(default_factory=lambda: dict(DEFAULT_RULES))
    descriptor_columns: dict = field(default_factory=lambda: dict(DEFAULT_DESCRIPTOR_COLUMNS))
    transfer_countries: tuple[Path, ...] = ()
    pooled_training: bool = False
    region_names: tuple[str, ...] = ()
    experiments: tuple[str, ...] = EXPERIMENTS

    def spec(self, kind: ModelKind) -> ModelSpec:
        for s in self.specs:
            if s.kind is kind:
                return s
        return ModelSpec(kind, self._hp.get(kind))

    _hp: dict = field(default_factory=dict, repr=False)

    def missing_paths(self) -> list[str]:
        return [f"{k}: {getattr(self, k)}" for k in _PATH_KEYS
                if getattr(self, k) is not None and not getattr(self, k).exists()]

    def load_dataset(self) -> tuple[Dataset, GeometrySet]:
        for key in ("boundaries", "population", "embeddings", "covariates"):
            if getattr(self, key) is None:
                raise ConfigError(f"config key {key!r} is required for this command")
        bounds = load_boundaries(self.boundaries)
        tables = [load_feature_table(self.embeddings, Family.EMBEDDINGS),
                  load_feature_table(self.covariates, Family.COVARIATES)]
        ds = assemble_dataset([u for u, _ in bounds], tables, load_population(self.population), self.country)
        keep = set(ds.unit_ids)
        return ds, geometry_set([(u, g) for u, g in bounds if u.id in keep])


def _typed(key, value, kind):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is str and not isinstance(value, str) or kind is bool and not isinstance(value, bool) \
            or kind is int and (isinstance(value, bool) or not isinstance(value, int)) \
            or kind is float and not isinstance(value, float):
        raise ConfigError(f"config key {key!r} must be {kind.__name__}, got {value!r}")
    return value


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomli.loads(path.read_text(encoding="utf-8"))
    except (tomli.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return config_from_mapping(raw, path)


def config_from_mapping(raw: dict, source) -> RunConfig:
    source = Path(source)
    base = source.parent
    raw = dict(raw)
    if "seed" not in raw:
        raise ConfigError(f"{source}: 'seed' is mandatory")
    seed = raw.pop("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"{source}: seed must be an integer in [0, 2^64)")
    cfg = RunConfig(seed=seed, source=source)

    for key in _PATH_KEYS:
        if key in raw:
            cfg.__dict__[key] = base / _typed(key, raw.pop(key), str)
    scal = {k: _typed(k, raw.pop(k), t) for k, t in _SCALARS.items() if k in raw}
    lists = {}
    for k in _LISTS:
        if k in raw:
            v = raw.pop(k)
            if not isinstance(v, list):
                raise ConfigError(f"config key {k!r} must be a list")
            lists[k] = v

    hp: dict[ModelKind, dict] = {}
    descriptor = {}
    for key in list(raw):
        if key.startswith("descriptor_"):
            descriptor[key[len("descriptor_"):]] = _typed(key, raw.pop(key), str)
            continue
        for prefix, (kind, cls) in _HP_PREFIX.items():
            name = key[len(prefix):]
            if key.startswith(prefix) and name in {f.name for f in dataclasses.fields(cls)}:
                hp.setdefault(kind, {})[name] = raw.pop(key)
                break
    if raw:
        raise ConfigError(f"{source}: unknown config key(s): {', '.join(sorted(raw))}")

    try:
        cfg.country = scal.get("country", cfg.country)
        cfg.output_dir = base / scal.get("output_dir", "out")
        cfg.n_iterations = scal.get("n_iterations", cfg.n_iterations)
        if cfg.n_iterations < 1:
            raise ConfigError("n_iterations must be positive")
        cfg.threads = scal.get("threads")
        d = SplitConstraints()
        cfg.constraints = SplitConstraints(
            scal.get("group_sample_frac", d.group_sample_frac),
            (scal.get("unit_frac_min", d.unit_frac_range[0]), scal.get("unit_frac_max", d.unit_frac_range[1])),
            (scal.get("pop_frac_min", d.pop_frac_range[0]), scal.get("pop_frac_max", d.pop_frac_range[1])),
            scal.get("max_attempts", d.max_attempts),
        )
        cfg.eval = EvalConfig(scal.get("epsilon", 1e-12))
        m = MatchConfig()
        margin = scal.get("similarity_margin", m.similarity_margin)
        cfg.match = MatchConfig(
            winkler_prefix_weight=scal.get("winkler_prefix_weight", m.winkler_prefix_weight),
            similarity_margin=math.inf if margin < 0 else margin,  # negative means "always nearest"
            low_similarity_threshold=scal.get("low_similarity_threshold", m.low_similarity_threshold),
        )
        cfg._hp = hp
        kinds = [ModelKind.parse(k) for k in lists.get("models", [k.value for k in ModelKind])]
        cfg.specs = tuple(ModelSpec(k, hp.get(k)) for k in kinds)
        imp = [ModelKind.parse(k) for k in lists.get("importance_models", [k.kind.value for k in cfg.specs])]
        cfg.importance_specs = tuple(cfg.spec(k) for k in imp)
        cfg.families = tuple(Family.parse(f) for f in lists.get("families", [f.value for f in Family]))
        cfg.ablation_model = cfg.spec(ModelKind.parse(scal.get("ablation_model", "RandomForest")))
        cfg.ablation_embedding_counts = tuple(lists.get("ablation_embedding_counts", DEFAULT_EMBEDDING_COUNTS))
        cfg.ablation_covariate_counts = tuple(lists.get("ablation_covariate_counts", DEFAULT_COVARIATE_COUNTS))
        for key, fam in (("aggregation_embeddings", Family.EMBEDDINGS), ("aggregation_covariates", Family.COVARIATES)):
            if key in scal:
                cfg.aggregation[fam.value] = scal[key]
        cfg.descriptor_columns.update(descriptor)
        cfg.transfer_countries = tuple(base / p for p in lists.get("transfer_countries", []))
        cfg.pooled_training = scal.get("pooled_training", False)
        cfg.region_names = tuple(lists.get("region_names", []))
        exps = tuple(lists.get("experiments", EXPERIMENTS))
        bad = [e for e in exps if e not in EXPERIMENTS]
        if bad:
            raise ConfigError(f"unknown experiment(s): {bad}")
        cfg.experiments = exps
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg
