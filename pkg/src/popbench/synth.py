"""Synthetic country bundles with a controllable signal split between families.

Units are square cells on a lon/lat grid, grouped into rectangular blocks
(groups), which are in turn assigned to supergroups. Each unit carries latent
factors ``z``; population is log-linear in ``z`` and each feature family is a
linear mix of ``z`` weighted by that family's signal share, plus noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from popbench.datamodel import COVARIATE_NAMES, fmt
from popbench.errors import DataError

_SYLLABLES = ("ba", "ka", "lo", "mi", "nu", "ra", "se", "ti", "vo", "ze", "da", "po", "gu", "he", "ji", "ko")


@dataclass(frozen=True)
class SynthParams:
    n_groups: int = 10
    units_per_group: int = 20
    n_supergroups: int = 5
    embedding_dim: int = 16
    covariate_dim: int = 23
    signal_share_embeddings: float = 0.5
    signal_share_covariates: float = 0.5
    noise_sd: float = 0.3
    seed: int = 0
    n_latent: int = 3
    cell_deg: float = 0.05
    origin_lon: float = 5.0
    origin_lat: float = 5.0
    country_tag: str = "SYN"

    def __post_init__(self):
        if min(self.n_groups, self.units_per_group, self.n_supergroups, self.embedding_dim,
               self.covariate_dim, self.n_latent) < 1:
            raise DataError("counts and dimensions must be >= 1")
        if self.n_supergroups > self.n_groups:
            raise DataError("n_supergroups cannot exceed n_groups")
        for name in ("signal_share_embeddings", "signal_share_covariates"):
            if not 0 <= getattr(self, name) <= 1:
                raise DataError(f"{name} must lie in [0, 1]")
        if self.noise_sd < 0:
            raise DataError("noise_sd must be >= 0")


def _name(rng: np.random.Generator) -> str:
    k = int(rng.integers(2, 4))
    return "".join(_SYLLABLES[i] for i in rng.integers(0, len(_SYLLABLES), size=k)).capitalize()


def _family(rng, z, dim, share):
    mix = rng.normal(size=(z.shape[1], dim)) / math.sqrt(z.shape[1])
    signal = z @ mix
    noise = rng.normal(size=(z.shape[0], dim))
    return share * signal + (1.0 - share) * noise


def generate(params: SynthParams) -> dict:
    """Build the bundle in memory (GeoJSON dict, tables, places)."""
    rng = np.random.default_rng(params.seed)
    G, U = params.n_groups, params.units_per_group
    n = G * U
    blocks_per_row = math.ceil(math.sqrt(G))
    width = math.ceil(math.sqrt(U))
    height = math.ceil(U / width)
    gw, uw = len(str(G - 1)), len(str(U - 1))
    group_ids = [f"G{g:0{gw}d}" for g in range(G)]
    super_ids = [f"S{s:0{len(str(params.n_supergroups - 1))}d}" for s in range(params.n_supergroups)]

    features, unit_ids, cells = [], [], []
    for g in range(G):
        bx, by = g % blocks_per_row, g // blocks_per_row
        for k in range(U):
            cx = bx * (width + 1) + k % width  # one empty column between blocks
            cy = by * height + k // width
            cells.append((g, k, cx, cy))

    # latent factors: group offset plus unit variation
    group_effect = 0.5 * rng.normal(size=(G, params.n_latent))
    z = np.repeat(group_effect, U, axis=0) + rng.normal(size=(n, params.n_latent))
    weights = rng.normal(size=params.n_latent)
    weights /= np.linalg.norm(weights)
    log_pop = 7.0 + z @ weights + params.noise_sd * rng.normal(size=n)
    population = np.maximum(1.0, np.round(np.exp(log_pop)))
    emb = _family(rng, z, params.embedding_dim, params.signal_share_embeddings)
    cov = _family(rng, z, params.covariate_dim, params.signal_share_covariates)

    names, places, fixture = [], [], []
    for i, (g, k, cx, cy) in enumerate(cells):
        uid = f"{group_ids[g]}-{k:0{uw}d}"
        unit_ids.append(uid)
        x0 = round(params.origin_lon + cx * params.cell_deg, 10)
        y0 = round(params.origin_lat + cy * params.cell_deg, 10)
        x1 = round(params.origin_lon + (cx + 1) * params.cell_deg, 10)
        y1 = round(params.origin_lat + (cy + 1) * params.cell_deg, 10)
        name = _name(rng)
        names.append(name)
        features.append({
            "type": "Feature",
            "properties": {
                "id": uid,
                "name": name,
                "group_id": group_ids[g],
                "supergroup_id": super_ids[g * params.n_supergroups // G],
            },
            "geometry": {"type": "Polygon", "coordinates": [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]]},
        })
        jitter = rng.uniform(0.2, 0.8, size=2)
        fixture.append((f"P{i:05d}", round(x0 + jitter[0] * (x1 - x0), 8), round(y0 + jitter[1] * (y1 - y0), 8)))
        suffix = (" District", " Municipality", "")[int(rng.integers(0, 3))]
        places.append((f"P{i:05d}", name + suffix))

    cov_names = list(COVARIATE_NAMES) if params.covariate_dim == len(COVARIATE_NAMES) else [
        f"cov_{j:02d}" for j in range(params.covariate_dim)]
    return {
        "boundaries": {"type": "FeatureCollection", "features": features},
        "unit_ids": unit_ids,
        "population": population,
        "embeddings": (tuple(f"feature_{j}" for j in range(params.embedding_dim)), emb),
        "covariates": (tuple(cov_names), cov),
        "places": places,
        "fixture": fixture,
    }


def _write_table(path: Path, header, ids, values) -> None:
    lines = [",".join(["unit_id", *header])]
    lines += [",".join([uid, *(fmt(v) for v in row)]) for uid, row in zip(ids, values)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


CONFIG_TEMPLATE = """\
# popbench run configuration (flat TOML). Paths are relative to this file.
seed = {seed}
country = "{country}"
output_dir = "out"

boundaries = "boundaries.geojson"
population = "population.csv"
embeddings = "embeddings.csv"
covariates = "covariates.csv"
places = "places.csv"
geocoder_fixture = "geocoder.csv"

# Monte Carlo design
n_iterations = 100
group_sample_frac = 0.7
unit_frac_min = 0.6
unit_frac_max = 0.8
pop_frac_min = 0.65
pop_frac_max = 0.75
max_attempts = 1000

models = ["RandomForest", "GradientBoosting", "ElasticNet"]
epsilon = 1e-12

# ablation grid
ablation_model = "RandomForest"
ablation_embedding_counts = {emb_counts}
ablation_covariate_counts = {cov_counts}

# aggregation used by the sensitivity analysis
aggregation_embeddings = "mean"
aggregation_covariates = "area_weighted_mean"
"""


def synth_country(params: SynthParams, out_dir) -> dict[str, Path]:
    """Write a complete bundle (GeoJSON, CSVs, config) to ``out_dir``.

    Output bytes depend only on ``params``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    b = generate(params)
    paths = {
        "boundaries": out / "boundaries.geojson",
        "population": out / "population.csv",
        "embeddings": out / "embeddings.csv",
        "covariates": out / "covariates.csv",
        "places": out / "places.csv",
        "geocoder_fixture": out / "geocoder.csv",
        "config": out / "config.toml",
    }
    paths["boundaries"].write_text(json.dumps(b["boundaries"], indent=1) + "\n", encoding="utf-8")
    paths["population"].write_text(
        "unit_id,population\n" + "".join(f"{u},{fmt(p)}\n" for u, p in zip(b["unit_ids"], b["population"])),
        encoding="utf-8",
    )
    _write_table(paths["embeddings"], *b["embeddings"][:1], b["unit_ids"], b["embeddings"][1])
    _write_table(paths["covariates"], *b["covariates"][:1], b["unit_ids"], b["covariates"][1])
    paths["places"].write_text(
        "record_id,name\n" + "".join(f"{r},{name}\n" for r, name in b["places"]), encoding="utf-8"
    )
    paths["geocoder_fixture"].write_text(
        "record_id,lon,lat\n" + "".join(f"{r},{fmt(x)},{fmt(y)}\n" for r, x, y in b["fixture"]), encoding="utf-8"
    )
    emb_counts = [k for k in (1, 2, 4, 8, 16, 32, 64, 128, 256, 330) if k < params.embedding_dim]
    emb_counts.append(params.embedding_dim)
    cov_counts = list(range(1, params.covariate_dim + 1))
    paths["config"].write_text(
        CONFIG_TEMPLATE.format(seed=params.seed, country=params.country_tag, emb_counts=emb_counts,
                               cov_counts=cov_counts),
        encoding="utf-8",
    )
    return paths
