import csv
import re
import json
import shutil

import numpy as np
import pytest

from popbench.cli import main, validate_inputs
from popbench.config import config_from_mapping, load_config
from popbench.errors import ConfigError, DataError
from popbench.reports import Results, emit_reports, summarize
from popbench.synth import SynthParams, synth_country

SMALL = "rf_n_trees = 20\ngbt_rounds = 15\n"


def small_config(bundle, tmp_path, n_iter=3, extra=""):
    text = (bundle / "config.toml").read_text().replace("n_iterations = 100", f"n_iterations = {n_iter}")
    text = re.sub(r"^ablation_\w+_counts = .*\n", "", text, flags=re.M)
    path = bundle / f"small_{tmp_path.name}.toml"
    path.write_text(text + SMALL + extra)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- config --------------------------------------------------------------------

def test_seed_is_mandatory(tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        config_from_mapping({"country": "X"}, tmp_path / "c.toml")


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="bogus"):
        config_from_mapping({"seed": 1, "bogus": 2}, tmp_path / "c.toml")


def test_hyperparameter_prefix_keys(tmp_path):
    cfg = config_from_mapping({"seed": 1, "rf_n_trees": 7, "en_alpha": 0.25}, tmp_path / "c.toml")
    names = {s.name: s.hyperparameters for s in cfg.specs}
    assert names["RandomForest"].n_trees == 7
    assert names["ElasticNet"].alpha == 0.25


def test_paths_resolve_relative_to_config(tmp_path):
    cfg = config_from_mapping({"seed": 1, "boundaries": "b.geojson"}, tmp_path / "sub" / "c.toml")
    assert cfg.boundaries == tmp_path / "sub" / "b.geojson"
    assert cfg.missing_paths() == [f"boundaries: {tmp_path / 'sub' / 'b.geojson'}"]


def test_malformed_config(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text("seed = = 3\n")
    with pytest.raises(ConfigError, match="malformed"):
        load_config(p)
    assert main(["benchmark", "--config", str(p)]) == 1


def test_missing_config_exit_code_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.toml"
    assert main(["benchmark", "--config", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_unknown_flag_is_usage_error(synth_bundle, capsys):
    assert main(["benchmark", "--config", str(synth_bundle / "config.toml"), "--frobnicate"]) == 1
    assert main(["nonsense"]) == 1
    assert main(["benchmark"]) == 1  # --config is required


# --- synth ---------------------------------------------------------------------

def test_synth_is_byte_deterministic(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "a"), "--seed", "7"]) == 0
    assert main(["synth", "--out", str(tmp_path / "b"), "--seed", "7"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(names) == 7
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    synth_country(SynthParams(seed=8), tmp_path / "c")
    assert (tmp_path / "c" / "population.csv").read_bytes() != (tmp_path / "a" / "population.csv").read_bytes()


def test_synth_counts(synth_bundle):
    cfg = load_config(synth_bundle / "config.toml")
    ds, geoms = cfg.load_dataset()
    assert len(ds.units) == 200
    assert len(ds.groups("group")) == 10
    assert len(ds.groups("supergroup")) == 5
    assert ds.population.counts.min() >= 1


def test_synth_param_validation():
    with pytest.raises(DataError):
        SynthParams(embedding_dim=0)
    with pytest.raises(DataError):
        SynthParams(signal_share_embeddings=1.5)


def test_synth_cli_flags(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--seed", "1", "--n-groups", "4", "--units-per-group", "5",
                 "--n-supergroups", "2", "--embedding-dim", "3"]) == 0
    cfg = load_config(tmp_path / "config.toml")
    ds, _ = cfg.load_dataset()
    assert len(ds.units) == 20
    assert ds.feature_names("embeddings") == ("feature_0", "feature_1", "feature_2")


# --- validate ------------------------------------------------------------------

def test_validate_consistent_bundle(synth_bundle, capsys):
    assert main(["validate", "--config", str(synth_bundle / "config.toml")]) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_validate_lists_mismatched_ids(tmp_path, capsys):
    synth_country(SynthParams(seed=2), tmp_path)
    lines = (tmp_path / "population.csv").read_text().splitlines()
    kept = [l for l in lines if not l.startswith(("G3-07,", "G5-11,"))]
    (tmp_path / "population.csv").write_text("\n".join(kept) + "\n")
    assert main(["validate", "--config", str(tmp_path / "config.toml")]) == 1
    out = capsys.readouterr().out
    assert "G3-07" in out and "G5-11" in out
    assert "all checks passed" not in out


def test_validate_feasibility_warning_two_groups(tmp_path):
    synth_country(SynthParams(seed=2, n_groups=2, n_supergroups=1, units_per_group=10), tmp_path)
    rep = validate_inputs(load_config(tmp_path / "config.toml"))
    assert rep.ok
    assert any("feasibility" in w for w in rep.warnings)
    assert "all checks passed" not in rep.lines()


# --- reports -------------------------------------------------------------------

def test_summarize_examples():
    s = summarize([1, 2, 3, 4])
    assert (s["median"], s["q25"], s["q75"]) == (2.5, 1.75, 3.25)
    s = summarize([0.7])
    assert (s["median"], s["q25"], s["q75"]) == (0.7, 0.7, 0.7)
    s = summarize([float("nan"), 1.0, 3.0])
    assert s["n_nonfinite"] == 1 and s["median"] == 2.0


def test_empty_results_are_an_error(tmp_path):
    with pytest.raises(DataError):
        emit_reports(Results(), tmp_path)
    assert main(["report", "--config", str(tmp_path / "missing.toml")]) == 1


def oracle_quantile(values, q):
    # textbook linear interpolation between closest ranks
    xs = sorted(values)
    h = (len(xs) - 1) * q
    lo = int(h)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


@pytest.fixture(scope="module")
def bench_out(synth_bundle, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("bench")
    cfg = small_config(synth_bundle, tmp, n_iter=5)
    assert main(["benchmark", "--config", str(cfg), "--out", str(tmp), "--threads", "2"]) == 0
    return tmp


def test_benchmark_outputs(bench_out):
    rows = read_rows(bench_out / "metrics.csv")
    assert len(rows) == 5 * 2 * 3
    assert len(read_rows(bench_out / "splits.csv")) > 0
    assert (bench_out / "summary.json").exists()
    assert (bench_out / "charts" / "benchmark_r2.svg").exists()


def test_summary_matches_percentile_oracle(bench_out):
    rows = read_rows(bench_out / "metrics.csv")
    summary = json.loads((bench_out / "summary.json").read_text())
    assert len(summary["benchmark"]) == 2 * 3 * 2
    for entry in summary["benchmark"]:
        vals = [float(r[entry["metric"]]) for r in rows
                if (r["country"], r["model"], r["family"]) == (entry["country"], entry["model"], entry["family"])]
        assert entry["n"] == len(vals) == 5
        for key, q in (("q25", 0.25), ("median", 0.5), ("q75", 0.75)):
            assert abs(entry[key] - oracle_quantile(vals, q)) <= 1e-12


def test_report_is_idempotent(bench_out, tmp_path):
    work = tmp_path / "out"
    shutil.copytree(bench_out, work)
    conf = tmp_path / "c.toml"
    conf.write_text("seed = 1\n")
    assert main(["report", "--config", str(conf), "--out", str(work)]) == 0
    first = {p.relative_to(work): p.read_bytes() for p in work.rglob("*") if p.is_file()}
    assert main(["report", "--config", str(conf), "--out", str(work)]) == 0
    second = {p.relative_to(work): p.read_bytes() for p in work.rglob("*") if p.is_file()}
    assert first == second
    assert (work / "summary.json").read_bytes() == (bench_out / "summary.json").read_bytes()


def test_threads_env_var(synth_bundle, tmp_path, monkeypatch):
    import popbench.cli as cli
    seen = []
    monkeypatch.setattr(cli, "_COMMANDS", {**cli._COMMANDS, "benchmark": lambda c, o, n: seen.append(n)})
    conf = synth_bundle / "config.toml"
    monkeypatch.setenv("POPBENCH_THREADS", "3")
    assert main(["benchmark", "--config", str(conf), "--out", str(tmp_path)]) == 0
    assert main(["benchmark", "--config", str(conf), "--out", str(tmp_path), "--threads", "2"]) == 0
    monkeypatch.setenv("POPBENCH_THREADS", "many")
    assert main(["benchmark", "--config", str(conf), "--out", str(tmp_path)]) == 1
    assert seen == [3, 2]


# --- full pipeline on the synthetic bundle -------------------------------------

def test_all_commands_run(synth_bundle, tmp_path):
    cfg = small_config(synth_bundle, tmp_path, n_iter=2,
                       extra="ablation_embedding_counts = [1, 16]\nablation_covariate_counts = [1, 23]\n")
    args = ["--config", str(cfg), "--out", str(tmp_path), "--threads", "1"]
    for cmd in ("link", "benchmark", "importance", "ablate", "transfer", "sensitivity", "report"):
        assert main([cmd, *args]) == 0, cmd
    for name in ("metrics.csv", "importance.csv", "transfer.csv", "ols.csv", "ablation.csv", "sensitivity.csv",
                 "summary.json", "splits.csv", "linkage_review.csv", "sensitivity_delta.csv"):
        assert (tmp_path / name).exists(), name
    assert len(read_rows(tmp_path / "linkage_review.csv")) == 200
    assert len(read_rows(tmp_path / "transfer.csv")) == 10
    assert read_rows(tmp_path / "ols.csv")[0].keys() == {
        "scope", "metric", "variable", "estimate", "ci_low", "ci_high", "std_error", "p_value"}
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary) == {"benchmark", "importance", "transfer", "ablation", "sensitivity"}
    assert all(np.isfinite(e["median"]) for e in summary["benchmark"])
