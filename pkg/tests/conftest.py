import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from popbench.datamodel import AdminUnit, FeatureTable, Family, PopulationTable, assemble_dataset
from popbench.synth import SynthParams, synth_country

settings.register_profile("popbench", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("popbench")


def make_dataset(n_groups=10, per_group=6, n_emb=4, n_cov=3, seed=0, country="T", signal="embeddings",
                 supergroups=None):
    """Small in-memory dataset; shares depend on the first column of ``signal``."""
    rng = np.random.default_rng(seed)
    ids, units = [], []
    for g in range(n_groups):
        for k in range(per_group):
            uid = f"g{g:02d}u{k:02d}"
            ids.append(uid)
            sg = None if supergroups is None else f"s{g * supergroups // n_groups}"
            units.append(AdminUnit(uid, uid, f"g{g:02d}", 100.0 + k, sg))
    n = len(ids)
    emb = rng.normal(size=(n, n_emb))
    cov = rng.normal(size=(n, n_cov))
    driver = emb[:, 0] if signal == "embeddings" else cov[:, 0]
    pop = np.round(np.exp(6 + driver)) + 1
    tables = [FeatureTable(Family.EMBEDDINGS, tuple(f"e{j}" for j in range(n_emb)), tuple(ids), emb),
              FeatureTable(Family.COVARIATES, tuple(f"c{j}" for j in range(n_cov)), tuple(ids), cov)]
    return assemble_dataset(units, tables, PopulationTable(tuple(ids), pop), country)


@pytest.fixture(scope="session")
def synth_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    synth_country(SynthParams(seed=3), out)
    return out


_CRITERIA: dict[str, tuple[str, float]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        name = report.nodeid.split("::")[-1]
        _CRITERIA[name] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        outcome, duration = _CRITERIA[name]
        number = int(name.split("_")[2])
        label = " ".join(name.split("_")[3:])
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} ({label}): {verdict} [{duration:.1f}s]")
