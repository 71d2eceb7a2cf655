import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from popbench.errors import DataError, SplitError
from popbench.splits import (
    GroupedIndex,
    SplitConstraints,
    SplitIteration,
    SplitPlan,
    leave_one_group_out,
    monte_carlo_splits,
    read_splits_csv,
    validate_split,
    write_splits_csv,
)


def equal_index(n_groups=10, per=5):
    groups = {f"g{g}": tuple(f"g{g}u{k}" for k in range(per)) for g in range(n_groups)}
    units = [u for ids in groups.values() for u in ids]
    return GroupedIndex(groups), {u: 1 / len(units) for u in units}


def test_equal_groups_give_exact_fractions():
    index, shares = equal_index()
    plan = monte_carlo_splits(index, shares, n_iter=20, seed=1)
    for it in plan:
        assert len(it.train_groups) == 7
        assert it.train_unit_frac == pytest.approx(0.7)
        assert it.train_pop_frac == pytest.approx(0.7)


def test_adversarial_instance_exhausts_attempts():
    index, _ = equal_index()
    shares = {u: (0.6 / 5 if u.startswith("g0u") else 0.4 / 45) for ids in index.groups.values() for u in ids}
    with pytest.raises(SplitError, match="5 attempts"):
        monte_carlo_splits(index, shares, SplitConstraints(max_attempts=5), n_iter=100, seed=0)


@settings(max_examples=25)
@given(st.integers(5, 14), st.integers(0, 2**63), st.data())
def test_plans_satisfy_constraints(n_groups, seed, data):
    sizes = data.draw(st.lists(st.integers(3, 8), min_size=n_groups, max_size=n_groups))
    rng = np.random.default_rng(seed % 1000)
    groups = {f"g{g:02d}": tuple(f"g{g:02d}u{k}" for k in range(s)) for g, s in enumerate(sizes)}
    index = GroupedIndex(groups)
    w = rng.uniform(0.5, 1.5, size=len(index.unit_ids))
    shares = dict(zip(index.unit_ids, w / w.sum()))
    try:
        plan = monte_carlo_splits(index, shares, n_iter=10, seed=seed)
    except SplitError:
        return  # infeasible instances are allowed to fail, never to violate
    assert len(plan) == 10
    assert validate_split(plan, index, shares)
    for it in plan:
        assert 0.6 <= it.train_unit_frac <= 0.8 and 0.65 <= it.train_pop_frac <= 0.75
        assert it.train_units.isdisjoint(it.validation_units)


def test_same_seed_same_plan_any_thread_count():
    index, shares = equal_index(10, 4)
    a = monte_carlo_splits(index, shares, n_iter=50, seed=9, n_jobs=1)
    b = monte_carlo_splits(index, shares, n_iter=50, seed=9, n_jobs=8)
    assert a == b
    assert a != monte_carlo_splits(index, shares, n_iter=50, seed=10)


def test_leave_one_group_out():
    index, shares = equal_index(5, 3)
    plan = leave_one_group_out(index, shares)
    assert len(plan) == 5
    held = [u for it in plan for u in it.validation_units]
    assert sorted(held) == list(index.unit_ids)
    assert validate_split(plan, index, shares, None)
    two, s2 = equal_index(2, 3)
    p2 = leave_one_group_out(two, s2)
    assert p2.iterations[0].train_units == p2.iterations[1].validation_units


def test_validate_split_reports_violations():
    index, shares = equal_index()
    plan = monte_carlo_splits(index, shares, n_iter=3, seed=0)
    assert validate_split(plan, index, shares)
    it = plan.iterations[0]
    leak = next(iter(it.validation_units))
    bad = SplitPlan((SplitIteration(0, it.train_groups, it.train_units | {leak}, 0.7, 0.7,
                                    it.validation_units),))
    rep = validate_split(bad, index, shares)
    assert not rep and leak in rep.message
    eight = frozenset(f"g{g}" for g in range(8))
    units = frozenset(u for g in eight for u in index.groups[g])
    rep = validate_split(SplitPlan((SplitIteration(0, eight, units, 0.8, 0.8),)), index, shares)
    assert not rep and "outside" in rep.message


def test_splits_csv_round_trip(tmp_path):
    index, shares = equal_index()
    plan = monte_carlo_splits(index, shares, n_iter=5, seed=2)
    write_splits_csv(plan, index, tmp_path / "s.csv")
    assert read_splits_csv(tmp_path / "s.csv", index, shares) == plan


def test_index_rejects_overlap_and_small_inputs():
    with pytest.raises(DataError):
        GroupedIndex({"a": ("u1",), "b": ("u1",)})
    index, shares = equal_index(2, 2)
    with pytest.raises(DataError):
        monte_carlo_splits(index, shares)
    with pytest.raises(DataError):
        SplitConstraints(unit_frac_range=(0.8, 0.6))
