import math

import pytest

from gponqkd.gpon import DbaLoad, PlsuPolicy, effective_upstream_power_dbm, ont_launch_power_dbm

CONT = PlsuPolicy("continuous", 0.6, 4)
DISCRETE = PlsuPolicy("discrete", levels_dbm=(2.0, -1.0, -4.0), thresholds=(2, 6))


def test_off_keeps_nominal():
    for n in (1, 4, 9, 32):
        assert ont_launch_power_dbm(PlsuPolicy.off(), n, -3) == -3


def test_continuous_examples():
    assert ont_launch_power_dbm(CONT, 9, -3) == pytest.approx(-6.0)
    assert ont_launch_power_dbm(CONT, 4, -3) == -3
    assert ont_launch_power_dbm(CONT, 1, -3) == -3


def test_discrete_levels():
    assert [ont_launch_power_dbm(DISCRETE, n, 0) for n in (1, 2, 3, 6, 7, 30)] == [2, 2, -1, -1, -4, -4]


def test_zero_active_rejected():
    with pytest.raises(ValueError):
        ont_launch_power_dbm(CONT, 0, -3)


@pytest.mark.parametrize("policy", [PlsuPolicy.off(), CONT, DISCRETE, PlsuPolicy("continuous", 0.0, 0)])
def test_launch_power_non_increasing(policy):
    levels = [ont_launch_power_dbm(policy, n, -3) for n in range(1, 40)]
    assert all(b <= a for a, b in zip(levels, levels[1:]))


def test_policy_invariants():
    with pytest.raises(ValueError):
        PlsuPolicy("continuous", -0.1)
    with pytest.raises(ValueError):
        PlsuPolicy("discrete", levels_dbm=(0.0, 1.0), thresholds=(3,))
    with pytest.raises(ValueError):
        DbaLoad("fixed", {"a": 0.7, "b": 0.4})


def test_duty_examples():
    fixed = DbaLoad("fixed", {"a": 1.0})
    assert effective_upstream_power_dbm(PlsuPolicy.off(), fixed, "a", 1, -3) == -3
    half = DbaLoad("fixed", {"a": 0.5, "b": 0.5})
    assert effective_upstream_power_dbm(PlsuPolicy.off(), half, "a", 2, -3) == pytest.approx(-6.0103, abs=1e-4)
    onts = [f"o{i}" for i in range(9)]
    p = effective_upstream_power_dbm(PlsuPolicy.off(), DbaLoad(), "o3", 9, 0.0, onts)
    assert p == pytest.approx(-9.5424, abs=1e-4)


def test_silent_ont():
    silent = DbaLoad("fixed", {"a": 0.0, "b": 1.0})
    assert effective_upstream_power_dbm(CONT, silent, "a", 2, -3) == -math.inf


def test_provisioned_slots_do_not_depend_on_load():
    load = DbaLoad("provisioned", n_provisioned=9)
    for n in (1, 5, 9):
        p = effective_upstream_power_dbm(PlsuPolicy.off(), load, "x", n, 0.0)
        assert p == pytest.approx(-9.5424, abs=1e-4)
    assert load.shares(["a", "b"]) == {"a": 1 / 9, "b": 1 / 9}
    with pytest.raises(ValueError):
        DbaLoad("provisioned", n_provisioned=2).shares(["a", "b", "c"])


def test_total_upstream_power_falls_from_four_to_nine():
    def total(n):
        onts = [f"o{i}" for i in range(n)]
        return sum(10 ** (effective_upstream_power_dbm(CONT, DbaLoad(), o, n, -3, onts) / 10) for o in onts)

    totals = [total(n) for n in range(4, 10)]
    assert all(b <= a for a, b in zip(totals, totals[1:]))
    assert 0.6 > 10 * math.log10(9 / 8)
