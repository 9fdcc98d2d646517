import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kvselect.exceptions import ArgumentError
from kvselect.plans import (
    FULL,
    LOCAL,
    LayerPlan,
    LayerStrategy,
    activation,
    build_layer_plan,
    downsample,
    entropy_adaptive_plan,
)

GOLDEN = Path(__file__).parent / "golden"


def kinds(plan):
    return [str(s) for s in plan.strategies]


class TestThresholdPlan:
    def test_defaults(self):
        plan = build_layer_plan()
        assert kinds(plan) == ["local"] * 2 + ["downsample(3)"] * 7 + ["full_restricted"] * 15
        assert plan.layers_of("local") == [0, 1]
        assert plan.layers_of("downsample") == list(range(2, 9))
        assert plan.layers_of("full_restricted") == list(range(9, 24))

    def test_no_sparsification(self):
        assert kinds(build_layer_plan(24, 0, 0)) == ["full_restricted"] * 24

    def test_late_tail(self):
        plan = build_layer_plan(24, 2, 9, 3, l_late=20)
        assert plan.layers_of("downsample") == list(range(2, 9)) + [20, 21, 22, 23]
        assert plan.layers_of("full_restricted") == list(range(9, 20))

    def test_pool_early(self):
        plan = build_layer_plan(6, 2, 4, 2, early="pool")
        assert kinds(plan)[:2] == ["pool", "pool"]

    @pytest.mark.parametrize("args", [(24, 3, 2), (24, -1, 2), (24, 2, 25), (4, 0, 5)])
    def test_ordering(self, args):
        with pytest.raises(ArgumentError):
            build_layer_plan(*args)

    def test_late_ordering(self):
        with pytest.raises(ArgumentError):
            build_layer_plan(24, 2, 9, 3, l_late=8)

    def test_default_serialization_golden(self):
        text = build_layer_plan().to_json()
        assert text == (GOLDEN / "default_plan.json").read_text(encoding="utf-8")
        expected = {
            "n_layers": 24, "provenance": "thresholds", "l_local": 2, "l_sample": 9, "l_late": None,
            "tau1": None, "tau2": None, "sigma": 3,
            "strategies": ["local"] * 2 + ["downsample(3)"] * 7 + ["full_restricted"] * 15,
        }
        assert text == json.dumps(expected, indent=2) + "\n"

    def test_roundtrip(self):
        plan = build_layer_plan(12, 1, 5, 2, l_late=10)
        assert LayerPlan.from_json(plan.to_json()) == plan


class TestEntropyPlan:
    def test_worked_example(self):
        plan = entropy_adaptive_plan([0.99, 0.98, 0.95, 0.90, 0.80], 0.97, 0.92, sigma=3)
        assert plan.layers_of("local") == [0, 1]
        assert plan.layers_of("downsample") == [2]
        assert plan.layers_of("full_restricted") == [3, 4]
        assert (plan.l_local, plan.l_sample, plan.provenance) == (2, 3, "entropy")

    def test_all_below(self):
        plan = entropy_adaptive_plan([0.5, 0.4, 0.3], 0.9, 0.8)
        assert kinds(plan) == ["full_restricted"] * 3

    def test_never_crosses(self):
        assert kinds(entropy_adaptive_plan([1.0] * 4, 0.9, 0.8)) == ["local"] * 4

    def test_tau_order(self):
        with pytest.raises(ArgumentError):
            entropy_adaptive_plan([0.5], 0.5, 0.6)

    def test_out_of_range(self):
        with pytest.raises(ArgumentError):
            entropy_adaptive_plan([1.2], 0.9, 0.5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0, 1), st.floats(0, 1))
def test_monotone_entropies_match_threshold_plan(values, t1, t2):
    H = sorted(values, reverse=True)
    tau1, tau2 = max(t1, t2), min(t1, t2)
    plan = entropy_adaptive_plan(H, tau1, tau2, sigma=2)
    ref = build_layer_plan(len(H), plan.l_local, plan.l_sample, 2)
    assert plan.strategies == ref.strategies
    # the boundaries are the first crossings
    assert all(h >= tau1 for h in H[: plan.l_local])
    assert plan.l_local == len(H) or H[plan.l_local] < tau1


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 30), st.data())
def test_threshold_regions_contiguous(n, data):
    l_local = data.draw(st.integers(0, n))
    l_sample = data.draw(st.integers(l_local, n))
    plan = build_layer_plan(n, l_local, l_sample, 2)
    ks = [s.kind for s in plan.strategies]
    order = {"local": 0, "downsample": 1, "full_restricted": 2}
    assert [order[k] for k in ks] == sorted(order[k] for k in ks)
    assert ks.count("local") == l_local and ks.count("downsample") == l_sample - l_local


class TestStrategy:
    @pytest.mark.parametrize("s", [LOCAL, FULL, downsample(2), activation(0.25), LayerStrategy("pool")])
    def test_parse_roundtrip(self, s):
        assert LayerStrategy.parse(str(s)) == s

    @pytest.mark.parametrize("kw", [dict(kind="downsample", sigma=1), dict(kind="activation", keep_fraction=0.0),
                                    dict(kind="local", sigma=2), dict(kind="nope")])
    def test_invalid(self, kw):
        with pytest.raises(ArgumentError):
            LayerStrategy(**kw)
