import json

import pytest

from finsym.classify import SamplePlan
from finsym.identities import IDENTITIES, identity_report, run_identities, to_json
from finsym.models import builtin_finsler

PLAN = SamplePlan(seed=1, num_base_points=2)


@pytest.mark.parametrize("model,n", [("euclidean", 3), ("riemannian", 2), ("randers", 3), ("quartic", 2)])
def test_battery_passes(model, n):
    results = run_identities(builtin_finsler(model, {}, n), PLAN)
    assert [r.name for r in results] == [i.name for i in IDENTITIES]
    failing = [(r.name, r.max_residual) for r in results if not r.passed]
    assert not failing
    assert all(len(r.residuals) == 6 for r in results)


def test_identity_names_unique():
    assert len({i.name for i in IDENTITIES}) == len(IDENTITIES)


def test_selected_and_unknown_names():
    fs = builtin_finsler("euclidean", {}, 2)
    assert [r.name for r in run_identities(fs, PLAN, names=("grifone",))] == ["grifone"]
    with pytest.raises(ValueError, match="unknown identities"):
        run_identities(fs, PLAN, names=("grifone", "nonsense"))


def test_failing_tolerance_is_reported():
    fs = builtin_finsler("polar", {}, 2)
    report = identity_report(fs, PLAN, 1e-300, clock=lambda: "T")
    assert not report["all_pass"]
    assert {r["outcome"] for r in report["identities"]} >= {"fail"}


def test_report_keys_and_determinism():
    fs = builtin_finsler("polar", {}, 2)
    a = identity_report(fs, PLAN, 1e-8, clock=lambda: "T")
    b = identity_report(fs, PLAN, 1e-8, clock=lambda: "T")
    assert set(a) == {"report_version", "artifact_version", "command", "timestamp", "config", "identities",
                      "all_pass", "max_residual"}
    assert a["command"] == "identities" and a["all_pass"]
    assert to_json(a) == to_json(b)
    assert json.loads(to_json(a))["config"]["plan"]["seed"] == 1
    kinds = {r["name"]: r["residual_kind"] for r in a["identities"]}
    assert kinds["divergence_liouville"] == "absolute"
    assert kinds["grifone"] == "relative"
