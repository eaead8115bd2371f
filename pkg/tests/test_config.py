import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbpnpi.analytic import AnalyticContext, classify_regime
from mbpnpi.config import ConfigError, RunConfig, load_config, parse_config

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))

MINIMAL = {
    "model": {
        "offspring": {"family": "PurePower", "gamma": 0.5, "c": 0.5},
        "immigration": {"family": "ScaledSibuya", "alpha": 0.5, "cImm": 1.0},
        "intensity": {"rho": 1.0},
    },
    "seed": 1,
}


def doc(**changes):
    data = json.loads(json.dumps(MINIMAL))
    for path, value in changes.items():
        node = data
        *head, last = path.split("__")
        for key in head:
            node = node[key]
        node[last] = value
    return json.dumps(data)


def errors_of(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.errors


def test_minimal_config_is_regime_two():
    cfg = parse_config(json.dumps(MINIMAL))
    regime = classify_regime(AnalyticContext(cfg.model.spec()))
    assert regime.regime == "II" and regime.C == pytest.approx(4.0)
    assert cfg.experiment.regime == "auto" and cfg.budget.method == "auto"


def test_round_trip_is_identical():
    cfg = parse_config(json.dumps(MINIMAL))
    again = parse_config(cfg.canonical())
    assert again == cfg
    assert again.canonical() == cfg.canonical()
    assert again.digest() == cfg.digest()


@settings(max_examples=30, deadline=None)
@given(gamma=st.floats(0.05, 1.0), frac=st.floats(0.05, 1.0), alpha=st.floats(0.05, 1.0),
       c_imm=st.floats(0.01, 1.0), seed=st.integers(0, 2**64 - 1))
def test_round_trip_property(gamma, frac, alpha, c_imm, seed):
    text = doc(model__offspring__gamma=gamma, model__offspring__c=frac / (1 + gamma),
               model__immigration__alpha=alpha, model__immigration__cImm=c_imm, seed=seed)
    cfg = parse_config(text)
    assert parse_config(cfg.canonical()) == cfg


def test_digest_tracks_content():
    a = parse_config(json.dumps(MINIMAL))
    b = parse_config(doc(seed=2))
    assert a.digest() != b.digest()
    moved = parse_config(json.dumps(MINIMAL), {"output": {"directory": "elsewhere"}})
    assert moved.digest() == a.digest()


def test_missing_seed():
    data = dict(MINIMAL)
    del data["seed"]
    assert errors_of(json.dumps(data)) == [("<root>", "seed required")]


def test_gamma_out_of_range_is_named():
    errors = errors_of(doc(model__offspring__gamma=1.5))
    assert any("gamma ∈ (0,1]" in reason for _, reason in errors)
    assert errors[0][0] == "model"


def test_scale_above_critical_bound_is_named():
    errors = errors_of(doc(model__offspring__c=0.7))
    assert any("1/(1+gamma)" in reason for _, reason in errors)


def test_unknown_fields_rejected():
    errors = errors_of(doc(model__offspring__shape=2.0))
    assert errors[0][0] == "model.offspring.shape"
    errors = errors_of(doc(extra=1))
    assert errors[0][0] == "extra"


def test_field_errors_have_paths():
    errors = errors_of(doc(experiment={"tgrid": [100, 10]}))
    assert errors[0][0] == "experiment.tgrid" and "increasing" in errors[0][1]
    errors = errors_of(doc(experiment={"n": 0}))
    assert errors[0][0] == "experiment.n"
    errors = errors_of(doc(seed=2**64))
    assert errors[0][0] == "seed"


def test_syntax_error_location():
    errors = errors_of('{\n  "seed": 1,\n  "model": }')
    assert errors[0][0] == "line 3 column 12" and "syntax" in errors[0][1]
    assert errors_of("[1, 2]") == [("<root>", "expected an object")]


def test_overrides():
    cfg = parse_config(json.dumps(MINIMAL), {"seed": 99, "output": {"directory": "elsewhere"}})
    assert cfg.seed == 99 and cfg.output.directory == "elsewhere"


def test_budget_block():
    cfg = parse_config(doc(budget={"max_events_per_replicate": 5, "method": "events"}))
    assert cfg.budget.sim_budget().max_events_per_replicate == 5
    assert cfg.budget.method == "events"


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert isinstance(cfg, RunConfig)
    assert cfg.output.directory == f"out/{path.stem}"
