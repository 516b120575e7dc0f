import json

import numpy as np
import pytest

from faceaudit.data_model import ATTRIBUTES, FITZPATRICK, GENDER, Split
from faceaudit.errors import InvalidSpec
from faceaudit.synth import SynthSpec, demo_spec, symmetric_confusion, synth_generate


def test_symmetric_confusion_rows():
    m = symmetric_confusion(5, 0.85)
    assert np.allclose(m.sum(axis=1), 1) and np.allclose(np.diag(m), 0.85)
    assert m[0, 1] == pytest.approx(0.15 / 4)


def test_identity_confusion_predicts_truth():
    for r in synth_generate(demo_spec(n=500, accuracy=1.0)):
        assert r.predicted == r.manual


def test_all_manual():
    recs = synth_generate(demo_spec(n=300, fraction_manual=1.0))
    assert not any(any(r.is_predicted) for r in recs)
    assert {r.split for r in recs} <= {Split.TRAIN, Split.VALIDATION}


def test_fitzpatrick_marginal():
    recs = synth_generate(demo_spec(n=100_000, seed=1))
    counts = np.bincount([r.manual_label(FITZPATRICK) for r in recs], minlength=5) / len(recs)
    assert counts == pytest.approx([0.04, 0.15, 0.50, 0.19, 0.12], abs=0.01)


def test_deterministic_and_seed_sensitive():
    assert synth_generate(demo_spec(n=200, accuracy=0.8, seed=4)) == synth_generate(demo_spec(n=200, accuracy=0.8, seed=4))
    assert synth_generate(demo_spec(n=200, accuracy=0.8, seed=4)) != synth_generate(demo_spec(n=200, accuracy=0.8, seed=5))


def test_predicted_records_are_test_split():
    recs = synth_generate(demo_spec(n=1000, fraction_manual=0.3))
    for r in recs:
        assert (r.split is Split.TEST) == all(r.is_predicted)
    share = np.mean([not r.is_predicted[0] for r in recs])
    assert 0.25 < share < 0.35


def test_noise_level():
    recs = synth_generate(demo_spec(n=20_000, accuracy=0.85, seed=2))
    for attr in ATTRIBUTES:
        hit = np.mean([r.manual_label(attr) == r.predicted_label(attr) for r in recs])
        assert hit == pytest.approx(0.85, abs=0.015)


def test_gender_conditional_table():
    spec = SynthSpec.from_json({
        "n": 40_000,
        "seed": 3,
        "attributes": {
            "fitzpatrick": {"by_gender": {"Men": [0.07, 0.15, 0.5, 0.16, 0.12], "Women": [0.10, 0.15, 0.5, 0.16, 0.09]}},
        },
    })
    recs = synth_generate(spec)
    for g, expected in ((0, 0.07), (1, 0.10)):
        group = [r for r in recs if r.manual_label(GENDER) == g]
        assert np.mean([r.manual_label(FITZPATRICK) == 0 for r in group]) == pytest.approx(expected, abs=0.01)


def test_json_round_trip():
    spec = demo_spec(n=50, accuracy=0.9, seed=8)
    back = SynthSpec.from_json(json.loads(json.dumps(spec.to_json())))
    assert synth_generate(back) == synth_generate(spec)


@pytest.mark.parametrize("data", [
    {"n": 10, "fraction_manual": 1.5},
    {"n": -1},
    {"n": 10, "attributes": {"gender": {"marginal": [0.7, 0.7]}}},
    {"n": 10, "attributes": {"age": {"confusion": [[1.0]]}}},
    {"n": 10, "attributes": {"gender": {"by_gender": [[0.5, 0.5], [0.5, 0.5]]}}},
    {"attributes": {}},
])
def test_invalid_spec(data):
    with pytest.raises(InvalidSpec):
        SynthSpec.from_json(data)
