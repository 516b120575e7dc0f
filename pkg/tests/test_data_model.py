import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faceaudit.data_model import (
    AGE,
    ATTRIBUTES,
    FITZPATRICK,
    GENDER,
    AnnotatedRecord,
    AttributeKind,
    ReferenceDistribution,
    Split,
    binarize,
    default_references,
    dump_references,
    load_annotations,
    load_references,
    save_annotations,
    subsample,
    working_labels,
)
from faceaudit.errors import (
    InvalidDistribution,
    MalformedRow,
    MissingColumn,
    MissingLabel,
    SampleTooLarge,
    UnknownModality,
)

HEADER = "id,split,gender_manual,gender_pred,age_manual,age_pred,fitzpatrick_manual,fitzpatrick_pred,is_predicted\n"


def write_csv(tmp_path, body, header=HEADER):
    path = tmp_path / "ann.csv"
    path.write_text(header + body, encoding="utf-8")
    return path


def record(rid, fitz, gender=0, age=3, split=Split.TEST, predicted=None):
    pred = predicted if predicted is not None else (gender, age, fitz)
    return AnnotatedRecord(rid, split, (gender, age, fitz), pred, (False, False, False))


class TestTaxonomy:
    def test_cardinalities(self):
        assert (GENDER.cardinality, AGE.cardinality, FITZPATRICK.cardinality) == (2, 9, 5)
        assert GENDER.modalities == ("Men", "Women")
        assert AGE.modalities[-1] == "70+"
        assert FITZPATRICK.modalities == ("I", "II", "III-IV", "V", "VI")

    def test_parse(self):
        assert FITZPATRICK.parse_modality("iii-iv") == 2
        assert GENDER.parse_modality("WOMEN") == 1
        assert AttributeKind.parse("Fitzpatrick") is FITZPATRICK
        with pytest.raises(KeyError):
            FITZPATRICK.parse_modality("VII")


class TestLoad:
    def test_example_row(self, tmp_path):
        (r,) = load_annotations(write_csv(tmp_path, "img1,test,men,men,20-29,20-29,II,I,1\n"))
        assert r.id == "img1" and r.split is Split.TEST
        assert r.manual_label(GENDER) == 0 and r.predicted_label(GENDER) == 0
        assert r.manual_label(AGE) == 3 == r.predicted_label(AGE)
        assert r.manual_label(FITZPATRICK) == 1 and r.predicted_label(FITZPATRICK) == 0
        assert r.is_predicted == (True, True, True)
        assert r.working_label(FITZPATRICK) == 0

    def test_case_insensitive(self, tmp_path):
        (r,) = load_annotations(write_csv(tmp_path, "a,test,Women,,70+,,iii-iv,,0\n"))
        assert r.manual_label(FITZPATRICK) == 2
        assert r.predicted_label(GENDER) is None

    def test_unknown_modality(self, tmp_path):
        with pytest.raises(UnknownModality) as exc:
            load_annotations(write_csv(tmp_path, "a,test,men,men,20-29,20-29,VII,I,1\n"))
        assert exc.value.value == "VII"
        assert exc.value.column == "fitzpatrick_manual"

    def test_missing_column(self, tmp_path):
        path = write_csv(tmp_path, "a,test\n", header="id,split\n")
        schema = {"id": "id", "split": "split", "gender_manual": "sex"}
        with pytest.raises(MissingColumn):
            load_annotations(path, schema)

    def test_malformed_row(self, tmp_path):
        with pytest.raises(MalformedRow) as exc:
            load_annotations(write_csv(tmp_path, "a,test,men,men,20-29,20-29,II,I,1\nb,test,men\n"))
        assert exc.value.line == 3

    def test_custom_schema(self, tmp_path):
        path = write_csv(tmp_path, "x7,validation,V\n", header="name,part,fitz\n")
        (r,) = load_annotations(path, {"id": "name", "split": "part", "fitzpatrick_manual": "fitz"})
        assert r.split is Split.VALIDATION
        with pytest.raises(UnknownModality):
            load_annotations(path, {"id": "name", "split": "part", "gender_manual": "fitz"})

    def test_missing_flag_means_prediction_only_when_manual_absent(self, tmp_path):
        header = "id,split,gender_manual,gender_pred\n"
        recs = load_annotations(write_csv(tmp_path, "a,test,,men\nb,train,women,men\n", header))
        assert recs[0].uses_prediction(GENDER) and recs[0].working_label(GENDER) == 0
        assert not recs[1].uses_prediction(GENDER) and recs[1].working_label(GENDER) == 1

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        recs = []
        for i in range(50):
            manual = tuple(None if rng.random() < 0.2 else int(rng.integers(a.cardinality)) for a in ATTRIBUTES)
            pred = tuple(int(rng.integers(a.cardinality)) for a in ATTRIBUTES)
            flags = tuple(bool(rng.random() < 0.5) for _ in ATTRIBUTES)
            ita = float(rng.normal(30, 20)) if i % 3 else None
            recs.append(AnnotatedRecord(f"r{i}", Split(list(Split)[i % 4].value), manual, pred, flags, ita))
        path = tmp_path / "out.csv"
        save_annotations(recs, path)
        assert load_annotations(path) == recs


class TestSubsample:
    records = [record(f"r{i}", i % 5) for i in range(40)]

    def test_identity(self):
        assert subsample(self.records, 40, 3) == self.records

    def test_empty(self):
        assert subsample(self.records, 0, 3) == []

    def test_too_large(self):
        with pytest.raises(SampleTooLarge):
            subsample(self.records, 41, 0)

    @given(st.integers(0, 40), st.integers(0, 2**32 - 1))
    def test_deterministic_injective_ordered(self, n, seed):
        a = subsample(self.records, n, seed)
        assert a == subsample(self.records, n, seed)
        ids = [r.id for r in a]
        assert len(set(ids)) == n
        positions = [int(i[1:]) for i in ids]
        assert positions == sorted(positions)


class TestBinarize:
    def test_example(self):
        recs = [record("a", 0), record("b", 1), record("c", 0)]
        assert binarize(recs, FITZPATRICK, 0, False).values.tolist() == [1, 0, 1]

    def test_absent_target(self):
        recs = [record("a", 0), record("b", 1)]
        assert binarize(recs, FITZPATRICK, 4, False).values.tolist() == [0, 0]

    def test_predicted_vs_manual(self):
        recs = [record("a", 0, predicted=(0, 3, 4))]
        assert binarize(recs, FITZPATRICK, 4, True).values.tolist() == [1]
        assert binarize(recs, FITZPATRICK, 4, False).values.tolist() == [0]

    def test_missing_label(self):
        r = AnnotatedRecord("a", Split.TEST, (0, 0, None), (0, 0, None), (False,) * 3)
        with pytest.raises(MissingLabel):
            binarize([r], FITZPATRICK, 0, False)
        with pytest.raises(MissingLabel):
            working_labels([r], FITZPATRICK)

    def test_complement(self):
        view = binarize([record("a", 0), record("b", 1)], FITZPATRICK, 0, False)
        assert view.complement().values.tolist() == [0, 1]

    @settings(max_examples=50)
    @given(st.sampled_from(ATTRIBUTES), st.lists(st.integers(0, 8), min_size=1, max_size=30), st.booleans())
    def test_partition(self, attr, raw, use_predicted):
        labels = [x % attr.cardinality for x in raw]
        recs = []
        for i, lab in enumerate(labels):
            full = [0, 0, 0]
            full[attr.index] = lab
            recs.append(AnnotatedRecord(f"r{i}", Split.TEST, tuple(full), tuple(full), (False,) * 3))
        total = sum(binarize(recs, attr, m, use_predicted).values.astype(int) for m in range(attr.cardinality))
        assert total.tolist() == [1] * len(recs)


class TestReferences:
    def test_defaults_sum_to_one(self):
        refs = default_references()
        assert set(refs) == set(ATTRIBUTES)
        for ref in refs.values():
            assert sum(ref.probabilities) == pytest.approx(1, abs=1e-9)

    def test_fitzpatrick_table(self):
        assert default_references()[FITZPATRICK].probabilities == pytest.approx((0.04, 0.15, 0.50, 0.19, 0.12))

    def test_age_weights_normalized(self):
        # the published age table adds up to 102 percent
        ref = default_references()[AGE]
        assert ref[1] == pytest.approx(12 / 102)

    def test_invalid(self):
        with pytest.raises(InvalidDistribution):
            ReferenceDistribution(GENDER, (0.6, 0.6))
        with pytest.raises(InvalidDistribution):
            ReferenceDistribution(GENDER, (1.2, -0.2))
        with pytest.raises(InvalidDistribution):
            ReferenceDistribution(GENDER, (1.0,))

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "refs.json"
        path.write_text(json.dumps(dump_references(default_references())))
        assert load_references(path) == default_references()

    def test_weights_form(self, tmp_path):
        path = tmp_path / "refs.json"
        path.write_text(json.dumps({"gender": {"weights": [1, 3]}}))
        assert load_references(path)[GENDER].probabilities == pytest.approx((0.25, 0.75))
