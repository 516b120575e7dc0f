"""Uncertainty-aware parity and equal-representation audits.

Predicted labels are re-noised before testing, according to the classifier's
reliability measured on a manually annotated validation split:

* parity: each predicted one-vs-all indicator is replaced, with probability
  1 - accuracy, by a draw from the reference Bernoulli;
* representation: each predicted record first has its gender flipped with
  probability 1 - precision of its current gender, then its tested attribute
  is resampled, with probability 1 - conditional accuracy, from the manual
  labels of records of the same gender.

Every audit repeats this over many simulations and keeps the median p-value
of each test; the three medians are combined by majority vote.
"""

from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .data_model import (
    AGE,
    ATTRIBUTES,
    FITZPATRICK,
    GENDER,
    AnnotatedRecord,
    AttributeKind,
    BinarizedView,
    ReferenceDistribution,
    working_labels,
)
from .errors import EmptyManualPool, EmptySubgroup, EmptySupport, MissingLabel, UnorderedAttribute
from .stat_tests import (
    ALL_TESTS,
    TestKind,
    chi2_one_sample,
    chi2_two_sample,
    mean_test_one_sample,
    mean_test_two_sample,
    wasserstein_perm_test,
)

# -- reliability -------------------------------------------------------------


@dataclass(frozen=True)
class Rate:
    value: float
    support: int


@dataclass
class ReliabilityTable:
    """Classifier reliability rates estimated on the validation split.

    ``accuracy[(attr, m)]`` is P[predicted indicator of m == true indicator],
    ``precision[(attr, m)]`` is P[true == m | predicted == m] and
    ``conditional_accuracy[(tested, m, cond, c)]`` is the accuracy of the
    tested indicator among records whose true ``cond`` label is c.

    Lookups of a rate without support raise EmptySupport.
    """

    accuracy: dict = field(default_factory=dict)
    precision: dict = field(default_factory=dict)
    conditional_accuracy: dict = field(default_factory=dict)
    perfect: bool = False

    @classmethod
    def perfect_predictor(cls) -> "ReliabilityTable":
        """Every rate is 1: the perturbations become the identity."""
        return cls(perfect=True)

    def _get(self, table: dict, key, name: str) -> float:
        if self.perfect and key not in table:
            return 1.0
        rate = table.get(key)
        if rate is None or rate.support < 1:
            raise EmptySupport(f"{name} {_key_text(key)} has no support in the validation data")
        return rate.value

    def get_accuracy(self, attr: AttributeKind, modality: int) -> float:
        return self._get(self.accuracy, (attr, modality), "accuracy")

    def get_precision(self, attr: AttributeKind, modality: int) -> float:
        return self._get(self.precision, (attr, modality), "precision")

    def get_conditional_accuracy(self, tested: AttributeKind, modality: int,
                                 cond: AttributeKind, cond_modality: int) -> float:
        return self._get(self.conditional_accuracy, (tested, modality, cond, cond_modality),
                         "conditional accuracy")

    def to_json(self) -> dict:
        def rows(table):
            out = []
            for key, rate in sorted(table.items(), key=lambda kv: _sort_key(kv[0])):
                entry = _key_dict(key)
                # rates without support have no value; null keeps the JSON valid
                entry.update(value=rate.value if rate.support else None, support=rate.support)
                out.append(entry)
            return out

        return {
            "perfect": self.perfect,
            "accuracy": rows(self.accuracy),
            "precision": rows(self.precision),
            "conditional_accuracy": rows(self.conditional_accuracy),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ReliabilityTable":
        """Build a table from the JSON layout written by :meth:`to_json`.

        Modalities may be given as indices or names. Entries without
        ``support`` default to a support of 1 (hand-written fixtures).
        """
        def key_of(entry, conditional):
            attr = AttributeKind.parse(entry["attribute"])
            key = (attr, _modality(attr, entry["modality"]))
            if conditional:
                cond = AttributeKind.parse(entry.get("conditioning", "gender"))
                key += (cond, _modality(cond, entry["conditioning_modality"]))
            return key

        table = cls(perfect=bool(data.get("perfect", False)))
        for name in ("accuracy", "precision", "conditional_accuracy"):
            target = getattr(table, name)
            for entry in data.get(name, []):
                if entry["value"] is None:
                    rate = Rate(float("nan"), 0)
                else:
                    rate = Rate(float(entry["value"]), int(entry.get("support", 1)))
                if rate.support and not 0.0 <= rate.value <= 1.0:
                    raise ValueError(f"{name} value {rate.value} outside [0, 1]")
                target[key_of(entry, name == "conditional_accuracy")] = rate
        return table

    @classmethod
    def load(cls, path) -> "ReliabilityTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _modality(attr: AttributeKind, value) -> int:
    if isinstance(value, int):
        return value
    return attr.parse_modality(str(value))


def _key_dict(key) -> dict:
    d = {"attribute": key[0].value, "modality": key[0].modalities[key[1]]}
    if len(key) == 4:
        d.update(conditioning=key[2].value, conditioning_modality=key[2].modalities[key[3]])
    return d


def _key_text(key) -> str:
    d = _key_dict(key)
    text = f"{d['attribute']}={d['modality']}"
    if "conditioning" in d:
        text += f" | {d['conditioning']}={d['conditioning_modality']}"
    return text


def _sort_key(key):
    return tuple(k.index if isinstance(k, AttributeKind) else k for k in key)


def _paired_labels(records: Sequence[AnnotatedRecord], attr: AttributeKind) -> tuple[np.ndarray, np.ndarray]:
    true = np.empty(len(records), dtype=np.int64)
    pred = np.empty(len(records), dtype=np.int64)
    for i, r in enumerate(records):
        t, p = r.manual_label(attr), r.predicted_label(attr)
        if t is None or p is None:
            raise MissingLabel(r.id, f"{attr.value} (manual and predicted needed for reliability)")
        true[i], pred[i] = t, p
    return true, pred


def estimate_reliability(
    validation_records: Sequence[AnnotatedRecord],
    attributes: Iterable[AttributeKind] = ATTRIBUTES,
    conditioning: AttributeKind = GENDER,
) -> ReliabilityTable:
    """Empirical accuracy, precision and gender-conditional accuracy.

    Rates whose denominator is empty are stored with zero support and raise
    EmptySupport when an audit asks for them.
    """
    if not validation_records:
        raise EmptySupport("no validation records to estimate reliability from")
    attributes = tuple(attributes)
    table = ReliabilityTable()
    pairs = {a: _paired_labels(validation_records, a) for a in set(attributes) | {conditioning}}

    def rate(hits: np.ndarray) -> Rate:
        return Rate(float(hits.mean()), int(hits.size)) if hits.size else Rate(float("nan"), 0)

    for attr in attributes:
        true, pred = pairs[attr]
        for m in range(attr.cardinality):
            correct = (true == m) == (pred == m)
            table.accuracy[(attr, m)] = rate(correct)
            table.precision[(attr, m)] = rate(true[pred == m] == m)
            if attr is conditioning:
                continue
            cond_true, _ = pairs[conditioning]
            for c in range(conditioning.cardinality):
                table.conditional_accuracy[(attr, m, conditioning, c)] = rate(correct[cond_true == c])
    return table


def adjacent_accuracy(validation_records: Sequence[AnnotatedRecord], attribute: AttributeKind) -> float:
    """Fraction of predictions within one class of the manual label."""
    if not attribute.ordered:
        raise UnorderedAttribute(f"{attribute.value} has no class order")
    true, pred = _paired_labels(validation_records, attribute)
    if true.size == 0:
        raise EmptySupport("no validation records")
    return float(np.mean(np.abs(true - pred) <= 1))


# -- perturbations -----------------------------------------------------------


def perturb_parity(
    labels,
    accuracy: float,
    reference_p: float,
    rng: np.random.Generator,
    mutable: np.ndarray | None = None,
):
    """Replace each entry, with probability 1 - accuracy, by a Bernoulli draw.

    ``labels`` is a BinarizedView or a {0,1} array; the same type comes back.
    Entries where ``mutable`` is False (manual labels) are left untouched.
    """
    values = labels.values if isinstance(labels, BinarizedView) else np.asarray(labels)
    n = values.size
    replace_ = rng.random(n) < 1.0 - accuracy
    draws = rng.random(n) < reference_p
    if mutable is not None:
        replace_ &= mutable
    out = np.where(replace_, draws, values).astype(values.dtype)
    if isinstance(labels, BinarizedView):
        return BinarizedView(labels.attribute, labels.target_modality, out)
    return out


def _perturb_representation_arrays(gender, gender_pred, tested, tested_pred, pools,
                                   precision, cond_accuracy, rng):
    n = gender.size
    u_flip, u_replace, u_pick = rng.random(n), rng.random(n), rng.random(n)
    g = np.asarray(gender).copy()
    flip = gender_pred & (u_flip < 1.0 - precision[g])
    g[flip] = 1 - g[flip]
    t = np.asarray(tested).copy()
    redraw = tested_pred & (u_replace < 1.0 - cond_accuracy[g])
    for c, pool in enumerate(pools):
        idx = redraw & (g == c)
        if idx.any():
            t[idx] = pool[(u_pick[idx] * pool.size).astype(np.int64)]
    return g, t


def _manual_pools(gender, gender_pred, tested, tested_pred) -> list[np.ndarray]:
    manual = ~gender_pred & ~tested_pred
    return [tested[manual & (gender == c)] for c in range(GENDER.cardinality)]


def _check_pools(pools, cond_accuracy, tested_pred):
    if not tested_pred.any():
        return
    for c, pool in enumerate(pools):
        if pool.size == 0 and cond_accuracy[c] < 1.0:
            raise EmptyManualPool(f"no manually annotated record with gender {GENDER.modalities[c]}")


def _rates_for(reliability, tested, modality, gender_pred, tested_pred):
    precision = np.ones(GENDER.cardinality)
    cond = np.ones(GENDER.cardinality)
    if gender_pred.any():
        precision = np.array([reliability.get_precision(GENDER, c) for c in range(GENDER.cardinality)])
    if tested_pred.any():
        cond = np.array([reliability.get_conditional_accuracy(tested, modality, GENDER, c)
                         for c in range(GENDER.cardinality)])
    return precision, cond


def perturb_representation(
    records: Sequence[AnnotatedRecord],
    tested: tuple[AttributeKind, int],
    reliability: ReliabilityTable,
    rng: np.random.Generator,
    conditioning: AttributeKind = GENDER,
) -> list[AnnotatedRecord]:
    """One simulation of the representation perturbation, on records.

    Records are visited in input order. Gender flips apply to records whose
    gender is predicted; tested-attribute resampling applies to records whose
    tested attribute is predicted, drawing uniformly from fully manual records
    of the same (possibly flipped) gender. Manual labels are never modified.
    """
    if conditioning is not GENDER:
        raise ValueError("only gender is supported as conditioning attribute")
    attr, modality = tested
    g, g_pred = working_labels(records, GENDER)
    t, t_pred = working_labels(records, attr)
    precision, cond = _rates_for(reliability, attr, modality, g_pred, t_pred)
    pools = _manual_pools(g, g_pred, t, t_pred)
    _check_pools(pools, cond, t_pred)
    g2, t2 = _perturb_representation_arrays(g, g_pred, t, t_pred, pools, precision, cond, rng)

    out = []
    for r, gi, ti in zip(records, g2, t2):
        pred = list(r.predicted)
        if r.uses_prediction(GENDER):
            pred[GENDER.index] = int(gi)
        if r.uses_prediction(attr):
            pred[attr.index] = int(ti)
        out.append(replace(r, predicted=tuple(pred)) if tuple(pred) != r.predicted else r)
    return out


# -- audits ----------------------------------------------------------------


class Decision(str, enum.Enum):
    ACCEPT = "accept"
    WEAK = "weak"
    REJECT = "reject"

    @property
    def glyph(self) -> str:
        return {"accept": "✓", "weak": "✓₂/₃", "reject": "×"}[self.value]


def aggregate_decision(median_p_values: Iterable[float], alpha: float) -> Decision:
    """Majority vote: 0 rejections accept, 1 is weak, 2 or more reject."""
    rejections = sum(p < alpha for p in median_p_values)
    if rejections == 0:
        return Decision.ACCEPT
    return Decision.WEAK if rejections == 1 else Decision.REJECT


@dataclass(frozen=True)
class AuditConfig:
    n_simulations: int = 101
    alpha: float = 0.05
    rng_seed: int = 0
    wasserstein_order: float = 1.0
    n_permutations: int = 999
    tests: tuple = ALL_TESTS
    continuity_correction: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n_simulations < 1 or self.n_simulations % 2 == 0:
            raise ValueError("n_simulations must be a positive odd number")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be inside (0, 1)")
        if self.wasserstein_order < 1:
            raise ValueError("wasserstein_order must be >= 1")
        if self.n_permutations < 1:
            raise ValueError("n_permutations must be >= 1")
        tests = tuple(TestKind(t) for t in self.tests)
        if not tests:
            raise ValueError("at least one test must be enabled")
        # canonical order, whatever the caller passed
        object.__setattr__(self, "tests", tuple(t for t in ALL_TESTS if t in tests))
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_json(self) -> dict:
        return {
            "n_simulations": self.n_simulations,
            "alpha": self.alpha,
            "rng_seed": self.rng_seed,
            "wasserstein_order": self.wasserstein_order,
            "n_permutations": self.n_permutations,
            "tests": [t.value for t in self.tests],
            "continuity_correction": self.continuity_correction,
        }


@dataclass(frozen=True)
class AuditCell:
    hypothesis: str  # "parity" or "representation"
    attribute: AttributeKind
    modality: int
    p_values: dict
    decision: Decision
    conditioning: AttributeKind | None = None
    sample_size: int | None = None
    protocol: str = "error_aware"

    @property
    def label(self) -> str:
        return self.attribute.modalities[self.modality]


def _simulation_rng(config: AuditConfig, seed_key: Sequence[int], modality: int, sim: int):
    return np.random.default_rng([config.rng_seed, *seed_key, modality, sim])


def _run_simulations(fn: Callable[[int], dict], config: AuditConfig) -> dict:
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(fn, range(config.n_simulations)))
    else:
        results = [fn(s) for s in range(config.n_simulations)]
    return {t: float(np.median([r[t] for r in results])) for t in config.tests}


def _make_cell(hypothesis, attr, m, medians, config, conditioning=None) -> AuditCell:
    decision = aggregate_decision(medians.values(), config.alpha)
    return AuditCell(hypothesis, attr, m, medians, decision, conditioning)


def run_parity_audit(
    records: Sequence[AnnotatedRecord],
    attribute: AttributeKind,
    reference: ReferenceDistribution,
    reliability: ReliabilityTable,
    config: AuditConfig,
    seed_key: Sequence[int] = (),
) -> list[AuditCell]:
    """One-vs-all parity audit of every modality of ``attribute``.

    Each simulation perturbs the predicted indicators and compares them to
    Bernoulli(reference[m]) with the chi-square and mean one-sample tests,
    and with the Wasserstein permutation test against a fresh reference
    sample of the same size.
    """
    labels, flags = working_labels(records, attribute)
    n = labels.size
    if n == 0:
        raise EmptySubgroup("no records to audit")
    cells = []
    for m in range(attribute.cardinality):
        p = reference[m]
        indicator = (labels == m).astype(np.int8)
        accuracy = reliability.get_accuracy(attribute, m) if flags.any() else 1.0

        def simulate(sim: int, m=m, p=p, indicator=indicator, accuracy=accuracy) -> dict:
            rng = _simulation_rng(config, seed_key, m, sim)
            x = perturb_parity(indicator, accuracy, p, rng, mutable=flags)
            ones = int(x.sum())
            out = {}
            if TestKind.CHI2 in config.tests:
                out[TestKind.CHI2] = chi2_one_sample([ones, n - ones], [p, 1 - p],
                                                     config.continuity_correction).p_value
            if TestKind.MEAN in config.tests:
                out[TestKind.MEAN] = mean_test_one_sample(x, p).p_value
            if TestKind.WASSERSTEIN in config.tests:
                ref = (rng.random(n) < p).astype(np.int8)
                out[TestKind.WASSERSTEIN] = wasserstein_perm_test(
                    x, ref, config.wasserstein_order, config.n_permutations, rng).p_value
            return out

        cells.append(_make_cell("parity", attribute, m, _run_simulations(simulate, config), config))
    return cells


def run_representation_audit(
    records: Sequence[AnnotatedRecord],
    tested: AttributeKind,
    reliability: ReliabilityTable,
    config: AuditConfig,
    conditioning: AttributeKind = GENDER,
    seed_key: Sequence[int] = (),
) -> list[AuditCell]:
    """Equal-representation audit of ``tested`` between the two genders.

    Per tested modality and simulation: perturb the records, split them by
    (possibly flipped) gender, and compare the one-vs-all indicator of the
    tested modality between Men and Women with the three two-sample tests.
    """
    if conditioning is not GENDER:
        raise ValueError("only gender is supported as conditioning attribute")
    if tested is GENDER:
        raise ValueError("tested attribute must differ from the conditioning attribute")
    g, g_pred = working_labels(records, GENDER)
    t, t_pred = working_labels(records, tested)
    pools = _manual_pools(g, g_pred, t, t_pred)

    cells = []
    for m in range(tested.cardinality):
        precision, cond = _rates_for(reliability, tested, m, g_pred, t_pred)
        _check_pools(pools, cond, t_pred)

        def simulate(sim: int, m=m, precision=precision, cond=cond) -> dict:
            rng = _simulation_rng(config, seed_key, m, sim)
            g2, t2 = _perturb_representation_arrays(g, g_pred, t, t_pred, pools, precision, cond, rng)
            x = (t2 == m).astype(np.int8)
            a, b = x[g2 == 0], x[g2 == 1]
            if a.size == 0 or b.size == 0:
                raise EmptySubgroup("one gender subgroup is empty")
            out = {}
            if TestKind.CHI2 in config.tests:
                sa, sb = int(a.sum()), int(b.sum())
                out[TestKind.CHI2] = chi2_two_sample([sa, a.size - sa], [sb, b.size - sb],
                                                     config.continuity_correction).p_value
            if TestKind.MEAN in config.tests:
                out[TestKind.MEAN] = mean_test_two_sample(a, b).p_value
            if TestKind.WASSERSTEIN in config.tests:
                out[TestKind.WASSERSTEIN] = wasserstein_perm_test(
                    a, b, config.wasserstein_order, config.n_permutations, rng).p_value
            return out

        medians = _run_simulations(simulate, config)
        cells.append(_make_cell("representation", tested, m, medians, config, conditioning))
    return cells


REPRESENTATION_TARGETS = (AGE, FITZPATRICK)
