"""Gated imputation of missing cells with a naive Bayes classifier.

Each attribute with missing cells becomes a classification target in turn:
records that arrived fully complete form the training set, every other
attribute is a feature, and the record's recency value joins them as one more
continuous feature so that candidates sharing the record's time neighbourhood
dominate. A missing cell is filled with the argmax class only when its
normalized posterior reaches the confidence gate; sweeps repeat so cells
filled earlier can serve as scoring features for later ones, until a full
pass fills nothing. Training never includes stage-filled records: the gate
filters a fixed scoring instead of feeding back into it.

Discrete likelihoods use add-one smoothing over the attribute's active domain.
Continuous likelihoods are Gaussian per class; a single-sample class borrows
the feature's global variance (its own spread is unknowable), and empirical
variances are floored at one percent of the global variance so a class whose
samples coincide exactly smooths into a narrow kernel instead of a delta
spike that would veto every near-miss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .data_model import Dataset, Record

VARIANCE_FLOOR = 1e-6
CURRENCY_FEATURE = "__currency__"


@dataclass
class Imputation:
    record_id: int
    attr: str
    chosen: object
    posterior: float
    accepted: bool


@dataclass
class BayesModel:
    target_attr: str
    classes: list
    priors: dict
    feature_kinds: dict[str, str]
    class_counts: dict = field(default_factory=dict)
    discrete_counts: dict = field(default_factory=dict)  # (feature, value, class) -> count
    domain_sizes: dict[str, int] = field(default_factory=dict)
    continuous_stats: dict = field(default_factory=dict)  # (feature, class) -> (mean, var)

    def discrete_likelihood(self, feature: str, value, cls) -> float:
        count = self.discrete_counts.get((feature, value, cls), 0)
        return (count + 1) / (self.class_counts[cls] + self.domain_sizes[feature])

    def log_continuous_density(self, feature: str, x: float, cls) -> float:
        mean, var = self.continuous_stats[(feature, cls)]
        return -0.5 * ((x - mean) ** 2 / var + math.log(2.0 * math.pi * var))


def _population_variance(values: list[float]) -> float:
    n = len(values)
    mean = sum(values) / n
    return sum((v - mean) ** 2 for v in values) / n


def train_model(
    rows: list[Record],
    target: str,
    features: list[str],
    feature_kinds: dict[str, str],
    domain_sizes: dict[str, int],
    currency: dict[int, float] | None,
) -> BayesModel | None:
    """Fit class priors and per-feature likelihood tables; None without rows."""
    if not rows:
        return None
    classes = sorted({r.cells[target] for r in rows}, key=lambda v: (str(type(v)), v))
    priors = {}
    class_counts = {}
    model = BayesModel(
        target_attr=target,
        classes=classes,
        priors=priors,
        feature_kinds=dict(feature_kinds),
        class_counts=class_counts,
        domain_sizes=dict(domain_sizes),
    )
    n = len(rows)
    for cls in classes:
        class_counts[cls] = sum(1 for r in rows if r.cells[target] == cls)
        priors[cls] = class_counts[cls] / n

    for feature, kind in feature_kinds.items():
        if kind == "discrete":
            for r in rows:
                v = _feature_value(r, feature, currency)
                if v is None:
                    continue
                key = (feature, v, r.cells[target])
                model.discrete_counts[key] = model.discrete_counts.get(key, 0) + 1
        else:
            all_values = [
                _feature_value(r, feature, currency)
                for r in rows
                if _feature_value(r, feature, currency) is not None
            ]
            global_var = _population_variance(all_values) if all_values else VARIANCE_FLOOR
            kernel_floor = max(0.01 * global_var, VARIANCE_FLOOR)
            for cls in classes:
                values = [
                    _feature_value(r, feature, currency)
                    for r in rows
                    if r.cells[target] == cls and _feature_value(r, feature, currency) is not None
                ]
                if not values:
                    mean, var = 0.0, max(global_var, VARIANCE_FLOOR)
                elif len(values) == 1:
                    mean, var = values[0], max(global_var, VARIANCE_FLOOR)
                else:
                    mean, var = sum(values) / len(values), max(
                        _population_variance(values), kernel_floor
                    )
                model.continuous_stats[(feature, cls)] = (mean, var)
    return model


def _feature_value(record: Record, feature: str, currency: dict[int, float] | None):
    if feature == CURRENCY_FEATURE:
        return None if currency is None else currency.get(record.record_id)
    return record.cells[feature]


def posterior(model: BayesModel, record: Record, currency: dict[int, float] | None = None) -> dict:
    """Normalized class posteriors for one record; missing features are skipped."""
    log_scores = {}
    for cls in model.classes:
        score = math.log(model.priors[cls])
        for feature, kind in model.feature_kinds.items():
            v = _feature_value(record, feature, currency)
            if v is None:
                continue
            if kind == "discrete":
                score += math.log(model.discrete_likelihood(feature, v, cls))
            else:
                score += model.log_continuous_density(feature, v, cls)
        log_scores[cls] = score
    peak = max(log_scores.values())
    raw = {cls: math.exp(s - peak) for cls, s in log_scores.items()}
    total = sum(raw.values())
    return {cls: r / total for cls, r in raw.items()}


def imp_c_com(
    dataset: Dataset,
    sigma: float,
    currency: dict[int, float] | None,
    use_currency: bool = True,
    excluded_record_ids: frozenset[int] | set[int] = frozenset(),
) -> tuple[Dataset, list[Imputation]]:
    """Fill missing cells whose posterior clears the confidence gate sigma.

    ``use_currency=False`` drops the recency feature (the ablated mode).
    Excluded records are neither imputed nor trained on.
    """
    if not (0.0 < sigma <= 1.0):
        raise ValueError("sigma must lie in (0,1]")
    working = dataset.copy()
    rows = [r for r in working.records if r.record_id not in excluded_record_ids]
    by_id = {r.record_id: r for r in rows}
    data_attrs = working.data_attributes()
    kinds = {a.name: a.kind for a in working.schema}
    cv = currency if use_currency else None

    # active domains over the whole dataset, so unseen-in-training values smooth sanely
    domain_values: dict[str, set] = {a: set() for a in data_attrs}
    for r in working.records:
        for a in data_attrs:
            if r.cells[a] is not None:
                domain_values[a].add(r.cells[a])

    accepted_log: list[Imputation] = []
    rejected: dict[tuple[int, str], Imputation] = {}

    # Training uses only records complete in the stage input: the confidence
    # gate then merely filters a fixed scoring, it never feeds back into it.
    originally_complete = [
        r
        for r in rows
        if all(r.cells[a] is not None for a in data_attrs)
        and (cv is None or cv.get(r.record_id) is not None)
    ]
    models: dict[str, BayesModel | None] = {}

    while True:
        filled_this_sweep = 0
        for target in data_attrs:
            test_rows = [r for r in rows if r.cells[target] is None]
            if not test_rows:
                continue
            features = [a for a in data_attrs if a != target]
            feature_kinds = {a: kinds[a] for a in features}
            if cv is not None:
                feature_kinds[CURRENCY_FEATURE] = "continuous"
            domain_sizes = {a: max(len(domain_values[a]), 1) for a in features}
            if target not in models:
                models[target] = train_model(
                    originally_complete, target, features, feature_kinds, domain_sizes, cv
                )
            model = models[target]
            if model is None:
                for r in sorted(test_rows, key=lambda r: r.record_id):
                    rejected[(r.record_id, target)] = Imputation(
                        r.record_id, target, None, 0.0, False
                    )
                continue
            fills = []
            for r in sorted(test_rows, key=lambda r: r.record_id):
                if cv is not None and cv.get(r.record_id) is None:
                    rejected[(r.record_id, target)] = Imputation(r.record_id, target, None, 0.0, False)
                    continue
                post = posterior(model, r, cv)
                best = min(model.classes, key=lambda c: (-post[c], str(c)))
                entry = Imputation(r.record_id, target, best, post[best], post[best] >= sigma)
                if entry.accepted:
                    fills.append(entry)
                else:
                    rejected[(r.record_id, target)] = entry
            for entry in fills:
                by_id[entry.record_id].cells[target] = entry.chosen
                rejected.pop((entry.record_id, entry.attr), None)
                accepted_log.append(entry)
                filled_this_sweep += 1
        if filled_this_sweep == 0:
            break

    log = accepted_log + [rejected[k] for k in sorted(rejected, key=lambda k: (k[0], k[1]))]
    return working, log
