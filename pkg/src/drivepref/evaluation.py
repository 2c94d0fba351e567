"""Repeated nested cross-validation and the reported metrics.

Folds group scenarios, never single pairs: both members of an annotated pair
share a scenario, so scenario-level folds keep every test pair disjoint from
training. Mirrored pairs train the models but are deduplicated for testing
(an antisymmetric model scores identically on a pair and its mirror).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .errors import ValidationError
from .learners import ModelSpec, train
from .preferences import (AGREEMENT_BIN_LABELS, Annotation, LabeledPair,
                          agreement_bin)
from .rulebook import (FIRST_PREFERRED, INCOMPARABLE, SECOND_PREFERRED,
                       Rulebook, compare)
from .rules import ViolationVector

RB_KIND = "RB"
RB_DT_KIND = "RB+DT"
FALLBACK_DT_GRID = [{"max_depth": d} for d in (1, 2, 3, 4)]


# -- fold planning -----------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    """Scenario-level folds: `outer[repeat][fold]` and `inner[repeat][fold][sub]`."""

    seed: int
    repeats: int
    outer: tuple  # repeats x n_outer tuples of scenario ids
    inner: tuple  # repeats x n_outer x n_inner tuples of scenario ids

    @property
    def n_outer(self) -> int:
        return len(self.outer[0])


def _partition(ids: list[str], k: int, rng: np.random.Generator) -> list[tuple[str, ...]]:
    perm = list(ids)
    rng.shuffle(perm)
    return [tuple(part) for part in np.array_split(np.array(perm, dtype=object), k)]


def plan_folds(scenario_ids: Sequence[str], seed: int, n_outer: int = 5,
               n_inner: int = 10, repeats: int = 10) -> FoldPlan:
    """Deterministic repeated fold assignment; outer fold sizes differ by <= 1."""
    ids = sorted(set(scenario_ids))
    if len(ids) < n_outer:
        raise ValidationError(f"need >= {n_outer} scenarios, got {len(ids)}")
    rng = np.random.default_rng(seed)
    outer_all, inner_all = [], []
    for _ in range(repeats):
        folds = _partition(ids, n_outer, rng)
        outer_all.append(tuple(folds))
        inner_per_fold = []
        for k in range(n_outer):
            train_scens = [s for j, f in enumerate(folds) if j != k for s in f]
            k_inner = min(n_inner, len(train_scens))
            inner_per_fold.append(tuple(_partition(train_scens, k_inner, rng)))
        inner_all.append(tuple(inner_per_fold))
    return FoldPlan(seed, repeats, tuple(outer_all), tuple(inner_all))


# -- basic metrics -----------------------------------------------------------

def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Percentage of correctly classified pairs."""
    preds = np.asarray(predictions)
    labs = np.asarray(labels)
    if len(preds) == 0:
        raise ValidationError("accuracy of an empty prediction set")
    return 100.0 * float(np.mean(preds == labs))


def stratified_accuracy(predictions, labels, agreements) -> dict[str, tuple[float, int]]:
    """Per-agreement-bin accuracy: {bin_label: (%, n_pairs)}; empty bins absent."""
    preds = np.asarray(predictions)
    labs = np.asarray(labels)
    bins = np.array([agreement_bin(a) for a in agreements])
    out = {}
    for b, label in enumerate(AGREEMENT_BIN_LABELS):
        mask = bins == b
        if mask.any():
            out[label] = (100.0 * float(np.mean(preds[mask] == labs[mask])),
                          int(mask.sum()))
    return out


def _annotator_agreements(annotations: Sequence[Annotation],
                          label_by_pair: Mapping[tuple[str, str], int],
                          min_pairs: int = 10,
                          restrict_to: set | None = None) -> dict[str, tuple[float, int]]:
    """Per qualifying annotator: (fraction agreeing with ground truth, n pairs used)."""
    by_annotator: dict[str, dict[tuple[str, str], int]] = {}
    for ann in annotations:
        key = (ann.a, ann.b) if ann.a < ann.b else (ann.b, ann.a)
        implied = 1 if ann.chosen == key[0] else -1
        by_annotator.setdefault(ann.annotator_id, {})[key] = implied
    out = {}
    for aid, pair_votes in by_annotator.items():
        if len(pair_votes) < min_pairs:
            continue
        keys = [k for k in pair_votes
                if k in label_by_pair and (restrict_to is None or k in restrict_to)]
        if not keys:
            continue
        agree = np.mean([pair_votes[k] == label_by_pair[k] for k in keys])
        out[aid] = (float(agree), len(keys))
    return out


def annotator_loss_L(pred_by_pair: Mapping[tuple[str, str], int],
                     label_by_pair: Mapping[tuple[str, str], int],
                     annotations: Sequence[Annotation],
                     min_pairs: int = 10) -> float | None:
    """Percentage of qualifying annotators who beat the model on their own pairs.

    Qualification = at least `min_pairs` distinct annotated pairs; both the
    annotator and the model are scored on the annotator's pairs that the
    model also predicted, and a loss requires strictly higher agreement.
    """
    restrict = set(pred_by_pair)
    per_annotator = _annotator_agreements(annotations, label_by_pair, min_pairs,
                                          restrict_to=restrict)
    if not per_annotator:
        return None
    pairs_of: dict[str, set] = {}
    for ann in annotations:
        key = (ann.a, ann.b) if ann.a < ann.b else (ann.b, ann.a)
        pairs_of.setdefault(ann.annotator_id, set()).add(key)
    losses = 0
    for aid, (ann_agree, _) in per_annotator.items():
        keys = [k for k in pairs_of[aid] if k in restrict and k in label_by_pair]
        model_agree = np.mean([pred_by_pair[k] == label_by_pair[k] for k in keys])
        if ann_agree > model_agree:
            losses += 1
    return 100.0 * losses / len(per_annotator)


def confidence_agreement_correlation(confidences, agreements) -> tuple[float, bool]:
    """Pearson r between model confidence and annotator agreement.

    Returns (nan, True) when either side has zero variance.
    """
    c = np.asarray(confidences, dtype=float)
    a = np.asarray(agreements, dtype=float)
    if len(c) < 2 or np.ptp(c) == 0 or np.ptp(a) == 0:
        return (float("nan"), True)
    r, _ = scipy_stats.pearsonr(c, a)
    return (float(r), False)


@dataclass
class AgreementDistribution:
    per_annotator: dict[str, float]  # percent agreement with ground truth
    median: float
    histogram: dict[str, int]


def annotator_agreement_distribution(annotations: Sequence[Annotation],
                                     label_by_pair: Mapping[tuple[str, str], int],
                                     min_pairs: int = 10) -> AgreementDistribution:
    per = _annotator_agreements(annotations, label_by_pair, min_pairs)
    pct = {aid: 100.0 * agree for aid, (agree, _) in sorted(per.items())}
    values = np.array(list(pct.values()))
    if len(values) == 0:
        raise ValidationError("no qualifying annotators")
    edges = np.arange(0.0, 101.0, 10.0)
    hist, _ = np.histogram(values, bins=edges)
    histogram = {f"[{int(edges[i])},{int(edges[i + 1])})": int(hist[i])
                 for i in range(len(hist))}
    return AgreementDistribution(pct, float(np.median(values)), histogram)


# -- nested cross-validation ---------------------------------------------------

@dataclass
class FoldResult:
    repeat: int
    fold: int
    grid_index: int | None
    grid_point: dict | None
    accuracy: float
    n_pairs: int
    stratified: dict[str, tuple[float, int]]
    L: float | None = None
    pearson: float | None = None
    coverage: float | None = None


@dataclass
class MetricsReport:
    kind: str
    accuracy_mean: float
    accuracy_std: float
    stratified: dict[str, tuple[float, float, int]]  # label -> (mean %, std, n pairs)
    per_fold: list[FoldResult] = field(default_factory=list)
    L_mean: float | None = None
    L_std: float | None = None
    pearson_mean: float | None = None
    pearson_std: float | None = None
    pearson_flagged_folds: int = 0
    coverage: float | None = None
    comparable_accuracy: float | None = None
    n_test_pairs_total: int = 0

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "accuracy_mean_pct": self.accuracy_mean,
            "accuracy_std_pct": self.accuracy_std,
            "std_across": "repeat x outer fold evaluations (ddof=1)",
            "stratified_by_agreement": {
                k: {"mean_pct": m, "std_pct": s, "n_pairs": n}
                for k, (m, s, n) in self.stratified.items()},
            "L_mean_pct": self.L_mean,
            "L_std_pct": self.L_std,
            "pearson_mean": self.pearson_mean,
            "pearson_std": self.pearson_std,
            "pearson_flagged_folds": self.pearson_flagged_folds,
            "coverage_pct": self.coverage,
            "comparable_accuracy_pct": self.comparable_accuracy,
            "n_test_pairs_total": self.n_test_pairs_total,
            "per_fold": [{
                "repeat": f.repeat, "fold": f.fold, "grid_index": f.grid_index,
                "grid_point": f.grid_point, "accuracy_pct": f.accuracy,
                "n_pairs": f.n_pairs, "L_pct": f.L, "pearson": f.pearson,
                "coverage_pct": f.coverage,
                "stratified": {k: {"pct": v[0], "n": v[1]}
                               for k, v in f.stratified.items()},
            } for f in self.per_fold],
        }


class _PairData:
    """Labeled pairs unpacked into aligned arrays for fast fold slicing."""

    def __init__(self, pairs: Sequence[LabeledPair]):
        if not pairs:
            raise ValidationError("no labeled pairs")
        if any(p.scenario_id is None for p in pairs):
            raise ValidationError("nested CV needs scenario ids on every pair")
        self.pairs = list(pairs)
        self.X = np.array([p.features for p in pairs], dtype=float)
        self.y = np.array([p.label for p in pairs], dtype=int)
        self.agreement = np.array([p.agreement for p in pairs], dtype=float)
        self.scenario = np.array([p.scenario_id for p in pairs], dtype=object)
        self.is_mirror = np.array([p.is_mirror for p in pairs], dtype=bool)
        self.keys = [p.key() for p in pairs]

    def in_scenarios(self, scens) -> np.ndarray:
        scens = set(scens)
        return np.array([s in scens for s in self.scenario])


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.array(values, dtype=float)
    if len(arr) == 0:
        return (float("nan"), float("nan"))
    return (float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0)


def _select_grid_point(kind: str, grid: list[dict], data: _PairData,
                       inner_folds, train_mask: np.ndarray, seed: int,
                       rb_ctx=None) -> int:
    if len(grid) == 1:
        return 0
    mean_acc = np.zeros(len(grid))
    counts = np.zeros(len(grid))
    for sub in inner_folds:
        val_mask = data.in_scenarios(sub) & train_mask & ~data.is_mirror
        fit_mask = train_mask & ~data.in_scenarios(sub)
        if not val_mask.any() or not fit_mask.any():
            continue
        for gi, point in enumerate(grid):
            preds = _fit_predict(kind, point, data, fit_mask, val_mask, seed, rb_ctx)
            mean_acc[gi] += float(np.mean(preds == data.y[val_mask]))
            counts[gi] += 1
    with np.errstate(invalid="ignore"):
        score = np.where(counts > 0, mean_acc / np.maximum(counts, 1), -1.0)
    return int(np.argmax(score))  # argmax keeps the first (declared) point on ties


def _fit_predict(kind: str, point: dict, data: _PairData, fit_mask, eval_mask,
                 seed: int, rb_ctx) -> np.ndarray:
    if kind == RB_DT_KIND:
        rb_preds = rb_ctx["verdicts"][eval_mask]
        model = train(ModelSpec("DT", point, seed),
                      (data.X[fit_mask], data.y[fit_mask]))
        dt_preds = model.predict(data.X[eval_mask])
        return np.where(rb_preds != 0, rb_preds, dt_preds)
    model = train(ModelSpec(kind, point, seed), (data.X[fit_mask], data.y[fit_mask]))
    return model.predict(data.X[eval_mask])


def rulebook_verdicts(rb: Rulebook, pairs: Sequence[LabeledPair]) -> np.ndarray:
    """+1 / -1 where the rulebook decides, 0 where it abstains."""
    out = np.zeros(len(pairs), dtype=int)
    cache: dict[tuple[str, str], int] = {}
    for i, p in enumerate(pairs):
        key = (p.w1, p.w2)
        if key not in cache:
            c = compare(rb, ViolationVector(p.v1), ViolationVector(p.v2))
            cache[key] = {FIRST_PREFERRED: 1, SECOND_PREFERRED: -1,
                          INCOMPARABLE: 0}[c.outcome]
            cache[(p.w2, p.w1)] = -cache[key]
        out[i] = cache[key]
    return out


def nested_cv(model_grids: Mapping[str, list[dict]], pairs: Sequence[LabeledPair],
              plan: FoldPlan, annotations: Sequence[Annotation] | None = None,
              rulebook: Rulebook | None = None, base_seed: int = 0,
              ) -> dict[str, MetricsReport]:
    """Repeated nested CV for every grid, plus RB and RB+DT when a rulebook is given.

    Inner folds pick the grid point with the highest mean validation accuracy
    (ties resolve to the first point in declared order); the winner retrains
    on the full outer-training set and is scored on the outer test fold.
    """
    data = _PairData(pairs)
    label_by_pair = {p.key(): (p.label if not p.is_mirror else -p.label)
                     for p in pairs}
    kinds: dict[str, list[dict]] = dict(model_grids)
    rb_ctx = None
    if rulebook is not None:
        rb_ctx = {"verdicts": rulebook_verdicts(rulebook, data.pairs)}
        kinds[RB_KIND] = [{}]
        kinds[RB_DT_KIND] = list(FALLBACK_DT_GRID)

    reports: dict[str, MetricsReport] = {}
    for kind, grid in kinds.items():
        fold_results: list[FoldResult] = []
        for rep in range(plan.repeats):
            for k, fold in enumerate(plan.outer[rep]):
                test_mask = data.in_scenarios(fold) & ~data.is_mirror
                train_mask = ~data.in_scenarios(fold)
                if not test_mask.any():
                    warnings.warn(f"fold {rep}/{k} has no test pairs; skipped")
                    continue
                seed = base_seed * 1_000_003 + rep * 101 + k
                fold_results.append(_eval_fold(
                    kind, grid, data, plan.inner[rep][k], train_mask, test_mask,
                    rep, k, seed, rb_ctx, annotations, label_by_pair))
        reports[kind] = _aggregate(kind, fold_results)
    return reports


def _eval_fold(kind, grid, data, inner_folds, train_mask, test_mask, rep, k,
               seed, rb_ctx, annotations, label_by_pair) -> FoldResult:
    y_test = data.y[test_mask]
    ag_test = data.agreement[test_mask]
    keys_test = [key for key, m in zip(data.keys, test_mask) if m]
    confidences = None
    coverage = None

    if kind == RB_KIND:
        verdicts = rb_ctx["verdicts"][test_mask]
        decided = verdicts != 0
        coverage = 100.0 * float(np.mean(decided))
        if not decided.any():
            preds = np.zeros(0, dtype=int)
            y_eval, ag_eval, keys_eval = y_test[:0], ag_test[:0], []
        else:
            preds = verdicts[decided]
            y_eval = y_test[decided]
            ag_eval = ag_test[decided]
            keys_eval = [key for key, d in zip(keys_test, decided) if d]
        gi, point = None, None
    else:
        gi = _select_grid_point(kind, grid, data, inner_folds, train_mask, seed,
                                rb_ctx) if len(grid) > 1 else 0
        point = grid[gi]
        if kind == RB_DT_KIND:
            preds = _fit_predict(kind, point, data, train_mask, test_mask, seed, rb_ctx)
        else:
            model = train(ModelSpec(kind, point, seed),
                          (data.X[train_mask], data.y[train_mask]))
            preds = model.predict(data.X[test_mask])
            try:
                confidences = model.confidence(data.X[test_mask])
            except Exception:
                confidences = None
        y_eval, ag_eval, keys_eval = y_test, ag_test, keys_test

    acc = accuracy(preds, y_eval) if len(preds) else float("nan")
    strat = stratified_accuracy(preds, y_eval, ag_eval) if len(preds) else {}
    L = None
    if annotations is not None and len(preds):
        pred_by_pair = dict(zip(keys_eval, (int(p) for p in preds)))
        L = annotator_loss_L(pred_by_pair, label_by_pair, annotations)
    pearson = None
    if confidences is not None and len(preds):
        r, flagged = confidence_agreement_correlation(confidences, ag_eval)
        pearson = None if flagged else r
    return FoldResult(rep, k, gi, point, acc, int(len(preds)), strat, L, pearson,
                      coverage)


def _aggregate(kind: str, folds: list[FoldResult]) -> MetricsReport:
    accs = [f.accuracy for f in folds if not math.isnan(f.accuracy)]
    acc_mean, acc_std = _mean_std(accs)
    strat: dict[str, tuple[float, float, int]] = {}
    for label in AGREEMENT_BIN_LABELS:
        vals = [f.stratified[label][0] for f in folds if label in f.stratified]
        ns = [f.stratified[label][1] for f in folds if label in f.stratified]
        if vals:
            m, s = _mean_std(vals)
            strat[label] = (m, s, int(sum(ns)))
    Ls = [f.L for f in folds if f.L is not None]
    rs = [f.pearson for f in folds if f.pearson is not None]
    L_mean, L_std = _mean_std(Ls) if Ls else (None, None)
    r_mean, r_std = _mean_std(rs) if rs else (None, None)
    coverages = [f.coverage for f in folds if f.coverage is not None]
    report = MetricsReport(
        kind=kind, accuracy_mean=acc_mean, accuracy_std=acc_std, stratified=strat,
        per_fold=folds, L_mean=L_mean, L_std=L_std,
        pearson_mean=r_mean, pearson_std=r_std,
        pearson_flagged_folds=sum(1 for f in folds if f.pearson is None),
        coverage=float(np.mean(coverages)) if coverages else None,
        comparable_accuracy=acc_mean if kind == RB_KIND else None,
        n_test_pairs_total=sum(f.n_pairs for f in folds),
    )
    return report


# -- report rendering -----------------------------------------------------------

def reports_to_table(reports: Mapping[str, MetricsReport]) -> str:
    """Fixed-width table: model, accuracy, L, and accuracy stratified by agreement."""
    headers = ["Model", "Accuracy (%)", "L (%)"] + [f"a in {b}" for b in
                                                    AGREEMENT_BIN_LABELS]
    rows = []
    for kind, rep in reports.items():
        def fmt(mean, std):
            if mean is None:
                return "-"
            return f"{mean:.1f} +/- {std:.1f}" if std is not None else f"{mean:.1f}"
        row = [kind, fmt(rep.accuracy_mean, rep.accuracy_std),
               fmt(rep.L_mean, rep.L_std)]
        for label in AGREEMENT_BIN_LABELS:
            if label in rep.stratified:
                m, s, _ = rep.stratified[label]
                row.append(f"{m:.1f} +/- {s:.1f}")
            else:
                row.append("-")
        rows.append(row)
        if rep.coverage is not None:
            rows.append([f"  ({kind} coverage)", f"{rep.coverage:.1f}", "-"]
                        + ["-"] * len(AGREEMENT_BIN_LABELS))
    widths = [max(len(str(r[i])) for r in [headers] + rows) for i in range(len(headers))]
    def line(cells):
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths))
    out = [line(headers), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def reports_to_json(reports: Mapping[str, MetricsReport]) -> str:
    return json.dumps({k: r.to_json() for k, r in reports.items()},
                      sort_keys=True, indent=1) + "\n"


def per_fold_csv(reports: Mapping[str, MetricsReport]) -> str:
    lines = ["model,repeat,fold,grid_index,accuracy_pct,n_pairs,L_pct,pearson,coverage_pct"]
    for kind, rep in reports.items():
        for f in rep.per_fold:
            cells = [kind, f.repeat, f.fold,
                     "" if f.grid_index is None else f.grid_index,
                     repr(f.accuracy), f.n_pairs,
                     "" if f.L is None else repr(f.L),
                     "" if f.pearson is None else repr(f.pearson),
                     "" if f.coverage is None else repr(f.coverage)]
            lines.append(",".join(str(c) for c in cells))
    return "\n".join(lines) + "\n"
