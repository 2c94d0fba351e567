"""Pairwise annotations: agreement statistics, Bradley-Terry scores, labels.

The annotations file is delimiter-separated with a header row:
``annotator_id,realization_a,realization_b,choice`` where ``choice`` is
``a`` or ``b``. Adapters for other on-disk schemas can be registered with
:func:`register_annotation_adapter`.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import LinkError, ParseError, ValidationError
from .rules import ViolationVector

LOG_STRENGTH_CLAMP = 20.0
BT_TOL = 1e-8
BT_MAX_ITER = 10_000
# Phantom half-win/half-loss against a unit-strength opponent. Keeps the
# optimum finite and order-preserving on degenerate components (undefeated
# items) while perturbing well-posed fits by far less than the 1e-6 the
# two-item closed form is checked against.
BT_PHANTOM_GAMES = 1e-6

AGREEMENT_BIN_LABELS = ("[0,0.2]", "(0.2,0.4]", "(0.4,0.6]", "(0.6,0.8]", "(0.8,1]")
_BIN_UPPER = (0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class Annotation:
    annotator_id: str
    a: str
    b: str
    choice: str  # "a" | "b"
    timestamp: float | None = None

    def __post_init__(self):
        if self.a == self.b:
            raise ValidationError("annotation compares a realization with itself")
        if self.choice not in ("a", "b"):
            raise ValidationError(f"choice must be 'a' or 'b', got {self.choice!r}")

    @property
    def chosen(self) -> str:
        return self.a if self.choice == "a" else self.b

    @property
    def rejected(self) -> str:
        return self.b if self.choice == "a" else self.a


def agreement(n1: int, n2: int) -> float:
    """Inter-annotator agreement |n1 - n2| / (n1 + n2), in [0, 1]."""
    total = n1 + n2
    if total < 1:
        raise ValidationError("agreement needs at least one annotation")
    return abs(n1 - n2) / total


@dataclass(frozen=True)
class PairStats:
    """Vote counts for one unordered pair; `pair` is ordered lexicographically."""

    pair: tuple[str, str]
    n_a_over_b: int
    n_b_over_a: int

    @property
    def total(self) -> int:
        return self.n_a_over_b + self.n_b_over_a

    @property
    def agreement(self) -> float:
        return agreement(self.n_a_over_b, self.n_b_over_a)


def compute_pair_stats(annotations: Iterable[Annotation]) -> list[PairStats]:
    counts: dict[tuple[str, str], list[int]] = {}
    for ann in annotations:
        key = (ann.a, ann.b) if ann.a < ann.b else (ann.b, ann.a)
        c = counts.setdefault(key, [0, 0])
        c[0 if ann.chosen == key[0] else 1] += 1
    return [PairStats(pair, c[0], c[1]) for pair, c in sorted(counts.items())]


def agreement_bin(a: float) -> int:
    """Bin index for Table-style stratification; first bin is [0, 0.2]."""
    for i, hi in enumerate(_BIN_UPPER):
        if a <= hi + 1e-12:
            return i
    return len(_BIN_UPPER) - 1


def bin_agreements(stats: Sequence[PairStats]) -> np.ndarray:
    """Pair counts per agreement bin, bins closed on the right."""
    hist = np.zeros(len(AGREEMENT_BIN_LABELS), dtype=int)
    for st in stats:
        hist[agreement_bin(st.agreement)] += 1
    return hist


# -- Bradley-Terry -----------------------------------------------------------

@dataclass
class BTScores:
    """Log-strength per realization, mean-centered within each connected component."""

    scores: dict[str, float]
    components: list[frozenset[str]] = field(default_factory=list)
    degenerate: list[bool] = field(default_factory=list)

    def __getitem__(self, item: str) -> float:
        return self.scores[item]

    @property
    def flagged(self) -> list[frozenset[str]]:
        return [c for c, bad in zip(self.components, self.degenerate) if bad]


def fit_bradley_terry(stats: Sequence[PairStats],
                      items: Iterable[str] = ()) -> BTScores:
    """Maximum-likelihood strengths via minorization-maximization.

    Converged when the largest absolute log-strength change falls below 1e-8,
    capped at 10,000 iterations. Components where one side of some split wins
    every cross comparison have no finite MLE; their log-strengths are clamped
    to +/-20 and the component is flagged.
    """
    ids = sorted({r for st in stats for r in st.pair} | set(items))
    index = {r: i for i, r in enumerate(ids)}
    n = len(ids)
    wins = np.zeros((n, n))
    for st in stats:
        i, j = index[st.pair[0]], index[st.pair[1]]
        wins[i, j] += st.n_a_over_b
        wins[j, i] += st.n_b_over_a
    games = wins + wins.T

    scores = {r: 0.0 for r in ids}
    components: list[frozenset[str]] = []
    degenerate: list[bool] = []
    if n == 0:
        return BTScores(scores, components, degenerate)

    n_comp, labels = connected_components(csr_matrix(games > 0), directed=False)
    for comp in range(n_comp):
        members = np.flatnonzero(labels == comp)
        components.append(frozenset(ids[i] for i in members))
        if len(members) == 1:
            degenerate.append(False)
            continue
        sub_wins = wins[np.ix_(members, members)]
        sub_games = games[np.ix_(members, members)]
        log_p = _mm_fit(sub_wins, sub_games)
        # MLE exists iff the win digraph is strongly connected on the component.
        n_strong, _ = connected_components(csr_matrix(sub_wins > 0), directed=True,
                                           connection="strong")
        degenerate.append(n_strong > 1)
        for i, m in enumerate(members):
            scores[ids[m]] = float(log_p[i])
    return BTScores(scores, components, degenerate)


def _mm_fit(wins: np.ndarray, games: np.ndarray) -> np.ndarray:
    k = wins.shape[0]
    w = wins.sum(axis=1) + BT_PHANTOM_GAMES / 2.0
    active = games > 0
    log_p = np.zeros(k)
    for _ in range(BT_MAX_ITER):
        p = np.exp(log_p)
        pij = p[:, None] + p[None, :]
        denom = np.where(active, games / np.where(active, pij, 1.0), 0.0).sum(axis=1)
        denom += BT_PHANTOM_GAMES / (p + 1.0)
        new_log = np.log(w / denom)
        new_log -= new_log.mean()
        new_log = np.clip(new_log, -LOG_STRENGTH_CLAMP, LOG_STRENGTH_CLAMP)
        if np.max(np.abs(new_log - log_p)) < BT_TOL:
            return new_log
        log_p = new_log
    return log_p


# -- labeled pairs ------------------------------------------------------------

@dataclass(frozen=True)
class LabeledPair:
    """A ground-truth labeled comparison with violation-score-difference features."""

    w1: str
    w2: str
    label: int  # +1 iff BT score of w1 exceeds w2's
    features: np.ndarray  # v(w1) - v(w2)
    v1: np.ndarray
    v2: np.ndarray
    agreement: float
    scenario_id: str | None = None
    is_mirror: bool = False

    def key(self) -> tuple[str, str]:
        return (self.w1, self.w2) if self.w1 < self.w2 else (self.w2, self.w1)


@dataclass
class LabelingResult:
    pairs: list[LabeledPair]
    n_unique: int
    n_tied_excluded: int


def make_labeled_pairs(stats: Sequence[PairStats], scores: BTScores,
                       vectors: Mapping[str, ViolationVector],
                       scenario_of: Mapping[str, str] | None = None,
                       ) -> LabelingResult:
    """One labeled pair per annotated pair plus its mirror (negated features/label).

    Pairs whose Bradley-Terry scores tie exactly are excluded and counted.
    """
    pairs: list[LabeledPair] = []
    n_tied = 0
    for st in stats:
        a, b = st.pair
        for r in (a, b):
            if r not in scores.scores:
                raise LinkError(f"no Bradley-Terry score for realization {r!r}")
            if r not in vectors:
                raise LinkError(f"no violation vector for realization {r!r}")
        sa, sb = scores[a], scores[b]
        if sa == sb:
            n_tied += 1
            continue
        label = 1 if sa > sb else -1
        va, vb = vectors[a].as_array(), vectors[b].as_array()
        scen = scenario_of.get(a) if scenario_of else None
        ag = st.agreement
        pairs.append(LabeledPair(a, b, label, va - vb, va, vb, ag, scen, False))
        pairs.append(LabeledPair(b, a, -label, vb - va, vb, va, ag, scen, True))
    return LabelingResult(pairs, n_unique=len(pairs) // 2, n_tied_excluded=n_tied)


# -- file formats --------------------------------------------------------------

ANNOTATION_HEADER = "annotator_id,realization_a,realization_b,choice"

AnnotationAdapter = Callable[[Path], list[Annotation]]
_ADAPTERS: dict[str, AnnotationAdapter] = {}


def register_annotation_adapter(name: str, fn: AnnotationAdapter) -> None:
    """Hook for ingesting third-party annotation schemas by name."""
    _ADAPTERS[name] = fn


def load_annotations(path: str | Path, adapter: str | None = None) -> list[Annotation]:
    path = Path(path)
    if adapter is not None:
        if adapter not in _ADAPTERS:
            raise LinkError(f"unknown annotation adapter {adapter!r}")
        return _ADAPTERS[adapter](path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != ANNOTATION_HEADER:
        raise ParseError(f"expected header {ANNOTATION_HEADER!r}", path=path, line=1)
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError("expected 4 comma-separated fields", path=path, line=lineno)
        try:
            out.append(Annotation(parts[0], parts[1], parts[2], parts[3]))
        except ValidationError as e:
            raise ParseError(str(e), path=path, line=lineno) from e
    return out


def annotations_to_csv(annotations: Iterable[Annotation]) -> str:
    out = io.StringIO()
    out.write(ANNOTATION_HEADER + "\n")
    for ann in annotations:
        out.write(f"{ann.annotator_id},{ann.a},{ann.b},{ann.choice}\n")
    return out.getvalue()


def pair_stats_to_csv(stats: Sequence[PairStats]) -> str:
    out = io.StringIO()
    out.write("realization_a,realization_b,n_a_over_b,n_b_over_a,agreement\n")
    for st in stats:
        out.write(f"{st.pair[0]},{st.pair[1]},{st.n_a_over_b},{st.n_b_over_a},"
                  f"{st.agreement!r}\n")
    return out.getvalue()


def bt_scores_to_csv(scores: BTScores) -> str:
    out = io.StringIO()
    out.write("realization_id,log_strength\n")
    for rid in sorted(scores.scores):
        out.write(f"{rid},{scores.scores[rid]!r}\n")
    return out.getvalue()


def labeled_pairs_to_csv(result: LabelingResult) -> str:
    out = io.StringIO()
    cols = (["w1", "w2", "scenario_id", "label", "agreement", "is_mirror"]
            + [f"f{i}" for i in range(1, 15)]
            + [f"v1_{i}" for i in range(1, 15)] + [f"v2_{i}" for i in range(1, 15)])
    out.write(",".join(cols) + "\n")
    for p in result.pairs:
        row = [p.w1, p.w2, p.scenario_id or "", str(p.label), repr(p.agreement),
               "1" if p.is_mirror else "0"]
        row += [repr(float(x)) for x in p.features]
        row += [repr(float(x)) for x in p.v1]
        row += [repr(float(x)) for x in p.v2]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def labeled_pairs_from_csv(text: str) -> LabelingResult:
    lines = text.strip().splitlines()
    pairs = []
    for line in lines[1:]:
        parts = line.split(",")
        w1, w2, scen, label, ag, mirror = parts[:6]
        nums = [float(x) for x in parts[6:]]
        pairs.append(LabeledPair(
            w1, w2, int(label), np.array(nums[0:14]), np.array(nums[14:28]),
            np.array(nums[28:42]), float(ag), scen or None, mirror == "1"))
    return LabelingResult(pairs, n_unique=sum(1 for p in pairs if not p.is_mirror),
                          n_tied_excluded=0)
