"""Pre-order rulebooks and realization-pair comparison.

A rulebook is a directed graph over rule ids; an edge ``lower -> higher``
states the target has higher priority. The priority relation is the
reflexive-transitive closure of the edges, so two rules can be in one of
three relations: one higher, both equal (mutually reachable), or
incomparable (neither reaches the other). Comparison of two realizations
consults the maximal violated rules of each and can abstain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import LookupRuleError, ParseError
from .rules import RULE_IDS, ViolationVector

FIRST_PREFERRED = "first_preferred"
SECOND_PREFERRED = "second_preferred"
INCOMPARABLE = "incomparable"

R_HIGHER = "r_higher"
R2_HIGHER = "r'_higher"
EQUAL = "equal"


@dataclass(eq=False)
class Rulebook:
    rules: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]  # (lower, higher)
    names: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        known = set(self.rules)
        for lo, hi in self.edges:
            if lo not in known or hi not in known:
                raise LookupRuleError(f"edge ({lo!r}, {hi!r}) references unknown rule")
        # reach[r] = every rule reachable from r via edges, r included (r <= r').
        above = {r: set() for r in self.rules}
        for lo, hi in self.edges:
            above[lo].add(hi)
        reach = {}
        for r in self.rules:
            seen = {r}
            stack = [r]
            while stack:
                cur = stack.pop()
                for nxt in above[cur]:
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            reach[r] = frozenset(seen)
        self._reach = reach

    def _check(self, rule: str) -> None:
        if rule not in self._reach:
            raise LookupRuleError(f"unknown rule {rule!r}")

    def leq(self, r: str, r2: str) -> bool:
        """True when r2 has priority at least r's (r <= r2 in the closure)."""
        self._check(r)
        self._check(r2)
        return r2 in self._reach[r]

    def strictly_below(self, r: str, r2: str) -> bool:
        return self.leq(r, r2) and not self.leq(r2, r)


def higher_priority(rb: Rulebook, r: str, r2: str) -> str:
    """Relation of two rules on the closure: one higher, equal, or incomparable."""
    le, ge = rb.leq(r, r2), rb.leq(r2, r)
    if le and ge:
        return EQUAL
    if le:
        return R2_HIGHER
    if ge:
        return R_HIGHER
    return INCOMPARABLE


def maximal_violated(rb: Rulebook, v: ViolationVector) -> frozenset[str]:
    """Violated rules not strictly below any other violated rule."""
    violated = [r for r in rb.rules if v[r] > 0]
    return frozenset(
        r for r in violated
        if not any(rb.strictly_below(r, other) for other in violated if other != r))


@dataclass(frozen=True)
class Comparison:
    outcome: str  # first_preferred | second_preferred | incomparable
    deciding_rules: frozenset[str]

    def swap(self) -> "Comparison":
        flipped = {FIRST_PREFERRED: SECOND_PREFERRED,
                   SECOND_PREFERRED: FIRST_PREFERRED,
                   INCOMPARABLE: INCOMPARABLE}[self.outcome]
        return Comparison(flipped, self.deciding_rules)


def compare(rb: Rulebook, v1: ViolationVector, v2: ViolationVector) -> Comparison:
    """Rank two realizations by their violation vectors under the rulebook.

    With M1, M2 the maximal violated sets: both empty -> incomparable; the
    same single rule -> smaller score wins (tie -> incomparable); every rule
    of one side strictly below some rule of the other -> that side preferred;
    anything else -> incomparable.
    """
    m1 = maximal_violated(rb, v1)
    m2 = maximal_violated(rb, v2)
    deciding = m1 | m2
    if not m1 and not m2:
        return Comparison(INCOMPARABLE, deciding)
    if m1 == m2 and len(m1) == 1:
        (r,) = m1
        if v1[r] < v2[r]:
            return Comparison(FIRST_PREFERRED, deciding)
        if v2[r] < v1[r]:
            return Comparison(SECOND_PREFERRED, deciding)
        return Comparison(INCOMPARABLE, deciding)
    if all(any(rb.strictly_below(r, s) for s in m2) for r in m1):
        return Comparison(FIRST_PREFERRED, deciding)
    if all(any(rb.strictly_below(s, r) for r in m1) for s in m2):
        return Comparison(SECOND_PREFERRED, deciding)
    return Comparison(INCOMPARABLE, deciding)


def compare_with_fallback(rb: Rulebook, dt, v1: ViolationVector,
                          v2: ViolationVector) -> int:
    """Rulebook verdict when comparable, else the decision tree's on v1 - v2.

    `dt` is a trained classifier with ``predict(x) -> {+1, -1}`` (intended:
    a shallow decision tree, at most 4 levels).
    """
    c = compare(rb, v1, v2)
    if c.outcome == FIRST_PREFERRED:
        return +1
    if c.outcome == SECOND_PREFERRED:
        return -1
    return int(dt.predict(v1.as_array() - v2.as_array()))


# -- config file -------------------------------------------------------------

def parse_rulebook(text: str, path=None) -> Rulebook:
    rules: list[str] = []
    names: dict[str, str] = {}
    edges: list[tuple[str, str]] = []
    seen_edges = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("rule "):
            parts = line.split(None, 2)
            if len(parts) < 2:
                raise ParseError("rule line needs an id", path=path, line=lineno)
            rid = parts[1]
            if rid in names:
                raise ParseError(f"duplicate rule {rid!r}", path=path, line=lineno)
            rules.append(rid)
            names[rid] = parts[2] if len(parts) > 2 else rid
        elif "->" in line:
            lo, _, hi = (p.strip() for p in line.partition("->"))
            if lo not in names or hi not in names:
                raise ParseError(f"edge references undeclared rule: {lo} -> {hi}",
                                 path=path, line=lineno)
            if (lo, hi) in seen_edges:
                raise ParseError(f"duplicate edge {lo} -> {hi}", path=path, line=lineno)
            seen_edges.add((lo, hi))
            edges.append((lo, hi))
        else:
            raise ParseError(f"unrecognized line: {line!r}", path=path, line=lineno)
    return Rulebook(tuple(rules), tuple(edges), names)


def load_rulebook(path: str | Path) -> Rulebook:
    p = Path(path)
    return parse_rulebook(p.read_text(), path=p)


def default_rulebook() -> Rulebook:
    text = resources.files("drivepref.configs").joinpath("rulebook.txt").read_text()
    return parse_rulebook(text, path="<default rulebook>")


def incomparable_pairs(rb: Rulebook) -> list[tuple[str, str]]:
    out = []
    for i, r in enumerate(rb.rules):
        for r2 in rb.rules[i + 1:]:
            if higher_priority(rb, r, r2) == INCOMPARABLE:
                out.append((r, r2))
    return out


def lint_report(rb: Rulebook) -> str:
    """Human-readable closure plus all incomparable pairs (linter output)."""
    lines = [f"rules: {len(rb.rules)}  edges: {len(rb.edges)}", "", "closure (rule <= ...):"]
    for r in rb.rules:
        above = sorted(rb._reach[r] - {r})
        lines.append(f"  {r} <= {', '.join(above) if above else '(maximal)'}")
    lines.append("")
    pairs = incomparable_pairs(rb)
    lines.append(f"incomparable pairs ({len(pairs)}):")
    for a, b in pairs:
        lines.append(f"  {a} ~ {b}")
    return "\n".join(lines) + "\n"


def make_rulebook(edges: Iterable[tuple[str, str]],
                  rules: Iterable[str] = RULE_IDS) -> Rulebook:
    """Convenience constructor used by tests and synthetic ground truths."""
    rules = tuple(rules)
    return Rulebook(rules, tuple(edges), {r: r for r in rules})
