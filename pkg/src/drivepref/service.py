"""HTTP service backing the annotation UI.

JSON over plain HTTP under /api. Dataset state is immutable; the annotation
store is an append-only JSONL file behind a single writer lock, idempotent
on a client-supplied annotation id. The service never serves a pair whose
realizations belong to different scenarios (pairs are enumerated per
scenario).
"""
from __future__ import annotations

import json
import random
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .dataset_io import Dataset, load_dataset, map_to_json
from .preferences import Annotation, compute_pair_stats
from .rulebook import INCOMPARABLE, compare, default_rulebook, load_rulebook
from .rules import RuleParams, load_rule_params, violation_vector
from .world import Agent

QUALIFICATION_PASS_THRESHOLD = 0.8
QUALIFICATION_PAIR_COUNT = 5


class AnnotationIn(BaseModel):
    annotation_id: str
    annotator_id: str
    realization_a: str
    realization_b: str
    choice: str  # "a" | "b"
    displayed_left: str | None = None  # A/B randomization record


class AnnotationStore:
    """Append-only JSONL store; duplicate annotation ids are dropped."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()
        self._seen: set[str] = set()
        self.records: list[dict] = []
        if path.exists():
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                self._seen.add(rec["annotation_id"])
                self.records.append(rec)
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.touch()

    def append(self, rec: dict) -> bool:
        """True when stored, False when the id was already present."""
        with self._lock:
            if rec["annotation_id"] in self._seen:
                return False
            with self.path.open("a") as f:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
            self._seen.add(rec["annotation_id"])
            self.records.append(rec)
            return True

    def annotations(self) -> list[Annotation]:
        return [Annotation(r["annotator_id"], r["realization_a"],
                           r["realization_b"], r["choice"]) for r in self.records]

    def pair_counts(self) -> dict[tuple[str, str], int]:
        counts: dict[tuple[str, str], int] = {}
        for r in self.records:
            a, b = r["realization_a"], r["realization_b"]
            key = (a, b) if a < b else (b, a)
            counts[key] = counts.get(key, 0) + 1
        return counts


def _all_pairs(ds: Dataset) -> list[tuple[str, str]]:
    by_scen: dict[str, list[str]] = {}
    for rid in sorted(ds.realizations):
        by_scen.setdefault(ds.realizations[rid].scenario_id, []).append(rid)
    pairs = []
    for sid in sorted(by_scen):
        rids = by_scen[sid]
        pairs += [(rids[i], rids[j]) for i in range(len(rids))
                  for j in range(i + 1, len(rids))]
    return pairs


def _agent_payload(a: Agent) -> dict:
    return {
        "id": a.id, "kind": a.kind, "length_m": a.length, "width_m": a.width,
        "poses": [[float(t), float(x), float(y), float(h)] for t, x, y, h in
                  zip(a.trajectory.t, a.trajectory.x, a.trajectory.y,
                      a.trajectory.heading)],
    }


def create_app(dataset_dir: str | Path, annotations_path: str | Path,
               rulebook_path: str | Path | None = None,
               rule_params_path: str | Path | None = None,
               frontend_dir: str | Path | None = None,
               serving_seed: int | None = None) -> FastAPI:
    ds = load_dataset(dataset_dir)
    store = AnnotationStore(Path(annotations_path))
    pairs = _all_pairs(ds)
    rng = random.Random(serving_seed)
    rb = load_rulebook(rulebook_path) if rulebook_path else default_rulebook()
    params = load_rule_params(rule_params_path) if rule_params_path else RuleParams()
    qualification_cache: dict = {}

    app = FastAPI(title="drivepref annotation service", version="1")

    @app.get("/api/pairs/next")
    def next_pair():
        if not pairs:
            raise HTTPException(404, "dataset has no annotatable pairs")
        counts = store.pair_counts()
        annotated = {p: counts.get(p, 0) for p in pairs}
        fewest = min(annotated.values())
        candidates = [p for p, n in annotated.items() if n == fewest]
        a, b = rng.choice(candidates)
        if rng.random() < 0.5:  # cancel position bias; ids stay authoritative
            a, b = b, a
        return {"pair_id": f"{min(a, b)}|{max(a, b)}",
                "scenario_id": ds.realizations[a].scenario_id,
                "a": a, "b": b, "times_annotated": fewest}

    @app.get("/api/realizations/{rid}")
    def realization_payload(rid: str):
        if rid not in ds.realizations:
            raise HTTPException(404, f"unknown realization {rid!r}")
        real = ds.realizations[rid]
        scen = ds.scenarios[real.scenario_id]
        m = ds.maps[scen.map_id]
        return {
            "id": rid, "scenario_id": scen.id, "duration_s": scen.duration,
            "map": map_to_json(m),
            "agents": [_agent_payload(a) for a in scen.agents],
            "ego": _agent_payload(real.ego),
        }

    @app.post("/api/annotations")
    def post_annotation(ann: AnnotationIn):
        for rid in (ann.realization_a, ann.realization_b):
            if rid not in ds.realizations:
                raise HTTPException(422, f"unknown realization {rid!r}")
        if (ds.realizations[ann.realization_a].scenario_id
                != ds.realizations[ann.realization_b].scenario_id):
            raise HTTPException(422, "pair spans two scenarios")
        if ann.choice not in ("a", "b"):
            raise HTTPException(422, "choice must be 'a' or 'b'")
        stored = store.append(ann.model_dump())
        return {"stored": stored, "annotation_id": ann.annotation_id}

    @app.get("/api/stats")
    def stats():
        sts = compute_pair_stats(store.annotations())
        return {"n_annotations": len(store.records),
                "n_pairs_annotated": len(sts),
                "pairs": [{
                    "realization_a": st.pair[0], "realization_b": st.pair[1],
                    "n_a_over_b": st.n_a_over_b, "n_b_over_a": st.n_b_over_a,
                    "agreement": st.agreement,
                } for st in sts]}

    @app.get("/api/qualification")
    def qualification():
        if not qualification_cache:
            vectors = {}
            for rid in sorted(ds.realizations):
                real = ds.realizations[rid]
                scen = ds.scenarios[real.scenario_id]
                vectors[rid] = violation_vector(real, scen, ds.maps[scen.map_id],
                                                params)
            scored = []
            for a, b in pairs:
                c = compare(rb, vectors[a], vectors[b])
                if c.outcome == INCOMPARABLE:
                    continue
                margin = float(abs(vectors[a].as_array() - vectors[b].as_array()).sum())
                better = a if c.outcome == "first_preferred" else b
                scored.append((margin, a, b, better))
            scored.sort(key=lambda t: (-t[0], t[1], t[2]))
            qualification_cache["pairs"] = [
                {"a": a, "b": b, "expected": better}
                for _, a, b, better in scored[:QUALIFICATION_PAIR_COUNT]]
        return {"pass_threshold": QUALIFICATION_PASS_THRESHOLD,
                "pairs": qualification_cache["pairs"]}

    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True),
                  name="ui")
    return app
