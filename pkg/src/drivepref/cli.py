"""Command-line pipeline: generate, score, compare, label, train-eval, serve.

Every batch command is deterministic given its flags and seeds, writes
outputs atomically (temp file + rename), and exits nonzero with a
machine-readable JSON error report on stderr when configuration is bad.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .dataset_io import atomic_write_text, load_dataset
from .errors import DrivePrefError
from .evaluation import (annotator_agreement_distribution, nested_cv,
                         per_fold_csv, plan_folds, reports_to_json,
                         reports_to_table)
from .learners import load_grids
from .preferences import (annotations_to_csv, bin_agreements, bt_scores_to_csv,
                          compute_pair_stats, fit_bradley_terry,
                          labeled_pairs_from_csv, labeled_pairs_to_csv,
                          load_annotations, make_labeled_pairs,
                          pair_stats_to_csv, AGREEMENT_BIN_LABELS)
from .rulebook import (INCOMPARABLE, compare, default_rulebook, lint_report,
                       load_rulebook)
from .rules import (RuleParams, load_rule_params, vectors_from_csv,
                    vectors_to_csv, violation_vector)


def _load_params(path: str | None) -> RuleParams:
    return load_rule_params(path) if path else RuleParams()


def _load_rulebook(path: str | None):
    return load_rulebook(path) if path else default_rulebook()


def _score_all(dataset, params):
    out = {}
    for rid in sorted(dataset.realizations):
        real = dataset.realizations[rid]
        scen = dataset.scenarios[real.scenario_id]
        out[rid] = violation_vector(real, scen, dataset.maps[scen.map_id], params)
    return out


def cmd_generate(args) -> int:
    from .scenariogen import (CrowdSpec, GeneratorConfig, LinearUtilityTruth,
                              RulebookTruth, generate_dataset, simulate_crowd)
    out = Path(args.out)
    cfg = GeneratorConfig(args.scenarios, args.realizations, args.seed)
    ds = generate_dataset(args.scenarios, args.realizations, args.seed,
                          out_dir=out, config=cfg)
    params = _load_params(args.rule_params)
    vectors = _score_all(ds, params)
    if args.truth == "rulebook":
        truth = RulebookTruth(_load_rulebook(args.rulebook))
    else:
        truth = LinearUtilityTruth(np.ones(14))
    crowd = CrowdSpec(args.annotators, args.annotations_per_pair,
                      noise=args.noise, p_correct=args.p_correct,
                      scale=args.noise_scale, seed=args.seed + 1)
    anns = simulate_crowd(ds, vectors, truth, crowd)
    atomic_write_text(out / "annotations.csv", annotations_to_csv(anns))
    print(f"generated {len(ds.scenarios)} scenarios, {len(ds.realizations)} "
          f"realizations, {len(anns)} annotations -> {out}")
    return 0


def cmd_score(args) -> int:
    ds = load_dataset(args.dataset)
    params = _load_params(args.rule_params)
    vectors = _score_all(ds, params)
    out = Path(args.out or (Path(args.dataset) / "violations.csv"))
    atomic_write_text(out, vectors_to_csv(vectors))
    print(f"scored {len(vectors)} realizations -> {out}")
    return 0


def cmd_compare(args) -> int:
    ds = load_dataset(args.dataset)
    rb = _load_rulebook(args.rulebook)
    vectors = vectors_from_csv(Path(args.violations).read_text())
    anns = load_annotations(args.annotations)
    stats = compute_pair_stats(anns)
    lines = ["realization_a,realization_b,outcome,deciding_rules"]
    n_inc = 0
    for st in stats:
        c = compare(rb, vectors[st.pair[0]], vectors[st.pair[1]])
        n_inc += c.outcome == INCOMPARABLE
        lines.append(f"{st.pair[0]},{st.pair[1]},{c.outcome},"
                     f"{'|'.join(sorted(c.deciding_rules))}")
    out = Path(args.out or (Path(args.dataset) / "rulebook_verdicts.csv"))
    atomic_write_text(out, "\n".join(lines) + "\n")
    print(f"{len(stats) - n_inc} comparable / {n_inc} incomparable "
          f"out of {len(stats)} pairs -> {out}")
    return 0


def cmd_label(args) -> int:
    ds = load_dataset(args.dataset)
    anns = load_annotations(args.annotations)
    vectors = vectors_from_csv(Path(args.violations).read_text())
    stats = compute_pair_stats(anns)
    hist = bin_agreements(stats)
    bt = fit_bradley_terry(stats, items=sorted(vectors))
    scen_of = {rid: r.scenario_id for rid, r in ds.realizations.items()}
    result = make_labeled_pairs(stats, bt, vectors, scen_of)
    out = Path(args.out or args.dataset)
    atomic_write_text(out / "pair_stats.csv", pair_stats_to_csv(stats))
    atomic_write_text(out / "bt_scores.csv", bt_scores_to_csv(bt))
    atomic_write_text(out / "labeled_pairs.csv", labeled_pairs_to_csv(result))
    print("agreement histogram "
          + " ".join(f"{lab}:{n}" for lab, n in zip(AGREEMENT_BIN_LABELS, hist)))
    print(f"{result.n_unique} labeled pairs ({result.n_tied_excluded} tied excluded), "
          f"{len(bt.flagged)} degenerate components -> {out}")
    return 0


def cmd_train_eval(args) -> int:
    pairs = labeled_pairs_from_csv(Path(args.labeled_pairs).read_text()).pairs
    anns = load_annotations(args.annotations) if args.annotations else None
    rb = _load_rulebook(args.rulebook)
    grids = load_grids(args.grids)
    if args.models:
        wanted = args.models.split(",")
        grids = {k: v for k, v in grids.items() if k in wanted}
    scenario_ids = sorted({p.scenario_id for p in pairs})
    plan = plan_folds(scenario_ids, args.seed, repeats=args.repeats)
    reports = nested_cv(grids, pairs, plan, annotations=anns, rulebook=rb,
                        base_seed=args.seed)
    out = Path(args.out)
    table = reports_to_table(reports)
    atomic_write_text(out / "metrics.txt", table)
    atomic_write_text(out / "metrics.json", reports_to_json(reports))
    atomic_write_text(out / "per_fold.csv", per_fold_csv(reports))
    if anns is not None:
        label_by_pair = {p.key(): (p.label if not p.is_mirror else -p.label)
                         for p in pairs}
        dist = annotator_agreement_distribution(anns, label_by_pair)
        atomic_write_text(out / "annotator_agreement.json", json.dumps(
            {"median_pct": dist.median, "histogram": dist.histogram,
             "per_annotator_pct": dist.per_annotator}, sort_keys=True, indent=1) + "\n")
        print(f"median annotator agreement: {dist.median:.1f}%")
    print(table)
    return 0


def cmd_rulebook_lint(args) -> int:
    rb = _load_rulebook(args.rulebook)
    sys.stdout.write(lint_report(rb))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(args.dataset, annotations_path=args.annotations,
                     rulebook_path=args.rulebook, rule_params_path=args.rule_params,
                     frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="drivepref",
        description="Driving-behavior preference workbench")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a dataset and simulated crowd")
    g.add_argument("--out", required=True)
    g.add_argument("--scenarios", type=int, default=40)
    g.add_argument("--realizations", type=int, default=4)
    g.add_argument("--annotators", type=int, default=25)
    g.add_argument("--annotations-per-pair", type=int, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--truth", choices=("rulebook", "utility"), default="rulebook")
    g.add_argument("--noise", choices=("flip", "logistic"), default="flip")
    g.add_argument("--p-correct", type=float, default=1.0)
    g.add_argument("--noise-scale", type=float, default=1.0)
    g.add_argument("--rulebook")
    g.add_argument("--rule-params")
    g.set_defaults(fn=cmd_generate)

    s = sub.add_parser("score", help="violation vectors for every realization")
    s.add_argument("--dataset", required=True)
    s.add_argument("--rule-params")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_score)

    c = sub.add_parser("compare", help="rulebook verdicts for annotated pairs")
    c.add_argument("--dataset", required=True)
    c.add_argument("--violations", required=True)
    c.add_argument("--annotations", required=True)
    c.add_argument("--rulebook")
    c.add_argument("--out")
    c.set_defaults(fn=cmd_compare)

    l = sub.add_parser("label", help="agreement stats, BT scores, labeled pairs")
    l.add_argument("--dataset", required=True)
    l.add_argument("--annotations", required=True)
    l.add_argument("--violations", required=True)
    l.add_argument("--out")
    l.set_defaults(fn=cmd_label)

    t = sub.add_parser("train-eval", help="nested CV over models + RB + RB+DT")
    t.add_argument("--labeled-pairs", required=True)
    t.add_argument("--annotations")
    t.add_argument("--rulebook")
    t.add_argument("--grids")
    t.add_argument("--models", help="comma-separated subset of model kinds")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--repeats", type=int, default=10)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train_eval)

    r = sub.add_parser("rulebook-lint", help="print closure and incomparable pairs")
    r.add_argument("--rulebook")
    r.set_defaults(fn=cmd_rulebook_lint)

    v = sub.add_parser("serve", help="HTTP annotation service")
    v.add_argument("--dataset", required=True)
    v.add_argument("--annotations", required=True)
    v.add_argument("--rulebook")
    v.add_argument("--rule-params")
    v.add_argument("--frontend", help="directory of static UI files to serve")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8008)
    v.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except DrivePrefError as e:
        json.dump({"error": type(e).__name__, "message": str(e)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except FileNotFoundError as e:
        json.dump({"error": "FileNotFound", "message": str(e)}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
