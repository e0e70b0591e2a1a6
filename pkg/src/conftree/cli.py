"""Command line entry point: ``conftree <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .codec import ConfluentTrajectorySet, encode_targets, trajset_from_dict, TrajectoryTargets
from .experiment import ExperimentSpec, run_experiment
from .graph import read_tree, tree_from_dict, write_tree
from .matching import LossWeights, MatchWeights, PredictionSequence, compute_losses
from .metrics import SCORE_FIELDS, aggregate_reports, evaluate
from .synth import CorruptionParams, SynthParams, corrupt_tree, generate_tree, load_params
from .tnms import TnmsConfig, tnms_with_stats
from .tracer import OracleConfig, OracleProposer, TraceConfig, trace

log = logging.getLogger("conftree")


def _dump(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_synth(args) -> int:
    params = load_params(SynthParams, args.params, seed=args.seed)
    tree = generate_tree(params)
    write_tree(tree, args.out)
    log.info("wrote %d nodes to %s", len(tree), args.out)
    return 0


def cmd_corrupt(args) -> int:
    params = load_params(CorruptionParams, args.params, seed=args.seed)
    tree = corrupt_tree(read_tree(args.inp), params)
    write_tree(tree, args.out)
    log.info("wrote %d nodes to %s", len(tree), args.out)
    return 0


def cmd_tnms(args) -> int:
    cfg = TnmsConfig(tau_pos=args.tau_pos, tau_min=args.tau_min, rho=args.rho)
    out, stats = tnms_with_stats(read_tree(args.inp), cfg)
    write_tree(out, args.out)
    log.info("tnms: %d -> %d nodes (%d branches merged)", stats.n_in, stats.n_out, stats.n_merged_branches)
    return 0


def cmd_trace(args) -> int:
    gt = read_tree(args.oracle_gt)
    cfg = TraceConfig(n=args.n, L=args.L, half_extent=args.half_extent, max_nodes=args.max_nodes,
                      max_patches=args.max_patches, apply_tnms=args.tnms,
                      tnms=TnmsConfig(args.tau_pos, args.tau_min, args.rho))
    oc = OracleConfig(gt, pos_noise_std=args.noise, radius_noise_std=args.radius_noise,
                      duplication=args.duplication, seed=args.seed)
    start = np.asarray(args.start, dtype=float) if args.start else gt.position(gt.root)
    res = trace(OracleProposer(oc, cfg.half_extent), start, cfg)
    write_tree(res.tree, args.out)
    log.info("trace: %d nodes from %d patches%s", len(res.tree), res.n_patches,
             " (truncated)" if res.truncated else "")
    return 3 if res.truncated else 0


def _pair_files(pred: Path, gt: Path) -> list[tuple[str, Path | None, Path]]:
    if gt.is_dir():
        pairs = []
        for g in sorted(gt.glob("*.json")):
            p = pred / g.name if pred.is_dir() else pred
            pairs.append((g.stem, p if p.exists() else None, g))
        return pairs
    return [(gt.stem, pred if pred.exists() else None, gt)]


def cmd_evaluate(args) -> int:
    pairs = _pair_files(Path(args.pred), Path(args.gt))
    samples, reports, errors = [], [], []
    for name, p, g in pairs:
        try:
            if p is None:
                raise FileNotFoundError(f"no prediction for {name}")
            rep = evaluate(read_tree(p), read_tree(g))
        except Exception as exc:
            errors.append({"sample": name, "error": f"{type(exc).__name__}: {exc}"})
            continue
        reports.append(rep)
        samples.append({"sample": name, **rep.to_dict()})
    out = {"samples": samples, "aggregate": aggregate_reports(reports) if reports else None, "errors": errors}
    _dump(out, args.out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("sample",) + SCORE_FIELDS)
            for s in samples:
                w.writerow([s["sample"]] + ["" if s[k] is None else repr(round(s[k], 10)) for k in SCORE_FIELDS])
    if not pairs:
        return 2
    return 1 if errors else 0


def _load_prediction(path: str) -> PredictionSequence:
    data = json.loads(Path(path).read_text())
    steps = data["steps"] if "steps" in data else [data]
    return PredictionSequence([trajset_from_dict(s) for s in steps])


def _load_targets(path: str, L: int, anchor: int | None) -> ConfluentTrajectorySet:
    data = json.loads(Path(path).read_text())
    if "nodes" in data:
        tree = tree_from_dict(data)
        return encode_targets(tree, tree.root if anchor is None else anchor, L)
    ts = trajset_from_dict(data)
    return TrajectoryTargets(ts.origin, ts.positions, ts.radii, ts.end_pos, ts.divergence)


def cmd_loss(args) -> int:
    pred = _load_prediction(args.pred)
    targets = _load_targets(args.targets, pred.first.L, args.anchor)
    mw = MatchWeights(args.lambda_pos, args.lambda_rad)
    lw = LossWeights(args.alpha_pos, args.alpha_rad, args.alpha_end, args.alpha_div)
    _dump(compute_losses(pred, targets, mw, lw).to_dict(), args.out)
    return 0


def cmd_experiment(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    if args.out_dir:
        spec.out_dir = args.out_dir
    report = run_experiment(spec, jobs=args.jobs)
    for g in report["groups"]:
        if g["scores"]:
            s = g["scores"]
            log.info("noise=%.2f tnms=%s  rAP=%.2f rAR=%.2f rF1=%.2f rBF1=%.2f", g["noise"], g["tnms"],
                     s["rAP"]["mean"], s["rAR"]["mean"], s["rF1"]["mean"], s["rBF1"]["mean"])
    for e in report["errors"]:
        log.error("seed %s: %s", e["seed"], e["error"])
    return 0 if report["ok"] else 1


def _add_tnms_flags(p):
    p.add_argument("--tau-pos", type=float, default=0.3)
    p.add_argument("--tau-min", type=float, default=2.0)
    p.add_argument("--rho", type=float, default=0.2)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conftree", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a synthetic tree")
    p.add_argument("--params", help="SynthParams JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("corrupt", help="add noise, duplicates and drops to a tree")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--params", help="CorruptionParams JSON")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("tnms", help="tree non-max suppression")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_tnms_flags(p)
    p.set_defaults(func=cmd_tnms)

    p = sub.add_parser("trace", help="trace a tree with the ground-truth oracle proposer")
    p.add_argument("--oracle-gt", required=True)
    p.add_argument("--noise", type=float, default=0.0, help="position noise std (voxels)")
    p.add_argument("--radius-noise", type=float, default=0.0)
    p.add_argument("--duplication", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--L", type=int, default=10)
    p.add_argument("--half-extent", type=float, default=32.0)
    p.add_argument("--max-nodes", type=int, default=200_000)
    p.add_argument("--max-patches", type=int, default=20_000)
    p.add_argument("--start", type=float, nargs=3, help="root position (default: gt root)")
    p.add_argument("--tnms", action="store_true", help="apply TNMS to the traced tree")
    _add_tnms_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("evaluate", help="point/branch metrics of predictions against ground truth")
    p.add_argument("--pred", required=True, help="tree JSON or directory")
    p.add_argument("--gt", required=True, help="tree JSON or directory (files paired by name)")
    p.add_argument("--out", default="-")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("loss", help="matching + loss terms for a prediction/target pair")
    p.add_argument("--pred", required=True, help="trajectory-set JSON, or {'steps': [...]}")
    p.add_argument("--targets", required=True, help="trajectory-set JSON or tree JSON")
    p.add_argument("--anchor", type=int, help="anchor node when --targets is a tree (default root)")
    p.add_argument("--lambda-pos", type=float, default=3.0)
    p.add_argument("--lambda-rad", type=float, default=1.0)
    p.add_argument("--alpha-pos", type=float, default=4.2)
    p.add_argument("--alpha-rad", type=float, default=1.15)
    p.add_argument("--alpha-end", type=float, default=0.94)
    p.add_argument("--alpha-div", type=float, default=0.3)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("experiment", help="synthesize, trace and evaluate over seeds")
    p.add_argument("--spec", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
