"""Desk-scale experiments: synthesize ground truth, trace with the oracle, evaluate.

Everything that reaches the report files is a deterministic function of the
spec, so two runs of one spec give byte-identical outputs regardless of
``jobs``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .graph import read_tree, write_tree
from .metrics import SCORE_FIELDS, MetricsReport, aggregate_reports, evaluate
from .synth import SynthParams, generate_tree, load_params
from .tnms import TnmsConfig, tnms
from .tracer import OracleConfig, OracleProposer, TraceConfig, trace

log = logging.getLogger(__name__)

CSV_COLUMNS = ("seed", "noise", "tnms") + SCORE_FIELDS


@dataclass
class ExperimentSpec:
    seeds: list[int]
    out_dir: str
    synth: SynthParams = field(default_factory=SynthParams)
    noise_levels: list[float] = field(default_factory=lambda: [0.0])
    radius_noise_std: float = 0.0
    duplication: int = 1
    trace: TraceConfig = field(default_factory=TraceConfig)
    gt_dir: str | None = None  # read gt from <gt_dir>/seed_<seed>.json instead of synthesizing
    save_trees: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("experiment needs at least one seed")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        synth = load_params(SynthParams, data.pop("synth", None))
        tr = dict(data.pop("trace", {}) or {})
        tr["tnms"] = TnmsConfig(**tr.get("tnms", {}))
        return cls(synth=synth, trace=TraceConfig(**tr), **data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _fmt(x):
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(round(x, 10))
    return str(x)


def run_seed(spec: ExperimentSpec, seed: int) -> dict:
    """All rows for one seed, or an error entry."""
    out = Path(spec.out_dir)
    try:
        if spec.gt_dir is not None:
            gt = read_tree(Path(spec.gt_dir) / f"seed_{seed}.json")
        else:
            params = SynthParams(**{**asdict(spec.synth), "seed": seed})
            gt = generate_tree(params)
        rows = []
        for noise in spec.noise_levels:
            oc = OracleConfig(gt, pos_noise_std=noise, radius_noise_std=spec.radius_noise_std,
                              duplication=spec.duplication, seed=seed)
            cfg = replace(spec.trace, apply_tnms=False)
            res = trace(OracleProposer(oc, cfg.half_extent), gt.position(gt.root), cfg)
            for use_tnms in (False, True):
                pred = tnms(res.tree, spec.trace.tnms) if use_tnms else res.tree
                rep = evaluate(pred, gt)
                rows.append({"seed": seed, "noise": float(noise), "tnms": use_tnms,
                             "truncated": res.truncated, "n_patches": res.n_patches,
                             "n_pred": len(pred), "n_gt": len(gt), **rep.to_dict()})
                if spec.save_trees:
                    (out / "trees").mkdir(parents=True, exist_ok=True)
                    write_tree(pred, out / "trees" / f"seed_{seed}_noise_{noise}_tnms_{int(use_tnms)}.json")
        return {"seed": seed, "rows": rows}
    except Exception as exc:  # recorded per seed; the run carries on
        log.warning("seed %s failed: %s", seed, exc)
        return {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}


def _run_seed_star(args):
    return run_seed(*args)


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> dict:
    """Run every seed, write ``samples.json``, ``report.csv`` and ``report.json``.

    Returns the aggregate report; ``report["ok"]`` is false when any seed failed.
    """
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = sorted(set(int(s) for s in spec.seeds))
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_seed_star, [(spec, s) for s in seeds]))
    else:
        results = [run_seed(spec, s) for s in seeds]
    results.sort(key=lambda r: r["seed"])

    rows = [row for r in results for row in r.get("rows", [])]
    errors = [{"seed": r["seed"], "error": r["error"]} for r in results if "error" in r]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) if row[c] is not None else "" for c in CSV_COLUMNS])
    (out / "report.csv").write_text(buf.getvalue())

    groups = []
    for noise in spec.noise_levels:
        for use_tnms in (False, True):
            sel = [r for r in rows if r["noise"] == float(noise) and r["tnms"] == use_tnms]
            reports = [MetricsReport(**{k: (math.nan if r[k] is None else r[k]) for k in SCORE_FIELDS})
                       for r in sel]
            groups.append({"noise": float(noise), "tnms": use_tnms, "n_samples": len(sel),
                           "scores": aggregate_reports(reports) if reports else None})
    report = {"ok": not errors, "n_seeds": len(seeds), "errors": errors, "groups": groups}
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    (out / "samples.json").write_text(json.dumps(rows, indent=1, sort_keys=True) + "\n")
    return report
