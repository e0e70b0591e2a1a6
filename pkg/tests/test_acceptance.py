"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""
import itertools
import json
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from oracles import canonical_form, reference_threshold
from conftree.codec import ConfluentTrajectorySet, TrajectoryTargets, decode_tree, encode_targets
from conftree.experiment import ExperimentSpec, run_experiment
from conftree.graph import match_trees, subtree, tree_to_dict, validate_tree
from conftree.matching import (
    Assignment,
    LossWeights,
    MatchWeights,
    PredictionSequence,
    assign,
    assignment_cost,
    compute_losses,
    hungarian,
    loss_pos_rad,
    total_loss,
)
from conftree.metrics import TAU_MATCH_SWEEP, TAU_RAD_SWEEP, evaluate, match_threshold
from conftree.synth import CorruptionParams, SynthParams, bfs_prefix, corrupt_tree, generate_tree
from conftree.tnms import TnmsConfig, runtime_scaling_probe, tnms
from conftree.tracer import OracleConfig, OracleProposer, trace

pytestmark = pytest.mark.acceptance


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def run(num, label):
        info = {}
        t0 = time.perf_counter()
        ok = False
        try:
            yield info
            ok = True
        finally:
            extra = "  ".join(f"{k}={v}" for k, v in info.items())
            with capsys.disabled():
                print(f"\n[{'PASS' if ok else 'FAIL'}] AC{num:<2} {label}  ({time.perf_counter() - t0:.2f}s)  {extra}")

    return run


def _tset(pos, rad, end, div, cls=ConfluentTrajectorySet):
    pos = np.asarray(pos, dtype=float)
    return cls(pos[0, 0], pos, np.asarray(rad, float), np.asarray(end, float), np.asarray(div, float))


def test_ac01_hungarian_vs_brute_force(criterion):
    with criterion(1, "hungarian cost equals brute-force minimum, n=2..6 x 1000") as info:
        rng = np.random.default_rng(2024)
        solve_time = 0.0
        for n in range(2, 7):
            perms = np.array(list(itertools.permutations(range(n))))
            for _ in range(1000):
                # integer entries keep every sum exact
                c = rng.integers(0, 100, size=(n, n)).astype(float)
                t0 = time.perf_counter()
                sigma = hungarian(c)
                got = assignment_cost(c, sigma)
                solve_time += time.perf_counter() - t0
                assert sorted(sigma.tolist()) == list(range(n))
                assert got == c[np.arange(n), perms].sum(axis=1).min()
        info["solve_s"] = f"{solve_time:.3f}"
        assert solve_time < 10.0


def test_ac02_many_to_one_counts(criterion):
    with criterion(2, "every target gets floor(n/m)..ceil(n/m) proposals, 500 cases") as info:
        rng = np.random.default_rng(7)
        for _ in range(500):
            m = int(rng.integers(1, 8))
            n = int(rng.integers(m, 25))
            L = 4
            tp = rng.normal(size=(m, L, 3)) * 4
            tp[:, 0] = 0
            pp = rng.normal(size=(n, L, 3)) * 4
            pp[:, 0] = 0
            tg = _tset(tp, np.ones((m, L)), np.ones(m), np.zeros((m, m)), TrajectoryTargets)
            pr = _tset(pp, np.ones((n, L)), np.ones(n), np.zeros((n, n)))
            counts = assign(pr, tg).counts()
            assert counts.sum() == n
            assert counts.min() >= n // m and counts.max() <= -(-n // m)
        info["cases"] = 500


def test_ac03_codec_round_trip(criterion):
    with criterion(3, "decode(encode(t)) isomorphic, position error <= 1e-9, 100 trees") as info:
        worst = 0.0
        for seed in range(100):
            full = generate_tree(SynthParams(seed=seed))
            t = subtree(full, full.root, max_depth=9)
            out = decode_tree(encode_targets(t, t.root, 10))
            mapping = match_trees(out, t, atol=1e-9)
            assert mapping is not None and len(out) == len(t)
            err = max(float(np.abs(out.position(a) - t.position(b)).max()) for a, b in mapping.items())
            worst = max(worst, err)
        info["max_err"] = f"{worst:.1e}"
        assert worst <= 1e-9


def test_ac04_tnms_exact_duplicates(criterion):
    with criterion(4, "exact duplicates removed, valid, idempotent, 100 trees") as info:
        cfg = TnmsConfig()
        assert (cfg.tau_pos, cfg.tau_min, cfg.rho) == (0.3, 2.0, 0.2)
        for seed in range(100):
            gt = generate_tree(SynthParams(seed=seed))
            dup = corrupt_tree(gt, CorruptionParams(duplicate_branch_prob=1.0, duplicate_offset=0.0, seed=seed))
            assert len(dup) > len(gt)
            out = tnms(dup, cfg)
            assert len(out) == len(gt), seed
            assert validate_tree(out).ok
            assert canonical_form(out) == canonical_form(gt)
            assert tree_to_dict(tnms(out, cfg)) == tree_to_dict(out)
        info["trees"] = 100


def test_ac05_tnms_runtime(criterion):
    with criterion(5, "TNMS 10k nodes < 1 s, time(10k)/time(1k) <= 25") as info:
        runtime_scaling_probe(1000)  # warm-up: JIT compile and caches
        t1 = runtime_scaling_probe(1000, repeats=3)
        t10 = runtime_scaling_probe(10_000, repeats=3)
        info.update(t1k=f"{t1:.3f}s", t10k=f"{t10:.3f}s", ratio=f"{t10 / t1:.1f}")
        assert t10 < 1.0
        assert t10 / t1 <= 25


def test_ac06_metrics_identity_and_threshold(criterion):
    with criterion(6, "self-evaluation 100/100/100 MAE 0 on 50 trees; threshold on 1000 pairs") as info:
        for seed in range(50):
            t = generate_tree(SynthParams(seed=seed))
            s = evaluate(t, t).scores()
            assert (s["rAP"], s["rAR"], s["rF1"], s["radius_mae"]) == (100.0, 100.0, 100.0, 0.0)
            assert (s["rBAP"], s["rBAR"], s["rBF1"]) == (100.0, 100.0, 100.0)
        rng = np.random.default_rng(11)
        for r, tau in zip(rng.uniform(0.05, 20, 1000), rng.uniform(0, 1.5, 1000)):
            assert match_threshold(r, tau) == reference_threshold(r, tau)
        info["trees"], info["pairs"] = 50, 1000


def test_ac07_metric_monotonicity(criterion):
    with criterion(7, "point TP up over tau_rad, branch TP down over tau_match, 50 pairs") as info:
        assert TAU_RAD_SWEEP[0] == 0.25 and TAU_RAD_SWEEP[-1] == 0.75
        assert TAU_MATCH_SWEEP[0] == 0.5 and TAU_MATCH_SWEEP[-1] == 0.9
        for seed in range(50):
            gt = generate_tree(SynthParams(seed=seed))
            pred = corrupt_tree(gt, CorruptionParams(pos_noise_std=1.5, radius_noise_std=0.5,
                                                     duplicate_branch_prob=0.2, drop_branch_prob=0.2, seed=seed))
            rep = evaluate(pred, gt)
            ptp = [r["tp"] for r in rep.point_table]
            btp = [r["tp"] for r in rep.branch_table]
            assert all(a <= b for a, b in zip(ptp, ptp[1:])), ptp
            assert all(a >= b for a, b in zip(btp, btp[1:])), btp
        info["pairs"] = 50


def test_ac08_loss_sanity(criterion):
    with criterion(8, "zero loss when perfect, exact L1 homogeneity, composite 1e-12, default weights") as info:
        lw, mw = LossWeights(), MatchWeights()
        assert (lw.alpha_pos, mw.lambda_pos, lw.alpha_rad, mw.lambda_rad, lw.alpha_end, lw.alpha_div) == \
            (4.2, 3.0, 1.15, 1.0, 0.94, 0.3)

        gt = generate_tree(SynthParams(seed=1))
        tg = encode_targets(gt, gt.root, 10)
        perfect = _tset(tg.positions, tg.radii, tg.end_pos, tg.divergence)
        assert compute_losses([perfect, perfect], tg).total == 0.0

        rng = np.random.default_rng(3)
        tp = rng.integers(-16, 16, size=(2, 5, 3)) / 4.0
        res = rng.integers(-8, 8, size=(3, 5, 3)) / 4.0
        tp[:, 0] = res[:, 0] = 0
        t = _tset(tp, np.ones((2, 5)), np.ones(2), np.zeros((2, 2)), TrajectoryTargets)
        a = Assignment(np.array([0, 1, 2]), np.array([0, 1, 0]), 2)

        def lpos(c):
            p = _tset(tp[a.j_hat] + c * res, np.ones((3, 5)), np.ones(3), np.zeros((3, 3)))
            return loss_pos_rad(PredictionSequence([p]), t, a)[0][0]

        base = lpos(1.0)
        assert base > 0
        for c in (0.25, 0.5, 2.0, 4.0, 8.0):
            assert lpos(c) == c * base

        t1 = _tset(np.zeros((1, 1, 3)), [[2.0]], [1.0], [[0.0]], TrajectoryTargets)
        p1 = _tset(np.array([[[1.0, -2.0, 0.5]]]), [[2.5]], [0.8], [[0.0]])
        a1 = Assignment(np.array([0]), np.array([0]), 1)
        got = total_loss(PredictionSequence([p1]), t1, a1)
        info["composite"] = repr(got)
        assert abs(got - (4.2 * 3.5 + 1.15 * 0.5 + 0.94 * 0.2)) <= 1e-12
        assert abs(got - 15.463) <= 1e-12


def test_ac09_zero_noise_trace(criterion):
    with criterion(9, "zero-noise oracle trace scores rF1 = rBF1 = 100 on 20 trees") as info:
        sizes = []
        for seed in range(20):
            gt = generate_tree(SynthParams(seed=seed))
            if len(gt) > 500:
                gt = bfs_prefix(gt, 500)
            sizes.append(len(gt))
            res = trace(OracleProposer(OracleConfig(gt)), gt.position(gt.root))
            rep = evaluate(res.tree, gt)
            assert not res.truncated
            assert rep.rF1 == 100.0 and rep.rBF1 == 100.0, (seed, rep.rF1, rep.rBF1)
        info["nodes"] = f"{min(sizes)}..{max(sizes)}"


def test_ac10_tnms_ablation(criterion, tmp_path):
    with criterion(10, "duplication 2, noise 0.5: mean rAP with TNMS > without, 20 seeds") as info:
        spec = ExperimentSpec(seeds=list(range(20)), out_dir=str(tmp_path), noise_levels=[0.5], duplication=2)
        rep = run_experiment(spec)
        assert rep["ok"]
        by = {g["tnms"]: g["scores"]["rAP"]["mean"] for g in rep["groups"]}
        info.update(rAP_tnms=f"{by[True]:.2f}", rAP_raw=f"{by[False]:.2f}")
        assert by[True] > by[False]


def test_ac11_determinism(criterion, tmp_path):
    with criterion(11, "identical ExperimentSpec runs give byte-identical reports") as info:
        data = {"seeds": [0, 1, 2, 3], "noise_levels": [0.0, 0.5, 1.0], "duplication": 2,
                "radius_noise_std": 0.2, "synth": {"max_depth": 5}}
        outs = []
        for name, jobs in (("a", 1), ("b", 1), ("c", 2)):
            spec = ExperimentSpec.from_dict({**data, "out_dir": str(tmp_path / name)})
            run_experiment(spec, jobs=jobs)
            outs.append({f: (tmp_path / name / f).read_bytes() for f in ("report.json", "report.csv", "samples.json")})
        assert outs[0] == outs[1] == outs[2]
        assert json.loads(outs[0]["report.json"])["ok"]
        info["files"] = len(outs[0])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
