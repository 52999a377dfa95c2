"""Acceptance suite: one test per criterion, each printing a single pass/fail line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
"acceptance criteria" section of the terminal summary.  The ablation and
planted-recovery checks share five end-to-end runs and take several minutes.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from helpers import gradient_errors, random_gradient_case, used_groups
from socparse.cli import EXIT_OK, EXIT_VERIFY, main
from socparse.corpus import GoldRelation, evaluation_turn, f1_c, load_dialogre, macro_f1
from socparse.oracle import oracle_check, random_instance, standard_instances
from socparse.sampler import ChainState, SamplerConfig, accept, parse_session, parse_turn, step_budget
from socparse.schema import load_fixture
from socparse.scorer import ZeroScorer
from socparse.synthetic import SUITE, generate_corpus, revelation_session, run_suite, schemas
from socparse.training import TrainConfig, train

from test_corpus import EXAMPLE, _two_turn_session

SUITE_SEEDS = range(5)


# -- 1 -------------------------------------------------------------------------------------
def test_oracle_equivalence(verdict):
    instances = standard_instances(10)
    t0 = time.perf_counter()
    corrected = oracle_check(instances, range(20), SamplerConfig(sweeps=10**9, max_steps=400_000,
                                                                 hastings_correction=True))
    elapsed = time.perf_counter() - t0
    uncorrected = oracle_check(instances, range(20), SamplerConfig(sweeps=10**9, max_steps=400_000))
    ok = corrected["pass_rate"] >= 0.95 and elapsed < 120
    verdict(1, ok, f"Hastings: worst instance pass rate {corrected['pass_rate']:.2f}, max L1 "
                   f"{corrected['max_L1']:.3f}, {elapsed:.0f} s; no-correction bias: max L1 "
                   f"{uncorrected['max_L1']:.3f}, pass rate {uncorrected['pass_rate']:.2f}")


# -- 2 -------------------------------------------------------------------------------------
def test_flat_landscape(verdict):
    aog, _, model = random_instance(0, K=2, R=2, M=0)
    flat = model.with_switches(False, False, False)
    cfg = SamplerConfig(sweeps=10**9, max_steps=10_000, burn_in=0.0, classify_init=False)
    _, tt = parse_turn(ChainState.start(aog, 0), None, ZeroScorer(), flat, cfg)
    codes = tt.samples @ (2 ** np.arange(tt.samples.shape[1]))
    freq = np.bincount(codes, minlength=aog.support_size()) / len(codes)
    l1 = float(np.abs(freq - 1 / aog.support_size()).sum())
    rates = []
    for inst_aog, _, inst_model in standard_instances(10, flat=True):
        _, t = parse_turn(ChainState.start(inst_aog, 1), None, ZeroScorer(), inst_model, cfg)
        rates.append(t.acceptance_rate)
    ok = tt.acceptance_rate == 1.0 and all(r == 1.0 for r in rates) and l1 <= 0.05 and len(codes) == 10_000
    verdict(2, ok, f"acceptance {tt.acceptance_rate} (standard flat instances: min {min(rates)}), "
                   f"state distribution L1 {l1:.4f} over {len(codes)} steps")


# -- 3 -------------------------------------------------------------------------------------
def test_acceptance_calibration(verdict):
    rng = np.random.default_rng(0)
    freq = float(np.mean([accept(0.0, math.log(2), rng) for _ in range(100_000)]))
    verdict(3, abs(freq - 0.5) <= 0.01, f"acceptance at dE = ln 2: {freq:.4f}")


# -- 4 -------------------------------------------------------------------------------------
def test_gradient_correctness(verdict):
    worst = {}
    for seed in range(20):
        params, ex, neg, model = random_gradient_case(seed, reduced=seed % 2 == 1)
        errors = gradient_errors(params, ex, neg, model)
        for group in used_groups(model):
            worst[group] = max(worst.get(group, 0.0), errors[group])
    ok = all(v <= 1e-4 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in sorted(worst.items()))
    verdict(4, ok, f"max relative error over 20 instances: {detail}")


# -- 5 and 6 -------------------------------------------------------------------------------
@pytest.fixture(scope="module")
def suite_results():
    return [run_suite(seed) for seed in SUITE_SEEDS]


def test_planted_recovery(verdict, suite_results):
    acc = float(np.mean([r["accuracy"]["alpha+beta+gamma"] for r in suite_results]))
    l1 = max(r["beta_row_l1"] for r in suite_results)
    verdict(5, acc >= 0.9 and l1 <= 0.1,
            f"final-turn relation accuracy {acc:.3f} (mean of {len(suite_results)} runs), "
            f"worst planted beta row L1 {l1:.3f}")


def test_ablation_direction(verdict, suite_results):
    names = ("alpha", "alpha+beta", "alpha+gamma", "alpha+beta+gamma")
    mean = {n: float(np.mean([r["accuracy"][n] for r in suite_results])) for n in names}
    std = {n: float(np.std([r["accuracy"][n] for r in suite_results])) for n in names}
    ok = (mean["alpha+beta+gamma"] >= mean["alpha+beta"] >= mean["alpha"]
          and mean["alpha+beta+gamma"] >= mean["alpha+gamma"] >= mean["alpha"])
    detail = ", ".join(f"{n} {mean[n]:.3f}±{std[n]:.3f}" for n in names)
    verdict(6, ok, f"mean final-turn accuracy over {len(suite_results)} seeds: {detail}")


# -- 7 -------------------------------------------------------------------------------------
def test_convergence_trace_shape(verdict):
    rs, ats = schemas()
    result = train(generate_corpus(1000, seed=0, **SUITE), rs, ats, TrainConfig(epochs=0))
    rng = np.random.default_rng(7)
    reveal, chains = 5, 40
    peaks, first, last = 0, [], []
    for n in range(50):
        session = revelation_session(rng, rs, reveal_turn=reveal, n_turns=8, K=4, sid=str(n))
        aog = session.aog(rs, ats)
        rates = np.mean([
            parse_session(session, result.scorer, result.model,
                          SamplerConfig(seed=c, hastings_correction=True), aog)[1].acceptance_rates
            for c in range(chains)
        ], axis=0)
        k = reveal - 1
        peaks += bool(rates[k] > rates[k - 1] and rates[k] > rates[k + 1])
        first.append(rates[0])
        last.append(rates[-1])
    ok = np.mean(last) < np.mean(first) and peaks >= 40
    verdict(7, ok, f"mean acceptance first turn {np.mean(first):.3f}, final turn {np.mean(last):.3f}; "
                   f"revelation peak in {peaks}/50 sessions")


# -- 8 -------------------------------------------------------------------------------------
def test_metric_fidelity(verdict):
    gold = {"s": [GoldRelation("a", "b", ("A",)), GoldRelation("b", "a", ("A",)), GoldRelation("a", "c", ("B",))]}
    toy = macro_f1({"s": {("a", "b"): "A", ("b", "a"): "B", ("a", "c"): "B"}}, gold)
    rs, _ = load_fixture("dialogre.schema")
    example = load_dialogre(EXAMPLE, rs)[0]
    dad = next(r for r in example.gold_relations if (r.subject, r.object) == ("S2", "S1"))
    session = _two_turn_session()
    late = {"t": [{("B", "A"): "per:friends"}, {("B", "A"): "per:children"}]}
    n_types = len(rs.labels) - 1
    ok = (toy == 2 / 3 and evaluation_turn(example, dad) == 1 and f1_c(late, [session]) == 1.0
          and n_types == 36 and rs.unanswerable_label in rs.labels and len(rs.interpersonal) == 17)
    verdict(8, ok, f"toy macro F1 {toy!r}, trigger turn {evaluation_turn(example, dad)}, late-correct F1c "
                   f"{f1_c(late, [session])}, schema {n_types} types + {rs.unanswerable_label}")


# -- 9 -------------------------------------------------------------------------------------
def _run_all(d, capsys):
    """Run every subcommand once into ``d``; return their primary outputs as bytes."""
    out = {}
    d.mkdir()
    assert main(["synth", "--n", "12", "--entities-per-session", "3", "--n-turns", "5", "--seed", "4",
                 "--out", str(d / "c.json"), "--sidecar", str(d / "a.tsv")]) == EXIT_OK
    assert main(["train", "--schema", "kinship", "--corpus", str(d / "c.json"), "--sidecar", str(d / "a.tsv"),
                 "--epochs", "2", "--seed", "4", "--out", str(d / "m.json")]) == EXIT_OK
    (d / "dialogue.txt").write_text("S1: hi dad\nS2: hello son\nS3: good morning\n")
    common = ["--model", str(d / "m.json"), "--input", str(d / "dialogue.txt"), "--seed", "4"]
    assert main(["infer", *common, "--output", str(d / "infer.jsonl")]) == EXIT_OK
    assert main(["trace", *common, "--output", str(d / "trace.jsonl")]) == EXIT_OK
    assert main(["eval", "--model", str(d / "m.json"), "--corpus", str(d / "c.json"), "--seed", "4",
                 "--report", str(d / "report.json"), "--predictions", str(d / "preds.jsonl")]) == EXIT_OK
    capsys.readouterr()
    assert main(["oracle-check", "--instances", "2", "--seeds", "2", "--max-steps", "20000"]) in (EXIT_OK, EXIT_VERIFY)
    out["oracle-check"] = capsys.readouterr().out.encode()
    for name in ("c.json", "a.tsv", "m.json", "infer.jsonl", "trace.jsonl", "report.json", "preds.jsonl"):
        out[name] = (d / name).read_bytes()
    return out


def test_determinism(verdict, tmp_path, capsys):
    a = _run_all(tmp_path / "a", capsys)
    b = _run_all(tmp_path / "b", capsys)
    # the files embed no paths, so both runs must agree byte for byte
    differ = [k for k in a if a[k] != b[k]]
    verdict(9, not differ and all(a.values()),
            f"{len(a)} outputs of synth/train/infer/trace/eval/oracle-check compared; differing: {differ or 'none'}")


# -- 10 ------------------------------------------------------------------------------------
def test_step_budget(verdict):
    grid = list(itertools.product((1, 2, 3, 5), (0, 1, 4), (2, 3, 37), (1, 3, 50), (10, 500, 20000)))
    mismatches = [g for g in grid if step_budget(*g) != min(g[3] * (g[0] * g[1] + g[0] * (g[0] - 1) * g[2]), g[4])]
    runs = 0
    for (K, R, M), (w, S_max) in itertools.product([(2, 2, 1), (3, 3, 2), (3, 2, 0)], [(1, 20000), (4, 20000), (50, 300)]):
        aog, scorer, model = random_instance(K + R + M, K=K, R=R, M=M)
        _, tt = parse_turn(ChainState.start(aog, 0), None, scorer, model, SamplerConfig(sweeps=w, max_steps=S_max))
        runs += 1
        if tt.steps != step_budget(K, M, R, w, S_max) or len(tt.accepted) != tt.steps:
            mismatches.append((K, M, R, w, S_max))
    verdict(10, not mismatches, f"{len(grid)} formula cases and {runs} sampler runs; mismatches: {mismatches or 'none'}")
