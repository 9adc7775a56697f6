"""Acceptance gate: the twelve headline guarantees, one test each.

Each test prints a single PASS/FAIL line (visible with -s or on failure) and
asserts the guarantee at its stated tolerance. Statistical criteria use fixed
seeds, so every run of this file is deterministic.
"""
import json
import math

import numpy as np
import pytest

from manyminds import cli
from manyminds.epr import (
    DEFAULT_CHSH_AXES,
    EprConfig,
    chsh,
    chsh_monte_carlo,
    communicate_and_check,
    hulk_demo,
    prepare_state,
    run_epr,
)
from manyminds.ghz import (
    SCENARIOS,
    Scenario,
    all_cells,
    allowed_triples,
    enumerate_local_assignments,
    ghz_state,
    missing_witness_count,
    pigeonhole_report,
    sign_flip_witnesses,
    simulate_scenarios,
    verify_constraints,
)
from manyminds.minds import INDEPENDENT_LOCAL, JOINTLY_CORRELATED, SINGLE_MIND
from manyminds.quantum import branch_decompose, partial_trace, trace_distance
from manyminds.rng import RngSpec
from manyminds.walks import (
    TreeEvent,
    TreeSpec,
    build_tree,
    chernoff_bound,
    chi_square_pvalue,
    random_walk,
    repeated_frequency,
)


def verdict(num: int, ok: bool, text: str) -> None:
    print(f"ACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'}: {text}")
    assert ok, f"criterion {num}: {text}"


def test_criterion_01_constraint_table():
    table = verify_constraints(ghz_state())
    want = {Scenario.XXX: -1.0, Scenario.XYY: 1.0, Scenario.YXY: 1.0, Scenario.YYX: 1.0}
    ok = all(abs(exp - want[s]) < 1e-9 and abs(var) < 1e-9
             for s, (exp, var) in table.items())
    verdict(1, ok, "spin-product expectations (-1,+1,+1,+1) with variance < 1e-9")


def test_criterion_02_local_value_contradiction():
    total, satisfying, witnesses = enumerate_local_assignments()
    ok = (total, satisfying, witnesses) == (64, 0, [])
    verdict(2, ok, f"{satisfying} of {total} fixed +-1 assignments satisfy all four products")


def test_criterion_03_singlet_same_axis_run():
    n = 100000
    run = run_epr(EprConfig(RngSpec(1003), policy=JOINTLY_CORRELATED, n_minds=n))
    rec = run.record
    agree = rec.pair_count("+", "+") + rec.pair_count("-", "-")
    marginals_ok = all(abs(float(rec.proportions[obs]["+"]) - 0.5) <= 0.0063
                       for obs in ("alice", "bob"))
    ok = agree == 0 and marginals_ok
    verdict(3, ok, f"{agree} same-sign mind pairs at n={n}; both marginals within 0.5 +- 0.0063")


def test_criterion_04_single_mind_mismatch():
    trials = 100000
    rate = hulk_demo(trials, RngSpec(1004), policy=SINGLE_MIND)
    ok = abs(rate - 0.5) <= 0.0063
    verdict(4, ok, f"mismatch rate {rate:.4f} within 0.5 +- 0.0063 over {trials} trials")


def test_criterion_05_report_consistency():
    n = 10000
    ok = True
    for policy in (JOINTLY_CORRELATED, INDEPENDENT_LOCAL):
        run = communicate_and_check(EprConfig(RngSpec(1005), policy=policy, n_minds=n))
        for check in run.report_checks:
            ok = ok and check.all_consistent
            # minus minds must all perceive a plus report, and symmetrically
            ok = ok and set(check.observed.get("-", {})) <= {"+"}
            ok = ok and set(check.observed.get("+", {})) <= {"-"}
    verdict(5, ok, f"100% report consistency in all four sign cases, both policies, n={n}")


def test_criterion_06_ghz_branch_weights():
    decomp = branch_decompose(ghz_state(), {"p1": "x", "p2": "x", "p3": "x"})
    dist = decomp.joint_distribution()
    expected = set(allowed_triples(Scenario.XXX).triples)
    exact_ok = set(dist) == expected and all(abs(w - 0.25) < 1e-9 for w in dist.values())

    n = 100000
    sample = simulate_scenarios(n, RngSpec(1006))
    counts = sample.triple_counts(Scenario.XXX)
    band = 4 * math.sqrt(0.25 * 0.75 / n)
    empirical_ok = all(abs(c / n - 0.25) <= band for c in counts)
    verdict(6, exact_ok and empirical_ok,
            "x-basis branches are exactly the four allowed triples at weight 1/4, "
            f"empirically 0.25 +- {band:.4f} at n={n}")


def test_criterion_07_256_cells():
    n = 1000000
    report = pigeonhole_report(simulate_scenarios(n, RngSpec(1007)))
    p = 1.0 / 256.0
    band = 4 * math.sqrt(p * (255.0 / 256.0) / n)
    within = all(abs(c / n - p) <= band for c in report.counts)
    ok = report.nonempty_cells == 256 and report.max_frequency >= 1 / 256 and within
    verdict(7, ok, f"all 256 cells populated at n={n}, max frequency "
                   f"{float(report.max_frequency):.6f} >= 1/256, all within {p:.6f} +- {band:.6f}")


def test_criterion_08_sign_flip_universality():
    cells_ok = all(len(sign_flip_witnesses(cell)) >= 1 for cell in all_cells())
    sample = simulate_scenarios(100000, RngSpec(1008))
    missing = missing_witness_count(sample)
    ok = cells_ok and missing == 0
    verdict(8, ok, f"every one of 256 cells and 100000 sampled triples has a flip witness "
                   f"({missing} missing)")


def test_criterion_09_no_signaling():
    states = {axis: prepare_state(EprConfig(RngSpec(1), bob_axis=axis))
              for axis in ("z", "x", 45.0)}
    rhos = {axis: partial_trace(state, "alice") for axis, state in states.items()}
    dists = [trace_distance(rhos["z"], rhos[a]) for a in ("x", 45.0)]
    dists.append(trace_distance(rhos["x"], rhos[45.0]))
    ok = all(d < 1e-9 for d in dists)
    verdict(9, ok, "Alice's reduced state invariant across Bob axes z, x, 45deg "
                   f"(max trace distance {max(dists):.2e})")


def test_criterion_10_chsh():
    exact = chsh(*DEFAULT_CHSH_AXES)
    exact_ok = abs(exact - 2 * math.sqrt(2)) < 1e-9
    estimate = chsh_monte_carlo(*DEFAULT_CHSH_AXES, n_per_pair=1000000, rng=RngSpec(1010))
    mc_ok = abs(estimate - 2 * math.sqrt(2)) <= 0.02
    verdict(10, exact_ok and mc_ok,
            f"exact combination {exact:.10f} = 2*sqrt(2) +- 1e-9; "
            f"sampled {estimate:.4f} within +- 0.02 at 1e6 per pair")


def test_criterion_11_tree_law_of_large_numbers():
    spec = TreeSpec((TreeEvent("t1", (1 / 3, 2 / 3)),
                     TreeEvent("t2", (1 / 3, 1 / 3, 1 / 3))))
    result = random_walk(build_tree(spec), 100000, RngSpec(1011))
    pvalue = chi_square_pvalue(result)

    freq = repeated_frequency(2 / 3, 1000, 10000, RngSpec(1011))
    bound = chernoff_bound(0.05, 1000)
    deviant = freq.deviant_fraction(0.05)
    ok = pvalue > 1e-4 and deviant <= bound
    verdict(11, ok, f"six-leaf walk fits exact probabilities (p={pvalue:.4f} > 1e-4); "
                    f"deviant fraction {deviant:.5f} <= Chernoff bound {bound:.5f}")


def test_criterion_12_determinism(tmp_path):
    runs = {
        "ghz": ["ghz", "--minds", "20000", "--seed", "7"],
        "epr": ["epr", "--minds", "10000", "--seed", "3", "--policy", "independent"],
        "hulk": ["hulk", "--trials", "20000", "--seed", "11"],
        "tree-like chsh": ["chsh", "--trials", "20000", "--seed", "13"],
    }
    ok = True
    for name, argv in runs.items():
        bodies = set()
        for i, threads in enumerate(("1", "3", "5")):
            out = tmp_path / f"{name.replace(' ', '_')}_{i}.json"
            status = cli.main(argv + ["--threads", threads, "--out", str(out)])
            ok = ok and status == 0
            body = json.dumps(json.loads(out.read_text())["body"], sort_keys=True)
            bodies.add(body)
        ok = ok and len(bodies) == 1
    verdict(12, ok, "report bodies byte-identical across reruns and --threads 1/3/5")
