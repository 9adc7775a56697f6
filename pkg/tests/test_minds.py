"""Mind-ensemble splitting, proportions, mismatch and report consistency."""
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from manyminds.minds import (
    INDEPENDENT_LOCAL,
    JOINTLY_CORRELATED,
    SINGLE_MIND,
    MindId,
    ensembles_to_json,
    exchange_minds,
    history_counts,
    init_ensemble,
    marginal_for,
    mismatch_probability,
    proportions,
    report_correlation,
    split_joint,
    split_local,
    write_history_csv,
)
from manyminds.quantum import Branch, BranchDecomposition
from manyminds.rng import RngSpec

SIGNIFICANCE = 1e-4


def band(p, n, sigmas=4):
    return sigmas * math.sqrt(p * (1 - p) / n)


def decomp(subsystems, weights):
    branches = tuple(Branch(labels, math.sqrt(w), w) for labels, w in sorted(weights.items()))
    return BranchDecomposition(tuple(subsystems), ("z",) * len(subsystems), branches)


SINGLET_Z = decomp(("alice", "bob"), {("+", "-"): 0.5, ("-", "+"): 0.5})


class TestInit:
    def test_population_and_ids(self):
        ens = init_ensemble("alice", 5, RngSpec(1))
        assert ens.size == 5
        assert ens.mind_ids == tuple(MindId("alice", i) for i in range(5))
        assert str(ens.mind_ids[3]) == "alice:3"
        assert ens.events == ()

    def test_single_mind_forces_one(self):
        assert init_ensemble("alice", 500, RngSpec(1), SINGLE_MIND).size == 1

    def test_zero_minds_rejected(self):
        with pytest.raises(ValueError):
            init_ensemble("alice", 0, RngSpec(1))


class TestSplitLocal:
    def test_proportions_within_binomial_band(self):
        n = 20000
        ens = split_local(init_ensemble("alice", n, RngSpec(8)), "m",
                          {"+": 0.36, "-": 0.64})
        props = proportions(ens, "m")
        assert sum(props.values()) == Fraction(1)
        assert abs(float(props["+"]) - 0.36) <= band(0.36, n)

    def test_identity_persists_across_splits(self):
        ens = init_ensemble("alice", 50, RngSpec(2))
        ens = split_local(ens, "a", {"H": 0.5, "T": 0.5})
        ens = split_local(ens, "b", {"0": 0.5, "1": 0.5})
        assert ens.mind_ids == tuple(MindId("alice", i) for i in range(50))
        assert all(len(ens.history(i)) == 2 for i in range(50))

    def test_deterministic_per_seed_and_observer(self):
        def run(observer, seed):
            ens = split_local(init_ensemble(observer, 200, RngSpec(seed)), "m",
                              {"+": 0.5, "-": 0.5})
            return ens.assignments[0]

        assert np.array_equal(run("alice", 4), run("alice", 4))
        assert not np.array_equal(run("alice", 4), run("bob", 4))
        assert not np.array_equal(run("alice", 4), run("alice", 5))

    def test_zero_weight_outcome_gets_no_minds(self):
        ens = split_local(init_ensemble("a", 5000, RngSpec(3)), "m",
                          {"x": 0.0, "y": 1.0})
        assert proportions(ens, "m") == {"x": Fraction(0), "y": Fraction(1)}

    def test_conditional_split_follows_history(self):
        ens = split_local(init_ensemble("a", 400, RngSpec(6)), "first",
                          {"H": 0.5, "T": 0.5})
        ens = split_local(ens, "second", {
            ("H",): {"h2": 1.0},
            ("T",): {"t2": 1.0},
        })
        for i in range(ens.size):
            first, second = ens.history(i)
            assert second == {"H": "h2", "T": "t2"}[first]

    def test_sequential_split_product_rule(self):
        n = 30000
        ens = split_local(init_ensemble("a", n, RngSpec(12)), "u", {"a": 1 / 3, "b": 2 / 3})
        ens = split_local(ens, "v", {"x": 0.5, "y": 0.5})
        counts = history_counts(ens)
        keys = sorted(counts)
        expected = {("a", "x"): 1 / 6, ("a", "y"): 1 / 6,
                    ("b", "x"): 1 / 3, ("b", "y"): 1 / 3}
        res = stats.chisquare([counts[k] for k in keys],
                              [expected[k] * n for k in keys])
        assert res.pvalue > SIGNIFICANCE

    def test_cross_observer_independence(self):
        n = 20000
        rng = RngSpec(9)
        alice = split_local(init_ensemble("alice", n, rng), "m", {"+": 0.5, "-": 0.5})
        bob = split_local(init_ensemble("bob", n, rng), "m", {"+": 0.5, "-": 0.5})
        table = np.zeros((2, 2), dtype=int)
        np.add.at(table, (alice.assignments[0], bob.assignments[0]), 1)
        res = stats.chi2_contingency(table)
        assert res.pvalue > SIGNIFICANCE

    def test_event_reuse_rejected(self):
        ens = split_local(init_ensemble("a", 4, RngSpec(1)), "m", {"+": 0.5, "-": 0.5})
        with pytest.raises(ValueError):
            split_local(ens, "m", {"+": 0.5, "-": 0.5})

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            split_local(init_ensemble("a", 4, RngSpec(1)), "m", {"+": 0.6, "-": 0.3})

    def test_missing_conditional_history_rejected(self):
        ens = split_local(init_ensemble("a", 100, RngSpec(1)), "m", {"+": 0.5, "-": 0.5})
        with pytest.raises(KeyError):
            split_local(ens, "n", {("+",): {"x": 1.0}})


class TestSplitJoint:
    def test_anticorrelated_pairs(self):
        n = 20000
        rng = RngSpec(21)
        ens = [init_ensemble(o, n, rng, JOINTLY_CORRELATED) for o in ("alice", "bob")]
        alice, bob = split_joint(ens, "m", SINGLET_Z)
        a_out, b_out = alice.outcomes("m"), bob.outcomes("m")
        assert all(x != y for x, y in zip(a_out, b_out))
        assert abs(float(proportions(alice, "m")["+"]) - 0.5) <= band(0.5, n)

    def test_decomposition_subsystem_order_is_respected(self):
        d = decomp(("alice", "bob"), {("+", "-"): 1.0})
        rng = RngSpec(1)
        ens = [init_ensemble(o, 10, rng, JOINTLY_CORRELATED) for o in ("bob", "alice")]
        bob, alice = split_joint(ens, "m", d)
        assert set(alice.outcomes("m")) == {"+"}
        assert set(bob.outcomes("m")) == {"-"}

    def test_conditional_joint_split(self):
        rng = RngSpec(17)
        ens = [init_ensemble(o, 300, rng, JOINTLY_CORRELATED) for o in ("alice", "bob")]
        ens = split_joint(ens, "m", SINGLET_Z)
        ens = split_joint(ens, "swap", {
            (("+",), ("-",)): {("-", "+"): 1.0},
            (("-",), ("+",)): {("+", "-"): 1.0},
        })
        alice, bob = ens
        for i in range(alice.size):
            assert alice.history(i)[1] == bob.history(i)[0]
            assert bob.history(i)[1] == alice.history(i)[0]

    def test_policy_enforced(self):
        rng = RngSpec(1)
        ens = [init_ensemble("alice", 4, rng, JOINTLY_CORRELATED),
               init_ensemble("bob", 4, rng, INDEPENDENT_LOCAL)]
        with pytest.raises(ValueError, match="policy"):
            split_joint(ens, "m", SINGLET_Z)

    def test_size_and_rng_must_match(self):
        rng = RngSpec(1)
        with pytest.raises(ValueError, match="size"):
            split_joint([init_ensemble("a", 4, rng, JOINTLY_CORRELATED),
                         init_ensemble("b", 5, rng, JOINTLY_CORRELATED)], "m", SINGLET_Z)
        with pytest.raises(ValueError, match="rng"):
            split_joint([init_ensemble("alice", 4, rng, JOINTLY_CORRELATED),
                         init_ensemble("bob", 4, RngSpec(2), JOINTLY_CORRELATED)],
                        "m", SINGLET_Z)

    def test_joint_distribution_marginal(self):
        assert marginal_for(SINGLET_Z, "alice") == {"+": 0.5, "-": 0.5}


class TestExchange:
    def test_swap_preserves_proportions(self):
        ens = split_local(init_ensemble("a", 1000, RngSpec(5)), "m", {"+": 0.3, "-": 0.7})
        perm = np.arange(1000)[::-1]
        swapped = exchange_minds(ens, perm)
        assert proportions(swapped, "m") == proportions(ens, "m")
        assert swapped.history(0) == ens.history(999)

    def test_invalid_permutation(self):
        ens = init_ensemble("a", 3, RngSpec(1))
        ens = split_local(ens, "m", {"+": 0.5, "-": 0.5})
        with pytest.raises(ValueError):
            exchange_minds(ens, np.array([0, 0, 2]))


class TestMismatch:
    def test_single_mind_rate_is_half_for_singlet(self):
        n = 20000
        rate = mismatch_probability(SINGLE_MIND, SINGLET_Z, n, RngSpec(31))
        assert abs(rate - 0.5) <= band(0.5, n)

    def test_joint_policy_never_mismatches(self):
        rate = mismatch_probability(JOINTLY_CORRELATED, SINGLET_Z, 5000, RngSpec(32))
        assert rate == 0.0

    def test_multi_mind_independent_rejected(self):
        with pytest.raises(ValueError, match="single-mind"):
            mismatch_probability(INDEPENDENT_LOCAL, SINGLET_Z, 100, RngSpec(1))

    def test_needs_two_observers(self):
        three = decomp(("a", "b", "c"), {("+", "+", "+"): 1.0})
        with pytest.raises(ValueError):
            mismatch_probability(SINGLE_MIND, three, 10, RngSpec(1))


POST_COMM = decomp(
    ("alice", "bob", "alice_report", "bob_report"),
    {("+", "-", "-", "+"): 0.5, ("-", "+", "+", "-"): 0.5},
)


class TestReportCorrelation:
    def _ensembles(self, n, seed):
        rng = RngSpec(seed)
        ens = [init_ensemble(o, n, rng, JOINTLY_CORRELATED) for o in ("alice", "bob")]
        ens = split_joint(ens, "measure", SINGLET_Z)
        return split_joint(ens, "report", {
            (("+",), ("-",)): {("-", "+"): 1.0},
            (("-",), ("+",)): {("+", "-"): 1.0},
        })

    def test_all_minds_consistent(self):
        checks = report_correlation(self._ensembles(500, 41), POST_COMM,
                                    "measure", "report")
        assert [c.observer for c in checks] == ["alice", "bob"]
        for c in checks:
            assert c.all_consistent
            assert c.consistent == 500
        assert checks[0].expected == {"+": "-", "-": "+"}

    def test_corrupted_history_detected(self):
        alice, bob = self._ensembles(10, 42)
        cols = list(alice.assignments)
        bad = cols[1].copy()
        bad[0] = 1 - bad[0]
        from dataclasses import replace
        alice_bad = replace(alice, assignments=tuple(cols[:1]) + (bad,))
        checks = report_correlation([alice_bad, bob], POST_COMM, "measure", "report")
        assert not checks[0].all_consistent
        assert checks[0].consistent == 9

    def test_nondeterministic_report_rejected(self):
        fuzzy = decomp(("alice", "alice_report"),
                       {("+", "+"): 0.25, ("+", "-"): 0.25, ("-", "+"): 0.5})
        rng = RngSpec(1)
        ens = [init_ensemble("alice", 8, rng, JOINTLY_CORRELATED)]
        ens = split_joint(ens, "measure", {("+",): 0.5, ("-",): 0.5})
        ens = split_joint(ens, "report", {("+",): 0.5, ("-",): 0.5})
        with pytest.raises(ValueError, match="not determined"):
            report_correlation(ens, fuzzy, "measure", "report")

    def test_missing_report_event(self):
        rng = RngSpec(1)
        ens = [init_ensemble("alice", 4, rng, JOINTLY_CORRELATED)]
        ens = split_joint(ens, "measure", {("+",): 0.5, ("-",): 0.5})
        with pytest.raises(ValueError, match="missing"):
            report_correlation(ens, POST_COMM, "measure", "report")


class TestExport:
    def test_json_round_trip_fields(self):
        ens = split_local(init_ensemble("a", 3, RngSpec(7)), "m", {"+": 0.5, "-": 0.5})
        blob = ensembles_to_json([ens])
        assert blob["rng"] == {"master_seed": 7, "threads": 1}
        assert blob["ensembles"][0]["size"] == 3
        assert len(blob["ensembles"][0]["minds"]) == 3
        assert blob["ensembles"][0]["minds"][0]["id"] == "a:0"
        json.dumps(blob)

    def test_csv_layout(self, tmp_path):
        ens = split_local(init_ensemble("a", 2, RngSpec(7)), "m", {"+": 0.5, "-": 0.5})
        path = tmp_path / "hist.csv"
        write_history_csv(path, [ens])
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("# rng")
        assert lines[1] == "mind_id,event_id,outcome"
        assert len(lines) == 4
        assert lines[2].startswith("a:0,m,")
