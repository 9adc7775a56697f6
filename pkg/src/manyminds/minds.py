"""Persistent-identity mind ensembles with Born-weighted stochastic splitting.

An ensemble is a finite set of labeled minds attached to one observer. At
each measurement event every mind is assigned an outcome by genuinely
stochastic sampling; the set of mind ids never changes, only their branch
histories grow. Two sampling policies are supported:

* independent-local: each observer's minds sample from the observer's own
  (reduced-state) outcome distribution, with no coordination across
  observers;
* jointly-correlated: mind i of every observer receives one shared sample
  from the joint branch distribution, so mind-tuples track whole branches.

All draws are counter-based per (mind, event): the uniform consumed by mind
``i`` at event ``e`` is a pure function of the master seed, the observer/event
scope, and ``i``. Histories are therefore bit-identical across re-runs,
evaluation orders, and worker-thread counts.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Mapping, NamedTuple

import numpy as np

from .quantum import ATOL, BranchDecomposition
from .rng import RngSpec, sample_indices

__all__ = [
    "PolicyKind",
    "SamplingPolicy",
    "INDEPENDENT_LOCAL",
    "JOINTLY_CORRELATED",
    "SINGLE_MIND",
    "MindId",
    "MindEnsemble",
    "ReportCheck",
    "init_ensemble",
    "split_local",
    "split_joint",
    "proportions",
    "history_counts",
    "exchange_minds",
    "mismatch_probability",
    "report_correlation",
    "ensembles_to_json",
    "write_history_csv",
]


class PolicyKind(Enum):
    INDEPENDENT_LOCAL = "independent"
    JOINTLY_CORRELATED = "joint"


@dataclass(frozen=True)
class SamplingPolicy:
    kind: PolicyKind
    single_mind: bool = False

    @property
    def name(self) -> str:
        return self.kind.value + ("/single-mind" if self.single_mind else "")


INDEPENDENT_LOCAL = SamplingPolicy(PolicyKind.INDEPENDENT_LOCAL)
JOINTLY_CORRELATED = SamplingPolicy(PolicyKind.JOINTLY_CORRELATED)
SINGLE_MIND = SamplingPolicy(PolicyKind.INDEPENDENT_LOCAL, single_mind=True)


class MindId(NamedTuple):
    observer: str
    index: int

    def __str__(self) -> str:
        return f"{self.observer}:{self.index}"


@dataclass(frozen=True)
class MindEnsemble:
    """Fixed set of minds for one observer plus their branch histories.

    ``assignments[k][i]`` is mind i's outcome index at event k, indexing into
    ``outcome_labels[k]``. The mind population is fixed at construction; every
    split returns a new ensemble with one more event column.
    """

    observer: str
    size: int
    rng: RngSpec
    policy: SamplingPolicy = INDEPENDENT_LOCAL
    events: tuple[str, ...] = ()
    outcome_labels: tuple[tuple[str, ...], ...] = ()
    assignments: tuple[np.ndarray, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"ensemble size must be >= 1, got {self.size}")
        if not (len(self.events) == len(self.outcome_labels) == len(self.assignments)):
            raise ValueError("events, outcome_labels and assignments must align")
        frozen = []
        for arr in self.assignments:
            arr = np.asarray(arr, dtype=np.int16)
            if arr.shape != (self.size,):
                raise ValueError("each assignment column must have one entry per mind")
            arr = arr.copy()
            arr.flags.writeable = False
            frozen.append(arr)
        object.__setattr__(self, "assignments", tuple(frozen))

    @property
    def mind_ids(self) -> tuple[MindId, ...]:
        return tuple(MindId(self.observer, i) for i in range(self.size))

    def event_index(self, event_id: str) -> int:
        try:
            return self.events.index(event_id)
        except ValueError:
            raise KeyError(f"unknown event {event_id!r} for observer {self.observer!r}") from None

    def outcomes(self, event_id: str) -> np.ndarray:
        """Outcome labels of all minds at one event, as a string array."""
        k = self.event_index(event_id)
        return np.asarray(self.outcome_labels[k], dtype=object)[self.assignments[k]]

    def history(self, index: int) -> tuple[str, ...]:
        return tuple(self.outcome_labels[k][self.assignments[k][index]]
                     for k in range(len(self.events)))


def init_ensemble(observer: str, n: int, rng: RngSpec,
                  policy: SamplingPolicy = INDEPENDENT_LOCAL) -> MindEnsemble:
    """Fresh ensemble with empty histories; single-mind policies force n to 1."""
    if n < 1:
        raise ValueError(f"ensemble size must be >= 1, got {n}")
    if policy.single_mind:
        n = 1
    return MindEnsemble(observer, n, rng, policy)


# ---------------------------------------------------------------------------
# Distribution plumbing


def _check_distribution(dist: Mapping, context: str) -> None:
    total = sum(dist.values())
    if abs(total - 1.0) > ATOL:
        raise ValueError(f"{context}: probability mass is {total}, expected 1")
    if any(p < 0 for p in dist.values()):
        raise ValueError(f"{context}: negative probability")


def _split_form(probs: Mapping):
    """Classify a distribution argument as unconditional or history-keyed."""
    keys = list(probs.keys())
    if not keys:
        raise ValueError("empty distribution")
    if all(isinstance(k, tuple) for k in keys):
        return "conditional"
    if any(isinstance(k, tuple) for k in keys):
        raise ValueError("mixed unconditional and conditional keys")
    return "unconditional"


def _history_classes(ensembles: list[MindEnsemble]) -> tuple[np.ndarray, list[tuple]]:
    """Per-mind class codes and, per class code, the history key it stands for.

    For a single ensemble the key is that observer's history tuple; for
    several, a tuple of per-observer history tuples (paired by mind index).
    """
    n = ensembles[0].size
    columns = [ens.assignments[k] for ens in ensembles for k in range(len(ens.events))]
    if not columns:
        return np.zeros(n, dtype=np.int64), [_class_key(ensembles, [])]
    radix = [len(ens.outcome_labels[k]) for ens in ensembles for k in range(len(ens.events))]
    codes = np.ravel_multi_index([np.asarray(c) for c in columns], dims=radix)
    uniq, inverse = np.unique(codes, return_inverse=True)
    keys = []
    for code in uniq:
        digits = np.unravel_index(code, radix)
        keys.append(_class_key(ensembles, [int(d) for d in digits]))
    return inverse, keys


def _class_key(ensembles: list[MindEnsemble], digits: list[int]) -> tuple:
    per_obs = []
    pos = 0
    for ens in ensembles:
        hist = []
        for k in range(len(ens.events)):
            hist.append(ens.outcome_labels[k][digits[pos]])
            pos += 1
        per_obs.append(tuple(hist))
    if len(ensembles) == 1:
        return per_obs[0]
    return tuple(per_obs)


def _sample_by_class(u: np.ndarray, class_of_mind: np.ndarray, class_keys: list[tuple],
                     table: Mapping, outcomes: list, context: str) -> np.ndarray:
    """Sample an outcome index per mind from its history class's distribution."""
    outcome_pos = {o: i for i, o in enumerate(outcomes)}
    chosen = np.zeros(len(u), dtype=np.int64)
    for cls, key in enumerate(class_keys):
        mask = class_of_mind == cls
        if not mask.any():
            continue
        if key not in table:
            raise KeyError(f"{context}: no distribution for realized history {key!r}")
        dist = table[key]
        _check_distribution(dist, f"{context} given {key!r}")
        local = sorted(dist.keys())
        idx = sample_indices(u[mask], [dist[o] for o in local])
        chosen[mask] = np.asarray([outcome_pos[o] for o in local])[idx]
    return chosen


# ---------------------------------------------------------------------------
# Splitting


def split_local(ensemble: MindEnsemble, event_id: str, probs: Mapping) -> MindEnsemble:
    """Extend every mind's history by one independently sampled outcome.

    ``probs`` is either one distribution over outcome labels (applied to all
    minds) or a mapping from full history tuples to such distributions, for
    sequential measurements where a mind's next outcome is conditioned on the
    branch it already occupies.
    """
    if event_id in ensemble.events:
        raise ValueError(f"event {event_id!r} already recorded for {ensemble.observer!r}")
    u = ensemble.rng.uniforms(ensemble.size, "local", ensemble.observer, event_id)

    if _split_form(probs) == "unconditional":
        _check_distribution(probs, f"split_local({event_id!r})")
        labels = tuple(sorted(probs.keys()))
        chosen = sample_indices(u, [probs[o] for o in labels])
    else:
        labels = tuple(sorted({o for dist in probs.values() for o in dist}))
        class_of_mind, class_keys = _history_classes([ensemble])
        chosen = _sample_by_class(u, class_of_mind, class_keys, probs, list(labels),
                                  f"split_local({event_id!r})")

    return replace(
        ensemble,
        events=ensemble.events + (event_id,),
        outcome_labels=ensemble.outcome_labels + (labels,),
        assignments=ensemble.assignments + (chosen.astype(np.int16),),
    )


def _joint_table(dist, n_observers: int) -> Mapping:
    if isinstance(dist, BranchDecomposition):
        dist = dist.joint_distribution()
    if _split_form(dist) != "conditional":
        raise ValueError("joint distribution keys must be outcome tuples")
    sample = next(iter(dist))
    if all(isinstance(el, tuple) for el in sample):
        return dist  # history-conditional: {per-observer histories: {outcome tuple: p}}
    if len(sample) != n_observers:
        raise ValueError(f"outcome tuples have {len(sample)} entries for {n_observers} observers")
    return {(): dist}  # normalize to the conditional form with a vacuous key


def split_joint(ensembles: list[MindEnsemble], event_id: str, dist) -> list[MindEnsemble]:
    """Extend all observers' histories with one shared joint sample per index.

    Mind i of every observer receives the i-th joint draw, so the i-th
    mind-tuple follows a single branch of the joint distribution. ``dist`` is
    a BranchDecomposition (subsystem names must match the observers), a
    mapping from outcome tuples to weights, or a mapping from per-observer
    history tuples to such mappings.
    """
    if not ensembles:
        raise ValueError("split_joint needs at least one ensemble")
    n = ensembles[0].size
    rng = ensembles[0].rng
    for ens in ensembles:
        if ens.policy.kind is not PolicyKind.JOINTLY_CORRELATED:
            raise ValueError(f"policy mismatch: {ens.observer!r} is {ens.policy.name}, "
                             "split_joint requires jointly-correlated ensembles")
        if ens.size != n:
            raise ValueError(f"size mismatch: {ens.observer!r} has {ens.size} minds, expected {n}")
        if ens.rng != rng:
            raise ValueError(f"rng mismatch: {ens.observer!r} uses a different stream spec")
        if event_id in ens.events:
            raise ValueError(f"event {event_id!r} already recorded for {ens.observer!r}")

    order = [ens.observer for ens in ensembles]
    if isinstance(dist, BranchDecomposition):
        if set(dist.subsystems) != set(order):
            raise ValueError(f"decomposition covers {dist.subsystems}, observers are {order}")
        perm = [dist.subsystems.index(obs) for obs in order]
        dist = {tuple(k[p] for p in perm): w for k, w in dist.joint_distribution().items()}
    table = _joint_table(dist, len(ensembles))

    all_tuples = sorted({t for row in table.values() for t in row})
    u = rng.uniforms(n, "joint", event_id)
    conditional = any(key != () for key in table)
    if conditional:
        class_of_mind, class_keys = _history_classes(ensembles)
    else:
        class_of_mind, class_keys = np.zeros(n, dtype=np.int64), [()]
    chosen = _sample_by_class(u, class_of_mind, class_keys, table, all_tuples,
                              f"split_joint({event_id!r})")

    out = []
    for pos, ens in enumerate(ensembles):
        labels = tuple(sorted({t[pos] for t in all_tuples}))
        label_pos = {o: i for i, o in enumerate(labels)}
        lookup = np.asarray([label_pos[t[pos]] for t in all_tuples])
        out.append(replace(
            ens,
            events=ens.events + (event_id,),
            outcome_labels=ens.outcome_labels + (labels,),
            assignments=ens.assignments + (lookup[chosen].astype(np.int16),),
        ))
    return out


# ---------------------------------------------------------------------------
# Inspection


def proportions(ensemble: MindEnsemble, event_id: str) -> dict[str, Fraction]:
    """Exact empirical outcome fractions at one event; they sum to 1 exactly."""
    k = ensemble.event_index(event_id)
    counts = np.bincount(ensemble.assignments[k], minlength=len(ensemble.outcome_labels[k]))
    return {label: Fraction(int(c), ensemble.size)
            for label, c in zip(ensemble.outcome_labels[k], counts)}


def history_counts(ensemble: MindEnsemble) -> dict[tuple[str, ...], int]:
    """How many minds followed each full branch history."""
    class_of_mind, class_keys = _history_classes([ensemble])
    counts = np.bincount(class_of_mind, minlength=len(class_keys))
    return {key: int(c) for key, c in zip(class_keys, counts)}


def exchange_minds(ensemble: MindEnsemble, permutation: np.ndarray) -> MindEnsemble:
    """Reassign histories among minds; physics-side data cannot notice this."""
    perm = np.asarray(permutation)
    if sorted(perm.tolist()) != list(range(ensemble.size)):
        raise ValueError("permutation must rearrange exactly the mind indices")
    return replace(ensemble,
                   assignments=tuple(arr[perm] for arr in ensemble.assignments))


# ---------------------------------------------------------------------------
# Mindless-hulk mismatch and report consistency


def mismatch_probability(policy: SamplingPolicy, decomp: BranchDecomposition,
                         trials: int, rng: RngSpec, event_id: str = "mismatch") -> float:
    """Fraction of trials whose two minds occupy outcomes from different branches.

    Under the single-mind independent-local policy each observer's lone mind
    samples from its local marginal, so the pair can land on an outcome
    combination that belongs to no branch of the joint state: a brain then
    exhibits a record that no mind of the other observer is tracking. Under
    the jointly-correlated policy the pair is one joint draw and the mismatch
    count is zero by construction (still counted, not assumed).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if len(decomp.subsystems) != 2:
        raise ValueError("mismatch probability is defined for two observers")
    obs_a, obs_b = decomp.subsystems
    support = set(decomp.joint_distribution().keys())

    if policy.kind is PolicyKind.JOINTLY_CORRELATED:
        joint = decomp.joint_distribution()
        tuples = sorted(joint.keys())
        idx = sample_indices(rng.uniforms(trials, "joint", event_id),
                             [joint[t] for t in tuples])
        pairs = [tuples[i] for i in idx]
        return sum(1 for p in pairs if p not in support) / trials

    if not policy.single_mind:
        raise ValueError("independent-local mismatch trials require the single-mind policy "
                         "(one mind per observer per trial)")
    dist_a = marginal_for(decomp, obs_a)
    dist_b = marginal_for(decomp, obs_b)
    labels_a = sorted(dist_a.keys())
    labels_b = sorted(dist_b.keys())
    ia = sample_indices(rng.uniforms(trials, "local", obs_a, event_id),
                        [dist_a[o] for o in labels_a])
    ib = sample_indices(rng.uniforms(trials, "local", obs_b, event_id),
                        [dist_b[o] for o in labels_b])
    support_idx = {(labels_a.index(a), labels_b.index(b)) for a, b in support}
    mism = sum(1 for pair in zip(ia.tolist(), ib.tolist()) if pair not in support_idx)
    return mism / trials


def marginal_for(decomp: BranchDecomposition, observer: str) -> dict[str, float]:
    """Single-observer outcome distribution from a joint decomposition."""
    pos = decomp.subsystems.index(observer)
    out: dict[str, float] = {}
    for br in decomp.branches:
        out[br.labels[pos]] = out.get(br.labels[pos], 0.0) + br.weight
    return out


@dataclass(frozen=True)
class ReportCheck:
    """Per-observer verdict: does every mind perceive the report its own
    outcome predicts with certainty?"""

    observer: str
    size: int
    consistent: int
    expected: dict[str, str]
    observed: dict[str, dict[str, int]]

    @property
    def all_consistent(self) -> bool:
        return self.consistent == self.size


def report_correlation(ensembles: list[MindEnsemble], decomp: BranchDecomposition,
                       measure_event: str, report_event: str,
                       report_subsystem: Mapping[str, str] | None = None,
                       ) -> list[ReportCheck]:
    """Check minds-to-reports consistency after a communication step.

    For each observer, the post-communication decomposition must pair the
    observer's own outcome with a unique perceived report of the other wing;
    every mind is then required to carry exactly that report in its history.
    """
    checks = []
    for ens in ensembles:
        if report_event not in ens.events:
            raise ValueError(f"communication step missing: {ens.observer!r} has no "
                             f"{report_event!r} event")
        report_name = (report_subsystem or {}).get(ens.observer, f"{ens.observer}_report")
        cond = _deterministic_report_map(decomp, ens.observer, report_name)
        own = ens.outcomes(measure_event)
        seen = ens.outcomes(report_event)
        consistent = int(np.sum(np.asarray([cond[o] for o in own.tolist()], dtype=object) == seen))
        observed: dict[str, dict[str, int]] = {}
        for o, s in zip(own.tolist(), seen.tolist()):
            row = observed.setdefault(o, {})
            row[s] = row.get(s, 0) + 1
        checks.append(ReportCheck(ens.observer, ens.size, consistent, cond, observed))
    return checks


def _deterministic_report_map(decomp: BranchDecomposition, own: str, report: str,
                              ) -> dict[str, str]:
    from .quantum import conditional_distribution

    cond = conditional_distribution(decomp, [own], [report])
    out = {}
    for (outcome,), dist in cond.items():
        if len(dist) != 1:
            raise ValueError(f"report for {own!r}={outcome!r} is not determined by the state")
        out[outcome] = next(iter(dist))[0]
    return out


# ---------------------------------------------------------------------------
# Export


def ensembles_to_json(ensembles: list[MindEnsemble]) -> dict:
    rng = ensembles[0].rng if ensembles else None
    return {
        "rng": rng.to_dict() if rng else None,
        "ensembles": [
            {
                "observer": ens.observer,
                "size": ens.size,
                "policy": ens.policy.name,
                "events": list(ens.events),
                "minds": [
                    {"id": str(MindId(ens.observer, i)), "history": list(ens.history(i))}
                    for i in range(ens.size)
                ],
            }
            for ens in ensembles
        ],
    }


def write_history_csv(path, ensembles: list[MindEnsemble]) -> None:
    """CSV of (mind_id, event_id, outcome) rows, headed by the stream spec."""
    with open(path, "w", newline="") as fh:
        if ensembles:
            fh.write(f"# rng {json.dumps(ensembles[0].rng.to_dict(), sort_keys=True)}\n")
        writer = csv.writer(fh)
        writer.writerow(["mind_id", "event_id", "outcome"])
        for ens in ensembles:
            for k, event in enumerate(ens.events):
                labels = ens.outcome_labels[k]
                for i, a in enumerate(ens.assignments[k].tolist()):
                    writer.writerow([str(MindId(ens.observer, i)), event, labels[a]])
