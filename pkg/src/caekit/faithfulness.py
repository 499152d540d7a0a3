"""Rationale faithfulness for black-box entailment scorers.

Given a per-token importance ranking over the hypothesis, comprehensiveness
measures the confidence drop when the top-ranked tokens are deleted and
sufficiency the drop when only they are kept; both are evaluated at rationale
sizes of 10% .. 100% and averaged into an AOPC score. The reference class is
always the argmax class of the unperturbed prediction.

Inputs are canonicalized (whitespace-tokenized and re-joined with single
spaces) before the first model call, so keeping 100% of the tokens reproduces
the original input byte-for-byte and sufficiency at q=1 is exactly zero for
any deterministic scorer. Perturbation deletes tokens rather than masking
them; neighbours are joined by one space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pairs import NliInstance, render_input
from .scorers import Scorer, ScorerHandle, as_scorer

DEFAULT_BINS = tuple(round(0.1 * k, 1) for k in range(1, 11))


class EmptyTokens(ValueError):
    """The hypothesis has no tokens to rank or perturb."""


class MissingRanking(KeyError):
    """No attribution ranking was supplied for an instance."""


class RankingMismatch(ValueError):
    """Ranking tokens do not reproduce the scorer-side tokenization."""


@dataclass(frozen=True)
class AttributionRanking:
    instance_id: str
    tokens: tuple[str, ...]
    scores: tuple[float, ...]
    method: str

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.scores):
            raise ValueError(
                f"{len(self.scores)} scores for {len(self.tokens)} tokens"
            )

    def top_indices(self, q: float) -> list[int]:
        """Indices of the top ceil(q * n) tokens, best first; ties keep the
        earlier position."""
        if not 0.0 < q <= 1.0:
            raise ValueError("q must be in (0, 1]")
        k = math.ceil(q * len(self.tokens))
        order = sorted(range(len(self.tokens)), key=lambda i: (-self.scores[i], i))
        return order[:k]


@dataclass
class FaithfulnessRecord:
    instance_id: str
    method: str
    aopc_compr: float
    aopc_suff: float
    predicted: str
    gold: str

    @property
    def correct(self) -> bool:
        return self.predicted == self.gold

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "method": self.method,
            "aopc_compr": self.aopc_compr,
            "aopc_suff": self.aopc_suff,
            "predicted": self.predicted,
            "gold": self.gold,
            "correct": self.correct,
        }


def _canonical(scorer: Scorer, premise: str, hypothesis: str) -> tuple[str, list[str]]:
    tokens = scorer.tokenize(hypothesis)
    premise_tokens = scorer.tokenize(premise)
    return " ".join(premise_tokens), tokens


def _check_ranking(ranking: AttributionRanking, tokens: list[str]) -> None:
    if list(ranking.tokens) != tokens:
        raise RankingMismatch(
            f"ranking tokens {list(ranking.tokens)!r} do not match scorer tokens {tokens!r}"
        )


def _drop(tokens: list[str], indices: set[int], mask_token: str | None) -> str:
    """Remove the indexed tokens; with ``mask_token`` set, substitute instead
    of deleting (for scorers trained with a mask vocabulary item)."""
    if mask_token is None:
        return " ".join(t for i, t in enumerate(tokens) if i not in indices)
    return " ".join(mask_token if i in indices else t for i, t in enumerate(tokens))


def comprehensiveness(
    scorer: Scorer | ScorerHandle,
    premise: str,
    hypothesis: str,
    ranking: AttributionRanking,
    q: float,
    mask_token: str | None = None,
) -> float:
    """Confidence drop in the predicted class after deleting the top-q tokens."""
    scorer = as_scorer(scorer)
    premise_c, tokens = _canonical(scorer, premise, hypothesis)
    if not tokens:
        raise EmptyTokens("hypothesis has no tokens")
    _check_ranking(ranking, tokens)
    remove = set(ranking.top_indices(q))
    full, perturbed = scorer.score_batch(
        [(premise_c, " ".join(tokens)), (premise_c, _drop(tokens, remove, mask_token))]
    )
    label = full.predicted_label
    return full.prob(label) - perturbed.prob(label)


def sufficiency(
    scorer: Scorer | ScorerHandle,
    premise: str,
    hypothesis: str,
    ranking: AttributionRanking,
    q: float,
    mask_token: str | None = None,
) -> float:
    """Confidence drop when only the top-q tokens are retained (in their
    original order)."""
    scorer = as_scorer(scorer)
    premise_c, tokens = _canonical(scorer, premise, hypothesis)
    if not tokens:
        raise EmptyTokens("hypothesis has no tokens")
    _check_ranking(ranking, tokens)
    keep = set(ranking.top_indices(q))
    drop = set(range(len(tokens))) - keep
    full, perturbed = scorer.score_batch(
        [(premise_c, " ".join(tokens)), (premise_c, _drop(tokens, drop, mask_token))]
    )
    label = full.predicted_label
    return full.prob(label) - perturbed.prob(label)


_METRICS = {"compr": comprehensiveness, "suff": sufficiency}


def aopc(
    scorer: Scorer | ScorerHandle,
    premise: str,
    hypothesis: str,
    ranking: AttributionRanking,
    metric: str,
    bins: tuple[float, ...] = DEFAULT_BINS,
    mask_token: str | None = None,
) -> float:
    """Mean of a faithfulness metric over the rationale-size bins."""
    fn = _METRICS.get(metric)
    if fn is None:
        raise ValueError(f"metric must be one of {sorted(_METRICS)}, got {metric!r}")
    scorer = as_scorer(scorer)
    values = [fn(scorer, premise, hypothesis, ranking, q, mask_token) for q in bins]
    return sum(values) / len(values)


def occlusion_attribution(
    scorer: Scorer | ScorerHandle,
    premise: str,
    hypothesis: str,
    instance_id: str = "",
) -> AttributionRanking:
    """Leave-one-out importance: the score of token i is the predicted-class
    confidence drop when token i alone is deleted."""
    scorer = as_scorer(scorer)
    premise_c, tokens = _canonical(scorer, premise, hypothesis)
    if not tokens:
        raise EmptyTokens("hypothesis has no tokens")
    inputs = [(premise_c, " ".join(tokens))]
    for i in range(len(tokens)):
        inputs.append((premise_c, " ".join(t for k, t in enumerate(tokens) if k != i)))
    dists = scorer.score_batch(inputs)
    label = dists[0].predicted_label
    base = dists[0].prob(label)
    scores = tuple(base - d.prob(label) for d in dists[1:])
    return AttributionRanking(
        instance_id=instance_id, tokens=tuple(tokens), scores=scores, method="occlusion"
    )


@dataclass
class Aggregate:
    count: int
    mean: float | None
    sd: float | None


def _aggregate(values: list[float]) -> Aggregate:
    if not values:
        return Aggregate(0, None, None)
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else None
    return Aggregate(len(values), mean, sd)


def evaluate_corpus(
    scorer: Scorer | ScorerHandle,
    instances: list[NliInstance],
    rankings: dict[str, AttributionRanking],
    bins: tuple[float, ...] = DEFAULT_BINS,
    separator: str = "\n",
    mask_token: str | None = None,
) -> tuple[list[FaithfulnessRecord], dict]:
    """Per-instance AOPC records plus aggregates split by prediction
    correctness. Raises :class:`MissingRanking` if an instance has no
    ranking."""
    scorer = as_scorer(scorer)
    records: list[FaithfulnessRecord] = []
    for inst in instances:
        ranking = rankings.get(inst.instance_id)
        if ranking is None:
            raise MissingRanking(inst.instance_id)
        premise, hypothesis = render_input(inst, separator)
        predicted = scorer.score(premise, hypothesis).predicted_label
        records.append(
            FaithfulnessRecord(
                instance_id=inst.instance_id,
                method=ranking.method,
                aopc_compr=aopc(scorer, premise, hypothesis, ranking, "compr", bins, mask_token),
                aopc_suff=aopc(scorer, premise, hypothesis, ranking, "suff", bins, mask_token),
                predicted=predicted,
                gold=inst.label,
            )
        )
    return records, aggregate_records(records)


def aggregate_records(records: list[FaithfulnessRecord]) -> dict:
    """mean/sd per method for overall, correct and incorrect subsets."""
    out: dict = {}
    for method in sorted({r.method for r in records}):
        rows = [r for r in records if r.method == method]
        subsets = {
            "overall": rows,
            "correct": [r for r in rows if r.correct],
            "incorrect": [r for r in rows if not r.correct],
        }
        out[method] = {
            name: {
                "compr": _aggregate([r.aopc_compr for r in subset]),
                "suff": _aggregate([r.aopc_suff for r in subset]),
            }
            for name, subset in subsets.items()
        }
    return out


def aggregates_to_dict(aggregates: dict) -> dict:
    return {
        method: {
            subset: {metric: vars(agg) for metric, agg in metrics.items()}
            for subset, metrics in subsets.items()
        }
        for method, subsets in aggregates.items()
    }


def format_mean_sd(agg: Aggregate) -> str:
    """Compact ``.414(.25)`` rendering; empty subsets render as ``-``."""
    if agg.count == 0 or agg.mean is None:
        return "-"
    mean = f"{agg.mean:.3f}".replace("0.", ".", 1) if abs(agg.mean) < 1 else f"{agg.mean:.3f}"
    if agg.sd is None:
        return mean
    sd = f"{agg.sd:.2f}".replace("0.", ".", 1) if agg.sd < 1 else f"{agg.sd:.2f}"
    return f"{mean}({sd})"


def aggregate_to_csv(aggregates: dict, scorer_name: str) -> str:
    lines = [
        "scorer,method,n_overall,n_correct,n_incorrect,"
        "compr_overall,compr_correct,compr_incorrect,"
        "suff_overall,suff_correct,suff_incorrect"
    ]
    for method, subsets in aggregates.items():
        cells = [
            scorer_name,
            method,
            str(subsets["overall"]["compr"].count),
            str(subsets["correct"]["compr"].count),
            str(subsets["incorrect"]["compr"].count),
        ]
        for metric in ("compr", "suff"):
            for subset in ("overall", "correct", "incorrect"):
                cells.append(format_mean_sd(subsets[subset][metric]))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def permutation_test(
    group_a: list[float],
    group_b: list[float],
    n_perm: int = 10_000,
    seed: int = 0,
) -> float:
    """Two-sided unpaired permutation test for the difference of means.

    Uses the add-one estimator, so the p-value lies in
    [1 / (n_perm + 1), 1] and is never exactly zero.
    """
    if not group_a or not group_b:
        raise ValueError("both groups must be nonempty")
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    observed = abs(a.mean() - b.mean())
    pool = np.concatenate([a, b])
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_perm):
        perm = rng.permutation(pool)
        diff = abs(perm[: len(a)].mean() - perm[len(a) :].mean())
        if diff >= observed - 1e-12:
            hits += 1
    return (hits + 1) / (n_perm + 1)


def load_rankings_jsonl(path: str | Path) -> dict[str, AttributionRanking]:
    """Ingest externally computed attributions: one JSON object per line with
    ``instance_id``, ``method``, ``tokens`` and ``scores``."""
    out: dict[str, AttributionRanking] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                ranking = AttributionRanking(
                    instance_id=doc["instance_id"],
                    tokens=tuple(doc["tokens"]),
                    scores=tuple(float(s) for s in doc["scores"]),
                    method=doc.get("method", "external"),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from exc
            out[ranking.instance_id] = ranking
    return out


def dump_rankings_jsonl(rankings: list[AttributionRanking], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rankings:
            fh.write(
                json.dumps(
                    {
                        "instance_id": r.instance_id,
                        "method": r.method,
                        "tokens": list(r.tokens),
                        "scores": list(r.scores),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def dump_records_jsonl(records: list[FaithfulnessRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")
