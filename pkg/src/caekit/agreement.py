"""Agreement between assurance cases: per-type count differences and GED.

Two comparison scopes mirror annotator-agreement practice: *intra* pairs the
repeated runs of one model on one requirement, *inter* pairs runs of
different models on the same requirement. Aggregation is the unweighted mean
over unordered pairs within a group, then (for the corpus summary and the
model-by-model matrix) the unweighted mean over requirements.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from itertools import combinations

from .cae import AssuranceCase, NodeType, count_by_type
from .ged import DEFAULT_BUDGET, GedCostModel, ged_approx, ged_exact

FlatDiff = dict[NodeType, int]

SCOPES = ("intra", "inter")


class EmptyGroup(ValueError):
    """A comparison group cannot form a single case pair."""


@dataclass
class AgreementReport:
    scope: str
    model_a: str
    model_b: str
    requirement_id: str
    pair_count: int
    flat_mean: dict[NodeType, float]
    ged_mean: float


def flat_diff(a: AssuranceCase, b: AssuranceCase) -> FlatDiff:
    """Absolute per-type node-count difference; symmetric in its arguments."""
    ca, cb = count_by_type(a), count_by_type(b)
    return {t: abs(ca[t] - cb[t]) for t in NodeType}


def _pair_ged(a: AssuranceCase, b: AssuranceCase, costs: GedCostModel, budget: int) -> float:
    result = ged_exact(a, b, costs, budget=budget)
    if not result.exact:
        result = ged_approx(a, b, costs)
    return result.distance


def _case_sort_key(case: AssuranceCase) -> tuple[str, str, int]:
    return (case.source_model, case.requirement_id, case.run_index)


def _grouped(cases: list[AssuranceCase]) -> dict[str, dict[str, list[AssuranceCase]]]:
    """requirement -> model -> runs, all in deterministic order."""
    by_req: dict[str, dict[str, list[AssuranceCase]]] = {}
    for case in sorted(cases, key=_case_sort_key):
        by_req.setdefault(case.requirement_id, {}).setdefault(case.source_model, []).append(case)
    return by_req


def _mean_report(
    scope: str,
    model_a: str,
    model_b: str,
    requirement_id: str,
    pairs: list[tuple[AssuranceCase, AssuranceCase]],
    costs: GedCostModel,
    budget: int,
) -> AgreementReport:
    flat_sum = {t: 0.0 for t in NodeType}
    ged_sum = 0.0
    for a, b in pairs:
        d = flat_diff(a, b)
        for t in NodeType:
            flat_sum[t] += d[t]
        ged_sum += _pair_ged(a, b, costs, budget)
    n = len(pairs)
    return AgreementReport(
        scope=scope,
        model_a=model_a,
        model_b=model_b,
        requirement_id=requirement_id,
        pair_count=n,
        flat_mean={t: flat_sum[t] / n for t in NodeType},
        ged_mean=ged_sum / n,
    )


def aggregate_agreement(
    cases: list[AssuranceCase],
    scope: str,
    costs: GedCostModel | None = None,
    budget: int = DEFAULT_BUDGET,
) -> list[AgreementReport]:
    """One report per comparison group.

    intra: group = (model, requirement), pairs = unordered run pairs.
    inter: group = (model pair, requirement), pairs = run cross product.
    Raises :class:`EmptyGroup` when a group present in the input cannot form
    any pair (a lone run, or a requirement covered by a single model).
    """
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")
    costs = costs or GedCostModel()
    reports: list[AgreementReport] = []
    for req, by_model in _grouped(cases).items():
        models = sorted(by_model)
        if scope == "intra":
            for model in models:
                runs = by_model[model]
                if len(runs) < 2:
                    raise EmptyGroup(
                        f"intra group ({model!r}, {req!r}) has {len(runs)} run(s); need at least 2"
                    )
                pairs = list(combinations(runs, 2))
                reports.append(_mean_report("intra", model, model, req, pairs, costs, budget))
        else:
            if len(models) < 2:
                raise EmptyGroup(f"requirement {req!r} has cases from {len(models)} model(s); need 2")
            for ma, mb in combinations(models, 2):
                pairs = [(a, b) for a in by_model[ma] for b in by_model[mb]]
                reports.append(_mean_report("inter", ma, mb, req, pairs, costs, budget))
    return reports


def summarize_flat(reports: list[AgreementReport]) -> dict[str, dict[NodeType, float]]:
    """Corpus-level per-type means per scope (unweighted over reports)."""
    out: dict[str, dict[NodeType, float]] = {}
    for scope in SCOPES:
        rows = [r for r in reports if r.scope == scope]
        if rows:
            out[scope] = {t: sum(r.flat_mean[t] for r in rows) / len(rows) for t in NodeType}
    return out


def ged_matrix(
    cases: list[AssuranceCase],
    costs: GedCostModel | None = None,
    budget: int = DEFAULT_BUDGET,
) -> tuple[list[str], list[list[float]]]:
    """Model-by-model mean GED; the diagonal holds intra-model means.

    Cell values average per-requirement pair means over requirements. Cells
    with no comparable pair anywhere are NaN; raises :class:`EmptyGroup` if
    the whole matrix would be NaN.
    """
    costs = costs or GedCostModel()
    by_req = _grouped(cases)
    models = sorted({c.source_model for c in cases})
    idx = {m: i for i, m in enumerate(models)}
    sums = [[0.0] * len(models) for _ in models]
    counts = [[0] * len(models) for _ in models]

    for by_model in by_req.values():
        for ma, runs_a in by_model.items():
            for mb, runs_b in by_model.items():
                if idx[ma] > idx[mb]:
                    continue
                if ma == mb:
                    pairs = list(combinations(runs_a, 2))
                else:
                    pairs = [(a, b) for a in runs_a for b in runs_b]
                if not pairs:
                    continue
                mean = sum(_pair_ged(a, b, costs, budget) for a, b in pairs) / len(pairs)
                sums[idx[ma]][idx[mb]] += mean
                counts[idx[ma]][idx[mb]] += 1

    matrix = [[math.nan] * len(models) for _ in models]
    any_value = False
    for i in range(len(models)):
        for j in range(i, len(models)):
            if counts[i][j]:
                matrix[i][j] = matrix[j][i] = sums[i][j] / counts[i][j]
                any_value = True
    if not any_value:
        raise EmptyGroup("no model pair has a comparable case pair on any requirement")
    return models, matrix


def report_to_dict(report: AgreementReport) -> dict:
    return {
        "scope": report.scope,
        "model_a": report.model_a,
        "model_b": report.model_b,
        "requirement_id": report.requirement_id,
        "pair_count": report.pair_count,
        "flat_mean": {t.value: report.flat_mean[t] for t in NodeType},
        "ged_mean": report.ged_mean,
    }


def reports_to_csv(reports: list[AgreementReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["scope", "model_a", "model_b", "requirement_id", "pair_count"]
        + [f"flat_{t.value}" for t in NodeType]
        + ["ged_mean"]
    )
    for r in reports:
        writer.writerow(
            [r.scope, r.model_a, r.model_b, r.requirement_id, r.pair_count]
            + [f"{r.flat_mean[t]:.4f}" for t in NodeType]
            + [f"{r.ged_mean:.4f}"]
        )
    return buf.getvalue()


def flat_summary_to_csv(summary: dict[str, dict[NodeType, float]]) -> str:
    """Per-type table with one column per scope, types in hierarchy order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["type", "intra_model", "inter_model"])
    for t in NodeType:
        row = [t.value]
        for scope in SCOPES:
            value = summary.get(scope, {}).get(t)
            row.append("" if value is None else f"{value:.2f}")
        writer.writerow(row)
    return buf.getvalue()


def matrix_to_csv(models: list[str], matrix: list[list[float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model"] + models)
    for model, row in zip(models, matrix):
        writer.writerow([model] + ["" if math.isnan(v) else f"{v:.4f}" for v in row])
    return buf.getvalue()
