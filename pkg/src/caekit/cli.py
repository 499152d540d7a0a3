"""Command-line entry point.

Subcommands: validate | metrics | pairgen | faithfulness | generate.
Every command writes a ``run_manifest.json`` (resolved config, seed and
SHA-256 digests of the inputs) next to its outputs so a run can be
reproduced byte-for-byte.

Exit codes: 0 success, 1 validation failures present, 2 usage/config error,
3 external-service failure.
"""

from __future__ import annotations

import glob as globlib
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click

from . import __version__, cae
import math

from .agreement import (
    EmptyGroup,
    aggregate_agreement,
    flat_summary_to_csv,
    ged_matrix,
    matrix_to_csv,
    report_to_dict,
    reports_to_csv,
    summarize_flat,
)
from .faithfulness import (
    DEFAULT_BINS,
    MissingRanking,
    aggregate_to_csv,
    aggregates_to_dict,
    dump_rankings_jsonl,
    dump_records_jsonl,
    evaluate_corpus,
    load_rankings_jsonl,
    occlusion_attribution,
    permutation_test,
)
from .ged import DEFAULT_BUDGET, GedCostModel
from .harness import (
    HttpChatClient,
    MockChatClient,
    Requirement,
    build_prompt,
    extract_json,
    generate,
    success_rate,
    success_table_csv,
)
from .pairs import (
    SamplerConfig,
    SplitSpec,
    UnknownRequirement,
    build_gdpr_nli,
    cae_negatives,
    cae_pairs,
    export_jsonl,
    hop_table_csv,
    import_jsonl,
    render_input,
    split_by_requirement,
)
from .scorers import ProtocolError, ScorerHandle, ScorerUnavailable, make_scorer

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_EXTERNAL = 3


@dataclass
class RunConfig:
    seed: int = 0
    sampler: dict = field(default_factory=dict)
    pairgen: dict = field(default_factory=dict)
    costs: dict = field(default_factory=dict)
    aopc_bins: list[float] = field(default_factory=lambda: list(DEFAULT_BINS))
    scorer: dict = field(default_factory=lambda: {"kind": "builtin_toy", "endpoint": ""})
    split: dict = field(default_factory=dict)
    chat: dict = field(default_factory=dict)
    budget: int = DEFAULT_BUDGET


def _load_config(path: str | None, seed_override: int | None) -> RunConfig:
    cfg = RunConfig()
    if path:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise click.ClickException(f"cannot read config {path}: {exc}") from exc
        for key, value in doc.items():
            if not hasattr(cfg, key):
                raise click.UsageError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    if seed_override is not None:
        cfg.seed = seed_override
    return cfg


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig, inputs: list[Path], outputs: list[str]) -> None:
    manifest = {
        "tool": "caekit",
        "version": __version__,
        "command": command,
        "argv": sys.argv[1:],
        "seed": cfg.seed,
        "config": asdict(cfg),
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in sorted(inputs)],
        "outputs": outputs,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def _expand(pattern: str) -> list[Path]:
    paths = sorted(Path(p) for p in globlib.glob(pattern, recursive=True))
    if not paths:
        raise click.UsageError(f"no files match {pattern!r}")
    return paths


def _load_cases(paths: list[Path]) -> list[cae.AssuranceCase]:
    cases = []
    for path in paths:
        try:
            cases.append(cae.load_case_file(path))
        except (cae.CaseParseError, ValueError) as exc:
            raise click.ClickException(f"{path}: {exc}") from exc
    return cases


def _cost_model(cfg: RunConfig) -> GedCostModel:
    try:
        return GedCostModel(**cfg.costs)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(f"bad cost model: {exc}") from exc


common_options = [
    click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True, help="Output directory."),
    click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="JSON config file."),
    click.option("--seed", type=int, default=None, help="Override the config seed."),
]


def _with_common(fn):
    for opt in reversed(common_options):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Assurance-case tooling: validation, agreement metrics, NLI dataset
    generation, faithfulness evaluation and LLM-generation harness."""


@main.command("validate")
@click.argument("pattern")
@_with_common
def cmd_validate(pattern: str, out_dir: Path, config_path: str | None, seed: int | None) -> None:
    """Parse and validate every case file matching PATTERN (quote it)."""
    cfg = _load_config(config_path, seed)
    paths = _expand(pattern)
    out_dir.mkdir(parents=True, exist_ok=True)

    counts = {"ok": 0, "malformed_json": 0, "schema_violation": 0, "structure_violation": 0, "invalid_case": 0}
    lines = []
    for path in paths:
        entry: dict = {"file": str(path)}
        try:
            case = cae.load_case_file(path)
        except cae.MalformedJson as exc:
            entry.update(status="malformed_json", error=str(exc))
        except cae.SchemaViolation as exc:
            entry.update(status="schema_violation", error=str(exc))
        except cae.StructureViolation as exc:
            entry.update(status="structure_violation", error=str(exc))
        except ValueError as exc:
            raise click.UsageError(f"{path}: {exc}") from exc
        else:
            report = cae.validate(case)
            entry.update(
                status="ok" if report.is_valid else "invalid_case",
                case_id=case.case_id,
                violations=[vars(v) for v in report.violations],
                warnings=[vars(v) for v in report.warnings],
            )
        counts[entry["status"]] += 1
        lines.append(json.dumps(entry, ensure_ascii=False))

    (out_dir / "validation_report.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    errors = len(paths) - counts["ok"]
    summary = {"total_files": len(paths), "error_files": errors, "by_status": counts}
    (out_dir / "validation_summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    _write_manifest(out_dir, "validate", cfg, paths, ["validation_report.jsonl", "validation_summary.json"])
    click.echo(f"{len(paths)} files, {errors} with errors ({counts})")
    if errors:
        sys.exit(EXIT_VALIDATION)


@main.command("metrics")
@click.argument("pattern")
@click.option("--scope", type=click.Choice(["intra", "inter", "both"]), default="both", show_default=True)
@_with_common
def cmd_metrics(pattern: str, scope: str, out_dir: Path, config_path: str | None, seed: int | None) -> None:
    """Flat count-difference and GED agreement over the cases matching PATTERN."""
    cfg = _load_config(config_path, seed)
    paths = _expand(pattern)
    cases = _load_cases(paths)
    costs = _cost_model(cfg)
    scopes = ["intra", "inter"] if scope == "both" else [scope]
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        reports = []
        for s in scopes:
            reports.extend(aggregate_agreement(cases, s, costs, cfg.budget))
        models, matrix = ged_matrix(cases, costs, cfg.budget)
    except EmptyGroup as exc:
        raise click.UsageError(str(exc)) from exc

    json_matrix = [[None if math.isnan(v) else v for v in row] for row in matrix]
    outputs = {
        "agreement_reports.csv": reports_to_csv(reports),
        "agreement_reports.json": json.dumps([report_to_dict(r) for r in reports], indent=2) + "\n",
        "flat_summary.csv": flat_summary_to_csv(summarize_flat(reports)),
        "ged_matrix.csv": matrix_to_csv(models, matrix),
        "ged_matrix.json": json.dumps({"models": models, "matrix": json_matrix}, indent=2) + "\n",
    }
    for name, text in outputs.items():
        (out_dir / name).write_text(text, encoding="utf-8")
    _write_manifest(out_dir, "metrics", cfg, paths, list(outputs))
    click.echo(f"{len(reports)} agreement groups over {len(cases)} cases -> {out_dir}")


@main.command("pairgen")
@click.option("--cases", "cases_pattern", default=None, help="Glob of assurance-case JSON files.")
@click.option("--gdpr-requirements", type=click.Path(exists=True), default=None, help="JSON [{id, text}].")
@click.option("--gdpr-dpa", type=click.Path(exists=True), default=None, help="JSON [{id, text, gold:[req ids]}].")
@click.option("--split", "split_path", type=click.Path(exists=True), default=None, help="JSON {train:[...], test:[...]}.")
@click.option("--rate", type=float, default=None, help="Negative sampling rate.")
@click.option("--max-hop", type=int, default=None, help="Maximum ancestor/descendant distance.")
@click.option("--separator", default=None, help="Chain separator (default newline).")
@click.option("--within-case-negatives", is_flag=True, default=False)
@_with_common
def cmd_pairgen(
    cases_pattern: str | None,
    gdpr_requirements: str | None,
    gdpr_dpa: str | None,
    split_path: str | None,
    rate: float | None,
    max_hop: int | None,
    separator: str | None,
    within_case_negatives: bool,
    out_dir: Path,
    config_path: str | None,
    seed: int | None,
) -> None:
    """Build an NLI dataset from assurance cases and/or requirement-agreement
    inputs, with optional requirement-level train/test split."""
    cfg = _load_config(config_path, seed)
    sampler = SamplerConfig(
        negative_rate=rate if rate is not None else cfg.sampler.get("negative_rate", 0.1),
        seed=cfg.seed,
        within_case_negatives=within_case_negatives or cfg.sampler.get("within_case_negatives", False),
    )
    if separator is not None:
        cfg.pairgen["separator"] = separator
    hop_limit = max_hop if max_hop is not None else cfg.pairgen.get("max_hop", 4)
    inputs: list[Path] = []
    instances = []

    if cases_pattern:
        paths = _expand(cases_pattern)
        inputs.extend(paths)
        cases = _load_cases(paths)
        for case in sorted(cases, key=lambda c: c.case_id):
            instances.extend(cae_pairs(case, hop_limit))
        instances.extend(cae_negatives(cases, sampler))
    if gdpr_requirements and gdpr_dpa:
        req_doc = json.loads(Path(gdpr_requirements).read_text(encoding="utf-8"))
        dpa_doc = json.loads(Path(gdpr_dpa).read_text(encoding="utf-8"))
        inputs.extend([Path(gdpr_requirements), Path(gdpr_dpa)])
        instances.extend(
            build_gdpr_nli(
                [(r["id"], r["text"]) for r in req_doc],
                [(d["id"], d["text"], set(d.get("gold", []))) for d in dpa_doc],
                sampler,
            )
        )
    if not instances:
        raise click.UsageError("nothing to generate: pass --cases and/or --gdpr-requirements/--gdpr-dpa")

    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    if split_path or cfg.split:
        spec = (
            SplitSpec.from_file(split_path)
            if split_path
            else SplitSpec(frozenset(cfg.split.get("train", [])), frozenset(cfg.split.get("test", [])))
        )
        if split_path:
            inputs.append(Path(split_path))
        try:
            train, test = split_by_requirement(instances, spec)
        except UnknownRequirement as exc:
            raise click.UsageError(str(exc)) from exc
    else:
        train, test = instances, []
    export_jsonl(train, out_dir / "train.jsonl")
    export_jsonl(test, out_dir / "test.jsonl")
    (out_dir / "hop_counts.csv").write_text(hop_table_csv(train, test), encoding="utf-8")
    outputs += ["train.jsonl", "test.jsonl", "hop_counts.csv"]
    _write_manifest(out_dir, "pairgen", cfg, inputs, outputs)
    click.echo(f"{len(train)} train / {len(test)} test instances -> {out_dir}")


@main.command("faithfulness")
@click.option("--dataset", type=click.Path(exists=True), required=True, help="NLI instances JSONL.")
@click.option("--rankings", "rankings_path", type=click.Path(exists=True), default=None, help="Attribution JSONL.")
@click.option("--occlusion", "use_occlusion", is_flag=True, default=False, help="Compute leave-one-out attributions with the scorer.")
@click.option("--scorer-kind", type=click.Choice(["builtin_toy", "builtin_constant", "external_http"]), default=None)
@click.option("--endpoint", default=None, help="Scorer endpoint for external_http.")
@click.option("--offline", is_flag=True, default=False, help="Forbid network use; built-in scorers only.")
@click.option("--mask-token", default=None, help="Substitute this token instead of deleting.")
@click.option("--n-perm", type=int, default=10_000, show_default=True, help="Permutation count for correct-vs-incorrect tests.")
@_with_common
def cmd_faithfulness(
    dataset: str,
    rankings_path: str | None,
    use_occlusion: bool,
    scorer_kind: str | None,
    endpoint: str | None,
    offline: bool,
    mask_token: str | None,
    n_perm: int,
    out_dir: Path,
    config_path: str | None,
    seed: int | None,
) -> None:
    """AOPC comprehensiveness/sufficiency per instance, aggregates split by
    prediction correctness, and permutation p-values."""
    cfg = _load_config(config_path, seed)
    if scorer_kind:
        cfg.scorer["kind"] = scorer_kind
    if endpoint:
        cfg.scorer["endpoint"] = endpoint
    if offline and cfg.scorer.get("kind") == "external_http":
        raise click.UsageError("--offline forbids the external_http scorer")
    handle = ScorerHandle(
        kind=cfg.scorer.get("kind", "builtin_toy"),
        endpoint=cfg.scorer.get("endpoint", ""),
        options=cfg.scorer.get("options", {}),
    )
    try:
        scorer = make_scorer(handle)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc

    instances = import_jsonl(dataset)
    inputs = [Path(dataset)]
    bins = tuple(cfg.aopc_bins)
    separator = cfg.pairgen.get("separator", "\n")
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []

    try:
        if rankings_path:
            rankings = load_rankings_jsonl(rankings_path)
            inputs.append(Path(rankings_path))
        elif use_occlusion:
            computed = []
            for inst in instances:
                premise, hypothesis = render_input(inst, separator)
                computed.append(occlusion_attribution(scorer, premise, hypothesis, inst.instance_id))
            rankings = {r.instance_id: r for r in computed}
            dump_rankings_jsonl(computed, out_dir / "occlusion_rankings.jsonl")
            outputs.append("occlusion_rankings.jsonl")
        else:
            raise click.UsageError("pass --rankings FILE or --occlusion")
        records, aggregates = evaluate_corpus(scorer, instances, rankings, bins, separator, mask_token)
    except (ScorerUnavailable, ProtocolError) as exc:
        click.echo(f"scorer failure: {exc}", err=True)
        sys.exit(EXIT_EXTERNAL)
    except MissingRanking as exc:
        raise click.UsageError(f"no ranking for instance {exc}") from exc

    dump_records_jsonl(records, out_dir / "faithfulness_records.jsonl")
    (out_dir / "faithfulness_aggregate.csv").write_text(
        aggregate_to_csv(aggregates, handle.kind), encoding="utf-8"
    )
    (out_dir / "faithfulness_aggregate.json").write_text(
        json.dumps({"scorer": handle.kind, "methods": aggregates_to_dict(aggregates)}, indent=2) + "\n",
        encoding="utf-8",
    )
    outputs += ["faithfulness_records.jsonl", "faithfulness_aggregate.csv", "faithfulness_aggregate.json"]

    pvalue_lines = ["method,metric,p_value,n_correct,n_incorrect"]
    for method in sorted({r.method for r in records}):
        rows = [r for r in records if r.method == method]
        correct = [r for r in rows if r.correct]
        incorrect = [r for r in rows if not r.correct]
        for metric, attr in (("compr", "aopc_compr"), ("suff", "aopc_suff")):
            if correct and incorrect:
                p = permutation_test(
                    [getattr(r, attr) for r in correct],
                    [getattr(r, attr) for r in incorrect],
                    n_perm=n_perm,
                    seed=cfg.seed,
                )
                pvalue_lines.append(f"{method},{metric},{p:.6f},{len(correct)},{len(incorrect)}")
            else:
                pvalue_lines.append(f"{method},{metric},,{len(correct)},{len(incorrect)}")
    (out_dir / "permutation_pvalues.csv").write_text("\n".join(pvalue_lines) + "\n", encoding="utf-8")
    outputs.append("permutation_pvalues.csv")

    _write_manifest(out_dir, "faithfulness", cfg, inputs, outputs)
    click.echo(f"{len(records)} records -> {out_dir}")


@main.command("generate")
@click.option("--requirements", "requirements_path", type=click.Path(exists=True), required=True,
              help="JSON [{id, name, description, rationale}].")
@click.option("--models", default="mock-model", show_default=True, help="Comma-separated model names.")
@click.option("--n-calls", type=int, default=5, show_default=True)
@click.option("--endpoint", default=None, help="Chat endpoint URL; omit for the offline mock.")
@click.option("--offline", is_flag=True, default=False, help="Forbid network use; mock only.")
@click.option("--invalid-rate", type=float, default=0.0, show_default=True, help="Mock fraction of broken replies.")
@_with_common
def cmd_generate(
    requirements_path: str,
    models: str,
    n_calls: int,
    endpoint: str | None,
    offline: bool,
    invalid_rate: float,
    out_dir: Path,
    config_path: str | None,
    seed: int | None,
) -> None:
    """Drive assurance-case generation for every (model, requirement) and
    account per-model success rates."""
    cfg = _load_config(config_path, seed)
    base_url = endpoint or cfg.chat.get("base_url")
    if offline and base_url:
        raise click.UsageError("--offline forbids a chat endpoint")
    if base_url:
        client = HttpChatClient(
            base_url,
            temperature=cfg.chat.get("temperature", 0.7),
            api_key=os.environ.get(cfg.chat.get("api_key_env", "CAEKIT_API_KEY"), ""),
        )
    else:
        client = MockChatClient(seed=cfg.seed, invalid_rate=invalid_rate)

    doc = json.loads(Path(requirements_path).read_text(encoding="utf-8"))
    requirements = [Requirement(r["id"], r["name"], r["description"], r["rationale"]) for r in doc]
    model_names = [m.strip() for m in models.split(",") if m.strip()]
    if not requirements or not model_names:
        raise click.UsageError("need at least one requirement and one model")

    raw_dir = out_dir / "raw"
    cases_dir = out_dir / "cases"
    outcomes = []
    for model in model_names:
        for requirement in requirements:
            bundle = build_prompt(requirement, model_name=model)
            batch = generate(client, bundle, n_calls, output_dir=raw_dir)
            outcomes.extend(batch)
            # valid replies additionally become canonical case files, the
            # corpus that metrics/pairgen consume
            for outcome in batch:
                if outcome.status != "valid_json_case":
                    continue
                case = cae.parse_assurance_case(
                    extract_json(outcome.raw_text),
                    requirement_id=outcome.requirement_id,
                    source_model=outcome.model_name,
                    run_index=outcome.call_index,
                )
                cases_dir.mkdir(parents=True, exist_ok=True)
                (cases_dir / f"{case.case_id}.json").write_text(
                    cae.serialize(case), encoding="utf-8"
                )

    out_dir.mkdir(parents=True, exist_ok=True)
    rows = success_rate(outcomes)
    (out_dir / "success_table.csv").write_text(success_table_csv(rows), encoding="utf-8")
    outcome_lines = [
        json.dumps(
            {
                "model": o.model_name,
                "requirement_id": o.requirement_id,
                "call_index": o.call_index,
                "status": o.status,
                "case_id": o.case_id,
                "detail": o.detail,
            },
            ensure_ascii=False,
        )
        for o in sorted(outcomes, key=lambda o: (o.model_name, o.requirement_id, o.call_index))
    ]
    (out_dir / "outcomes.jsonl").write_text("\n".join(outcome_lines) + "\n", encoding="utf-8")
    _write_manifest(out_dir, "generate", cfg, [Path(requirements_path)], ["success_table.csv", "outcomes.jsonl"])
    transported = sum(1 for o in outcomes if o.status == "transport_error")
    click.echo(f"{len(outcomes)} calls, {transported} transport errors -> {out_dir}")
    if transported == len(outcomes) and outcomes:
        sys.exit(EXIT_EXTERNAL)


if __name__ == "__main__":
    main()
