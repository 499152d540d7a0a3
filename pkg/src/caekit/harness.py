"""Prompt assembly, chat-endpoint driving, JSON extraction and success
accounting for LLM-generated assurance cases.

The chat protocol is deliberately minimal: request
``{"model", "messages": [{"role", "content"}...], "temperature"}``, response
``{"content": "..."}``. Anything richer belongs in a provider adapter's
config, not in code branches here. A mock client keeps every workflow
runnable offline and deterministic.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import requests

from . import cae
from .seeding import keyed_rng

STATUS_VALID = "valid_json_case"
STATUS_MALFORMED = "malformed_json"
STATUS_SCHEMA_INVALID = "schema_invalid"
STATUS_TRANSPORT = "transport_error"
STATUSES = (STATUS_VALID, STATUS_MALFORMED, STATUS_SCHEMA_INVALID, STATUS_TRANSPORT)


class MissingField(ValueError):
    """A prompt field is empty."""


class NoJsonFound(ValueError):
    """No balanced top-level JSON object in the reply."""


DEFAULT_CASE_DEFINITION = (
    "An assurance case is a structured argument: a single MainClaim is broken down "
    "into SubClaim, ArgumentClaim and ArgumentSubClaim nodes and grounded in Evidence "
    "leaves. Every node has an id, a type, a text, and a list of children; Evidence "
    "nodes have no children."
)

DEFAULT_FORMAT_CLAUSE = (
    "a single JSON object: {\"requirement_id\": \"...\", \"main_claim\": {\"id\": \"...\", "
    "\"type\": \"MainClaim\", \"text\": \"...\", \"children\": [...]}} with the same "
    "id/type/text/children shape for every nested node"
)

SYSTEM_TEMPLATE = (
    "You are a legal expert in privacy and security issues. Your duty is to produce a "
    "thorough Data Processing Agreement Assurance Case from General Data Protection "
    "Regulation legal requirements. {case_definition}"
)

USER_TEMPLATE = (
    "The requirement is {requirement_id}: {requirement_name}\n"
    "\n"
    "Requirement Description\n"
    "{requirement_description}\n"
    "\n"
    "Rationale and Supplemental Guidance\n"
    "{requirement_rationale}\n"
    "\n"
    "Give the output in {format}."
)


@dataclass(frozen=True)
class Requirement:
    id: str
    name: str
    description: str
    rationale: str


@dataclass(frozen=True)
class PromptBundle:
    system_message: str
    user_message: str
    requirement_id: str
    model_name: str = ""
    call_index: int = 0


@dataclass
class GenerationOutcome:
    model_name: str
    requirement_id: str
    call_index: int
    raw_text: str
    status: str
    case_id: str = ""
    detail: str = ""


def build_prompt(
    requirement: Requirement,
    fmt: str = DEFAULT_FORMAT_CLAUSE,
    case_definition: str = DEFAULT_CASE_DEFINITION,
    model_name: str = "",
    call_index: int = 0,
) -> PromptBundle:
    """Deterministic template fill; raises :class:`MissingField` on any empty
    input."""
    fields = {
        "requirement id": requirement.id,
        "requirement name": requirement.name,
        "requirement description": requirement.description,
        "requirement rationale": requirement.rationale,
        "format": fmt,
    }
    for name, value in fields.items():
        if not value or not value.strip():
            raise MissingField(f"{name} is empty")
    return PromptBundle(
        system_message=SYSTEM_TEMPLATE.format(case_definition=case_definition),
        user_message=USER_TEMPLATE.format(
            requirement_id=requirement.id,
            requirement_name=requirement.name,
            requirement_description=requirement.description,
            requirement_rationale=requirement.rationale,
            format=fmt,
        ),
        requirement_id=requirement.id,
        model_name=model_name,
        call_index=call_index,
    )


_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_+-]*)\s*\n?(.*?)```", re.DOTALL)


def _balanced_objects(text: str):
    """Yield balanced ``{...}`` spans in order, honoring JSON strings and
    escapes; unbalanced openings advance to the next brace."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        end = -1
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    end = i
                    break
        if end == -1:
            start = text.find("{", start + 1)
            continue
        yield text[start : end + 1]
        start = text.find("{", end + 1)


def extract_json(raw_text: str) -> str:
    """Return the JSON-object text embedded in an LLM reply.

    Already-clean documents come back unchanged (modulo surrounding
    whitespace). Code fences and leading/trailing prose are stripped;
    :class:`NoJsonFound` is raised when no balanced object parses.
    """
    stripped = raw_text.strip()
    try:
        if isinstance(json.loads(stripped), dict):
            return stripped
    except (json.JSONDecodeError, TypeError):
        pass

    candidates = [m.group(1).strip() for m in _FENCE_RE.finditer(raw_text)]
    candidates.append(stripped)
    for candidate in candidates:
        for span in _balanced_objects(candidate):
            try:
                if isinstance(json.loads(span), dict):
                    return span
            except json.JSONDecodeError:
                continue
    raise NoJsonFound("no balanced top-level JSON object found in reply")


class ChatClient:
    def complete(self, model: str, system_message: str, user_message: str) -> str:
        raise NotImplementedError


class HttpChatClient(ChatClient):
    """Minimal JSON chat protocol against a configurable endpoint."""

    def __init__(
        self,
        base_url: str,
        temperature: float = 0.7,
        timeout: float = 120.0,
        api_key: str = "",
    ):
        self.base_url = base_url.rstrip("/")
        self.temperature = temperature
        self.timeout = timeout
        self.api_key = api_key
        self._session = requests.Session()

    def complete(self, model: str, system_message: str, user_message: str) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        resp = self._session.post(
            self.base_url,
            json={
                "model": model,
                "messages": [
                    {"role": "system", "content": system_message},
                    {"role": "user", "content": user_message},
                ],
                "temperature": self.temperature,
            },
            headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        body = resp.json()
        content = body.get("content")
        if not isinstance(content, str):
            raise ValueError(f"chat response missing 'content': {body!r}")
        return content


class MockChatClient(ChatClient):
    """Offline stand-in. With explicit ``responses`` it replays them in call
    order (cycling); otherwise it synthesizes a small assurance case for the
    requirement, seeded per (model, requirement, call), with an optional
    fraction of deliberately broken replies."""

    def __init__(self, responses: list[str] | None = None, seed: int = 0, invalid_rate: float = 0.0):
        self.responses = list(responses) if responses else None
        self.seed = seed
        self.invalid_rate = invalid_rate
        self._calls = 0

    def complete(self, model: str, system_message: str, user_message: str) -> str:
        if self.responses is not None:
            reply = self.responses[self._calls % len(self.responses)]
            self._calls += 1
            return reply
        req_match = re.search(r"The requirement is (\S+):", user_message)
        requirement_id = req_match.group(1) if req_match else "R0"
        rng = keyed_rng(self.seed, "mock_chat", model, requirement_id, self._calls)
        self._calls += 1
        if rng.random() < self.invalid_rate:
            return "I am sorry, here is the assurance case template you asked about."
        return synthesize_case_json(requirement_id, rng)


def synthesize_case_json(requirement_id: str, rng) -> str:
    """A small well-formed case with seeded branching, fenced like a typical
    chat reply."""
    sub_claims = 1 + int(rng.integers(3))
    children = []
    node_no = 1
    for s in range(sub_claims):
        arg_children = []
        for _ in range(1 + int(rng.integers(2))):
            node_no += 1
            arg_children.append(
                {
                    "id": f"e{node_no}",
                    "type": "Evidence",
                    "text": f"Audit record {node_no} for {requirement_id}",
                    "children": [],
                }
            )
        node_no += 1
        children.append(
            {
                "id": f"s{s + 1}",
                "type": "SubClaim",
                "text": f"Obligation {s + 1} of {requirement_id} is met",
                "children": [
                    {
                        "id": f"a{s + 1}",
                        "type": "ArgumentClaim",
                        "text": f"Processes for obligation {s + 1} are in place",
                        "children": arg_children,
                    }
                ],
            }
        )
    doc = {
        "requirement_id": requirement_id,
        "main_claim": {
            "id": "c1",
            "type": "MainClaim",
            "text": f"The agreement complies with {requirement_id}",
            "children": children,
        },
    }
    return "```json\n" + json.dumps(doc, indent=2) + "\n```"


def classify_reply(raw_text: str, requirement_id: str, model_name: str, call_index: int) -> GenerationOutcome:
    """Map one raw reply to its outcome status via extract + parse + validate."""
    outcome = GenerationOutcome(
        model_name=model_name,
        requirement_id=requirement_id,
        call_index=call_index,
        raw_text=raw_text,
        status=STATUS_MALFORMED,
    )
    try:
        document = extract_json(raw_text)
    except NoJsonFound as exc:
        outcome.detail = str(exc)
        return outcome
    try:
        case = cae.parse_assurance_case(
            document,
            requirement_id=requirement_id,
            source_model=model_name,
            run_index=call_index,
        )
    except cae.MalformedJson as exc:
        outcome.detail = str(exc)
        return outcome
    except (cae.SchemaViolation, cae.StructureViolation) as exc:
        outcome.status = STATUS_SCHEMA_INVALID
        outcome.detail = str(exc)
        return outcome
    report = cae.validate(case)
    if not report.is_valid:
        outcome.status = STATUS_SCHEMA_INVALID
        outcome.detail = "; ".join(f"{v.code}({v.node_id})" for v in report.violations)
        return outcome
    outcome.status = STATUS_VALID
    outcome.case_id = case.case_id
    return outcome


def generate(
    client: ChatClient,
    bundle: PromptBundle,
    n_calls: int,
    output_dir: str | Path | None = None,
) -> list[GenerationOutcome]:
    """Run ``n_calls`` generations for one prompt. Transport errors become
    outcomes, never exceptions; raw replies are persisted one file per call
    under the ``<model>__<requirement>__<call>.json`` convention."""
    if n_calls < 1:
        raise ValueError("n_calls must be >= 1")
    outcomes: list[GenerationOutcome] = []
    for call in range(n_calls):
        try:
            raw = client.complete(bundle.model_name, bundle.system_message, bundle.user_message)
        except Exception as exc:  # outcomes must partition every call
            outcomes.append(
                GenerationOutcome(
                    model_name=bundle.model_name,
                    requirement_id=bundle.requirement_id,
                    call_index=call,
                    raw_text="",
                    status=STATUS_TRANSPORT,
                    detail=str(exc),
                )
            )
            continue
        outcome = classify_reply(raw, bundle.requirement_id, bundle.model_name, call)
        outcomes.append(outcome)
        if output_dir is not None:
            path = Path(output_dir) / f"{bundle.model_name}__{bundle.requirement_id}__{call}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(raw, encoding="utf-8")
    return outcomes


@dataclass
class SuccessRow:
    model: str
    total: int
    error_count: int
    success_pct: float


def success_rate(outcomes: list[GenerationOutcome]) -> list[SuccessRow]:
    """Per-model error counts and success percentages, each computed directly
    from the outcomes (neither column is derived from the other)."""
    if not outcomes:
        raise ValueError("no outcomes to summarize")
    by_model: dict[str, list[GenerationOutcome]] = {}
    for o in outcomes:
        by_model.setdefault(o.model_name, []).append(o)
    rows = []
    for model in sorted(by_model):
        group = by_model[model]
        valid = sum(1 for o in group if o.status == STATUS_VALID)
        errors = sum(1 for o in group if o.status != STATUS_VALID)
        rows.append(
            SuccessRow(
                model=model,
                total=len(group),
                error_count=errors,
                success_pct=100.0 * valid / len(group),
            )
        )
    return rows


def success_table_csv(rows: list[SuccessRow]) -> str:
    lines = ["model,total,err_cnt,success_pct"]
    for r in rows:
        lines.append(f"{r.model},{r.total},{r.error_count},{r.success_pct:.1f}")
    return "\n".join(lines) + "\n"
