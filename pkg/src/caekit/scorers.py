"""Entailment scorers behind a single black-box interface.

A scorer maps (premise, hypothesis) to a probability distribution over
{not_entailment, entailment} and exposes the tokenization its metrics should
operate on. Three kinds are built in:

* ``builtin_toy`` — entailment probability sigma(6 * J - 3) where J is the
  Jaccard overlap of the whitespace token sets of premise and hypothesis
  (J = 0 when both are empty). Documented exactly so expected metric values
  are computable by hand.
* ``builtin_constant`` — fixed distribution, independent of the input.
* ``external_http`` — POST ``{"inputs": [{"premise", "hypothesis"}],
  "return_tokens": bool}`` to ``<endpoint>/score`` and read
  ``{"probs": [[p_not_entailment, p_entailment], ...], "tokens": [[...]]}``;
  response arrays align one-to-one with the request.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import requests

LABELS = ("not_entailment", "entailment")


class ScorerUnavailable(RuntimeError):
    """The scorer endpoint cannot be reached or reports a server error."""


class ProtocolError(RuntimeError):
    """The scorer endpoint answered with a malformed or misaligned body."""


@dataclass(frozen=True)
class ProbDist:
    not_entailment: float
    entailment: float

    def __post_init__(self) -> None:
        for p in (self.not_entailment, self.entailment):
            if not -1e-9 <= p <= 1 + 1e-9:
                raise ValueError(f"probability {p} outside [0, 1]")
        if abs(self.not_entailment + self.entailment - 1.0) > 1e-6:
            raise ValueError("class probabilities must sum to 1 within 1e-6")

    def prob(self, label: str) -> float:
        if label == "entailment":
            return self.entailment
        if label == "not_entailment":
            return self.not_entailment
        raise KeyError(label)

    @property
    def predicted_label(self) -> str:
        # exact ties go to entailment so the argmax class is deterministic
        return "entailment" if self.entailment >= self.not_entailment else "not_entailment"


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


def jaccard_overlap(premise: str, hypothesis: str) -> float:
    a = set(whitespace_tokenize(premise))
    b = set(whitespace_tokenize(hypothesis))
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


class Scorer:
    """Deterministic black-box scorer interface."""

    name = "scorer"

    def score(self, premise: str, hypothesis: str) -> ProbDist:
        return self.score_batch([(premise, hypothesis)])[0]

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[ProbDist]:
        raise NotImplementedError

    def tokenize(self, text: str) -> list[str]:
        return whitespace_tokenize(text)


class ToyOverlapScorer(Scorer):
    """sigma(weight * JaccardOverlap + bias) on whitespace token sets."""

    name = "builtin_toy"

    def __init__(self, weight: float = 6.0, bias: float = -3.0):
        self.weight = weight
        self.bias = bias

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[ProbDist]:
        out = []
        for premise, hypothesis in pairs:
            p = _sigmoid(self.weight * jaccard_overlap(premise, hypothesis) + self.bias)
            out.append(ProbDist(not_entailment=1.0 - p, entailment=p))
        return out


class ConstantScorer(Scorer):
    """Ignores its input; useful as a null reference for metric identities."""

    name = "builtin_constant"

    def __init__(self, entailment: float = 0.5):
        self.dist = ProbDist(not_entailment=1.0 - entailment, entailment=entailment)

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[ProbDist]:
        return [self.dist for _ in pairs]


class HttpScorer(Scorer):
    name = "external_http"

    def __init__(self, endpoint: str, timeout: float = 30.0, batch_size: int = 64):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.batch_size = batch_size
        self._session = requests.Session()

    def _post(self, payload: dict) -> dict:
        try:
            resp = self._session.post(f"{self.endpoint}/score", json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ScorerUnavailable(f"cannot reach scorer at {self.endpoint}: {exc}") from exc
        if resp.status_code >= 500:
            raise ScorerUnavailable(f"scorer returned {resp.status_code}: {resp.text[:200]}")
        if resp.status_code != 200:
            raise ProtocolError(f"scorer returned {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"scorer response is not JSON: {exc}") from exc

    def _parse_probs(self, body: dict, expected: int) -> list[ProbDist]:
        probs = body.get("probs")
        if not isinstance(probs, list) or len(probs) != expected:
            raise ProtocolError(f"'probs' must be a list of {expected} entries")
        out = []
        for row in probs:
            if not isinstance(row, list) or len(row) != 2:
                raise ProtocolError(f"each probs entry must be [p_not_entailment, p_entailment], got {row!r}")
            try:
                out.append(ProbDist(not_entailment=float(row[0]), entailment=float(row[1])))
            except (TypeError, ValueError) as exc:
                raise ProtocolError(f"invalid probability row {row!r}: {exc}") from exc
        return out

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[ProbDist]:
        out: list[ProbDist] = []
        for start in range(0, len(pairs), self.batch_size):
            chunk = pairs[start : start + self.batch_size]
            body = self._post(
                {"inputs": [{"premise": p, "hypothesis": h} for p, h in chunk], "return_tokens": False}
            )
            out.extend(self._parse_probs(body, len(chunk)))
        return out

    def tokenize(self, text: str) -> list[str]:
        body = self._post({"inputs": [{"premise": "", "hypothesis": text}], "return_tokens": True})
        self._parse_probs(body, 1)
        tokens = body.get("tokens")
        if not isinstance(tokens, list) or len(tokens) != 1 or not isinstance(tokens[0], list):
            raise ProtocolError("'tokens' must align one-to-one with inputs")
        return [str(t) for t in tokens[0]]


@dataclass(frozen=True)
class ScorerHandle:
    """Declarative scorer selection, e.g. from a config file."""

    kind: str = "builtin_toy"
    endpoint: str = ""
    options: dict = field(default_factory=dict)


def make_scorer(handle: ScorerHandle) -> Scorer:
    if handle.kind == "builtin_toy":
        return ToyOverlapScorer(**handle.options)
    if handle.kind == "builtin_constant":
        return ConstantScorer(**handle.options)
    if handle.kind == "external_http":
        if not handle.endpoint:
            raise ValueError("external_http scorer requires an endpoint")
        return HttpScorer(handle.endpoint, **handle.options)
    raise ValueError(f"unknown scorer kind {handle.kind!r}")


def as_scorer(scorer: Scorer | ScorerHandle) -> Scorer:
    return make_scorer(scorer) if isinstance(scorer, ScorerHandle) else scorer


def score(scorer: Scorer | ScorerHandle, premise: str, hypothesis: str) -> ProbDist:
    return as_scorer(scorer).score(premise, hypothesis)
