"""Scoring backends behind the wire protocol.

``MockBackend`` is self-contained and fully deterministic: entailment
probability sigma(6 * J - 3) on the Jaccard overlap J of the whitespace
token sets (J = 0 when both sides are empty). ``TransformerBackend`` wraps a
sequence-classification checkpoint in eval mode; probabilities are repeatable
for fixed weights and tokenization.

Returned tokens are always the tokenization of each input's hypothesis,
which is the side attribution rankings are computed over.
"""

from __future__ import annotations

import math


class MockBackend:
    mode = "mock"
    model_id = "mock-overlap-sigmoid"

    def __init__(self, weight: float = 6.0, bias: float = -3.0):
        self.weight = weight
        self.bias = bias

    def _entailment(self, premise: str, hypothesis: str) -> float:
        a = set(premise.split())
        b = set(hypothesis.split())
        union = a | b
        overlap = len(a & b) / len(union) if union else 0.0
        x = self.weight * overlap + self.bias
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)

    def score(self, pairs: list[tuple[str, str]]) -> list[list[float]]:
        out = []
        for premise, hypothesis in pairs:
            p = self._entailment(premise, hypothesis)
            out.append([1.0 - p, p])
        return out

    def tokenize(self, text: str) -> list[str]:
        return text.split()


class TransformerBackend:
    mode = "model"

    def __init__(self, model_path: str, entailment_index: int = 1, max_length: int = 512):
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_path)
        self.model = AutoModelForSequenceClassification.from_pretrained(model_path)
        self.model.eval()
        self.entailment_index = entailment_index
        self.max_length = max_length
        self.model_id = model_path

    def score(self, pairs: list[tuple[str, str]]) -> list[list[float]]:
        torch = self._torch
        premises = [p for p, _ in pairs]
        hypotheses = [h for _, h in pairs]
        batch = self.tokenizer(
            premises,
            hypotheses,
            padding=True,
            truncation=True,
            max_length=self.max_length,
            return_tensors="pt",
        )
        with torch.no_grad():
            logits = self.model(**batch).logits
        if logits.shape[-1] == 2 and self.entailment_index == 1:
            probs = torch.softmax(logits, dim=-1)
            rows = probs.tolist()
            return [[row[0], row[1]] for row in rows]
        # collapse a multi-class head onto {not_entailment, entailment}
        probs = self._torch.softmax(logits, dim=-1)
        out = []
        for row in probs.tolist():
            p_ent = row[self.entailment_index]
            out.append([1.0 - p_ent, p_ent])
        return out

    def tokenize(self, text: str) -> list[str]:
        return self.tokenizer.tokenize(text)
