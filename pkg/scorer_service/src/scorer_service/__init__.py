"""HTTP entailment scorer with a deterministic mock mode.

POST /score takes ``{"inputs": [{"premise", "hypothesis"}, ...],
"return_tokens": bool}`` and answers ``{"probs": [[p_not_entailment,
p_entailment], ...], "tokens": [[...], ...]}``, arrays aligned one-to-one
with the request. GET /health reports ``{"status", "model_id", "mode"}``.
"""

from .app import create_app

__version__ = "0.1.0"
__all__ = ["create_app", "__version__"]
