from .conformance import CheckResult, ConformanceReport, conformance_check
from .models import (
    ModelLoadError,
    NegLengthModel,
    ScorerModelConfig,
    TermOverlapModel,
    load_config,
    load_model,
)
from .service import RunningScorer, serve_scorer, truncate_tokens

__version__ = "0.1.0"

__all__ = [
    "CheckResult",
    "ConformanceReport",
    "ModelLoadError",
    "NegLengthModel",
    "RunningScorer",
    "ScorerModelConfig",
    "TermOverlapModel",
    "conformance_check",
    "load_config",
    "load_model",
    "serve_scorer",
    "truncate_tokens",
]
