"""Evaluate how manipulated news headlines move a news-aware trading backtest."""

__version__ = "0.1.0"

from .adversary import AttackSpec, apply, inject_hidden_text, substitute_entity  # noqa: E402
from .engine import CostConfig, Decision, StrategyParams, run_backtest  # noqa: E402
from .evaluator import Experiment, aggregate, dollar_impact, paired_run, sweep  # noqa: E402
from .homoglyphs import DEFAULT_TABLE, HomoglyphTable  # noqa: E402
from .kernel import BACKEND  # noqa: E402
from .sanitizer import sanitize, sanitize_text  # noqa: E402

__all__ = [
    "AttackSpec", "BACKEND", "CostConfig", "DEFAULT_TABLE", "Decision", "Experiment",
    "HomoglyphTable", "StrategyParams", "aggregate", "apply", "dollar_impact",
    "inject_hidden_text", "paired_run", "run_backtest", "sanitize", "sanitize_text",
    "substitute_entity", "sweep",
]
