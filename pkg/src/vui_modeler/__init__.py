"""Model-based exploration of conversational (voice) apps with a language-model assistant."""

__version__ = "0.1.0"

from vui_modeler.model import BehaviorModel, Origin, Validity  # noqa: E402
from vui_modeler.runner import Budget, TestReport, run_baseline, run_elevate  # noqa: E402

__all__ = [
    "BehaviorModel",
    "Budget",
    "Origin",
    "TestReport",
    "Validity",
    "__version__",
    "run_baseline",
    "run_elevate",
]
