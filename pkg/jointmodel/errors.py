"""
Exception hierarchy for the joint latent-age model.
"""
from typing import Optional


class JointModelError(Exception):
    """Base class for every error raised by this package."""


class DomainError(JointModelError, ValueError):
    """Input outside the mathematical domain (non-finite values, zero truth...)."""


class ParameterError(JointModelError, ValueError):
    """Invalid model parameter, e.g. a non-positive standard deviation."""


class ContractError(JointModelError, ValueError):
    """Caller broke a precondition (inconsistent counts, empty window...)."""


class InputError(JointModelError, ValueError):
    """Invalid dataset or configuration handed to an operation."""


class DegenerateConditionError(JointModelError, ValueError):
    """Conditioning on an event of probability zero."""


class UndefinedMetricError(JointModelError, ValueError):
    """Metric is undefined on the given data (no comparable pairs, no cases...)."""


class InestimableWeightsError(JointModelError, ValueError):
    """Censoring survival reaches zero where IPCW weights are needed."""


class DatasetValidationError(InputError):
    """Dataset failed validation; carries every issue found."""

    def __init__(self, issues: list, message: Optional[str] = None):
        self.issues = list(issues)
        lines = [message or f"Dataset validation failed with {len(self.issues)} issue(s)"]
        lines += [f"  - {issue}" for issue in self.issues]
        super().__init__("\n".join(lines))
