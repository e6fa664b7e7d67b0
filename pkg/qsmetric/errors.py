"""
Error types
Raised by the construction, metric and verification modules
"""

from typing import Any, Dict, List, Optional


class QsMetricError(Exception):
    """Base class for all qsmetric errors."""


class DomainError(QsMetricError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class ResourceBudgetError(QsMetricError, RuntimeError):
    """A grid or picture would exceed the configured budget."""

    def __init__(self, message: str, count: int, budget: int):
        super().__init__(f"{message} ({count:,} > budget {budget:,})")
        self.count = count
        self.budget = budget


class ConsistencyError(QsMetricError, AssertionError):
    """An enumeration disagrees with its closed form."""


class ConfigError(QsMetricError):
    """
    Malformed run configuration.

    Args:
        message: Summary line
        diagnostics: One entry per problem, each with 'field' or 'line' and 'message'
    """

    def __init__(self, message: str, diagnostics: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []

    def __str__(self) -> str:
        lines = [super().__str__()]
        for item in self.diagnostics:
            where = item.get("field") or f"line {item.get('line')}"
            lines.append(f"  - {where}: {item.get('message')}")
        return "\n".join(lines)
