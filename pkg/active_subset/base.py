"""Configurable experiment steps.

A component keeps the keyword settings it was built with, so a run can log
which strategy it used and rebuild it from the same settings.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Mapping, Optional, Sequence

from active_subset.exceptions import InvalidInputError


class BaseComponent(ABC):
    """A step of an experiment built from keyword settings."""

    def __init__(self, **config):
        self.config: Dict[str, Any] = config

    def __repr__(self) -> str:
        settings = ", ".join(f"{key}={value!r}" for key, value in sorted(self.config.items()))
        return f"{type(self).__name__}({settings})"

    @abstractmethod
    def run(self, data, **kwargs):
        """Apply the step to `data`."""


class BaseSelector(BaseComponent):
    """Decides which scored pool instances move to the training set."""

    @abstractmethod
    def select(self, scored: Sequence, k: int, subject_map: Optional[Mapping[int, str]] = None):
        """Choose the transfer for one iteration.

        Args:
            scored: ScoredInstance list for the current pool.
            k: Instances or subjects to move.
            subject_map: instance_id -> subject id.

        Returns:
            TransferDecision.
        """

    def run(self, data, k: int = 1, subject_map: Optional[Mapping[int, str]] = None):
        """select() on a list of scored instances."""
        if not isinstance(data, list):
            raise InvalidInputError(f"expected a list of scored instances, got {type(data).__name__}")
        return self.select(data, k, subject_map=subject_map)
