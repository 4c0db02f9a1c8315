"""
Progress reporting for long pipeline loops.

Provides tqdm progress bars and run statistics for differential inverse
kinematics over many nodes and for parameter sweeps.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, Iterator, List, Optional

from tqdm import tqdm

logger = logging.getLogger(__name__)

MAX_LOGGED_ERRORS = 10


@dataclass
class RunStats:
    """Counters and timing for one tracked loop."""

    label: str = "run"
    start_time: datetime = field(default_factory=datetime.now)
    end_time: Optional[datetime] = None
    total: int = 0
    processed: int = 0
    succeeded: int = 0
    failed: int = 0
    errors: List[str] = field(default_factory=list)

    def mark_complete(self):
        self.end_time = datetime.now()

    @property
    def duration(self) -> float:
        """Elapsed seconds (up to now while running)."""
        end = self.end_time or datetime.now()
        return (end - self.start_time).total_seconds()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "duration_seconds": round(self.duration, 2),
            "total": self.total,
            "processed": self.processed,
            "succeeded": self.succeeded,
            "failed": self.failed,
            "error_count": len(self.errors),
        }


class ProgressReporter:
    """tqdm-backed progress tracking with a summary block."""

    def __init__(self, verbose: bool = True):
        """
        Args:
            verbose: Whether to draw progress bars
        """
        self.verbose = verbose
        self.stats = RunStats()
        self._bar: Optional[tqdm] = None

    @contextmanager
    def track(self, total: int, description: str = "Processing", unit: str = "nodes") -> Iterator["ProgressReporter"]:
        """
        Track progress over a loop of known length.

        Args:
            total: Number of items
            description: Progress bar label
            unit: Item unit shown on the bar

        Yields:
            This reporter
        """
        self.stats = RunStats(label=description, total=total)
        if self.verbose:
            self._bar = tqdm(total=total, desc=description, unit=unit, ncols=100, leave=False)
        try:
            yield self
        finally:
            if self._bar:
                self._bar.close()
                self._bar = None
            self.stats.mark_complete()

    def update(self, n: int = 1):
        self.stats.processed += n
        if self._bar:
            self._bar.update(n)

    def record_success(self):
        self.stats.succeeded += 1
        self.update()

    def record_failure(self, error: Optional[str] = None):
        self.stats.failed += 1
        if error:
            self.record_error(error)
        self.update()

    def record_error(self, error: str):
        self.stats.errors.append(error)
        if len(self.stats.errors) <= MAX_LOGGED_ERRORS:
            logger.error(error)

    def set_postfix(self, **kwargs):
        if self._bar:
            self._bar.set_postfix(**kwargs)

    def print_summary(self):
        """Print a summary of the last tracked loop."""
        stats = self.stats.to_dict()
        print("\n" + "=" * 60)
        print(f"{stats['label'].upper()} SUMMARY")
        print("=" * 60)
        print(f"Duration: {stats['duration_seconds']} seconds")
        print(f"Processed: {stats['processed']} / {stats['total']}")
        print(f"Succeeded: {stats['succeeded']}")
        print(f"Failed: {stats['failed']}")
        if self.stats.errors:
            print("\nFirst few errors:")
            for i, error in enumerate(self.stats.errors[:5], 1):
                print(f"  {i}. {error}")
        print("=" * 60 + "\n")
