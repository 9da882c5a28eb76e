"""Run configuration for the decision-mining engine."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Literal, Optional

from drift_adwin import DEFAULT_DELTA
from rule_miner import TreeConfig
from stream_dfg import DEFAULT_EPSILON
from control_flow import DEFAULT_DEP_THRESHOLD
from stream_ingest import DEFAULT_QUEUE_CAPACITY

AdwinInput = Literal["average", "raw"]
ADWIN_INPUTS = ("average", "raw")


class ConfigError(ValueError):
    """A configuration value outside its documented range."""


@dataclass(frozen=True)
class RunConfig:
    """
    Every tunable of a run.

    The per-family deltas default to `delta`; `monitor_warmup` defaults to
    `min_mine`.
    """

    grace: int = 200
    epsilon: float = DEFAULT_EPSILON
    dep_threshold: float = DEFAULT_DEP_THRESHOLD
    net_stride: int = 100
    delta: float = DEFAULT_DELTA
    adwin_input: AdwinInput = "average"
    min_mine: int = 30
    out_dir: Optional[Path] = None

    delta_accuracy: Optional[float] = None
    delta_frequency: Optional[float] = None
    delta_data: Optional[float] = None
    adwin_stride: int = 1
    monitor_warmup: Optional[int] = None
    max_open_cases: int = 10_000
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY
    delimiter: str = ","
    tree: TreeConfig = field(default_factory=TreeConfig)

    def __post_init__(self) -> None:
        def check(ok: bool, name: str, what: str) -> None:
            if not ok:
                raise ConfigError(
                    f"{name} must be {what}, got {getattr(self, name)!r}")

        check(self.grace >= 1, "grace", ">= 1")
        check(0.0 < self.epsilon < 1.0, "epsilon", "in (0, 1)")
        check(0.0 < self.dep_threshold <= 1.0, "dep_threshold", "in (0, 1]")
        check(self.net_stride >= 1, "net_stride", ">= 1")
        check(0.0 < self.delta < 1.0, "delta", "in (0, 1)")
        check(self.adwin_input in ADWIN_INPUTS, "adwin_input",
              " or ".join(ADWIN_INPUTS))
        check(self.min_mine >= 2, "min_mine", ">= 2")
        check(self.adwin_stride >= 1, "adwin_stride", ">= 1")
        check(self.max_open_cases >= 1, "max_open_cases", ">= 1")
        check(self.queue_capacity >= 1, "queue_capacity", ">= 1")
        check(len(self.delimiter) == 1, "delimiter", "a single character")

        for name in ("delta_accuracy", "delta_frequency", "delta_data"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, self.delta)
            check(0.0 < getattr(self, name) < 1.0, name, "in (0, 1)")
        if self.monitor_warmup is None:
            object.__setattr__(self, "monitor_warmup", self.min_mine)
        check(self.monitor_warmup >= 0, "monitor_warmup", ">= 0")

        check(self.tree.max_depth >= 1, "tree", "a TreeConfig with max_depth >= 1")
        check(self.tree.min_leaf >= 1, "tree", "a TreeConfig with min_leaf >= 1")
        check(self.tree.min_gain >= 0, "tree", "a TreeConfig with min_gain >= 0")


def describe(config: RunConfig) -> str:
    """One-line rendering of the settings that shape a run."""
    skip = {"out_dir", "tree"}
    parts = [f"{f.name}={getattr(config, f.name)}"
             for f in fields(config) if f.name not in skip]
    return " ".join(parts)
