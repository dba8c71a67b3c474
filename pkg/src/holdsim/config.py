"""Run configuration: JSON schema, validation, and semantic hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_INTERVALS = [[1, 30], [31, 90], [91, 180], [181, 365], [366, 730], [731, 1095]]


@dataclass
class RunConfig:
    data_dir: str = "data"
    output_dir: str = "out"
    baskets: dict[str, list[str] | None] = field(default_factory=lambda: {"ALL": None})
    intervals: list[list[int]] = field(default_factory=lambda: [list(i) for i in DEFAULT_INTERVALS])
    n_per_interval: int = 10_000
    fee: float = 0.001
    seed_simulate: int = 42
    seed_select: int = 7
    seed_irf: int = 9
    horizons: list[int] | None = None  # default: interval upper bounds
    tau_global: float = 0.55
    tau_cond: float = 0.50
    lambda_rw1: float = 1.0
    bootstrap_select: int = 1000
    bootstrap_irf: int = 1000
    econ_basket: str = "ALL"
    workers: int = 1
    shard_size: int = 65536
    foreign_surface: str | None = None  # CSV in the irf_surface schema for comparison

    def __post_init__(self):
        if self.horizons is None:
            self.horizons = [hi for _, hi in self.intervals]

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)

    def validate(self) -> None:
        if not Path(self.data_dir).is_dir():
            raise ValueError(f"data_dir does not exist: {self.data_dir}")
        for lo, hi in self.intervals:
            if not (1 <= lo <= hi):
                raise ValueError(f"invalid interval [{lo}, {hi}]")
        if self.n_per_interval < 1:
            raise ValueError("n_per_interval must be >= 1")
        if not (0 <= self.fee < 1):
            raise ValueError("fee must be in [0, 1)")
        if self.econ_basket not in self.baskets:
            raise ValueError(f"econ_basket {self.econ_basket!r} not in baskets")

    def semantic_dict(self) -> dict:
        """All semantically meaningful fields; cosmetic paths excluded."""
        d = {
            f: getattr(self, f)
            for f in self.__dataclass_fields__
            if f not in ("output_dir",)
        }
        return d

    def config_hash(self) -> str:
        payload = json.dumps(self.semantic_dict(), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]
