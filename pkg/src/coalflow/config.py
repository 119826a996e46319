"""Run configuration: JSON in, validated dataclass out, canonical hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .motions import MotionModel
from .skeleton import SkeletonConfig, model_from_dict, model_to_dict

DEFAULT_SKELETON = {
    "window": [0.0, 1.0], "dx": 1.0 / 32, "t0": 0.0, "t1": 1.0,
    "dt": 1e-3, "row_period": None, "observe": "all",
}

KNOWN_BUNDLES = (
    "counterexample", "axioms", "cocycle", "motion-laws", "meeting-bound",
    "cluster-count", "skeleton-sp", "stopped", "shift", "rng",
    "negative-controls",
)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    out: str = "runs/out"
    model: dict = field(default_factory=lambda: {"kind": "arratia"})
    skeleton: dict = field(default_factory=lambda: dict(DEFAULT_SKELETON))
    bundles: tuple = ("counterexample", "axioms")
    scale: float = 1.0                      # global replica multiplier (CI knob)
    replicas: dict = field(default_factory=dict)   # per-bundle overrides
    export_stride: int = 10                 # trajectory CSV decimation

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if self.scale <= 0:
            raise ConfigError("scale must be positive")
        for b in self.bundles:
            if b not in KNOWN_BUNDLES:
                raise ConfigError(f"unknown bundle {b!r}; known: {KNOWN_BUNDLES}")
        model_from_dict(self.model)  # validates model dict

    def motion_model(self) -> MotionModel:
        return model_from_dict(self.model)

    def skeleton_config(self) -> SkeletonConfig:
        sk = dict(DEFAULT_SKELETON, **self.skeleton)
        observe = sk["observe"]
        if not isinstance(observe, str):
            observe = tuple(observe)
        return SkeletonConfig.rows(
            window=tuple(sk["window"]), dx=sk["dx"], t0=sk["t0"], t1=sk["t1"],
            dt=sk["dt"], model=self.motion_model(),
            row_period=sk.get("row_period"),
            start_times=tuple(sk["start_times"]) if "start_times" in sk else None,
            observe=observe)

    def n_replicas(self, bundle: str, default: int) -> int:
        n = self.replicas.get(bundle, default)
        return max(1, int(round(n * self.scale)))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "out": self.out, "model": self.model,
            "skeleton": self.skeleton, "bundles": list(self.bundles),
            "scale": self.scale, "replicas": self.replicas,
            "export_stride": self.export_stride,
        }

    def canonical_json(self) -> str:
        # the output directory is where results land, not a semantic input,
        # so it stays out of the identity hash
        d = self.to_dict()
        d.pop("out")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        known = {"seed", "out", "model", "skeleton", "bundles", "scale",
                 "replicas", "export_stride"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kwargs = dict(d)
        if "bundles" in kwargs:
            kwargs["bundles"] = tuple(kwargs["bundles"])
        return RunConfig(**kwargs)

    @staticmethod
    def load(path) -> "RunConfig":
        with open(path) as fh:
            return RunConfig.from_dict(json.load(fh))
