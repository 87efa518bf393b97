"""Run configuration: one strict JSON document covering the whole pipeline.

Every command resolves its configuration to a fully populated dict and
writes that snapshot next to its outputs, so any result can be replayed
from the snapshot alone.  Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields

from .generate import GenerationConfig
from .models import LstmPosConfig
from .streaming import RendezvousConfig
from .training import CurriculumConfig, TrainConfig

SEED_ENV = "REACH_SEED"


@dataclass
class GammaSpec:
    """Architecture knobs for the wrist position net."""

    mask: str = "all"
    widths: tuple = (512, 512, 512)
    half: float | None = None    # label cube half-width; None fits to data

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if any(w < 1 for w in self.widths):
            raise ValueError("layer widths must be positive")

    def to_dict(self):
        return {"mask": self.mask, "widths": list(self.widths), "half": self.half}

    @classmethod
    def from_dict(cls, d: dict) -> "GammaSpec":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown gamma config keys: {sorted(unknown)}")
        return cls(**d)


def _default_phi() -> LstmPosConfig:
    return LstmPosConfig(mode="pos_only", mask="all", H=60)


@dataclass
class RunConfig:
    """Top-level configuration; seed (when set) masters every section seed."""

    seed: int | None = None
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    gamma: GammaSpec = field(default_factory=GammaSpec)
    phi: LstmPosConfig = field(default_factory=_default_phi)
    gamma_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=30))
    phi_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=30))
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    rendezvous: RendezvousConfig = field(default_factory=RendezvousConfig)

    def __post_init__(self):
        if self.seed is not None:
            self.set_seed(int(self.seed))

    def set_seed(self, seed: int):
        self.seed = int(seed)
        self.generation.seed = self.seed
        self.gamma_train.seed = self.seed
        self.phi_train.seed = self.seed

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "generation": self.generation.to_dict(),
            "gamma": self.gamma.to_dict(),
            "phi": self.phi.to_dict(),
            "gamma_train": self.gamma_train.to_dict(),
            "phi_train": self.phi_train.to_dict(),
            "curriculum": self.curriculum.to_dict(),
            "rendezvous": self.rendezvous.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        parsers = {
            "generation": GenerationConfig.from_dict,
            "gamma": GammaSpec.from_dict,
            "phi": LstmPosConfig.from_dict,
            "gamma_train": lambda s: TrainConfig(**s),
            "phi_train": lambda s: TrainConfig(**s),
            "curriculum": lambda s: CurriculumConfig(**s),
            "rendezvous": RendezvousConfig.from_dict,
        }
        kwargs = {}
        for key, value in d.items():
            if key == "seed":
                kwargs["seed"] = value
            elif value is not None:
                try:
                    kwargs[key] = parsers[key](value)
                except TypeError as exc:
                    raise ValueError(f"bad {key} config: {exc}") from exc
        return cls(**kwargs)


def load_config(path: str | None) -> RunConfig:
    """Parse a JSON config file (or start from defaults), then apply REACH_SEED."""
    if path is None:
        cfg = RunConfig()
    else:
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        cfg = RunConfig.from_dict(doc)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            cfg.set_seed(int(env_seed))
        except ValueError as exc:
            raise ValueError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from exc
    return cfg


def write_snapshot(cfg: RunConfig, out_dir: str, command: str, extra: dict | None = None):
    """Write the fully resolved config next to the command's outputs."""
    os.makedirs(out_dir, exist_ok=True)
    doc = {"command": command, "config": cfg.to_dict()}
    if extra:
        doc.update(extra)
    path = os.path.join(out_dir, f"{command.replace('-', '_')}_config.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
