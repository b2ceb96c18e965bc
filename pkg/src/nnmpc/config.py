"""Run configuration: one JSON document drives every CLI command.

Schema (all sections optional; unknown keys anywhere are rejected):

    {
      "seed": 0,
      "out_dir": "runs/exp",
      "mpc":      { MpcConfig fields except bounds },
      "train":    { TrainConfig fields except seed },
      "generate": { "n_sims", "steps", "regime" },
      "bc":       { BcConfig fields except mpc_cfg/train_cfg/seed },
      "dagger":   { DaggerConfig fields except mpc_cfg/train_cfg/seed },
      "eval":     { EvalConfig fields except mpc_cfg/seed }
    }

The single global seed fans out to per-component seeds (see seeding.py),
so a run is reproducible from the echoed config alone.
"""

import json
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .evaluation import EvalConfig
from .imitation import BcConfig, DaggerConfig
from .mlp import TrainConfig
from .mpc import MpcConfig
from .seeding import derive_seed


def _kwargs(cls, section: dict, where: str, excluded=()):
    allowed = {f.name for f in fields(cls)} - set(excluded)
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")
    return dict(section)


@dataclass(frozen=True)
class GenerateSection:
    n_sims: int = 1600
    steps: int = 250
    regime: str = "inside"


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/out"
    mpc_cfg: MpcConfig = field(default_factory=MpcConfig)
    train_raw: dict = field(default_factory=dict)
    generate: GenerateSection = field(default_factory=GenerateSection)
    bc_raw: dict = field(default_factory=dict)
    dagger_raw: dict = field(default_factory=dict)
    eval_raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        top = {"seed", "out_dir", "mpc", "train", "generate", "bc", "dagger", "eval"}
        unknown = sorted(set(doc) - top)
        if unknown:
            raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
        try:
            mpc_cfg = MpcConfig(**_kwargs(MpcConfig, doc.get("mpc", {}),
                                          "mpc", excluded=("bounds",)))
            gen = GenerateSection(**_kwargs(GenerateSection, doc.get("generate", {}),
                                            "generate"))
            rc = cls(seed=int(doc.get("seed", 0)),
                     out_dir=str(doc.get("out_dir", "runs/out")),
                     mpc_cfg=mpc_cfg,
                     train_raw=_kwargs(TrainConfig, doc.get("train", {}),
                                       "train", excluded=("seed",)),
                     generate=gen,
                     bc_raw=_kwargs(BcConfig, doc.get("bc", {}), "bc",
                                    excluded=("mpc_cfg", "train_cfg", "seed")),
                     dagger_raw=_kwargs(DaggerConfig, doc.get("dagger", {}), "dagger",
                                        excluded=("mpc_cfg", "train_cfg", "seed")),
                     eval_raw=_kwargs(EvalConfig, doc.get("eval", {}), "eval",
                                      excluded=("mpc_cfg", "seed")))
            # validate eagerly so bad values fail at load time, not mid-run
            rc.train_config()
            rc.bc_config()
            rc.dagger_config()
            rc.eval_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return rc

    @classmethod
    def from_json_file(cls, path) -> "RunConfig":
        try:
            with open(path) as f:
                doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc)

    def train_config(self, tag: str = "train") -> TrainConfig:
        return TrainConfig(seed=derive_seed(self.seed, tag), **self.train_raw)

    def bc_config(self) -> BcConfig:
        return BcConfig(mpc_cfg=self.mpc_cfg, train_cfg=self.train_config(),
                        seed=self.seed, **self.bc_raw)

    def dagger_config(self) -> DaggerConfig:
        return DaggerConfig(mpc_cfg=self.mpc_cfg, train_cfg=self.train_config(),
                            seed=self.seed, **self.dagger_raw)

    def eval_config(self) -> EvalConfig:
        return EvalConfig(mpc_cfg=self.mpc_cfg, seed=derive_seed(self.seed, "eval-cmd"),
                          **self.eval_raw)
