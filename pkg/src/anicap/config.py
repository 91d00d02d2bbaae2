"""Run configuration: one YAML file drives a pipeline run."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .norms import MinkowskiNorm

TASKS = ("solve", "measures", "psum", "check-norm", "check-condition", "verify")

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    task: str
    norm: dict
    omega0: float = -0.5
    dimension: int = 1                # n, the cap dimension (1 or 2)
    resolution: object = None         # int or [Nr, Nphi]
    seed: int = 0
    output: str = "out"
    params: dict = field(default_factory=dict)

    @staticmethod
    def load(path):
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except Exception as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        return RunConfig.from_dict(raw)

    @staticmethod
    def from_dict(raw):
        raw = dict(raw)
        task = raw.pop("task", None)
        if task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
        norm = raw.pop("norm", None)
        if not isinstance(norm, dict) or "family" not in norm:
            raise ConfigError("config needs a norm block with a family")
        dim = int(raw.pop("dimension", 1))
        if dim not in (1, 2):
            raise ConfigError("dimension (n) must be 1 or 2")
        omega0 = float(raw.pop("omega0", -0.5))
        resolution = raw.pop("resolution", 200 if dim == 1 else [32, 32])
        seed = int(raw.pop("seed", 0))
        output = str(raw.pop("output", "out"))
        params = {k: raw.pop(k) for k in list(raw)
                  if k in ("solve", "measures", "psum", "verify")}
        if raw:
            raise ConfigError(f"unknown config keys: {sorted(raw)}")
        cfg = RunConfig(task=task, norm=norm, omega0=omega0, dimension=dim,
                        resolution=resolution, seed=seed, output=output,
                        params=params)
        cfg.validate()
        return cfg

    def validate(self):
        fam = self.norm.get("family")
        if fam not in ("isotropic", "ellipsoidal", "perturbed"):
            raise ConfigError(f"unknown norm family {fam!r}")
        if fam != "isotropic" and "matrix" not in self.norm:
            raise ConfigError(f"{fam} norm needs a matrix")
        if self.dimension == 1:
            if not isinstance(self.resolution, (int, float)) or int(self.resolution) < 16:
                raise ConfigError("n=1 resolution must be an integer >= 16")
        else:
            res = self.resolution
            if isinstance(res, (int, float)):
                res = [int(res), int(res)]
            if (not isinstance(res, (list, tuple)) or len(res) != 2
                    or min(int(r) for r in res) < 16):
                raise ConfigError("n=2 resolution must be [Nrho, Nphi], each >= 16")
            self.resolution = [int(res[0]), int(res[1])]
        if self.task == "solve":
            sp = self.params.get("solve", {})
            if "p" not in sp:
                raise ConfigError("solve task needs solve.p")
            if float(sp["p"]) < 1:
                raise ConfigError("p must be >= 1")
            if "f" not in sp:
                raise ConfigError("solve task needs solve.f "
                                  "(expression or {csv: path})")
        if self.task == "psum":
            ps = self.params.get("psum", {})
            for key in ("body_k", "body_l"):
                if key not in ps:
                    raise ConfigError(f"psum task needs psum.{key}")

    def build_norm(self) -> MinkowskiNorm:
        fam = self.norm["family"]
        kw = {}
        if fam != "isotropic":
            kw["matrix"] = np.asarray(self.norm["matrix"], float)
        if fam == "perturbed":
            kw["eps"] = float(self.norm.get("eps", 0.0))
            kw["harmonics"] = [(float(h["coef"]), tuple(h["powers"]))
                               for h in self.norm.get("harmonics", [])]
        return MinkowskiNorm(fam, self.dimension + 1, **kw)

    def to_dict(self):
        return {
            "task": self.task,
            "norm": self.norm,
            "omega0": self.omega0,
            "dimension": self.dimension,
            "resolution": self.resolution,
            "seed": self.seed,
            "output": self.output,
            **self.params,
        }


def dump_report(report, path):
    """Deterministic JSON: sorted keys, full-precision floats."""
    def default(o):
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.bool_,)):
            return bool(o)
        raise TypeError(f"not serializable: {type(o)}")
    text = json.dumps(report, sort_keys=True, indent=1, default=default)
    Path(path).write_text(text + "\n")
    return text
