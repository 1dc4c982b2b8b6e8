"""Experiment configuration and its flat key=value file format."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

MODELS = ("anogan", "egbad", "ganomaly")
LOSSES = ("bce", "fm")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "mnist"
    data_dir: str = ""
    anomaly_class: int = 0
    model: str = "egbad"
    train_loss: str = "bce"
    residual: bool = False
    test_score: str = "fm"  # ganomaly always scores in latent space and records "latent"
    epochs: int = 20
    batch: int = 64
    latent_dim: int = 64
    hidden: int = 128
    depth: int = 1
    lr: float = 2e-4
    lam: float = 0.1
    weights: tuple[float, float, float] = (1.0, 50.0, 1.0)
    gamma_steps: int = 500
    restarts: int = 1
    search_lr: float = 0.01
    test_limit: int = 0  # score only the first N test rows (0 = all)
    seed: int = 0
    limit: int = 0  # subsample the pooled dataset (0 = all)
    test_on_all: bool = False
    encoder_act: bool = False
    model_selection: bool = True

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.train_loss not in LOSSES:
            raise ValueError(f"train_loss must be one of {LOSSES}")
        allowed = ("latent",) if self.model == "ganomaly" else LOSSES
        if self.test_score not in allowed:
            raise ValueError(f"test_score for {self.model} must be one of {allowed}")
        if self.model != "egbad" and self.residual:
            raise ValueError("the residual training term only exists for egbad")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")

    def replace(self, **kw) -> ExperimentConfig:
        return dataclasses.replace(self, **kw)

    def training_key(self) -> str:
        """Identifies one trained model; cells differing only in test_score share it."""
        d = to_dict(self)
        d.pop("test_score")
        d.pop("test_limit")
        d.pop("data_dir")
        return ";".join(f"{k}={v}" for k, v in d.items())

    def config_id(self) -> str:
        return f"{self.dataset}-c{self.anomaly_class}-{self.model}-{self.train_loss}" \
               f"{'-res' if self.residual else ''}-{self.test_score}-s{self.seed}"

    def derived_seed(self) -> int:
        """Stable per-training seed from the master seed and the training key."""
        h = hashlib.sha256(self.training_key().encode()).digest()
        return int.from_bytes(h[:8], "little")


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_dict(cfg: ExperimentConfig) -> dict[str, str]:
    return {f.name: _format(getattr(cfg, f.name)) for f in fields(cfg)}


def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def coerce(name: str, value: str):
    """Convert a text value to the type of ExperimentConfig field ``name``."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in types:
        raise KeyError(f"unknown config key {name!r}")
    t = types[name]
    if t == "bool":
        return _parse_bool(value)
    if t == "int":
        return int(value)
    if t == "float":
        return float(value)
    if t.startswith("tuple"):
        parts = tuple(float(x) for x in value.split(","))
        if len(parts) != 3:
            raise ValueError("weights take three values: adv,con,enc")
        return parts
    return value.strip()


def from_dict(d: dict[str, str]) -> ExperimentConfig:
    return ExperimentConfig(**{k: coerce(k, v) for k, v in d.items()})


def dumps(cfg: ExperimentConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in to_dict(cfg).items())


def read_kv(path) -> dict[str, str]:
    """Flat key=value lines; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def loads(text: str) -> ExperimentConfig:
    d = {}
    for line in text.splitlines():
        if line.strip():
            k, v = line.split("=", 1)
            d[k.strip()] = v.strip()
    return from_dict(d)
