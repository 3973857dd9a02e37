"""Training configuration and the flat ``key = value`` config file format."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    dim: int = 200
    lr: float = 1e-3
    window: int = 7
    tau: float = 0.03
    lam: float = 0.9
    dropout: float = 0.2
    gcn_layers: int = 2
    aggregator: str = "rgcn"
    kernels: int = 50
    kernel_size: int = 3
    decoder_dropout: float = 0.2
    batch_norm: bool = True
    epochs: int = 30
    patience: int = 5
    seed: int = 0
    grad_clip: float = 1.0
    use_global: bool = True
    use_local: bool = True
    use_eatt: bool = True
    use_cl: bool = True
    noise_sigma: float = 0.0
    online: bool = False
    online_steps: int = 3
    score_mode: str = "softmax"  # or "sigmoid"
    tkg_reduction: str = "sum"  # or "mean"
    cross_label_positives: bool = True
    contrast_steps: str = "last"  # or "window"
    global_gate_ref: str = "evolved"  # or "initial"
    candidates: str = "fused"  # or "local"
    static_graph: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must lie in [0, 1]")
        if self.dim < 1 or self.gcn_layers < 1:
            raise ConfigError("dim and gcn_layers must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not (self.use_local or self.use_global):
            raise ConfigError("at least one of use_local / use_global must be enabled")
        for name, allowed in (
            ("score_mode", {"softmax", "sigmoid"}),
            ("tkg_reduction", {"sum", "mean"}),
            ("contrast_steps", {"last", "window"}),
            ("global_gate_ref", {"evolved", "initial"}),
            ("candidates", {"fused", "local"}),
        ):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {sorted(allowed)}")
        if self.static_graph:
            raise ConfigError("static_graph: the static-KG auxiliary constraint is a hook only and is not implemented")

    @property
    def contrast_active(self) -> bool:
        return self.use_cl and self.use_local and self.use_global

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**{k: _coerce(known[k], v) for k, v in values.items()})


# per-dataset hyperparameters: window length and temperature
DATASET_PRESETS = {
    "icews14": {"window": 7, "tau": 0.03},
    "icews18": {"window": 7, "tau": 0.03},
    "icews05-15": {"window": 9, "tau": 0.07},
    "gdelt": {"window": 7, "tau": 0.07},
}

ABLATIONS = {
    "LogCL": {},
    "LogCL-G": {"use_local": False},
    "LogCL-L": {"use_global": False},
    "LogCL-w/o-eatt": {"use_eatt": False},
    "LogCL-w/o-cl": {"use_cl": False},
}


def _coerce(f: dataclasses.Field, value):
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    if kind == "bool":
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in {"1", "true", "yes", "on"}:
            return True
        if text in {"0", "false", "no", "off"}:
            return False
        raise ConfigError(f"{f.name}: cannot read {value!r} as a boolean")
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{f.name}: cannot read {value!r} as {kind}") from None
    return str(value)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def load_config(path=None, overrides: dict[str, Any] | None = None, dataset: str | None = None) -> TrainConfig:
    """Defaults < dataset preset < config file < explicit overrides."""
    values: dict[str, Any] = {}
    if dataset and dataset.lower() in DATASET_PRESETS:
        values.update(DATASET_PRESETS[dataset.lower()])
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8"), str(path)))
    values.update(overrides or {})
    return TrainConfig.from_dict(values)


def dump_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
