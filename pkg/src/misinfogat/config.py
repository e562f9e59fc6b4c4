"""Pipeline configuration: flat key=value files with flag overrides.

One dataclass carries every tunable the CLI exposes.  File values are
plain text (`epochs=800`); later sources win, so the precedence is
defaults < config file < command-line --set/flags.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .gat import Mode
from .graphlime import ExplainerConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


MODE_TOKENS = {
    "graph": Mode.GRAPH_ONLY,
    "graph_only": Mode.GRAPH_ONLY,
    "text": Mode.TEXT_ONLY,
    "text_only": Mode.TEXT_ONLY,
    "multi": Mode.MULTIMODAL,
    "multimodal": Mode.MULTIMODAL,
}


def parse_mode(token: str) -> Mode:
    try:
        return MODE_TOKENS[token.strip().lower()]
    except KeyError:
        raise ConfigError(
            f"unknown mode {token!r}; expected one of {sorted(MODE_TOKENS)}"
        ) from None


@dataclass
class PipelineConfig:
    # bundle paths
    nodes: str = "nodes.tsv"
    edges: str = "edges.tsv"
    splits: str = "splits.tsv"
    embeddings: str = "embeddings.mmeb"
    checkpoint: str = "model.gatcp"
    out_dir: str = "out"
    # training (paper defaults: lr 0.005, 800 epochs, seeds 0-4)
    learning_rate: float = 0.005
    epochs: int = 800
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    seeds: tuple = (0, 1, 2, 3, 4)
    mode: str = "multimodal"
    # explanation
    hops: int = 2
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    rho: float = 0.1
    min_samples: int = 5
    steps: int = 50
    # feature assembly
    couser_cap: int = 10
    transform: str = "log1p_zscore"
    use_fallback: bool = True
    conflict_policy: str = "drop"

    def train_config(self, mode: Mode | None = None, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            seed=self.seed if seed is None else seed,
            mode=parse_mode(self.mode) if mode is None else mode,
        )

    def explainer_config(self) -> ExplainerConfig:
        return ExplainerConfig(
            hops=self.hops,
            sigma_x=self.sigma_x,
            sigma_y=self.sigma_y,
            rho=self.rho,
            min_samples=self.min_samples,
        )


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}
_BOOL = {"true": True, "false": False, "1": True, "0": False}


def _coerce(key: str, raw: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    default = getattr(PipelineConfig, key)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in _BOOL:
                raise ValueError(raw)
            return _BOOL[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(part) for part in raw.split(",") if part.strip() != "")
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None
    return raw


def parse_config_file(path) -> dict:
    """key=value lines; blank lines and #-comments skipped."""
    pairs = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, _, value = stripped.partition("=")
            pairs[key.strip()] = value
    return pairs


def build_config(config_path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then the file, then overrides; values typed per field."""
    merged: dict = {}
    if config_path is not None:
        merged.update(parse_config_file(config_path))
    merged.update(overrides or {})
    kwargs = {k: _coerce(k, str(v)) for k, v in merged.items()}
    cfg = PipelineConfig(**kwargs)
    if cfg.transform not in ("raw", "log1p_zscore"):
        raise ConfigError(f"unknown transform {cfg.transform!r}")
    if cfg.conflict_policy not in ("drop", "majority"):
        raise ConfigError(f"unknown conflict_policy {cfg.conflict_policy!r}")
    parse_mode(cfg.mode)
    return cfg
