"""Flat ``key = value`` run configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    n_nodes: int = 0              # 0: take it from the data at train time
    tau: int = 12
    horizon: int = 12
    d: int = 16
    m_hyperedges: int = 8
    k_patches: int = 4
    p_hops: int = 2
    hgat_heads: int = 4
    hgat_layers: int = 1
    hgt_heads: int = 4
    hgt_layers: int = 2
    dropout: float = 0.1
    temperature: float = 0.05
    hard_sampling: bool = True
    spatial: bool = True
    batch_size: int = 32
    lr: float = 1e-3
    epochs: int = 30
    patience_lr: int = 5
    lr_factor: float = 0.5
    patience_stop: int = 10
    clip_norm: float = 5.0
    split: str = "0.6,0.2,0.2"
    loss: str = "mae"
    seed: int = 0
    missing: str = "none"
    missing_ratio: float = 0.0
    failure_prob: float = 0.0015

    def __post_init__(self):
        if self.loss not in ("mae", "nll"):
            raise ConfigError(f"loss must be 'mae' or 'nll', got {self.loss!r}")
        if self.missing not in ("none", "point", "block"):
            raise ConfigError(f"missing must be none|point|block, got {self.missing!r}")
        self.split_ratios()

    def split_ratios(self) -> tuple[float, float, float]:
        try:
            r = tuple(float(x) for x in self.split.split(","))
        except ValueError:
            raise ConfigError(f"bad split {self.split!r}") from None
        if len(r) != 3:
            raise ConfigError(f"split needs three ratios, got {self.split!r}")
        return r

    def model_config(self) -> ModelConfig:
        if self.n_nodes < 1:
            raise ConfigError("n_nodes is unset")
        return ModelConfig(
            n_nodes=self.n_nodes, tau=self.tau, horizon=self.horizon, d=self.d,
            m_hyperedges=self.m_hyperedges, k_patches=self.k_patches, p_hops=self.p_hops,
            hgat_heads=self.hgat_heads, hgat_layers=self.hgat_layers, hgt_heads=self.hgt_heads,
            hgt_layers=self.hgt_layers, dropout=self.dropout, temperature=self.temperature,
            hard_sampling=self.hard_sampling, uncertainty=self.loss == "nll", spatial=self.spatial)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, batch_size=self.batch_size,
                           patience_lr=self.patience_lr, lr_factor=self.lr_factor,
                           patience_stop=self.patience_stop, clip_norm=self.clip_norm,
                           seed=self.seed, loss_kind=self.loss)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(name: str, typ, raw: str):
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r} as {typ}") from None


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines (``#`` comments); unknown keys are errors."""
    types = {f.name: f.type for f in fields(RunConfig)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        updates[key] = _coerce(key, types[key], value)
    return replace(base or RunConfig(), **updates)


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(), base)
