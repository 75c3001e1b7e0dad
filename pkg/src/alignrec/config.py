"""Flat ``key = value`` configuration with pinned defaults.

Every key has a default, unknown keys are rejected, and the canonical
serialization (fixed key order, repr floats) is what gets embedded in
checkpoints so that identical configs produce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

FUSION_STRATEGIES = ("concat_project", "attention_pool", "gated")
REC_LOSS_KINDS = ("bce", "bpr")
ACTIVATIONS = ("sigmoid", "leaky_relu", "identity")


@dataclass
class EncoderConfig:
    """Shape of the encoder stack."""

    dim: int = 64
    heads: int = 4
    layers: int = 3
    dropout: float = 0.1
    fusion: str = "gated"
    activation: str = "leaky_relu"

    def validate(self) -> None:
        if self.dim < 1 or self.dim % self.heads != 0:
            raise ConfigError(f"d={self.dim} must be positive and divisible by heads={self.heads}")
        if self.layers < 1:
            raise ConfigError(f"L must be >= 1, got {self.layers}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.fusion not in FUSION_STRATEGIES:
            raise ConfigError(f"unknown fusion strategy {self.fusion!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


@dataclass
class TrainConfig:
    """Hyperparameters for both training phases."""

    lr: float = 1e-3
    tau: float = 0.1
    lam: float = 0.0
    epochs_pretrain: int = 100
    epochs_finetune: int = 100
    batch_size: int = 256
    negatives: int = 64
    bank_capacity: int = 4096
    patience: int = 10
    k_attr: int = 10
    fanout: int = 16
    hops: int = 2
    path_max_len: int = 3
    rec_loss_kind: str = "bce"
    seed: int = 42

    def validate(self) -> None:
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")
        if self.batch_size < 2:
            raise ConfigError(f"batch must be >= 2, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.epochs_pretrain < 0 or self.epochs_finetune < 0:
            raise ConfigError("epoch counts must be non-negative")
        for name, value in (
            ("k_neg", self.negatives),
            ("bank", self.bank_capacity),
            ("k_attr", self.k_attr),
            ("fanout", self.fanout),
            ("hops", self.hops),
            ("path_len", self.path_max_len),
        ):
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if self.rec_loss_kind not in REC_LOSS_KINDS:
            raise ConfigError(f"unknown rec_loss {self.rec_loss_kind!r}")


# File key -> (target, attribute, type). Order fixes the canonical layout.
_KEYS: list[tuple[str, str, str, type]] = [
    ("d", "enc", "dim", int),
    ("heads", "enc", "heads", int),
    ("L", "enc", "layers", int),
    ("dropout", "enc", "dropout", float),
    ("lr", "train", "lr", float),
    ("tau", "train", "tau", float),
    ("lambda", "train", "lam", float),
    ("E1", "train", "epochs_pretrain", int),
    ("E2", "train", "epochs_finetune", int),
    ("batch", "train", "batch_size", int),
    ("k_neg", "train", "negatives", int),
    ("bank", "train", "bank_capacity", int),
    ("patience", "train", "patience", int),
    ("k_attr", "train", "k_attr", int),
    ("fanout", "train", "fanout", int),
    ("hops", "train", "hops", int),
    ("path_len", "train", "path_max_len", int),
    ("rec_loss", "train", "rec_loss_kind", str),
    ("fusion", "enc", "fusion", str),
    ("seed", "train", "seed", int),
]


def parse_config_text(text: str, source: str = "<config>") -> tuple[TrainConfig, EncoderConfig]:
    """Parse flat ``key = value`` text; blank and ``#`` lines are ignored."""
    by_key = {key: (target, attr, typ) for key, target, attr, typ in _KEYS}
    train = TrainConfig()
    enc = EncoderConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in by_key:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        target, attr, typ = by_key[key]
        try:
            parsed = typ(value)
        except ValueError:
            raise ConfigError(
                f"{source}:{lineno}: cannot parse {value!r} as {typ.__name__} for {key!r}"
            ) from None
        setattr(train if target == "train" else enc, attr, parsed)
    train.validate()
    enc.validate()
    return train, enc


def load_config(path: str) -> tuple[TrainConfig, EncoderConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=path)


def config_text(train: TrainConfig, enc: EncoderConfig) -> str:
    """Canonical serialization: every key, fixed order, repr-formatted values."""
    lines = []
    for key, target, attr, typ in _KEYS:
        value = getattr(train if target == "train" else enc, attr)
        lines.append(f"{key} = {value!r}" if typ is float else f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_dict(train: TrainConfig, enc: EncoderConfig) -> dict:
    """Effective config as an ordered mapping (for JSON reports)."""
    out = {}
    for key, target, attr, _ in _KEYS:
        out[key] = getattr(train if target == "train" else enc, attr)
    return out
