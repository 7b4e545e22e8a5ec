"""Run configuration: architecture taxonomy plus strict JSON (de)serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .errors import ConfigError


class Architecture(Enum):
    """The ten decoder/representation wirings the toolkit supports."""

    ATTN = "attn"                    # classical per-position attention, no fixed embedding
    FINAL = "final"                  # [fwd final; bwd final] as decoder init
    FINAL_CTX = "final-ctx"          # ... also fed as constant context
    AVGPOOL = "avgpool"
    MAXPOOL = "maxpool"
    AVGPOOL_CTX = "avgpool-ctx"
    MAXPOOL_CTX = "maxpool-ctx"
    ATTN_CTX = "attn-ctx"            # structured matrix flattened into constant context
    ATTN_ATTN = "attn-attn"          # decoder attends over the matrix rows
    TRF_ATTN_ATTN = "trf-attn-attn"  # transformer encoder/decoder around the same matrix

    @classmethod
    def from_name(cls, name: str) -> "Architecture":
        for arch in cls:
            if arch.value == name:
                return arch
        raise ConfigError(
            f"unknown architecture {name!r}; pick from "
            f"{', '.join(a.value for a in cls)}")

    # wiring predicates -----------------------------------------------------

    @property
    def inner_attention(self) -> bool:
        """Builds the multi-head structured sentence matrix."""
        return self in (Architecture.ATTN_CTX, Architecture.ATTN_ATTN,
                        Architecture.TRF_ATTN_ATTN)

    @property
    def needs_heads(self) -> bool:
        return self.inner_attention

    @property
    def exposes_embedding(self) -> bool:
        """Whether a fixed-size sentence embedding exists at all."""
        return self is not Architecture.ATTN

    @property
    def constant_context(self) -> bool:
        """Embedding replayed as the decoder context every step."""
        return self in (Architecture.FINAL_CTX, Architecture.AVGPOOL_CTX,
                        Architecture.MAXPOOL_CTX, Architecture.ATTN_CTX)

    @property
    def decoder_attention(self) -> bool:
        """Recurrent decoder computes fresh attention every step."""
        return self in (Architecture.ATTN, Architecture.ATTN_ATTN)

    @property
    def init_from_embedding(self) -> bool:
        """Decoder initial state is a learned map of the embedding."""
        return self in (Architecture.FINAL, Architecture.FINAL_CTX,
                        Architecture.AVGPOOL, Architecture.MAXPOOL,
                        Architecture.AVGPOOL_CTX, Architecture.MAXPOOL_CTX,
                        Architecture.ATTN_CTX)

    @property
    def embedding_is_states_wide(self) -> bool:
        """Embedding width must equal the combined recurrent state width."""
        return self in (Architecture.FINAL, Architecture.FINAL_CTX,
                        Architecture.AVGPOOL, Architecture.MAXPOOL,
                        Architecture.AVGPOOL_CTX, Architecture.MAXPOOL_CTX)

    @property
    def pooling(self) -> str | None:
        if self in (Architecture.AVGPOOL, Architecture.AVGPOOL_CTX):
            return "avg"
        if self in (Architecture.MAXPOOL, Architecture.MAXPOOL_CTX):
            return "max"
        return None

    @property
    def transformer(self) -> bool:
        return self is Architecture.TRF_ATTN_ATTN


@dataclass
class ModelConfig:
    """Dimensions and wiring of one model.

    ``size`` is the total sentence-embedding width; with inner attention it
    splits into ``heads`` rows of ``size // heads`` entries each.  ATTN has
    no fixed embedding, so there ``size`` and ``heads`` stay unset.
    """

    architecture: Architecture
    size: int | None = None
    heads: int | None = None
    attn_hidden: int = 64      # scoring width for inner and decoder attention
    embed_dim: int = 64
    enc_hidden: int | None = None   # per direction; total state width is twice this
    dec_hidden: int = 64
    trf_layers: int = 2
    trf_heads: int = 4
    trf_ffn: int | None = None

    def __post_init__(self):
        if isinstance(self.architecture, str):
            self.architecture = Architecture.from_name(self.architecture)
        if self.enc_hidden is None:
            if self.architecture.embedding_is_states_wide and self.size:
                self.enc_hidden = max(1, self.size // 2)
            else:
                self.enc_hidden = 64
        if self.trf_ffn is None:
            self.trf_ffn = 4 * self.embed_dim

    # resolved dimensions ---------------------------------------------------

    @property
    def state_width(self) -> int:
        """Combined bidirectional state width."""
        return 2 * self.enc_hidden

    @property
    def row_width(self) -> int:
        """Width of one structured-matrix row."""
        assert self.size is not None and self.heads is not None
        return self.size // self.heads

    def validate(self) -> None:
        arch = self.architecture
        if arch is Architecture.ATTN:
            if self.size is not None:
                raise ConfigError("attn has no fixed embedding; leave size unset")
            if self.heads is not None:
                raise ConfigError("attn has no attention heads; leave heads unset")
        else:
            if self.size is None or self.size < 1:
                raise ConfigError(f"{arch.value} needs a positive embedding size")
        if arch.needs_heads:
            if self.heads is None or self.heads < 1:
                raise ConfigError(f"{arch.value} needs a positive head count")
            if self.size % self.heads != 0:
                raise ConfigError(
                    f"size {self.size} not divisible by heads {self.heads}")
        elif self.heads is not None:
            raise ConfigError(f"{arch.value} takes no heads (got {self.heads})")
        if arch.embedding_is_states_wide and self.state_width != self.size:
            raise ConfigError(
                f"{arch.value} requires the embedding to equal the combined "
                f"state width: size {self.size} vs 2*enc_hidden {self.state_width}")
        for label, value in (("attn_hidden", self.attn_hidden),
                             ("embed_dim", self.embed_dim),
                             ("enc_hidden", self.enc_hidden),
                             ("dec_hidden", self.dec_hidden)):
            if value < 1:
                raise ConfigError(f"{label} must be positive, got {value}")
        if arch.transformer:
            if self.trf_layers < 1:
                raise ConfigError(f"trf_layers must be positive, got {self.trf_layers}")
            if self.embed_dim % self.trf_heads != 0:
                raise ConfigError(
                    f"embed_dim {self.embed_dim} not divisible by "
                    f"trf_heads {self.trf_heads}")


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 1
    max_sentence_len: int = 60

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ConfigError("learning_rate and clip_norm must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("optimizer moment decays must lie in [0, 1)")


@dataclass
class DataConfig:
    source: str | None = None
    target: str | None = None
    vocab_size: int = 30000
    bpe_merges: int | None = None
    lowercase: bool = False


@dataclass
class RunConfig:
    """Everything needed to reproduce a run: model, training, data, seed."""

    model: ModelConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    @property
    def seed(self) -> int:
        return self.train.seed

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()

    # strict JSON -----------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        m = self.model
        return {
            "architecture": m.architecture.value,
            "size": m.size,
            "heads": m.heads,
            "attn_hidden": m.attn_hidden,
            "embed_dim": m.embed_dim,
            "enc_hidden": m.enc_hidden,
            "dec_hidden": m.dec_hidden,
            "trf_layers": m.trf_layers,
            "trf_heads": m.trf_heads,
            "trf_ffn": m.trf_ffn,
            "seed": self.train.seed,
            "train": {
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "learning_rate": self.train.learning_rate,
                "beta1": self.train.beta1,
                "beta2": self.train.beta2,
                "epsilon": self.train.epsilon,
                "clip_norm": self.train.clip_norm,
                "max_sentence_len": self.train.max_sentence_len,
            },
            "data": {
                "source": self.data.source,
                "target": self.data.target,
                "vocab_size": self.data.vocab_size,
                "bpe_merges": self.data.bpe_merges,
                "lowercase": self.data.lowercase,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunConfig":
        top = dict(raw)
        _reject_unknown(top, {
            "architecture", "size", "heads", "attn_hidden", "embed_dim",
            "enc_hidden", "dec_hidden", "trf_layers", "trf_heads", "trf_ffn",
            "seed", "train", "data"}, "config")
        if "architecture" not in top:
            raise ConfigError("config is missing 'architecture'")
        train_raw = dict(top.get("train") or {})
        _reject_unknown(train_raw, {
            "epochs", "batch_size", "learning_rate", "beta1", "beta2",
            "epsilon", "clip_norm", "max_sentence_len"}, "config.train")
        data_raw = dict(top.get("data") or {})
        _reject_unknown(data_raw, {
            "source", "target", "vocab_size", "bpe_merges", "lowercase"},
            "config.data")
        model = ModelConfig(
            architecture=Architecture.from_name(top["architecture"]),
            size=top.get("size"),
            heads=top.get("heads"),
            attn_hidden=top.get("attn_hidden", 64),
            embed_dim=top.get("embed_dim", 64),
            enc_hidden=top.get("enc_hidden"),
            dec_hidden=top.get("dec_hidden", 64),
            trf_layers=top.get("trf_layers", 2),
            trf_heads=top.get("trf_heads", 4),
            trf_ffn=top.get("trf_ffn"),
        )
        train = TrainConfig(seed=top.get("seed", 1), **train_raw)
        data = DataConfig(**data_raw)
        return cls(model=model, train=train, data=data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        return cls.from_json(p.read_text(encoding="utf-8"))


def _reject_unknown(given: dict[str, Any], allowed: set[str], where: str) -> None:
    extra = sorted(set(given) - allowed)
    if extra:
        raise ConfigError(f"unknown {where} keys: {', '.join(extra)}")
