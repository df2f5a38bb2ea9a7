"""Run configuration: one flat record covering optimization, objectives,
augmentation, and architecture, plus a diff-friendly key=value file format
and a stable hash used by checkpoints."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class TrainConfig:
    # optimization schedule
    epochs: int = 50
    base_lr: float = 5e-4
    decayed_lr: float = 5e-5
    decay_epoch: int = 15          # base_lr through this epoch, decayed after
    batch_size: int = 128
    weight_decay: float = 1e-4
    seed: int = 0
    # objectives
    margin: float = 0.4
    temperature: float = 0.01
    contrastive_weight: float = 0.25
    specificity_weight: float = 3.0
    # augmentation
    region_drop: float = 0.35
    graph_drop: float = 0.10       # node and edge subsampling rate
    token_mask: float = 0.10
    # architecture
    dim: int = 256
    word_dim: int = 300
    region_dim: int = 2048
    heads: int = 4
    oa_layers: int = 1
    oo_layers: int = 2
    max_rank: int = 64

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        for name in ("region_drop", "graph_drop", "token_mask"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ValueError(f"{name} must be in [0, 1)")
        if self.margin <= 0.0 or self.temperature <= 0.0:
            raise ValueError("margin and temperature must be positive")
        if self.dim % self.heads != 0:
            raise ValueError("heads must divide dim")
        if self.oa_layers < 1 or self.oo_layers < 1:
            raise ValueError("layer counts must be >= 1")

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch number."""
        return self.base_lr if epoch <= self.decay_epoch else self.decayed_lr

    def to_key_values(self) -> str:
        lines = [
            f"{f.name}={getattr(self, f.name)!r}".replace("'", "")
            for f in dataclasses.fields(self)
        ]
        return "\n".join(lines) + "\n"

    def hash_bytes(self) -> bytes:
        return hashlib.sha256(self.to_key_values().encode("utf-8")).digest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_key_values(), encoding="utf-8")

    @classmethod
    def from_key_values(cls, text: str, base: "TrainConfig | None" = None) -> "TrainConfig":
        values = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {line_no}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in types:
                raise ValueError(f"config line {line_no}: unknown key {key!r}")
            caster = int if types[key] in ("int", int) else float
            values[key] = caster(value.strip())
        base = base or cls()
        return base.replace(**values)

    @classmethod
    def load(cls, path: str | Path, base: "TrainConfig | None" = None) -> "TrainConfig":
        return cls.from_key_values(Path(path).read_text(encoding="utf-8"), base=base)
