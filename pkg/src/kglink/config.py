"""Flat key=value run configuration shared by all CLI commands.

Files are plain text, one ``key = value`` per line, ``#`` comments allowed.
Unknown keys are rejected so typos fail loudly.  Command-line flags override
file values; every command echoes the fully resolved configuration before
doing any work.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_int_pair(text: str) -> tuple[int, int]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected two comma-separated integers, got {text!r}")
    return int(parts[0]), int(parts[1])


@dataclass
class RunConfig:
    dataset_dir: str = ""
    output_dir: str = "runs/latest"
    checkpoint: str = ""
    dim: int = 200
    layers: int = 2
    decoder: str = "conve"
    attention: str = "kbgsat"
    activation: str = "tanh"
    learning_rate: float = 0.001
    batch_size: int = 128
    dropout: float = 0.1
    label_smoothing: float = 0.0
    epochs: int = 500
    patience: int = 20
    seed: int = 0
    workers: int = 1
    filter: str = "standard"
    dtype: str = "float64"
    eval_batch_size: int = 512
    conve_channels: int = 32
    conve_kernel: tuple[int, int] = (3, 3)
    conve_reshape: tuple[int, int] = (10, 20)
    selftrain_source: str = "valid,test"
    selftrain_rounds: int = 1
    selftrain_epochs: int = 300
    selftrain_warm_start: bool = True
    verbose: int = 0

    _CONVERTERS = {
        bool: _parse_bool,
        int: int,
        float: float,
        str: str,
        tuple[int, int]: _parse_int_pair,
    }

    @classmethod
    def _field_types(cls) -> dict[str, type]:
        return {f.name: f.type for f in fields(cls)}

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        config = cls()
        config.apply_file(path)
        return config

    def apply_file(self, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, value = stripped.partition("=")
            self.set_value(key.strip(), value.strip(), where=f"{path}:{lineno}")
        return self

    def set_value(self, key: str, raw: str, where: str = "override") -> None:
        types = self._field_types()
        if key not in types:
            raise ConfigError(f"{where}: unknown configuration key {key!r}")
        field_type = types[key]
        # dataclass field types may be stored as strings under future annotations
        if isinstance(field_type, str):
            field_type = {"str": str, "int": int, "float": float, "bool": bool,
                          "tuple[int, int]": tuple[int, int]}[field_type]
        converter = self._CONVERTERS[field_type]
        try:
            setattr(self, key, converter(raw))
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{where}: invalid value for {key!r}: {exc}") from exc

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def model_kwargs(self) -> dict:
        return {
            "dim": self.dim,
            "layers": self.layers,
            "decoder": self.decoder,
            "attention": self.attention,
            "activation": self.activation,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "dropout": self.dropout,
            "label_smoothing": self.label_smoothing,
            "epochs": self.epochs,
            "patience": self.patience,
            "conve_channels": self.conve_channels,
            "conve_kernel": self.conve_kernel,
            "conve_reshape": self.conve_reshape,
            "filter_policy": self.filter,
            "eval_batch_size": self.eval_batch_size,
            "dtype": self.dtype,
            "seed": self.seed,
            "workers": self.workers,
            "verbose": self.verbose,
        }

    def selftrain_sources(self) -> set[str]:
        return {part.strip() for part in self.selftrain_source.split(",") if part.strip()}
