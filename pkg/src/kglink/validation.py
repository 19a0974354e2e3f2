"""Input-validation helpers shared by the estimator and the CLI."""
from __future__ import annotations

from typing import Any, Iterable

import numpy as np

from .errors import ConfigError, NotFittedError


def check_is_fitted(estimator, attributes: Iterable[str] = ("params_",)) -> None:
    missing = [a for a in attributes if not hasattr(estimator, a)]
    if missing:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first "
            f"(missing {', '.join(missing)})"
        )


def check_choice(name: str, value: Any, options: tuple) -> None:
    if value not in options:
        raise ConfigError(f"{name} must be one of {options}, got {value!r}")


def check_interval(name: str, value: float, low: float, high: float,
                   low_open: bool = False, high_open: bool = True) -> None:
    ok_low = value > low if low_open else value >= low
    ok_high = value < high if high_open else value <= high
    if not (ok_low and ok_high):
        lo = "(" if low_open else "["
        hi = ")" if high_open else "]"
        raise ConfigError(f"{name} must be in {lo}{low}, {high}{hi}, got {value}")


def check_positive_int(name: str, value: int) -> None:
    if not isinstance(value, (int, np.integer)) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")


def check_pairs_array(pairs, n_entities: int, n_relation_rows: int) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigError(f"pairs must be an (n, 2) array, got shape {arr.shape}")
    if arr.size:
        if arr[:, 0].min() < 0 or arr[:, 0].max() >= n_entities:
            raise ConfigError("entity id out of range in pairs")
        if arr[:, 1].min() < 0 or arr[:, 1].max() >= n_relation_rows:
            raise ConfigError("relation id out of range in pairs")
    return arr
