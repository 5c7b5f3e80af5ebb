"""Hyperparameter search spaces.

A :class:`HyperparamSpace` is an ordered list of bounded dimensions.  All
surrogate-model and sampler arithmetic happens in the unit cube; native
values only appear when an agent is built or a result is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

SCALES = ("linear", "log10")

# Relative slack when checking that a native value sits inside its bounds.
_BOUNDS_RTOL = 1e-12


class BoundsError(ValueError):
    """A value fell outside the bounds of a named dimension."""

    def __init__(self, name: str, value: float, low: float, high: float):
        super().__init__(f"{name}={value!r} outside [{low!r}, {high!r}]")
        self.name = name


@dataclass(frozen=True)
class HyperparamDim:
    name: str
    low: float
    high: float
    scale: str = "linear"

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ValueError(f"{self.name}: unknown scale {self.scale!r}")
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ValueError(f"{self.name}: bounds must be finite")
        if not self.low < self.high:
            raise ValueError(f"{self.name}: low must be < high")
        if self.scale == "log10" and self.low <= 0:
            raise ValueError(f"{self.name}: log10 scale needs low > 0")

    def _span(self):
        if self.scale == "log10":
            return math.log10(self.low), math.log10(self.high)
        return self.low, self.high

    def to_unit(self, value: float) -> float:
        slack = _BOUNDS_RTOL * (self.high - self.low)
        if not (self.low - slack <= value <= self.high + slack):
            raise BoundsError(self.name, value, self.low, self.high)
        lo, hi = self._span()
        v = math.log10(value) if self.scale == "log10" else value
        return min(1.0, max(0.0, (v - lo) / (hi - lo)))

    def from_unit(self, u: float) -> float:
        if not 0.0 <= u <= 1.0:
            raise BoundsError(self.name + " (normalized)", u, 0.0, 1.0)
        if u == 0.0:
            return self.low
        if u == 1.0:
            return self.high
        lo, hi = self._span()
        v = lo + u * (hi - lo)
        v = 10.0 ** v if self.scale == "log10" else v
        return min(self.high, max(self.low, v))

    def to_dict(self) -> dict:
        return {"name": self.name, "low": self.low, "high": self.high, "scale": self.scale}


class HyperparamSpace:
    """Ordered, immutable collection of :class:`HyperparamDim`."""

    def __init__(self, dims: Iterable[HyperparamDim]):
        self.dims = tuple(dims)
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names in {names}")
        if not self.dims:
            raise ValueError("a search space needs at least one dimension")
        self.names = tuple(names)
        self.low = np.array([d.low for d in self.dims])
        self.high = np.array([d.high for d in self.dims])

    @property
    def d(self) -> int:
        return len(self.dims)

    def __len__(self):
        return len(self.dims)

    def __eq__(self, other):
        return isinstance(other, HyperparamSpace) and self.dims == other.dims

    def __repr__(self):
        return f"HyperparamSpace({list(self.dims)!r})"

    def _check_len(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.d,):
            raise ValueError(f"expected a vector of length {self.d}, got shape {v.shape}")
        return v

    def normalize(self, theta: Sequence[float]) -> np.ndarray:
        theta = self._check_len(theta)
        return np.array([dim.to_unit(float(x)) for dim, x in zip(self.dims, theta)])

    def denormalize(self, u: Sequence[float]) -> np.ndarray:
        u = self._check_len(u)
        return np.array([dim.from_unit(float(x)) for dim, x in zip(self.dims, u)])

    def clip(self, theta: Sequence[float]) -> np.ndarray:
        theta = self._check_len(theta)
        return np.minimum(self.high, np.maximum(self.low, theta))

    def sample_uniform(self, n: int, rng: np.random.Generator) -> list[np.ndarray]:
        """``n`` points uniform in the normalized cube, returned in native units."""
        if n < 1:
            raise ValueError("sample_uniform needs n >= 1")
        u = rng.random((n, self.d))
        return [self.denormalize(row) for row in u]

    def as_dict(self, theta: Sequence[float]) -> dict[str, float]:
        theta = self._check_len(theta)
        return {name: float(x) for name, x in zip(self.names, theta)}

    def from_dict(self, values: Mapping[str, float]) -> np.ndarray:
        return np.array([float(values[name]) for name in self.names])

    def subspace(self, exclude: Iterable[str]) -> "HyperparamSpace":
        exclude = set(exclude)
        unknown = exclude - set(self.names)
        if unknown:
            raise ValueError(f"unknown dimensions {sorted(unknown)}")
        return HyperparamSpace(d for d in self.dims if d.name not in exclude)

    def to_list(self) -> list[dict]:
        return [d.to_dict() for d in self.dims]

    @classmethod
    def from_list(cls, items: Sequence[Mapping]) -> "HyperparamSpace":
        return cls(HyperparamDim(str(it["name"]), float(it["low"]), float(it["high"]),
                                 str(it.get("scale", "linear"))) for it in items)


def _dims(rows):
    return [HyperparamDim(*row) for row in rows]


# Range sets per agent family.  The policy-gradient ranges follow the
# original/broader/ample table for the PPO-style coefficients (minus the
# clip range); the Q-learning "original" set is the DQN+PER range list and
# the wider sets extend it in the same spirit.
PRESETS: dict[str, dict[str, list[HyperparamDim]]] = {
    "tabular_q_per": {
        "original": _dims([
            ("alpha_lr", 1e-5, 1e-1, "log10"),
            ("gamma", 0.8, 0.9999, "linear"),
            ("epsilon0", 0.1, 0.9, "linear"),
            ("per_alpha", 0.4, 0.8, "linear"),
            ("per_beta0", 0.4, 0.8, "linear"),
        ]),
        "broader": _dims([
            ("alpha_lr", 1e-6, 1e-1, "log10"),
            ("gamma", 0.5, 0.9999, "linear"),
            ("epsilon0", 0.05, 0.95, "linear"),
            ("per_alpha", 0.2, 0.9, "linear"),
            ("per_beta0", 0.2, 0.9, "linear"),
        ]),
        "ample": _dims([
            ("alpha_lr", 1e-8, 1e-1, "log10"),
            ("gamma", 0.0001, 0.9999, "linear"),
            ("epsilon0", 0.01, 0.99, "linear"),
            ("per_alpha", 0.01, 0.99, "linear"),
            ("per_beta0", 0.01, 0.99, "linear"),
        ]),
    },
    "linear_pg": {
        "original": _dims([
            ("alpha_lr", 1e-4, 1e-3, "log10"),
            ("gamma", 0.8, 0.9999, "linear"),
            ("gae_lambda", 0.85, 0.9999, "linear"),
            ("entropy_coef", 0.0, 0.1, "linear"),
            ("value_coef", 0.5, 1.0, "linear"),
        ]),
        "broader": _dims([
            ("alpha_lr", 1e-5, 1e-3, "log10"),
            ("gamma", 0.5, 0.9999, "linear"),
            ("gae_lambda", 0.5, 0.9999, "linear"),
            ("entropy_coef", 0.0, 0.15, "linear"),
            ("value_coef", 0.25, 1.0, "linear"),
        ]),
        "ample": _dims([
            ("alpha_lr", 1e-7, 1e-3, "log10"),
            ("gamma", 0.0001, 0.9999, "linear"),
            ("gae_lambda", 0.0, 0.9999, "linear"),
            ("entropy_coef", 0.0, 0.2, "linear"),
            ("value_coef", 0.1, 1.0, "linear"),
        ]),
    },
}

AGENT_HPARAMS = {kind: tuple(d.name for d in sets["original"]) for kind, sets in PRESETS.items()}


def preset_space(agent_kind: str, preset: str = "original") -> HyperparamSpace:
    try:
        return HyperparamSpace(PRESETS[agent_kind][preset])
    except KeyError:
        raise ValueError(f"no preset {preset!r} for agent kind {agent_kind!r}") from None
