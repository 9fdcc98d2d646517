"""Per-layer sparsification plans for the global attention layers.

Strategies serialize to short strings: ``local``, ``downsample(3)``,
``full_restricted``, ``pool`` and ``activation(0.25)``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .exceptions import ArgumentError

KINDS = ("local", "downsample", "full_restricted", "pool", "activation")

DEFAULT_N_LAYERS = 24
DEFAULT_L_LOCAL = 2
DEFAULT_L_SAMPLE = 9
DEFAULT_SIGMA = 3


@dataclass(frozen=True)
class LayerStrategy:
    kind: str
    sigma: int | None = None
    keep_fraction: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown layer strategy {self.kind!r}")
        if self.kind == "downsample":
            if self.sigma is None or int(self.sigma) != self.sigma or self.sigma < 2:
                raise ArgumentError(f"downsample needs an integer sigma >= 2, got {self.sigma}")
        elif self.sigma is not None:
            raise ArgumentError(f"{self.kind} takes no sigma")
        if self.kind == "activation":
            if self.keep_fraction is None or not 0.0 < self.keep_fraction <= 1.0:
                raise ArgumentError(f"activation needs keep_fraction in (0, 1], got {self.keep_fraction}")
        elif self.keep_fraction is not None:
            raise ArgumentError(f"{self.kind} takes no keep_fraction")

    def __str__(self) -> str:
        if self.kind == "downsample":
            return f"downsample({self.sigma})"
        if self.kind == "activation":
            return f"activation({self.keep_fraction!r})"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "LayerStrategy":
        m = re.fullmatch(r"(\w+)(?:\(([^)]*)\))?", text.strip())
        if not m:
            raise ArgumentError(f"cannot parse layer strategy {text!r}")
        kind, arg = m.groups()
        if kind == "downsample":
            return cls(kind, sigma=int(arg) if arg else None)
        if kind == "activation":
            return cls(kind, keep_fraction=float(arg) if arg else None)
        if arg:
            raise ArgumentError(f"{kind} takes no argument")
        return cls(kind)


LOCAL = LayerStrategy("local")
FULL = LayerStrategy("full_restricted")
POOL = LayerStrategy("pool")


def downsample(sigma: int) -> LayerStrategy:
    return LayerStrategy("downsample", sigma=sigma)


def activation(keep_fraction: float) -> LayerStrategy:
    return LayerStrategy("activation", keep_fraction=keep_fraction)


@dataclass(frozen=True)
class LayerPlan:
    """One strategy per global-attention layer plus how the partition was chosen."""

    strategies: tuple[LayerStrategy, ...]
    provenance: str = "custom"
    l_local: int | None = None
    l_sample: int | None = None
    l_late: int | None = None
    tau1: float | None = None
    tau2: float | None = None
    sigma: int | None = None

    def __post_init__(self):
        if self.provenance not in ("thresholds", "entropy", "custom"):
            raise ArgumentError(f"unknown plan provenance {self.provenance!r}")

    @property
    def n_layers(self) -> int:
        return len(self.strategies)

    def __len__(self) -> int:
        return len(self.strategies)

    def __getitem__(self, layer: int) -> LayerStrategy:
        return self.strategies[layer]

    def layers_of(self, kind: str) -> list[int]:
        return [i for i, s in enumerate(self.strategies) if s.kind == kind]

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "provenance": self.provenance,
            "l_local": self.l_local,
            "l_sample": self.l_sample,
            "l_late": self.l_late,
            "tau1": self.tau1,
            "tau2": self.tau2,
            "sigma": self.sigma,
            "strategies": [str(s) for s in self.strategies],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "LayerPlan":
        strategies = tuple(LayerStrategy.parse(s) for s in obj["strategies"])
        if "n_layers" in obj and obj["n_layers"] != len(strategies):
            raise ArgumentError("n_layers disagrees with the strategy list")
        return cls(
            strategies,
            obj.get("provenance", "custom"),
            obj.get("l_local"),
            obj.get("l_sample"),
            obj.get("l_late"),
            obj.get("tau1"),
            obj.get("tau2"),
            obj.get("sigma"),
        )

    @classmethod
    def from_json(cls, text: str) -> "LayerPlan":
        return cls.from_dict(json.loads(text))

    @classmethod
    def uniform(cls, n_layers: int, strategy: LayerStrategy = FULL) -> "LayerPlan":
        return cls((strategy,) * n_layers)

    def replace_layers(self, layers, strategy: LayerStrategy) -> "LayerPlan":
        """Copy with ``layers`` switched to ``strategy``; provenance becomes ``custom``."""
        s = list(self.strategies)
        for layer in layers:
            s[layer] = strategy
        return LayerPlan(tuple(s), "custom", sigma=self.sigma)


def build_layer_plan(
    n_layers: int = DEFAULT_N_LAYERS,
    l_local: int = DEFAULT_L_LOCAL,
    l_sample: int = DEFAULT_L_SAMPLE,
    sigma: int = DEFAULT_SIGMA,
    l_late: int | None = None,
    early: str = "local",
) -> LayerPlan:
    """Threshold partition: ``[0, l_local)`` local, ``[l_local, l_sample)``
    downsampled, the rest full over the selected frames, and an optional
    downsampled tail from ``l_late``.

    ``early="pool"`` swaps the local layers for mean pooling.
    """
    if not 0 <= l_local <= l_sample <= n_layers:
        raise ArgumentError(f"need 0 <= l_local <= l_sample <= n_layers, got {l_local}, {l_sample}, {n_layers}")
    if l_late is not None and not l_sample <= l_late <= n_layers:
        raise ArgumentError(f"need l_sample <= l_late <= n_layers, got l_late={l_late}")
    if early not in ("local", "pool"):
        raise ArgumentError(f"early layers must be 'local' or 'pool', got {early!r}")
    ds = downsample(sigma) if (l_sample > l_local or (l_late is not None and l_late < n_layers)) else None
    first = LOCAL if early == "local" else POOL
    strategies = []
    for layer in range(n_layers):
        if layer < l_local:
            strategies.append(first)
        elif layer < l_sample:
            strategies.append(ds)
        elif l_late is not None and layer >= l_late:
            strategies.append(ds)
        else:
            strategies.append(FULL)
    return LayerPlan(tuple(strategies), "thresholds", l_local, l_sample, l_late, None, None, sigma)


def _first_below(values, threshold, start: int = 0) -> int:
    for i in range(start, len(values)):
        if values[i] < threshold:
            return i
    return len(values)


def entropy_adaptive_plan(per_layer_entropy, tau1: float, tau2: float, sigma: int = DEFAULT_SIGMA) -> LayerPlan:
    """Partition layers from measured normalized entropy.

    Layers are local until the first one with entropy below ``tau1``, then
    downsampled until the first one below ``tau2``, then full.
    """
    H = np.asarray(per_layer_entropy, dtype=np.float64)
    if H.ndim != 1:
        raise ArgumentError("expected one entropy value per layer")
    if tau1 < tau2:
        raise ArgumentError(f"tau1 must be >= tau2, got tau1={tau1}, tau2={tau2}")
    if np.any(~np.isfinite(H)) or np.any(H < 0.0) or np.any(H > 1.0):
        raise ArgumentError("normalized entropies must lie in [0, 1]")
    a = _first_below(H, tau1)
    b = _first_below(H, tau2, start=a)
    strategies = [LOCAL] * a + ([downsample(sigma)] * (b - a) if b > a else []) + [FULL] * (len(H) - b)
    return LayerPlan(tuple(strategies), "entropy", a, b, None, float(tau1), float(tau2), sigma)
