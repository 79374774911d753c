"""Model catalog: transformer architecture constants and quantization profiles.

The catalog holds the architecture numbers that drive every cost formula
(layer count, hidden width, head layout, FFN width) together with
quantization profiles described by a memory scale, a latency scale, and a
per-model perplexity degradation table.  Profiles and models are plain
immutable records; nothing here touches real weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class LlmSpec:
    """Architecture constants of one decoder-only transformer."""

    name: str
    layers: int
    hidden_dim: int
    head_count: int
    head_dim: int
    ffn_dim: int
    bytes_per_param: int = 2

    def __post_init__(self):
        for fname in ("hidden_dim", "head_count", "head_dim", "ffn_dim"):
            if getattr(self, fname) <= 0:
                raise ValueError(f"{self.name}: {fname} must be strictly positive")
        if self.layers < 0:
            raise ValueError(f"{self.name}: layers must be nonnegative")
        if self.bytes_per_param <= 0:
            raise ValueError(f"{self.name}: bytes_per_param must be strictly positive")
        if self.hidden_dim != self.head_count * self.head_dim:
            raise ValueError(
                f"{self.name}: hidden_dim ({self.hidden_dim}) != "
                f"head_count * head_dim ({self.head_count * self.head_dim})"
            )


@dataclass(frozen=True)
class QuantProfile:
    """One quantization setting.

    ``alpha`` scales memory, ``beta`` scales latency (both in (0, 1]).
    ``delta_ppl_by_model`` maps a model name to the perplexity degradation
    the setting introduces on that model.  Values come from offline
    measurement and are configuration inputs, not computed here.
    """

    method: str
    weight_bits: int
    activation_bits: int
    alpha: float
    beta: float
    delta_ppl_by_model: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"{self.method}: alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"{self.method}: beta must be in (0, 1], got {self.beta}")
        for model, dppl in self.delta_ppl_by_model.items():
            if dppl < 0:
                raise ValueError(f"{self.method}: delta_ppl for {model} must be >= 0")


_CATALOG_MODEL_NAMES = ("bloom-3b", "bloom-7.1b", "opt-13b")


def builtin_models() -> list[LlmSpec]:
    """Return the built-in model catalog (FFN width is 4x the hidden width)."""
    return [
        LlmSpec("bloom-3b", layers=30, hidden_dim=2560, head_count=32, head_dim=80,
                ffn_dim=10240),
        LlmSpec("bloom-7.1b", layers=30, hidden_dim=4096, head_count=32, head_dim=128,
                ffn_dim=16384),
        LlmSpec("opt-13b", layers=40, hidden_dim=5120, head_count=40, head_dim=128,
                ffn_dim=20480),
    ]


def builtin_quant_profiles() -> list[QuantProfile]:
    """Return the built-in quantization profiles.

    The fp16 profile is the lossless baseline.  alpha/beta for the reduced
    precisions are configuration defaults (they come from offline
    measurement in practice); w8a16 is treated as near-lossless, while the
    two 4-bit methods carry the measured per-model degradations.
    """
    zero = {name: 0.0 for name in _CATALOG_MODEL_NAMES}
    return [
        QuantProfile("fp16", weight_bits=16, activation_bits=16,
                     alpha=1.0, beta=1.0, delta_ppl_by_model=dict(zero)),
        QuantProfile("w8a16", weight_bits=8, activation_bits=16,
                     alpha=0.5, beta=0.8, delta_ppl_by_model=dict(zero)),
        QuantProfile("w4a16-gptq", weight_bits=4, activation_bits=16,
                     alpha=0.25, beta=0.7,
                     delta_ppl_by_model={"bloom-3b": 0.75, "bloom-7.1b": 0.54,
                                         "opt-13b": 0.2}),
        QuantProfile("w4a16-zq-local", weight_bits=4, activation_bits=16,
                     alpha=0.25, beta=0.7,
                     delta_ppl_by_model={"bloom-3b": 0.92, "bloom-7.1b": 0.59,
                                         "opt-13b": 0.42}),
    ]


def get_model(name: str, extra: dict[str, LlmSpec] | None = None) -> LlmSpec:
    """Look up a model by name (case-insensitive), searching extras first."""
    key = name.lower()
    if extra and key in extra:
        return extra[key]
    for spec in builtin_models():
        if spec.name == key:
            return spec
    raise KeyError(f"unknown model {name!r}")


def get_profile(method: str, extra: dict[str, QuantProfile] | None = None) -> QuantProfile:
    """Look up a quantization profile by method name (case-insensitive)."""
    key = method.lower()
    if extra and key in extra:
        return extra[key]
    for prof in builtin_quant_profiles():
        if prof.method == key:
            return prof
    raise KeyError(f"unknown quantization profile {method!r}")


def delta_ppl(profile: QuantProfile, model: str) -> float:
    """Perplexity degradation of ``profile`` on ``model``.

    Raises KeyError naming the (profile, model) pair when the profile has
    no entry for the model.
    """
    key = model.lower()
    try:
        return profile.delta_ppl_by_model[key]
    except KeyError:
        raise KeyError(
            f"no PPL degradation recorded for ({profile.method!r}, {model!r})"
        ) from None


def accuracy_admissible(delta: float, tolerance: float) -> bool:
    """True when a degradation of ``delta`` satisfies a user tolerance.

    Both values live on the same nonnegative degradation scale; a request
    is admissible exactly when the model's degradation does not exceed the
    degradation the user is willing to accept.
    """
    if delta < 0 or tolerance < 0:
        raise ValueError("delta and tolerance must be nonnegative")
    return delta <= tolerance


def load_catalog(mapping: dict) -> tuple[dict[str, LlmSpec], dict[str, QuantProfile]]:
    """Build model/profile overrides from a parsed config mapping.

    Expected shape::

        models:
          - {name: tiny, layers: 4, hidden_dim: 64, head_count: 4,
             head_dim: 16, ffn_dim: 256, bytes_per_param: 2}
        profiles:
          - {method: my-w4, weight_bits: 4, activation_bits: 16,
             alpha: 0.25, beta: 0.7, delta_ppl: {tiny: 0.3}}
    """
    models: dict[str, LlmSpec] = {}
    for entry in mapping.get("models", []) or []:
        spec = LlmSpec(
            name=str(entry["name"]).lower(),
            layers=int(entry["layers"]),
            hidden_dim=int(entry["hidden_dim"]),
            head_count=int(entry["head_count"]),
            head_dim=int(entry["head_dim"]),
            ffn_dim=int(entry["ffn_dim"]),
            bytes_per_param=int(entry.get("bytes_per_param", 2)),
        )
        models[spec.name] = spec
    profiles: dict[str, QuantProfile] = {}
    for entry in mapping.get("profiles", []) or []:
        table = {str(k).lower(): float(v)
                 for k, v in (entry.get("delta_ppl") or {}).items()}
        prof = QuantProfile(
            method=str(entry["method"]).lower(),
            weight_bits=int(entry.get("weight_bits", 16)),
            activation_bits=int(entry.get("activation_bits", 16)),
            alpha=float(entry["alpha"]),
            beta=float(entry["beta"]),
            delta_ppl_by_model=table,
        )
        profiles[prof.method] = prof
    return models, profiles
