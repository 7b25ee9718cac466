"""Run configuration: policy choice, hyperparameters, engine knobs.

A config is a flat JSON document; every CLI flag mirrors one key. Exactly
the hyperparameters of the chosen policy may be set (``f`` for alignatt,
``alpha``/``lambda`` for edatt, ``k`` for waitk, ``t_s_ms`` for
local_agreement). The run id is a content hash of the canonical JSON, so
distinct configs never share an output directory.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .policies import (
    AlignAttPolicy,
    EDAttPolicy,
    LocalAgreementPolicy,
    Policy,
    WaitKPolicy,
)

__all__ = ["ConfigError", "SessionConfig", "POLICY_NAMES", "SWEEP_FIELD"]

POLICY_NAMES = ("alignatt", "edatt", "waitk", "local_agreement")

# The knob a sweep varies, per policy.
SWEEP_FIELD = {
    "alignatt": "f",
    "edatt": "alpha",
    "waitk": "k",
    "local_agreement": "t_s_ms",
}

_POLICY_FIELDS = {
    "alignatt": ("f",),
    "edatt": ("alpha", "lam"),
    "waitk": ("k",),
    "local_agreement": ("t_s_ms",),
}
_ALL_POLICY_FIELDS = ("f", "alpha", "lam", "k", "t_s_ms")

# JSON key <-> dataclass field (lambda is a Python keyword).
_JSON_KEYS = {"lam": "lambda"}
_FIELD_NAMES = {v: k for k, v in _JSON_KEYS.items()}

DEFAULT_EDATT_LAM = 2


class ConfigError(ValueError):
    """Invalid configuration; maps to the CLI usage exit code."""


@dataclass(frozen=True)
class SessionConfig:
    """Everything a batch run needs besides the manifest."""

    policy: str
    f: int | None = None
    alpha: float | None = None
    lam: int | None = None
    k: int | None = None
    t_s_ms: float | None = None
    chunk_ms: float = 1000.0
    adapter: str = "toy"
    seed: int = 0
    attention_layer: int | None = None
    max_new: int = 128
    clock: str = "simulated"
    step_cost_s: float = 0.0
    laal_cap_s: float | None = None

    def __post_init__(self) -> None:
        if self.policy == "edatt" and self.lam is None:
            object.__setattr__(self, "lam", DEFAULT_EDATT_LAM)
        self._validate()

    def _validate(self) -> None:
        if self.policy not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {self.policy!r}; expected one of {POLICY_NAMES}")
        required = _POLICY_FIELDS[self.policy]
        for name in _ALL_POLICY_FIELDS:
            value = getattr(self, name)
            if name in required and value is None:
                raise ConfigError(f"policy {self.policy!r} requires {name!r}")
            if name not in required and value is not None:
                raise ConfigError(f"{name!r} is not a hyperparameter of policy {self.policy!r}")
        if self.f is not None and self.f < 1:
            raise ConfigError(f"f must be >= 1, got {self.f}")
        if self.alpha is not None and not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.lam is not None and self.lam < 1:
            raise ConfigError(f"lambda must be >= 1, got {self.lam}")
        if self.k is not None and self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.t_s_ms is not None and self.t_s_ms <= 0:
            raise ConfigError(f"t_s_ms must be positive, got {self.t_s_ms}")
        if self.chunk_ms <= 0:
            raise ConfigError(f"chunk_ms must be positive, got {self.chunk_ms}")
        if not self.adapter:
            raise ConfigError("adapter must be a non-empty name")
        if self.attention_layer is not None and self.attention_layer < 0:
            raise ConfigError(f"attention_layer must be >= 0, got {self.attention_layer}")
        if self.max_new < 1:
            raise ConfigError(f"max_new must be >= 1, got {self.max_new}")
        if self.clock not in ("simulated", "real"):
            raise ConfigError(f"clock must be 'simulated' or 'real', got {self.clock!r}")
        if self.step_cost_s < 0:
            raise ConfigError(f"step_cost_s must be >= 0, got {self.step_cost_s}")
        if self.laal_cap_s is not None and self.laal_cap_s <= 0:
            raise ConfigError(f"laal_cap_s must be positive, got {self.laal_cap_s}")

    @property
    def effective_chunk_ms(self) -> float:
        """Read-step size: local_agreement streams by its own chunk length."""
        if self.policy == "local_agreement":
            assert self.t_s_ms is not None
            return self.t_s_ms
        return self.chunk_ms

    @property
    def sweep_value(self) -> float:
        value = getattr(self, SWEEP_FIELD[self.policy])
        assert value is not None
        return value

    def make_policy(self) -> Policy:
        if self.policy == "alignatt":
            return AlignAttPolicy(f=self.f)
        if self.policy == "edatt":
            return EDAttPolicy(alpha=self.alpha, lam=self.lam)
        if self.policy == "waitk":
            return WaitKPolicy(k=self.k)
        return LocalAgreementPolicy()

    def with_sweep_value(self, value) -> "SessionConfig":
        field = SWEEP_FIELD[self.policy]
        caster = float if field in ("alpha", "t_s_ms") else int
        return dataclasses.replace(self, **{field: caster(value)})

    # -------------------------------------------------------------- JSON

    def to_dict(self) -> dict:
        out = {}
        for field in dataclasses.fields(self):
            out[_JSON_KEYS.get(field.name, field.name)] = getattr(self, field.name)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SessionConfig":
        known = {_JSON_KEYS.get(f.name, f.name): f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "policy" not in data:
            raise ConfigError("config requires a 'policy' key")
        kwargs = {known[key]: value for key, value in data.items() if value is not None}
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SessionConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    @property
    def run_id(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
