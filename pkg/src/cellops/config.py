"""Loop policy and service configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml


class InvalidPolicyError(ValueError):
    pass


class ConfigFileError(ValueError):
    pass


@dataclass(frozen=True)
class Policy:
    """Knobs governing one agent turn. Defaults are the shipped behavior."""

    max_iterations: int = 8
    regression_threshold: float = 0.5  # relative KPI drop that triggers rollback
    max_retries: int = 2
    require_approval: bool = True
    retry_backoff_s: float = 0.5
    retrieval_k: int = 3
    verify_ticks: int = 5
    kpi_tick_dt_s: float = 1.0

    def merged(self, overrides: dict | None) -> "Policy":
        """Defaults merged with overrides; rejects unknown keys and bad ranges."""
        if not overrides:
            return self
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise InvalidPolicyError(f"unknown policy keys: {sorted(unknown)}")
        merged = replace(self, **overrides)
        merged.check()
        return merged

    def check(self) -> None:
        if not isinstance(self.max_iterations, int) or self.max_iterations < 1:
            raise InvalidPolicyError(f"max_iterations must be a positive integer, got {self.max_iterations!r}")
        if not isinstance(self.regression_threshold, (int, float)) or not 0 <= self.regression_threshold <= 1:
            raise InvalidPolicyError(f"regression_threshold must lie in [0, 1], got {self.regression_threshold!r}")
        if not isinstance(self.max_retries, int) or self.max_retries < 0:
            raise InvalidPolicyError(f"max_retries must be a non-negative integer, got {self.max_retries!r}")
        if not isinstance(self.require_approval, bool):
            raise InvalidPolicyError(f"require_approval must be a boolean, got {self.require_approval!r}")
        if not isinstance(self.retry_backoff_s, (int, float)) or self.retry_backoff_s < 0:
            raise InvalidPolicyError(f"retry_backoff_s must be >= 0, got {self.retry_backoff_s!r}")
        if not isinstance(self.retrieval_k, int) or self.retrieval_k < 1:
            raise InvalidPolicyError(f"retrieval_k must be a positive integer, got {self.retrieval_k!r}")
        if not isinstance(self.verify_ticks, int) or self.verify_ticks < 1:
            raise InvalidPolicyError(f"verify_ticks must be a positive integer, got {self.verify_ticks!r}")
        if not isinstance(self.kpi_tick_dt_s, (int, float)) or self.kpi_tick_dt_s <= 0:
            raise InvalidPolicyError(f"kpi_tick_dt_s must be positive, got {self.kpi_tick_dt_s!r}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ProviderConfig:
    """How sessions obtain an LLM: a live chat-completions endpoint or an
    inline script for deterministic replay."""

    kind: str = "http"  # "http" or "scripted"
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "CELLOPS_API_KEY"  # credential comes from the environment only
    timeout_s: float = 60.0
    script: list[dict] = field(default_factory=list)


@dataclass
class ServiceConfig:
    station_seed: int = 0
    knowledge_dir: str | None = None  # None -> packaged manual
    band_table_path: str | None = None  # None -> packaged band plan
    audit_path: str = "audit.log"
    snapshot_dir: str | None = None  # None -> config_snapshots beside the audit log
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    policy: Policy = field(default_factory=Policy)
    auto_tick_interval_s: float | None = None  # wall-clock KPI ticking while serving

    @classmethod
    def load(cls, path: str | Path) -> "ServiceConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigFileError(f"cannot read service config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigFileError(f"service config {path} must be a mapping")
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ServiceConfig":
        cfg = cls()
        provider = dict(raw.pop("provider", {}) or {})
        policy = raw.pop("policy", {}) or {}
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigFileError(f"unknown service config keys: {sorted(unknown)}")
        for key, value in raw.items():
            setattr(cfg, key, value)
        prov_known = {f.name for f in fields(ProviderConfig)}
        bad = set(provider) - prov_known
        if bad:
            raise ConfigFileError(f"unknown provider config keys: {sorted(bad)}")
        cfg.provider = ProviderConfig(**provider)
        cfg.policy = Policy().merged(policy)
        return cfg
