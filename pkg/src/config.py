"""
Configuration management for kausal
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import orjson
import psutil
from pydantic import Field, ValidationError as PydanticValidationError
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from modules.transport_base import MonteCarloSettings, SolverSettings, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = Path('kausal.json')


def _logical_cores() -> int:
    return psutil.cpu_count(logical=True) or 1


class KausalConfig(BaseSettings):
    """
    Settings with environment support

    Priority:
    1. Environment variables (KAUSAL_*, also read from .env)
    2. JSON config file (kausal.json or --config)
    3. Defaults
    """
    model_config = SettingsConfigDict(
        env_prefix="KAUSAL_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Parallelism
    threads: int = Field(default_factory=_logical_cores, ge=1)
    mc_chunk_size: int = Field(4096, ge=1)

    # Finite solvers
    exact_max_paths: int = Field(64, ge=1)
    kernel_rel_tol: float = Field(1e-9, gt=0)
    float_eq_tol: float = Field(1e-12, gt=0)
    lp_gap_rel_tol: float = Field(1e-8, gt=0)
    lp_max_iters: int = Field(200_000, ge=1)
    entropic_max_iters: int = Field(50_000, ge=1)
    entropic_kl_tol: float = Field(1e-12, gt=0)
    monge_max_paths: int = Field(8, ge=1)

    # Monte Carlo
    fd_step: float = Field(1e-5, gt=0)
    regression_basis: List[str] = Field(
        default_factory=lambda: ['const', 'x', 'x2', 'running_max', 'running_integral']
    )
    normality_alpha: float = Field(1e-4, gt=0, lt=1)
    clark_ocone_max_bits: int = Field(16, ge=1)
    cloud_max_size: int = Field(64, ge=2)

    # Bridge
    bridge_tol: float = Field(1e-10, gt=0)
    bridge_max_iters: int = Field(100_000, ge=1)

    # Paths
    reports_dir: Path = Path('reports')

    @classmethod
    def settings_customise_sources(cls, settings_cls, init_settings: PydanticBaseSettingsSource,
                                   env_settings: PydanticBaseSettingsSource,
                                   dotenv_settings: PydanticBaseSettingsSource,
                                   file_secret_settings: PydanticBaseSettingsSource):
        # file values arrive as init kwargs and must lose against the environment
        return env_settings, dotenv_settings, init_settings, file_secret_settings

    @classmethod
    def load(cls, config_file: Optional[Path] = None) -> 'KausalConfig':
        """
        Loads the configuration

        Args:
            config_file: JSON file; kausal.json is used when present and no
                         file is given. An explicit file must exist.
        """
        values: Dict[str, Any] = {}
        path = config_file or DEFAULT_CONFIG_FILE
        if path.exists():
            values = cls._read_file(path)
        elif config_file is not None:
            raise ValidationError(f"config file not found: {config_file}", '--config')
        try:
            config = cls(**values)
        except PydanticValidationError as e:
            raise ValidationError(f"invalid configuration: {e}", str(path)) from e
        logger.debug(f"config: threads={config.threads}, chunk={config.mc_chunk_size}")
        return config

    @staticmethod
    def _read_file(path: Path) -> Dict[str, Any]:
        try:
            data = orjson.loads(path.read_bytes())
        except (orjson.JSONDecodeError, OSError) as e:
            raise ValidationError(f"cannot read config: {e}", str(path)) from e
        if not isinstance(data, dict):
            raise ValidationError("config file must hold a JSON object", str(path))
        return data

    def with_overrides(self, **overrides: Any) -> 'KausalConfig':
        """Copy with CLI overrides applied (None values are ignored)"""
        update = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(update) - set(type(self).model_fields)
        if unknown:
            raise ValidationError(f"unknown settings {sorted(unknown)}", '--set')
        try:
            return self.model_validate({**self.model_dump(), **update})
        except PydanticValidationError as e:
            raise ValidationError(f"invalid override: {e}", '--set') from e

    # --- Library settings ---

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(
            exact_max_paths=self.exact_max_paths,
            float_eq_tol=self.float_eq_tol,
            kernel_rel_tol=self.kernel_rel_tol,
            lp_gap_rel_tol=self.lp_gap_rel_tol,
            lp_max_iters=self.lp_max_iters,
            entropic_max_iters=self.entropic_max_iters,
            entropic_kl_tol=self.entropic_kl_tol,
            monge_max_paths=self.monge_max_paths,
        )

    def monte_carlo_settings(self) -> MonteCarloSettings:
        return MonteCarloSettings(
            chunk_size=self.mc_chunk_size,
            threads=self.threads,
            fd_step=self.fd_step,
            regression_basis=list(self.regression_basis),
            normality_alpha=self.normality_alpha,
            clark_ocone_max_bits=self.clark_ocone_max_bits,
            cloud_max_size=self.cloud_max_size,
            bridge_tol=self.bridge_tol,
            bridge_max_iters=self.bridge_max_iters,
        )

    def report_dict(self) -> Dict[str, Any]:
        """Settings that shape results; threads and paths stay out of reports"""
        data = self.model_dump(mode='json')
        for key in ('threads', 'reports_dir'):
            data.pop(key)
        return data
