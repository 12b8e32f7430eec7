"""Scenario files: the schema every experiment front end validates against.

A scenario is a JSON document with an `experiment` selector and the sweep
axes for that experiment.  Unknown keys are rejected so that typos fail
loudly before any compute is spent.
"""

from __future__ import annotations

import json
from importlib import resources
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator

__all__ = [
    "LinkModel",
    "ChanestScenario",
    "MudScenario",
    "ThroughputScenario",
    "ConvergenceScenario",
    "Scenario",
    "parse_scenario",
    "scenario_to_dict",
    "list_presets",
    "load_preset",
    "ScenarioError",
]

MUD_SCHEMES = ("centralized", "ic-soft", "ic-hard", "dc", "nc")
THROUGHPUT_SCHEMES = ("centralized", "equal-share", "ic", "dc", "nc")


class ScenarioError(ValueError):
    """Scenario file failed validation."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LinkModel(_Strict):
    """Static link parameters shared by every sweep point."""

    num_operators: int = Field(ge=1, le=8)
    lines_per_operator: int = Field(ge=1, le=64)
    training_length: Optional[int] = Field(default=None, ge=2)
    constellation: str = "qpsk"
    seed: int = Field(default=0, ge=0, lt=2 ** 64)

    def resolved_training_length(self) -> int:
        if self.training_length is not None:
            return self.training_length
        return self.num_operators * self.lines_per_operator + 1


class ProfileModel(_Strict):
    """Piecewise-linear table over frequency in MHz."""

    freq_mhz: list[float] = Field(min_length=2)
    values: list[float] = Field(min_length=2)

    @model_validator(mode="after")
    def _check(self):
        if len(self.freq_mhz) != len(self.values):
            raise ValueError("freq_mhz and values must have the same length")
        if any(b <= a for a, b in zip(self.freq_mhz, self.freq_mhz[1:])):
            raise ValueError("freq_mhz must be strictly increasing")
        return self


class GapOverrides(_Strict):
    gamma_db: float = 10.8
    max_bits: int = Field(default=12, ge=1)
    framing_overhead: float = Field(default=0.12, ge=0.0, lt=1.0)
    tone_spacing_hz: float = Field(default=48000.0, gt=0.0)


class ChanestScenario(_Strict):
    """Iterative channel-estimation MSE curves with the CRB reference."""

    experiment: Literal["chanest"]
    link: LinkModel
    snr_db: list[float] = Field(min_length=1)
    alpha: list[float] = Field(min_length=1)
    trials: int = Field(ge=1)
    iterations: int = Field(default=8, ge=1)
    training: Literal["random", "orthogonal"] = "random"
    round_mode: Literal["literal", "jacobi"] = "literal"

    @model_validator(mode="after")
    def _check(self):
        if any(a < 0 for a in self.alpha):
            raise ValueError("alpha values must be >= 0")
        return self


class MudScenario(_Strict):
    """SNR at the decision variable across cooperation schemes."""

    experiment: Literal["mud"]
    link: LinkModel
    snr_db: list[float] = Field(default=[15.0], min_length=1)
    alpha: Optional[list[float]] = None
    alpha_db: Optional[list[float]] = None
    k_values: Optional[list[int]] = None
    schemes: list[Literal[MUD_SCHEMES]] = Field(min_length=1)
    iterations: int = Field(default=6, ge=1)
    trials: int = Field(ge=1)
    frame_length: int = Field(default=100, ge=1)
    criterion: Literal["mmse", "zf"] = "mmse"

    @model_validator(mode="after")
    def _check(self):
        if (self.alpha is None) == (self.alpha_db is None):
            raise ValueError("give exactly one of alpha or alpha_db")
        if self.alpha is not None and any(a < 0 for a in self.alpha):
            raise ValueError("alpha values must be >= 0")
        if self.k_values is not None and any(k < 1 for k in self.k_values):
            raise ValueError("k_values must be >= 1")
        return self

    def alpha_values(self) -> list[float]:
        if self.alpha is not None:
            return list(self.alpha)
        return [10.0 ** (a / 20.0) for a in self.alpha_db]

    def operator_counts(self) -> list[int]:
        return self.k_values or [self.link.num_operators]


class ThroughputScenario(_Strict):
    """Per-tone bit loading and band throughput across schemes."""

    experiment: Literal["throughput"]
    link: LinkModel
    tones: int = Field(ge=1)
    start_mhz: float = Field(gt=0.0)
    stop_mhz: float
    alpha_profile_db: ProfileModel
    insertion_loss_db: Optional[ProfileModel] = None
    bands_mhz: list[list[float]] = Field(min_length=1)
    schemes: list[Literal[THROUGHPUT_SCHEMES]] = Field(min_length=1)
    gap: GapOverrides = GapOverrides()
    signal_psd_dbm_hz: float = -76.0
    noise_psd_dbm_hz: float = -140.0
    iterations: int = Field(default=4, ge=1)
    frame_length: int = Field(default=80, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.stop_mhz <= self.start_mhz:
            raise ValueError("stop_mhz must exceed start_mhz")
        for band in self.bands_mhz:
            if len(band) != 2 or band[1] <= band[0]:
                raise ValueError("bands_mhz entries must be [lo, hi] with hi > lo")
        return self


class EquivalenceSettings(_Strict):
    enabled: bool = True
    seeds: int = Field(default=10, ge=1)
    iterations: int = Field(default=6, ge=2)
    frame_length: int = Field(default=4, ge=1)
    # the check materializes dense stacked systems, so it gets its own
    # (small) dimensions independent of the radius sweep
    lines_per_operator: int = Field(default=4, ge=1, le=8)
    training_length: int = Field(default=32, ge=2)


class ConvergenceScenario(_Strict):
    """Spectral radii of the cooperative splits plus equivalence checks."""

    experiment: Literal["convergence"]
    link: LinkModel
    alpha: list[float] = Field(min_length=1)
    seeds: int = Field(ge=1)
    k_values: Optional[list[int]] = None
    training: Literal["random", "orthogonal"] = "orthogonal"
    equivalence: EquivalenceSettings = EquivalenceSettings()

    def operator_counts(self) -> list[int]:
        return self.k_values or [self.link.num_operators]


Scenario = Union[ChanestScenario, MudScenario, ThroughputScenario,
                 ConvergenceScenario]
_ADAPTER = TypeAdapter(Scenario)


def parse_scenario(data) -> Scenario:
    """Validate a scenario document (dict or JSON string)."""
    if isinstance(data, (ChanestScenario, MudScenario, ThroughputScenario,
                         ConvergenceScenario)):
        return data
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    try:
        return _ADAPTER.validate_python(data)
    except Exception as exc:
        raise ScenarioError(f"scenario failed validation: {exc}") from exc


def scenario_to_dict(scenario: Scenario) -> dict:
    return scenario.model_dump(mode="json", exclude_none=True)


def list_presets() -> list:
    base = resources.files("icvec").joinpath("presets")
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> Scenario:
    base = resources.files("icvec").joinpath("presets")
    path = base.joinpath(f"{name}.json")
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ScenarioError(f"unknown preset {name!r}; have {list_presets()}") from None
    return parse_scenario(text)
