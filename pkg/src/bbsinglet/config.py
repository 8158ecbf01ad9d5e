"""Run configuration: YAML file -> validated models -> library objects."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .ga import GAConfig
from .relaxation import RelaxationParams
from .spins import Coupling, CouplingTable, SpeciesChannel, SpinSite, SpinSystem

BUNDLED_PREFIX = "bundled:"


class ConfigError(ValueError):
    """The configuration file is missing, unparsable or fails the schema."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ChannelConfig(_Strict):
    label: str
    relative_gamma: float = Field(1.0, gt=0)
    rf_amplitude_hz: float = Field(0.0, ge=0)


class SiteConfig(_Strict):
    label: str
    species: str
    offset_hz: float = 0.0
    count: int = Field(1, ge=1, description="number of equivalent copies; copies are labelled <label>1..<label>n")


class CouplingConfig(_Strict):
    between: tuple[str, str] = Field(description="site labels; a label with count > 1 means every copy")
    j_hz: float
    form: Literal["weak", "isotropic"] = "weak"


class SpinSystemConfig(_Strict):
    channels: list[ChannelConfig] = Field(min_length=1)
    sites: list[SiteConfig] = Field(min_length=2)
    couplings: list[CouplingConfig] = []
    singlet_pair: tuple[str, str]
    polarizations: dict[str, float] | None = Field(
        None, description="relative Zeeman polarization per species; default gamma ratios to the pair species"
    )


class BBConfig(_Strict):
    dt_s: float = Field(5e-4, gt=0)
    n_segments: int = Field(592, ge=1)


class GASection(_Strict):
    population_size: int = Field(64, ge=1)
    generations: int = Field(500, ge=0)
    tournament_size: int = Field(3, ge=1)
    crossover_rate: float = Field(0.8, ge=0, le=1)
    mutation_rate: float = Field(0.02, ge=0, le=1)
    phase_resolution_deg: float = Field(1.0, gt=0)
    activity_probability: float = Field(0.5, ge=0, le=1)
    elitism_count: int = Field(2, ge=0)
    master_seed: int = Field(0, ge=0, lt=2**64)
    target_q: float | None = None
    stall_generations: int = Field(50, ge=0)
    stall_tolerance: float = Field(1e-4, ge=0)

    def to_ga_config(self, seed: int | None = None) -> GAConfig:
        d = self.model_dump()
        d["phase_resolution"] = math.radians(d.pop("phase_resolution_deg"))
        if seed is not None:
            d["master_seed"] = seed
        return GAConfig(**d)


class GainConfig(_Strict):
    alpha: dict[str, float]
    beta: float = 0.0


class RelaxationConfig(_Strict):
    t1_s: dict[str, float]
    t_singlet_s: float = Field(gt=0)
    tau_ac_s: float = Field(gt=0)
    tau_hb_s: float = Field(gt=0)
    ancilla_residual: float = Field(0.0, ge=0, le=1)
    gain: GainConfig | None = Field(None, description="analytic transfer gain; default: evaluate the BB pulse")

    def to_params(self) -> RelaxationParams:
        return RelaxationParams(dict(self.t1_s), self.t_singlet_s, self.tau_ac_s, self.tau_hb_s)


class OutputConfig(_Strict):
    directory: str = "out"
    formats: list[Literal["csv", "png"]] = ["csv"]


class RunConfig(_Strict):
    spin_system: SpinSystemConfig
    bb: BBConfig = BBConfig()
    ga: GASection = GASection()
    relaxation: RelaxationConfig | None = None
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _cross_checks(self):
        ss = self.spin_system
        labels = [c.label for c in ss.channels]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate channel labels")
        site_labels = [s.label for s in ss.sites]
        if len(set(site_labels)) != len(site_labels):
            raise ValueError("duplicate site labels")
        for s in ss.sites:
            if s.species not in labels:
                raise ValueError(f"site {s.label!r} uses unknown species {s.species!r}")
        for c in ss.couplings:
            for lab in c.between:
                if lab not in site_labels:
                    raise ValueError(f"coupling refers to unknown site {lab!r}")
        for lab in ss.singlet_pair:
            site = next((s for s in ss.sites if s.label == lab), None)
            if site is None:
                raise ValueError(f"singlet_pair refers to unknown site {lab!r}")
            if site.count != 1:
                raise ValueError(f"singlet_pair site {lab!r} must have count 1")
        if ss.polarizations is not None:
            missing = set(labels) - set(ss.polarizations)
            if missing:
                raise ValueError(f"polarizations missing species {sorted(missing)}")
        if self.ga.elitism_count > self.ga.population_size:
            raise ValueError("ga.elitism_count exceeds ga.population_size")
        return self

    # --- conversion --------------------------------------------------------

    def expanded_sites(self) -> list[tuple[str, str, str, float]]:
        """(label, group label, species, offset) for every site in order."""
        out = []
        for s in self.spin_system.sites:
            for k in range(s.count):
                label = s.label if s.count == 1 else f"{s.label}{k + 1}"
                out.append((label, s.label, s.species, s.offset_hz))
        return out

    def build_system(self, max_spins: int | None = 12) -> SpinSystem:
        ss = self.spin_system
        channels = tuple(SpeciesChannel(c.label, c.relative_gamma, c.rf_amplitude_hz) for c in ss.channels)
        expanded = self.expanded_sites()
        sites = tuple(SpinSite(i, sp, off, lab) for i, (lab, _, sp, off) in enumerate(expanded))
        by_group: dict[str, list[int]] = {}
        for i, (_, grp, _, _) in enumerate(expanded):
            by_group.setdefault(grp, []).append(i)
        table = CouplingTable()
        for c in ss.couplings:
            a, b = c.between
            for i in by_group[a]:
                for j in by_group[b]:
                    if i != j:
                        table.set(i, j, Coupling(c.j_hz, c.form))
        pair = tuple(by_group[lab][0] for lab in ss.singlet_pair)
        return SpinSystem(sites, channels, table, pair, max_spins=max_spins)

    def polarizations(self) -> dict[str, float]:
        ss = self.spin_system
        if ss.polarizations is not None:
            return dict(ss.polarizations)
        pair_species = next(s.species for s in ss.sites if s.label == ss.singlet_pair[0])
        ref = next(c.relative_gamma for c in ss.channels if c.label == pair_species)
        return {c.label: c.relative_gamma / ref for c in ss.channels}

    @property
    def n_spins(self) -> int:
        return sum(s.count for s in self.spin_system.sites)


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("bbsinglet.data").iterdir() if p.name.endswith(".yaml"))


def read_config_text(path: str) -> str:
    if path.startswith(BUNDLED_PREFIX):
        name = path[len(BUNDLED_PREFIX):]
        res = resources.files("bbsinglet.data") / f"{name}.yaml"
        if not res.is_file():
            raise ConfigError(f"no bundled config {name!r}; available: {', '.join(bundled_names())}")
        return res.read_text()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return p.read_text()


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: schema error: expected a mapping with a 'spin_system' section")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: schema error:\n{exc}") from exc


def load_config(path: str) -> RunConfig:
    return parse_config(read_config_text(path), path)


def json_schema() -> str:
    return json.dumps(RunConfig.model_json_schema(), indent=2)
