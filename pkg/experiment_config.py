#!/usr/bin/env python3
"""
Experiment Configuration Models
Pydantic models for self-contained JSON experiment files

Features:
- Gate model, initial state, surface and partition specifications
- Suite options for the verification runs and the convergence sweep
- Cross-field validation of cuts, patches, capacity and outcome-record size
- load_config with field-named validation errors
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import Config
from config_events import CapacityError
from detection_protocol import DetectionRun
from fock_hilbert import (
    LocalFactor, StateLike, check_capacity, product_state, random_density, random_state,
    single_particle, vacuum_state,
)
from lattice_geometry import LatticeSurface, Partition, Region, slice_decompose
from qca_dynamics import Defect, GateModel


logger = logging.getLogger(__name__)


class ConfigValidationError(ValueError):
    """Raised when an experiment file cannot be parsed or validated"""


class DefectEnum(str, Enum):
    """Negative-control gate modifications"""
    none = "none"
    nonlocal_phase = "nonlocal"
    vacuum_creation = "vacuum_creation"


class InitialKindEnum(str, Enum):
    """Initial state families"""
    vacuum = "vacuum"
    single_particle = "single_particle"
    product = "product"
    random = "random"


class SurfaceGeneratorEnum(str, Enum):
    """Named surface shapes"""
    flat = "flat"
    staircase = "staircase"
    vee = "vee"
    peak = "peak"


class ModelSpec(BaseModel):
    """Local gate parameters"""
    model_config = ConfigDict(extra='forbid')

    theta: float = Field(default=0.0, description="Coin angle mixing up and down movers")
    theta_y: float = Field(default=0.0, description="Hopping angle of the y-species")
    coupling: float = Field(default=0.0, description="Emission–absorption angle")
    phase: float = Field(default=0.0, description="Emission–absorption phase")
    interacting: bool = Field(default=False, description="Include the y-species and the coupling gate")
    defect: DefectEnum = Field(default=DefectEnum.none, description="Negative-control modification")

    @model_validator(mode='after')
    def validate_free_model(self):
        if not self.interacting and (self.coupling or self.theta_y):
            raise ValueError("model: coupling and theta_y need interacting=true")
        return self

    def build(self) -> GateModel:
        return GateModel(theta=self.theta, theta_y=self.theta_y, coupling=self.coupling,
                         phase=self.phase, interacting=self.interacting,
                         defect=Defect(self.defect.value))


Amplitude = Union[float, Tuple[float, float]]


class InitialStateSpec(BaseModel):
    """Initial state ψ_0 (or ρ_0) on the flat surface at layer 0"""
    model_config = ConfigDict(extra='forbid')

    kind: InitialKindEnum = Field(default=InitialKindEnum.vacuum, description="State family")
    site: Optional[int] = Field(None, ge=0, description="Occupied site of a single particle")
    spin: str = Field(default="up", description="Direction of an x-particle: up or down")
    species: str = Field(default="x", description="Particle species: x or y")
    local_vectors: Dict[int, List[Amplitude]] = Field(
        default_factory=dict, description="Per-site local vectors of a product state, [re, im] or real")
    seed: Optional[int] = Field(None, ge=0, description="Seed of a random state")
    mixed_rank: Optional[int] = Field(None, ge=1, le=64, description="Rank of a random mixed state")
    concentrated_in: Optional[List[int]] = Field(None, description="Support sites of a random state")

    @field_validator('spin')
    def validate_spin(cls, v):
        if v not in ('up', 'down'):
            raise ValueError(f"initial.spin must be 'up' or 'down', got {v!r}")
        return v

    @field_validator('species')
    def validate_species(cls, v):
        if v not in ('x', 'y'):
            raise ValueError(f"initial.species must be 'x' or 'y', got {v!r}")
        return v

    @model_validator(mode='after')
    def validate_kind_fields(self):
        if self.kind is InitialKindEnum.single_particle and self.site is None:
            raise ValueError("initial: single_particle needs a site")
        if self.kind is InitialKindEnum.random and self.seed is None:
            raise ValueError("initial: random state needs a seed")
        if self.kind is InitialKindEnum.product and not self.local_vectors:
            raise ValueError("initial: product state needs local_vectors")
        return self

    def build(self, region: Region, factor: LocalFactor) -> StateLike:
        if self.kind is InitialKindEnum.vacuum:
            return vacuum_state(region, factor)
        if self.kind is InitialKindEnum.single_particle:
            return single_particle(region, factor, self.site, self.spin, self.species)
        if self.kind is InitialKindEnum.product:
            vectors = {site: [complex(*a) if isinstance(a, tuple) else complex(a) for a in vec]
                       for site, vec in self.local_vectors.items()}
            return product_state(region, factor, vectors)
        rng = np.random.default_rng(self.seed)
        if self.mixed_rank is not None:
            return random_density(region, factor, rng, rank=self.mixed_rank)
        support = Region.from_sites(region.surface, self.concentrated_in) \
            if self.concentrated_in is not None else None
        return random_state(region, factor, rng, concentrated_in=support)


class SurfaceSpec(BaseModel):
    """Target surface Σ, as explicit layers or a named shape"""
    model_config = ConfigDict(extra='forbid')

    layers: Optional[List[int]] = Field(None, min_length=1, description="Layer per site")
    generator: Optional[SurfaceGeneratorEnum] = Field(None, description="Named shape")
    layer: int = Field(default=0, ge=0, description="Layer of a flat surface")
    offset: int = Field(default=1, description="Staircase offset; odd gives a cut")
    low: int = Field(default=0, ge=0, description="Staircase floor")
    high: Optional[int] = Field(None, ge=0, description="Staircase ceiling")
    center: int = Field(default=0, ge=0, description="Left site of the flat vee/peak centre")
    base: int = Field(default=0, ge=0, description="Bottom layer of a vee")
    top: int = Field(default=0, ge=0, description="Top layer of a peak")

    @model_validator(mode='after')
    def validate_source(self):
        if (self.layers is None) == (self.generator is None):
            raise ValueError("surface: give exactly one of layers or generator")
        return self

    def build(self, n_sites: int) -> LatticeSurface:
        if self.layers is not None:
            if len(self.layers) != n_sites:
                raise ValueError(f"surface: {len(self.layers)} layers for {n_sites} sites")
            return LatticeSurface(tuple(self.layers))
        if self.generator is SurfaceGeneratorEnum.flat:
            return LatticeSurface.flat(n_sites, self.layer)
        if self.generator is SurfaceGeneratorEnum.staircase:
            return LatticeSurface.staircase(n_sites, self.offset, self.low, self.high)
        if self.generator is SurfaceGeneratorEnum.vee:
            return LatticeSurface.vee(n_sites, self.center, self.base)
        return LatticeSurface.peak(n_sites, self.center, self.top)


class PartitionSpec(BaseModel):
    """Detector patches as inclusive site ranges or explicit site lists"""
    model_config = ConfigDict(extra='forbid')

    ranges: Optional[List[Tuple[int, int]]] = Field(None, min_length=1, description="Inclusive [first, last] per patch")
    sites: Optional[List[List[int]]] = Field(None, min_length=1, description="Site list per patch")

    @model_validator(mode='after')
    def validate_source(self):
        if (self.ranges is None) == (self.sites is None):
            raise ValueError("partition: give exactly one of ranges or sites")
        return self

    def build(self, n_sites: int) -> Partition:
        if self.ranges is not None:
            return Partition.from_ranges(n_sites, self.ranges)
        return Partition.from_site_lists(n_sites, self.sites)


class SuiteOptions(BaseModel):
    """Verification suite and sweep settings"""
    model_config = ConfigDict(extra='forbid')

    m_values: List[int] = Field(default_factory=lambda: [4, 2, 1], min_length=1, description="Sweep round lengths")
    fs_trials: int = Field(default=Config.DEFAULT_FS_TRIALS, ge=1, le=100, description="Random states per FS check")
    operator_checks_max_sites: int = Field(default=3, ge=0, le=8, description="Largest lattice for dense operator inequalities")
    cut_high: int = Field(default=2, ge=0, le=6, description="Top layer of the cuts paired in the axiom checks")
    exhaustive_max_sites: int = Field(default=4, ge=1, le=6, description="Largest lattice with exhaustive cut pairs")
    random_pairs: int = Field(default=8, ge=1, le=200, description="Random cut pairs on larger lattices")
    max_trails: int = Field(default=32, ge=0, le=4096, description="Records followed by the auxiliary ρ check")
    sandwich_trials: int = Field(default=100, ge=0, le=10000, description="Random projector triples")
    workers: int = Field(default=Config.DEFAULT_WORKERS, ge=1, le=64, description="Branch threads")
    seed: int = Field(default=0, ge=0, description="Seed for randomised checks")
    double_detection: bool = Field(default=False, description="Report the exploratory double-detection discrepancy")
    expect_failure: bool = Field(default=False, description="Negative control: axioms are expected to fail")

    @field_validator('m_values')
    def validate_m_values(cls, v):
        if any(m < 1 for m in v):
            raise ValueError(f"suite.m_values must be positive, got {v}")
        return sorted(set(v), reverse=True)


class ExperimentConfig(BaseModel):
    """One self-contained experiment"""
    model_config = ConfigDict(extra='forbid')

    name: str = Field(default="experiment", min_length=1, max_length=100, description="Experiment name")
    n_sites: int = Field(..., ge=1, le=Config.MAX_EVENT_SITES, description="Number of lattice sites")
    model: ModelSpec = Field(default_factory=ModelSpec, description="Gate model")
    initial: InitialStateSpec = Field(default_factory=InitialStateSpec, description="Initial state")
    surface: SurfaceSpec = Field(..., description="Target surface Σ")
    partition: PartitionSpec = Field(..., description="Detector patches")
    m: int = Field(default=1, ge=1, description="Round length in layers")
    suite: SuiteOptions = Field(default_factory=SuiteOptions, description="Verification options")

    @model_validator(mode='after')
    def validate_experiment(self):
        try:
            sigma = self.surface.build(self.n_sites)
            sigma.require_brickwork_cut()
            sigma.require_non_negative()
        except ValueError as e:
            raise ValueError(str(e) if str(e).startswith('surface:') else f"surface: {e}")
        try:
            part = self.partition.build(self.n_sites)
        except ValueError as e:
            raise ValueError(f"partition: {e}")
        factor = self.build_model().factor
        try:
            check_capacity(factor, self.n_sites)
        except CapacityError as e:
            raise ValueError(f"n_sites: {e}")
        if self.initial.site is not None and self.initial.site >= self.n_sites:
            raise ValueError(f"initial.site: {self.initial.site} outside lattice [0, {self.n_sites})")
        bad = [s for s in list(self.initial.local_vectors) + list(self.initial.concentrated_in or [])
               if not 0 <= s < self.n_sites]
        if bad:
            raise ValueError(f"initial: sites {bad} outside lattice [0, {self.n_sites})")
        for m in sorted({self.m, *self.suite.m_values}):
            dec = slice_decompose(sigma, part, m)
            bits = dec.r * dec.n_protocol_rounds
            if bits > Config.MAX_OUTCOME_BITS:
                raise ValueError(
                    f"partition: outcome record needs {bits} bits at m={m}, limit {Config.MAX_OUTCOME_BITS}"
                )
        return self

    def build_model(self) -> GateModel:
        return self.model.build()

    def build_surface(self) -> LatticeSurface:
        return self.surface.build(self.n_sites)

    def build_partition(self) -> Partition:
        return self.partition.build(self.n_sites)

    def build_initial(self) -> StateLike:
        region = Region.full(LatticeSurface.flat(self.n_sites, 0))
        return self.initial.build(region, self.build_model().factor)

    def build_run(self, m: int = None, replace_vacuum: bool = True) -> DetectionRun:
        model = self.build_model()
        return DetectionRun(
            model=model,
            initial=self.build_initial(),
            sigma=self.build_surface(),
            partition=self.build_partition(),
            m=self.m if m is None else m,
            replace_vacuum=replace_vacuum,
            check_isometry=not self.suite.expect_failure,
        )


def _describe_validation_error(error: ValidationError) -> str:
    first = error.errors()[0]
    location = '.'.join(str(part) for part in first.get('loc', ()))
    message = first.get('msg', str(error))
    if message.startswith('Value error, '):
        message = message[len('Value error, '):]
    if location and not message.startswith(location.split('.')[0]):
        return f"{location}: {message}"
    return message


def parse_config(data: Dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError(_describe_validation_error(e)) from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate one experiment file"""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigValidationError(f"config: cannot read {path}: {e.strerror}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigValidationError(f"config: invalid JSON at line {e.lineno}, column {e.colno}") from e
    if not isinstance(data, dict):
        raise ConfigValidationError("config: top level must be a JSON object")
    config = parse_config(data)
    logger.info(f"Loaded experiment {config.name!r} from {path}: {config.n_sites} sites")
    return config
