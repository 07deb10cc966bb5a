"""Declarative experiment configuration: YAML files validated by pydantic models.

Unknown keys are rejected everywhere. Each experiment kind reads its own
block; blocks for other kinds must be absent. Presets ship as YAML files
inside the package.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from coupledhj.cell import DEFAULT_DELTAS
from coupledhj.fields import make_field
from coupledhj.grid import CouplingMatrix
from coupledhj.hamiltonians import HamiltonianSpec

KINDS = ("cell", "table", "evolve", "rate", "flat", "dirichlet", "mc", "dpp")
FieldEntry = Union[float, dict[str, Any]]


class ConfigError(ValueError):
    """Configuration failed to load or validate."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ComponentConfig(_Strict):
    family: Literal["zero", "abs", "quadratic", "quartic"]
    a: FieldEntry = 1.0
    V: FieldEntry = 0.0

    @field_validator("a", "V")
    @classmethod
    def _field_ok(cls, v: FieldEntry) -> FieldEntry:
        make_field(v)
        return v


class CouplingConfig(_Strict):
    matrix: Optional[list[list[float]]] = None
    rates: Optional[tuple[float, float]] = None

    @model_validator(mode="after")
    def _one_form(self) -> CouplingConfig:
        if (self.matrix is None) == (self.rates is None):
            raise ValueError("give exactly one of 'matrix' or 'rates'")
        self.build()
        return self

    def build(self) -> CouplingMatrix:
        if self.matrix is not None:
            return CouplingMatrix(np.asarray(self.matrix, dtype=float))
        return CouplingMatrix.from_rates(*self.rates)


class SolverConfig(_Strict):
    N: int = Field(512, ge=8)
    deltas: list[float] = list(DEFAULT_DELTAS)
    tol: float = Field(1e-6, gt=0)
    flux: Literal["llf", "lf"] = "llf"
    R_grad: Optional[float] = Field(None, gt=0)
    max_steps: int = Field(20_000_000, ge=1)


class Expectation(_Strict):
    """Closed-form target for ``H_bar``: ``abs`` = ``|P|``, ``square1`` = ``P_1^2``, ``const`` = ``value``."""

    kind: Literal["abs", "square1", "const"]
    value: float = 0.0
    tol: float = Field(0.05, gt=0)

    def target(self, P: np.ndarray) -> float:
        if self.kind == "abs":
            return float(np.linalg.norm(P))
        if self.kind == "square1":
            return float(P[0] ** 2)
        return self.value


class CellBlock(_Strict):
    P: list[list[float]]
    expect: Optional[Expectation] = None
    lower_bound: Optional[float] = None
    lower_bound_tol: float = 1e-9
    strict_gap: bool = False


class CorrectorCheck(_Strict):
    P: float = 1.0
    tol: float = 0.05


class TableBlock(_Strict):
    axes: list[list[float]]
    expect: Optional[Expectation] = None
    corrector_check: Optional[CorrectorCheck] = None
    elementary: bool = False


class EvolveBlock(_Strict):
    eps: list[float]
    T: float = Field(gt=0)
    f: list[FieldEntry]
    eps_cells: int = Field(32, ge=4)
    times: Optional[list[float]] = None
    checks: list[Literal["sandwich", "gaps_decrease", "mean_extrapolation", "spectral_decay"]] = ["sandwich"]
    sandwich_slack_h: float = 5.0
    check_time: float = 0.1
    extrapolation_times: list[float] = [0.01, 0.02, 0.03]
    extrapolation_tol: float = 2e-2


class RateBlock(_Strict):
    eps: list[float]
    T: float = Field(gt=0)
    f: list[FieldEntry]
    eps_cells: int = Field(32, ge=4)
    table_axes: list[float] = [-4.0, 4.0, 33]
    table_N: int = 256
    check_time: float = 0.1
    checks: list[Literal["slope", "monotone", "layer", "initial_datum", "gap", "sandwich"]] = [
        "slope", "monotone", "layer"]
    sandwich_eps: float = 0.1
    sandwich_slack_h: float = 5.0
    min_slope: float = 0.28
    layer_spread: float = 0.5
    gap_tol: float = 2e-2


class FlatBlock(_Strict):
    experiment: Literal["thm-4.8", "thm-4.9", "thm-4.10", "thm-4.12", "thm-4.13", "cor-4.13", "thm-4.14"]
    eps0: Optional[float] = None
    N: Optional[int] = None


class DirichletBlock(_Strict):
    eps: list[float]
    interval: tuple[float, float] = (0.0, 1.0)
    N: int = Field(400, ge=4)
    g_left: list[float]
    g_right: list[float]
    table_axes: list[float] = [-4.0, 4.0, 81]
    table_N: int = 256
    tol: float = 1e-9
    gap_tol: float = 0.05
    adjacent: int = 1


class MCBlock(_Strict):
    mode: Literal["jump_law", "coupling", "hopf_lax", "dirichlet", "effective"]
    eps: float = Field(gt=0)
    paths: int = Field(100_000, ge=16)
    dt: Optional[float] = Field(None, gt=0)
    x: float = 0.2
    t: float = 0.1
    f: list[FieldEntry] = []
    P: float = 1.0
    horizon: float = 20.0
    n_vel: int = 21
    interval: tuple[float, float] = (0.0, 1.0)
    g_left: list[float] = []
    g_right: list[float] = []
    exit_side: Literal["left", "right"] = "left"
    exit_states: list[int] = []
    expect_tol: float = 0.15


class DPPBlock(_Strict):
    eps: float = 1.0
    x: float = 0.3
    t: float = 0.2
    h_split: float = 0.1
    paths: int = 100_000
    dt: float = 0.005
    N: int = 256
    f: list[FieldEntry]


class ExperimentConfig(_Strict):
    kind: Literal["cell", "table", "evolve", "rate", "flat", "dirichlet", "mc", "dpp"]
    name: str = "custom"
    description: str = ""
    dim: Literal[1, 2] = 1
    hamiltonian: list[ComponentConfig] = []
    coupling: Optional[CouplingConfig] = None
    solver: SolverConfig = SolverConfig()
    seed: int = 0
    jobs: int = Field(1, ge=1)
    cell: Optional[CellBlock] = None
    table: Optional[TableBlock] = None
    evolve: Optional[EvolveBlock] = None
    rate: Optional[RateBlock] = None
    flat: Optional[FlatBlock] = None
    dirichlet: Optional[DirichletBlock] = None
    mc: Optional[MCBlock] = None
    dpp: Optional[DPPBlock] = None

    @model_validator(mode="after")
    def _consistent(self) -> ExperimentConfig:
        for k in KINDS:
            present = getattr(self, k) is not None
            if k == self.kind and not present:
                raise ValueError(f"kind {k!r} needs a '{k}' block")
            if k != self.kind and present:
                raise ValueError(f"block '{k}' given for kind {self.kind!r}")
        if self.kind != "flat":
            if not self.hamiltonian:
                raise ValueError("hamiltonian components are required")
            spec = self.spec()
            if spec.m != self.coupling_matrix().m:
                raise ValueError("coupling size differs from the number of components")
        cell_N = {"cell": self.solver.N, "table": self.solver.N, "rate": getattr(self.rate, "table_N", None),
                  "dirichlet": getattr(self.dirichlet, "table_N", None)}.get(self.kind)
        if cell_N is not None and 1.0 / cell_N > min(self.solver.deltas) * (1 + 1e-12):
            raise ValueError(f"cell grid too coarse: 1/N = {1.0 / cell_N:.4g} exceeds the smallest delta "
                             f"{min(self.solver.deltas):g}")
        return self

    def spec(self) -> HamiltonianSpec:
        return HamiltonianSpec.from_config([c.model_dump() for c in self.hamiltonian], self.dim)

    def coupling_matrix(self) -> CouplingMatrix:
        if self.coupling is None:
            return CouplingMatrix.symmetric(max(len(self.hamiltonian), 2))
        return self.coupling.build()


def validate(data: Any) -> ExperimentConfig:
    """Validate a parsed mapping; raises ``ConfigError`` with the pydantic message."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except (ValidationError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return validate(data)


def _preset_dir():
    return resources.files("coupledhj") / "presets"


def list_presets() -> dict[str, str]:
    """Preset name to one-line description, sorted by name."""
    out = {}
    for entry in sorted(_preset_dir().iterdir(), key=lambda p: p.name[:-5] if p.name.endswith(".yaml") else p.name):
        if entry.name.endswith(".yaml"):
            data = yaml.safe_load(entry.read_text())
            out[entry.name[:-5]] = data.get("description", "")
    return out


def preset_data(name: str) -> dict[str, Any]:
    path = _preset_dir() / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; see list-presets")
    return yaml.safe_load(path.read_text())


def load_preset(name: str) -> ExperimentConfig:
    return validate(preset_data(name))
