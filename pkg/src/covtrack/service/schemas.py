"""Request and response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str
    catalogs: list[str]


class RunRequest(BaseModel):
    """One scenario run; the config mapping follows the YAML schema."""

    config: dict = Field(default_factory=dict)
    preset: str | None = None
    overrides: list[str] = Field(default_factory=list)
    out_dir: str | None = None


class RunResponse(BaseModel):
    summary: dict
    out_dir: str | None = None


class BatchRequest(BaseModel):
    """A sweep over scenario parameters; see the batch file schema."""

    base: dict = Field(default_factory=dict)
    sweep: dict
    out_dir: str


class BatchResponse(BaseModel):
    report: dict
    out_dir: str


class TypeRow(BaseModel):
    type: str
    viewing_angle_deg: float
    radius_m: float
    law: str
    basis: str
    capability: float
    capacity: float
    capacity_quoted: float | None = None
    deviation_pct: float | None = None


class TeamRow(BaseModel):
    team: str
    composition: str
    size: int
    total_capacity: float
    heterogeneity_sqrt: float
    heterogeneity_disc: float


class CapacityTableResponse(BaseModel):
    catalog: str
    mu_over_cell_area: float
    types: list[TypeRow]
    teams: list[TeamRow]


class PartitionDemoRequest(BaseModel):
    method: str = "ccvd-cod"
    n_sites: int = 5
    seed: int = 0
    grid: int = 40
    size: float = 40.0
    include_owner: bool = False


class PartitionDemoResponse(BaseModel):
    method: str
    n_sites: int
    seed: int
    grid: int
    sites: list[list[float]]
    shares: list[float]
    counts: list[int]
    cost: float
    ascii: list[str]
    owner: list[int] | None = None
