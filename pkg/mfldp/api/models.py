from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Any, Dict, List, Literal, Optional


class StrictModel(BaseModel):
    """Base for configs: unknown keys are rejected, infinities serialize as JSON constants."""
    model_config = ConfigDict(extra='forbid', ser_json_inf_nan='constants')


# =====================================================================
# Model configuration
# =====================================================================

class PotentialConfig(StrictModel):
    """Mean-field potential attached to a model."""
    kind: Literal["zero", "quadratic", "curie_weiss"] = Field("zero", description="Potential family")
    beta: float = Field(1.0, description="Interaction strength")


class ModelConfig(StrictModel):
    """JSON model config, e.g. {"model": "ehrenfest", "d": 1, "preset": "potential"}."""
    model: Literal["ehrenfest", "glauber"]
    d: int = Field(..., gt=0, description="Number of coordinates (cube) or states (simplex)")
    preset: Literal["potential", "sqrt", "nonunique", "potts"] = "potential"
    potential: PotentialConfig = Field(default_factory=PotentialConfig)
    epsilon: Optional[float] = Field(None, description="Neighbourhood radius of the non-uniqueness example")
    base_rates: Optional[List[List[float]]] = Field(None, description="d x d base rates r(a,b) for Glauber models")

    @model_validator(mode='after')
    def check_preset(self) -> 'ModelConfig':
        if self.preset in ("sqrt", "nonunique"):
            if self.model != "ehrenfest" or self.d != 1:
                raise ValueError(f"preset '{self.preset}' is a one-dimensional Ehrenfest model (model='ehrenfest', d=1)")
        if self.preset == "potts" and self.model != "glauber":
            raise ValueError("preset 'potts' requires model='glauber'")
        if self.epsilon is not None and self.preset != "nonunique":
            raise ValueError("epsilon is only meaningful for preset 'nonunique'")
        if self.base_rates is not None:
            if self.model != "glauber":
                raise ValueError("base_rates are only meaningful for model='glauber'")
            if len(self.base_rates) != self.d or any(len(row) != self.d for row in self.base_rates):
                raise ValueError(f"base_rates must be a {self.d} x {self.d} table")
        return self


class FlowConfig(StrictModel):
    """Fixed-step integrator settings."""
    dt: float = Field(1e-3, gt=0, description="Step size")
    horizon: float = Field(1.0, gt=0, description="Final time")
    method: Literal["rk4", "euler"] = "rk4"
    boundary_projection: bool = True

    @model_validator(mode='after')
    def step_within_horizon(self) -> 'FlowConfig':
        if self.dt > self.horizon:
            raise ValueError(f"dt={self.dt} exceeds horizon={self.horizon}")
        return self


# =====================================================================
# Reports
# =====================================================================

class RateReport(StrictModel):
    """Monte-Carlo estimate of the path-space decay rate inside a tube around a reference path."""
    n_values: List[int]
    tube_probabilities: List[float]
    decay_estimates: List[Optional[float]]
    reference_action: float
    delta: float
    replicas: int
    seed: int
    rng: str
    absent: List[int] = Field(default_factory=list, description="n values with no path inside the tube")

    @model_validator(mode='after')
    def lengths_agree(self) -> 'RateReport':
        if not (len(self.n_values) == len(self.tube_probabilities) == len(self.decay_estimates)):
            raise ValueError("n_values, tube_probabilities and decay_estimates must have equal lengths")
        for p, rate in zip(self.tube_probabilities, self.decay_estimates):
            if (p > 0) != (rate is not None):
                raise ValueError("decay estimates must be present exactly where the tube probability is positive")
        return self


class LyapunovReport(StrictModel):
    """I_0 evaluated along a McKean-Vlasov flow."""
    times: List[float]
    values: List[float]
    max_increase: float
    tolerance: float
    monotone: bool

    @model_validator(mode='after')
    def verdict_consistent(self) -> 'LyapunovReport':
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have equal lengths")
        if self.monotone != (self.max_increase <= self.tolerance):
            raise ValueError("monotone must equal (max_increase <= tolerance)")
        return self


class ResolventReport(StrictModel):
    """Convergence record of one resolvent solve."""
    scheme: str
    method: str
    iterations: int
    final_update: float
    residual: float
    damping: float
    converged: bool


class ComparisonReport(StrictModel):
    """Empirical uniqueness study for the resolvent equation."""
    lam: float = Field(..., description="Resolvent parameter lambda")
    scheme: str
    resolutions: List[int]
    max_pairwise_differences: List[float]
    refinement_gaps: List[Optional[float]]
    iterations: List[List[int]]


class ModelAudit(StrictModel):
    """Outcome of the rate-field audit of a model."""
    model: str
    samples: int
    checks: Dict[str, bool]
    failures: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


class RunManifest(BaseModel):
    """Echoed on stdout after every CLI run."""
    command: str
    config_hash: str
    seed: Optional[int]
    threads: int
    versions: Dict[str, str]
    wall_time_s: float
    outputs: List[str]


class RunConfig(StrictModel):
    """Fully resolved CLI invocation; hashed into the manifest and embedded in every output."""
    command: str
    model: Optional[ModelConfig] = None
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    output_path: Optional[str] = None

    @field_validator('seed')
    @classmethod
    def non_negative_seed(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 0:
            raise ValueError("seed must be non-negative")
        return v
