from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class ConeCertificate(BaseModel):
    model_config = ConfigDict(extra="forbid")

    holds: bool = Field(..., description="Whether both cone inclusions hold at every sample.")
    margin_minus: float = Field(..., description="Worst angular margin of the stable inclusion.")
    margin_zero: float = Field(..., description="Worst angular margin of the neutral inclusion.")
    samples: int = Field(..., description="Number of differential samples checked.")


class ConeInclusionReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    holds: bool
    margin_minus: float = Field(..., description="gamma' minus the worst image ratio, (-) cone.")
    margin_plus: float = Field(..., description="gamma' minus the worst image ratio, (+) cone.")
    alpha: float
    gamma: float
    gamma_prime: float
    samples: int


class ConeExpansionReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    min_ratio: float = Field(..., description="Smallest observed ||(Dg_-alpha)^tr v|| / ||v||.")
    bound: float = Field(..., description="C (1 + gamma') / (1 + gamma) theta^-alpha.")
    conservative_bound: float = Field(
        ..., description="C^-1 (1 - gamma') / (1 + gamma) theta^-alpha."
    )
    axis_ratio: float = Field(..., description="Ratio on the stable codirection itself.")
    holds: bool
    alpha: float
    gamma: float
    gamma_prime: float


class ArrowPair(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tau: str
    ell: int
    sigma: str
    n: int


class ArrowReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pairs: List[ArrowPair] = Field(default_factory=list)
    norm_sigma: Dict[str, float] = Field(..., description="||F||_sigma per cone.")
    norm_tau: Dict[str, float] = Field(..., description="||F||_{tau,o} per cone.")
    bound: Dict[str, float] = Field(..., description="Closed bound per (sigma, tau) pair.")
    measured_sum: Dict[str, float] = Field(
        default_factory=dict, description="Geometric sum over admissible level gaps."
    )
    implied_constant: Dict[str, float] = Field(default_factory=dict)


class LambdaMinFit(BaseModel):
    model_config = ConfigDict(extra="forbid")

    value: float = Field(..., description="Least-squares slope of log sup over alpha.")
    r_squared: float
    alphas: List[float]
    log_values: List[float]
    determinant_path: Optional[float] = Field(
        None, description="Slope of the stable-determinant formula with t~ = min(t, -s)."
    )
    agreement: Optional[float] = None


class RenormResult(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rho: float
    alpha: float
    x: List[float]
    tau: float
    residual: float = Field(..., description="Distance from h_tau(g_alpha x) to g_alpha(h_rho x).")
    derivative: float = Field(..., description="d/drho tau from the stable expansion formula.")
    derivative_check: Optional[float] = Field(None, description="Finite-difference d/drho tau.")
    method: str = Field(..., description="closed_form, leaf or cocycle.")


class IdentityReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    residuals: Dict[str, float] = Field(default_factory=dict)
    growth_exponent: Optional[float] = None
    growth_ratio_min: Optional[float] = None
    growth_ratio_max: Optional[float] = None
    inverse_ratio_min: Optional[float] = Field(
        None, description="min |rho| / (c e^(h alpha)) over samples with tau(rho, alpha, x) = c."
    )
    inverse_ratio_max: Optional[float] = None
    decay_theta: Optional[float] = None
    derivative_min: Optional[float] = None
    h_top: float
    samples: int


class LasotaYorkeReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    z_real: float
    z_imag: float
    growth_bound: float = Field(..., description="Measured A0 with headroom.")
    lambda_min: float
    constant: float = Field(..., description="Smallest C making the inequality hold.")
    single_step_constant: float = Field(..., description="C2 of ||R_z phi|| <= C2/(Re z - A0).")
    asymptote: float = Field(..., description="n-th root asymptote after spectral removal.")
    raw_asymptotes: List[float] = Field(default_factory=list)
    bound: float = Field(..., description="1 / (Re z - lambda_min).")
    passes: bool


class GrowthReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rate: float
    constant: float
    h_top: float
    alphas: List[float]
    log_ratios: List[float]
    envelope_ratio_min: Optional[float] = None
    envelope_ratio_max: Optional[float] = None
    global_constant: Optional[float] = Field(None, description="sup ||L_a phi|| e^(-h a).")


class DolgopyatReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: float
    delta: float
    lambda_max: float
    imag_parts: List[float]
    powers: List[int]
    norms: List[float]
    constant_power: List[float] = Field(..., description="C with ||R^n|| <= C^n |.|^-n.")
    constant_plain: List[float] = Field(..., description="C with ||R^n|| <= C |.|^-n.")
    uniform: bool


class DualBoundReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    support_length: float
    holder_norm: float
    envelope: float
    max_ratio: float
    implied_constant: float


class IbpReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    residual: float
    order: int = 0
    measured_norm: Optional[float] = None
    envelope: Optional[float] = None
    decay_exponent: Optional[float] = None


class MollifierSweep(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epsilons: List[float]
    difference_norms: List[float]
    gradient_norms: List[float]
    difference_slope: float
    gradient_slope: float
    identity_residual: float
    balanced_slope: Optional[float] = None


class Verdict(BaseModel):
    model_config = ConfigDict(extra="forbid")

    stage: str
    metric: str
    value: float
    threshold: float
    passed: bool


class Manifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config_hash: str
    version: str
    experiment: str
    seed: int
    created_at: str
    finished_at: Optional[str] = None
    stages: Dict[str, str] = Field(default_factory=dict, description="stage -> ok / failed.")
    errors: Dict[str, str] = Field(default_factory=dict)
    verdicts: List[Verdict] = Field(default_factory=list)
    artifacts: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts) and "failed" not in self.stages.values()


class PeriodicOrbitReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    periods: List[int]
    counts: List[int] = Field(..., description="Number of base points fixed by g_n.")
    estimates: List[float] = Field(..., description="Entropy estimate at each period.")
    estimate: float = Field(..., description="Estimate at the longest period.")
    formula: float = Field(..., description="Closed-form topological entropy.")


class CutoffSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T: float
    epsilon: float
    depth: int
    betas_plus: List[float]
    betas_minus: List[float]
    c1: float = Field(..., description="Worst ratio of e^(h(beta_k - beta_(k-1))) to epsilon.")
    initial_defect: float = Field(..., description="|tau(T, beta_0, x) - 1/epsilon|.")
    indicator_defects: List[float] = Field(..., description="Grid sup defect of each partial sum.")
    integer_times: bool


class ExpansionTerm(BaseModel):
    model_config = ConfigDict(extra="forbid")

    real: float
    imag: float
    record: int = Field(..., description="Index of the resonance record.")
    column: int
    level: int = Field(1, description="Jordan level j of the generalized eigenvector.")
    functional_real: float
    functional_imag: float
    coefficients_abs: List[float]
    coefficient_sup: float


class ExpansionFit(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T: List[float]
    gamma_real: List[float]
    gamma_imag: List[float]
    reconstruction_real: List[float]
    reconstruction_imag: List[float]
    residual: List[float] = Field(..., description="|E_T| at each grid point.")
    terms: List[ExpansionTerm] = Field(default_factory=list)
    leading: float = Field(..., description="Leading resonance, expected at h_top.")
    mean_real: float
    mean_imag: float
    residual_exponent: float
    eps_prime: float = 0.0
    polynomial_statistic: float = Field(..., description="sup_T T^eps' |gamma / T - mu(phi)|.")
    epsilon: float
    cutoff_difference: Optional[float] = Field(
        None, description="Largest coefficient change between the two cutoff scales."
    )


class RegularizedSplit(BaseModel):
    model_config = ConfigDict(extra="forbid")

    L: float
    epsilon: float
    direct_real: float
    direct_imag: float
    smoothed_term: float = Field(..., description="|(i/L) int e^(iLG) div h_eps|.")
    remainder_term: float = Field(..., description="|int e^(iLG) grad G . (h - h_eps)|.")
    residual: float
    gradient_norm: float = Field(..., description="sup |grad h_eps|.")
    difference_norm: float = Field(..., description="sup |h - h_eps|.")
