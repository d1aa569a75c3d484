"""Parameter models for the maps, the skew product and the flow.

All models are immutable pydantic models; invalid combinations raise
:class:`wildtorus.exceptions.ParameterError` from :func:`make_map_params` and
:func:`make_flow_params`, and ``pydantic.ValidationError`` when the models are
instantiated directly.
"""
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from wildtorus.exceptions import ParameterError


class MapParams(BaseModel):
    """One concrete endomorphism ``F_{λ,μ}`` together with its skew extension.

    Attributes:
        lam: Contraction parameter λ in (0, 1) (alias ``lambda``).
        sigma: Expanding eigenvalue σ of the linear field.
        mu: Contracting eigenvalue μ in (0, σ]; ``μ = σ`` gives the planar map ``F_λ``.
        eta: Strong contraction η > σ.
        beta0: Fiber contraction of the passage near the singularity.
        beta1: Fiber contraction of the folding map, in (0, 1/2).
        eps_perturb: Amplitude of the radial bump perturbation.
        perturb_center_re: Real part of the bump centre.
        perturb_center_im: Imaginary part of the bump centre.
        perturb_radius: Radius of the bump support.
    """
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra='forbid')

    lam: float = Field(0.95, alias='lambda', gt=0.0, lt=1.0)
    sigma: float = Field(1.0, gt=0.0)
    mu: float = Field(0.95, gt=0.0)
    eta: float = Field(2.0, gt=0.0)
    beta0: float = Field(1e-4, gt=0.0, lt=1.0)
    beta1: float = Field(0.1, gt=0.0, lt=0.5)
    eps_perturb: float = Field(0.0, ge=0.0)
    perturb_center_re: float = 5.0
    perturb_center_im: float = 0.0
    perturb_radius: float = Field(1.0, gt=0.0)

    @model_validator(mode='after')
    def _check_ordering(self) -> 'MapParams':
        if not self.mu <= self.sigma < self.eta:
            raise ValueError(f'expected 0 < mu <= sigma < eta, got mu={self.mu}, sigma={self.sigma}, eta={self.eta}')
        if self.beta0 * self.beta1 >= 0.5:
            raise ValueError(f'beta0*beta1 must be < 1/2, got {self.beta0 * self.beta1}')
        return self

    @property
    def kappa(self) -> float:
        """Radial exponent μ/σ."""
        return self.mu / self.sigma

    @property
    def fiber_exponent(self) -> float:
        return self.eta / self.sigma

    @property
    def beta(self) -> float:
        return self.beta0 * self.beta1

    @property
    def radius(self) -> float:
        """Radius ``2(1−λ)⁻¹`` of the disk ``B_λ``."""
        return 2.0 / (1.0 - self.lam)

    @property
    def unattained_radius(self) -> float:
        return 1.0 - self.lam

    @property
    def is_planar(self) -> bool:
        return self.mu == self.sigma

    @property
    def perturb_center(self) -> complex:
        return complex(self.perturb_center_re, self.perturb_center_im)

    @property
    def saddle_guess(self) -> float:
        """``1 + (1−λ)⁻¹``; exact saddle location when μ = σ."""
        return 1.0 + 1.0 / (1.0 - self.lam)

    def with_changes(self, **changes: Any) -> 'MapParams':
        data = self.model_dump()
        data.update(changes)
        return make_map_params(**data)

    @classmethod
    def planar(cls, lam: float = 0.95, **changes: Any) -> 'MapParams':
        """Parameters of the planar family ``F_λ`` (μ = σ)."""
        sigma = changes.pop('sigma', 1.0)
        return make_map_params(lam=lam, sigma=sigma, mu=sigma, **changes)

    @classmethod
    def hyperbolic(cls, **changes: Any) -> 'MapParams':
        """Preset with the fundamental annulus inside the domain of hyperbolicity."""
        return cls.planar(lam=changes.pop('lam', 0.999), **changes)

    @classmethod
    def tangency(cls, **changes: Any) -> 'MapParams':
        """Preset for curved arcs and tangency certificates; ``A⁰`` needs ``r(1−λ)⁻¹`` above the ``H_λ`` threshold."""
        return cls.planar(lam=changes.pop('lam', 0.999), **changes)


class FlowParams(BaseModel):
    """Parameters of the hybrid five-dimensional vector field.

    ``a`` and ``b`` are derived from λ so that ``a·b = 1/4``.
    """
    model_config = ConfigDict(frozen=True, extra='forbid')

    base: MapParams = Field(default_factory=MapParams)
    epsilon_iso: float = Field(1e-3, gt=0.0, lt=0.5)
    eps_w: float = Field(0.1, gt=0.0, lt=1.0)
    mu0: Optional[float] = None
    rtol: float = Field(1e-11, gt=0.0)
    atol: float = Field(1e-12, gt=0.0)
    time_cap: float = Field(1e3, gt=0.0)
    method: str = 'DOP853'

    @property
    def b(self) -> float:
        return 4.0 / (1.0 - self.base.lam)

    @property
    def a(self) -> float:
        return (1.0 - self.base.lam) / 16.0

    @property
    def singular_eigenvalues(self) -> tuple:
        p = self.base
        return (-p.mu, p.sigma, p.sigma, -p.eta, -p.eta)

    def with_changes(self, **changes: Any) -> 'FlowParams':
        data = self.model_dump()
        data.update(changes)
        return make_flow_params(**data)


def make_map_params(**kwargs: Any) -> MapParams:
    """Builds :class:`MapParams`, converting validation failures to :class:`ParameterError`."""
    try:
        return MapParams(**kwargs)
    except ValidationError as e:
        raise ParameterError(describe_validation_error(e)) from e


def make_flow_params(**kwargs: Any) -> FlowParams:
    try:
        return FlowParams(**kwargs)
    except ValidationError as e:
        raise ParameterError(describe_validation_error(e)) from e


def params_summary(p: MapParams) -> Dict[str, float]:
    """Flat provenance record used by reports."""
    return {
        'lambda': p.lam,
        'sigma': p.sigma,
        'mu': p.mu,
        'eta': p.eta,
        'beta0': p.beta0,
        'beta1': p.beta1,
        'eps_perturb': p.eps_perturb,
        'perturb_center_re': p.perturb_center_re,
        'perturb_center_im': p.perturb_center_im,
        'perturb_radius': p.perturb_radius,
        'radius': p.radius,
    }


def describe_validation_error(e: ValidationError) -> str:
    parts = []
    for error in e.errors():
        location = '.'.join(str(item) for item in error.get('loc', ())) or 'params'
        parts.append(f"{location}: {error.get('msg')}")
    return '; '.join(parts)

