"""Hybrid vector field on ``[−2, 3] × ℂ × ℂ`` whose first return is the skew product.

The s-axis is tiled by four zones:

* ``[−2, −1]``: a pullback field carrying ``z`` to ``z/b``;
* ``[−1, 1]``: the linear saddle ``L_μ`` seen through the chart ``ψ_μ``;
* ``[1, 2]``: the constant field ``(1, 0)``;
* ``[2, 3]``: the isotopy from the identity to ``Ĝ†``.

A trajectory is integrated zone by zone and the end state of one zone starts the
next one. The zones are glued continuously at ``s = −1, 1, 2``; the smooth
interpolation between them is not built. Under ``Q`` the interval ``[−2, 3]`` wraps
once around the solid torus, so the return from ``s = −2`` to ``s = 3`` is the
return map of the flow on the torus.
"""
import abc
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import newton, root
from scipy.spatial import cKDTree

from wildtorus.core_maps import derivative_matrix, eval_limit_skew, eval_map, eval_skew, eval_torus_skew
from wildtorus.exceptions import ContinuationError, ConvergenceError, NoCrossingError, ParameterError
from wildtorus.manifolds import skew_fixed_point
from wildtorus.params import FlowParams, MapParams
from wildtorus.reports import Report, complex_pair
from wildtorus.types import ComplexArray, SkewPoint

logger = logging.getLogger(__name__)

ZONE_EDGES = (-2.0, -1.0, 1.0, 2.0, 3.0)
FLAT_MARGIN = 0.1
U_RAMP = 0.25
ISOTOPY_LADDER = (1.0, 0.5, 0.25, 0.125)
DIFF_STEP = 1e-6
INVERSE_TOL = 1e-12
PASSAGE_FACTOR = 10.0
HYBRID_NOTE = 'hybrid field: zones glued continuously at s = -1, 1, 2 without smooth interpolation'
TRAJECTORY_HEADER = ('t', 's', 're_z', 'im_z', 're_w', 'im_w')


def smoothstep(x):
    """Quintic ramp from 0 to 1 on ``[0, 1]`` with vanishing first and second derivatives at the ends."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def smoothstep_derivative(x):
    x = np.clip(x, 0.0, 1.0)
    return 30.0 * x * x * (1.0 - x) * (1.0 - x)


def h0(r):
    """Cutoff of ``ψ_μ``: zero up to 1/2, ``(2r − 1)³`` on ``[1/2, 1]``; C² at 1/2 with ``h0′(1) = 6``."""
    x = np.clip(2.0 * np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
    return x * x * x


def h0_derivative(r):
    r = np.asarray(r, dtype=float)
    x = np.clip(2.0 * r - 1.0, 0.0, 1.0)
    return np.where(r > 1.0, 0.0, 6.0 * x * x)


def _flat_ramp(s, start: float):
    """Ramp over ``[start, start + 1]`` that is constant within ``FLAT_MARGIN`` of both ends."""
    return smoothstep((s - start - FLAT_MARGIN) / (1.0 - 2.0 * FLAT_MARGIN))


def _flat_ramp_derivative(s, start: float):
    return smoothstep_derivative((s - start - FLAT_MARGIN) / (1.0 - 2.0 * FLAT_MARGIN)) / (1.0 - 2.0 * FLAT_MARGIN)


def chi(x):
    """0 on ``[0, 1/3]``, 1 on ``[2/3, 1]``."""
    return smoothstep(3.0 * x - 1.0)


def chi_derivative(x):
    return 3.0 * smoothstep_derivative(3.0 * x - 1.0)


class FlowState(NamedTuple):
    s: float
    z: complex
    w: complex

    def as_vector(self) -> np.ndarray:
        return np.array([self.s, self.z.real, self.z.imag, self.w.real, self.w.imag])

    @classmethod
    def from_vector(cls, x: Sequence[float]) -> 'FlowState':
        return cls(float(x[0]), complex(x[1], x[2]), complex(x[3], x[4]))

    @classmethod
    def on_section(cls, s_level: float, x: SkewPoint) -> 'FlowState':
        if x.v:
            raise ParameterError('the flow is five-dimensional; SkewPoint.v must be empty')
        return cls(float(s_level), complex(x.z), complex(x.w))

    def skew(self) -> SkewPoint:
        return SkewPoint(self.z, self.w)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of one integrated trajectory; ``zone_times`` is the time spent in each zone."""
    t: np.ndarray
    s: np.ndarray
    z: ComplexArray
    w: ComplexArray
    zone_times: Dict[str, float] = field(default_factory=dict)

    @property
    def end(self) -> FlowState:
        return FlowState(float(self.s[-1]), complex(self.z[-1]), complex(self.w[-1]))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def rows(self) -> Iterator[Tuple[float, ...]]:
        for t, s, z, w in zip(self.t, self.s, self.z, self.w):
            yield float(t), float(s), float(z.real), float(z.imag), float(w.real), float(w.imag)

    @classmethod
    def join(cls, parts: Sequence[Tuple[str, 'Trajectory']]) -> 'Trajectory':
        times, ss, zs, ws = [], [], [], []
        zone_times: Dict[str, float] = {}
        offset = 0.0
        for k, (name, part) in enumerate(parts):
            cut = 0 if k == 0 else 1
            times.append(part.t[cut:] + offset)
            ss.append(part.s[cut:])
            zs.append(part.z[cut:])
            ws.append(part.w[cut:])
            zone_times[name] = zone_times.get(name, 0.0) + part.duration
            offset += part.duration
        return cls(np.concatenate(times), np.concatenate(ss), np.concatenate(zs), np.concatenate(ws), zone_times)


def _segment(t, s, z, w) -> Trajectory:
    return Trajectory(np.asarray(t, dtype=float), np.asarray(s, dtype=float),
                      np.asarray(z, dtype=np.complex128), np.asarray(w, dtype=np.complex128))


class Zone(abc.ABC):
    name: str
    s_range: Tuple[float, float]

    @abc.abstractmethod
    def velocity(self, s: float, z: complex, w: complex) -> Tuple[float, complex, complex]:
        ...

    @abc.abstractmethod
    def advance(self, state: FlowState, s_target: float, time_left: float) -> Trajectory:
        """Integrates from ``state`` until ``s = s_target`` or until ``time_left`` runs out."""

    def s_speed(self, s: float, z: complex, w: complex) -> float:
        return float(self.velocity(s, z, w)[0])


class _SZone(Zone):
    """Zones where ``ṡ = 1``, integrated with s as the independent variable."""

    def __init__(self, fp: FlowParams):
        self.params = fp

    @abc.abstractmethod
    def _rhs(self, s: float, y: np.ndarray) -> np.ndarray:
        ...

    def s_speed(self, s: float, z: complex, w: complex) -> float:
        return 1.0

    def advance(self, state: FlowState, s_target: float, time_left: float) -> Trajectory:
        fp = self.params
        end = state.s + min(s_target - state.s, time_left)
        y0 = [state.z.real, state.z.imag, state.w.real, state.w.imag]
        sol = solve_ivp(self._rhs, (state.s, end), y0, method=fp.method, rtol=fp.rtol, atol=fp.atol)
        if not sol.success:
            raise ConvergenceError(f'{self.name} zone: {sol.message}')
        return _segment(sol.t - state.s, sol.t, sol.y[0] + 1j * sol.y[1], sol.y[2] + 1j * sol.y[3])


class PullbackZone(_SZone):
    """``X̃ = (1, −A·φ′(s)·ln b·z, 0)``; with ``A = 1`` the Poincaré map ``s = −2 → −1`` is ``z ↦ z/b``."""
    name = 'pullback'
    s_range = (ZONE_EDGES[0], ZONE_EDGES[1])

    def __init__(self, fp: FlowParams, amplitude: float = 1.0):
        super().__init__(fp)
        self.amplitude = amplitude
        self._rate = amplitude * math.log(fp.b)

    def _gain(self, s: float) -> float:
        return -float(_flat_ramp_derivative(s, self.s_range[0])) * self._rate

    def velocity(self, s, z, w):
        return 1.0, self._gain(s) * complex(z), 0j

    def _rhs(self, s, y):
        g = self._gain(s)
        return np.array([g * y[0], g * y[1], 0.0, 0.0])


class SaddleZone(Zone):
    """``Dψ_μ(L_μ)`` on ``ψ_μ(W)``.

    The chart ``ψ_μ`` is the identity for ``|z| ≤ 1/2`` and sends the face ``|z| = 1``
    of ``W`` onto ``s = 1`` by ``(s, z, w) ↦ (1, (1 − λ + λb^κ(−s))z, β₀b^{η/σ}w)``.
    Trajectories are integrated in the chart, where the field is linear, and mapped out.
    """
    name = 'saddle'
    s_range = (ZONE_EDGES[1], ZONE_EDGES[2])

    def __init__(self, fp: FlowParams):
        p = fp.base
        self.params = fp
        self.mu, self.sigma, self.eta, self.lam = p.mu, p.sigma, p.eta, p.lam
        self.b_kappa = fp.b ** p.kappa
        self.fiber_gain = p.beta0 * fp.b ** p.fiber_exponent

    def _gains(self, s, r):
        h = h0(r)
        m = -self.lam + self.lam * self.b_kappa * (-s)
        return h, m, h * m + 1.0, h * (self.fiber_gain - 1.0) + 1.0

    def chart_to_field(self, s, z, w):
        """``ψ_μ``, elementwise on arrays."""
        h, _, g, k = self._gains(s, np.abs(z))
        return h * (1.0 - s) + s, g * z, k * w

    def field_to_chart(self, state: FlowState) -> FlowState:
        """``ψ_μ⁻¹`` by a two-dimensional root solve in ``(s, |z|)``."""
        target_s, radius = state.s, abs(state.z)

        def residual(x):
            h, _, g, _ = self._gains(x[0], x[1])
            return [float(h * (1.0 - x[0]) + x[0] - target_s), float(g * x[1] - radius)]

        sol = root(residual, [target_s, radius], method='hybr', options={'xtol': 1e-14})
        error = float(np.max(np.abs(residual(sol.x))))
        if error > INVERSE_TOL * (1.0 + abs(target_s) + radius):
            raise ConvergenceError('psi_mu inverse did not converge', residual=error)
        s, r = float(sol.x[0]), float(sol.x[1])
        z = 0j if radius == 0.0 else state.z * (r / radius)
        k = self._gains(s, r)[3]
        return FlowState(s, complex(z), complex(state.w / k))

    def chart_velocity(self, s, z, w):
        """Push-forward of ``L_μ = (−μs, σz, −ηw)`` by ``ψ_μ`` at the chart point ``(s, z, w)``."""
        r = np.abs(z)
        h, m, g, k = self._gains(s, r)
        ds = -self.mu * s
        dh = h0_derivative(r) * self.sigma * r
        dm = -self.lam * self.b_kappa * ds
        dg = dh * m + h * dm
        dk = dh * (self.fiber_gain - 1.0)
        return dh * (1.0 - s) + (1.0 - h) * ds, (dg + g * self.sigma) * z, (dk - k * self.eta) * w

    def jacobian_determinant(self, s, r):
        """Determinant of ``(s, |z|) ↦ (s′, |z′|)``; ``ψ_μ`` is a local diffeomorphism where it is positive."""
        h, m, g, _ = self._gains(s, r)
        dh = h0_derivative(r)
        return (1.0 - h) * (g + r * dh * m) + dh * (1.0 - s) * h * self.lam * self.b_kappa * r

    def velocity(self, s, z, w):
        chart = self.field_to_chart(FlowState(s, complex(z), complex(w)))
        ds, dz, dw = self.chart_velocity(chart.s, chart.z, chart.w)
        return float(ds), complex(dz), complex(dw)

    def advance(self, state: FlowState, s_target: float, time_left: float) -> Trajectory:
        fp = self.params
        if state.s == self.s_range[0] and abs(state.z) > 0.5 + 1e-9:
            raise ContinuationError('trajectory enters s = -1 outside the disk |z| <= 1/2', last_valid=state)
        chart = self.field_to_chart(state)
        mu, sigma, eta = self.mu, self.sigma, self.eta

        def rhs(_, y):
            return np.array([-mu * y[0], sigma * y[1], sigma * y[2], -eta * y[3], -eta * y[4]])

        if s_target >= self.s_range[1]:
            def event(_, y):
                return math.hypot(y[1], y[2]) - 1.0
        else:
            def event(_, y):
                h = float(h0(math.hypot(y[1], y[2])))
                return h * (1.0 - y[0]) + y[0] - s_target
        event.terminal = True
        event.direction = 1.0

        y0 = [chart.s, chart.z.real, chart.z.imag, chart.w.real, chart.w.imag]
        horizon = min(time_left, fp.time_cap)
        sol = solve_ivp(rhs, (0.0, horizon), y0, method=fp.method, rtol=fp.rtol, atol=fp.atol, events=event)
        if sol.status == -1:
            raise ConvergenceError(f'saddle zone: {sol.message}')
        s, z, w = self.chart_to_field(sol.y[0], sol.y[1] + 1j * sol.y[2], sol.y[3] + 1j * sol.y[4])
        s = np.array(s, dtype=float)
        if sol.status == 1:
            s[-1] = s_target
        return _segment(sol.t, s, z, w)


class ConstantZone(_SZone):
    name = 'identity'
    s_range = (ZONE_EDGES[2], ZONE_EDGES[3])

    def velocity(self, s, z, w):
        return 1.0, 0j, 0j

    def _rhs(self, s, y):
        return np.zeros(4)

    def advance(self, state: FlowState, s_target: float, time_left: float) -> Trajectory:
        span = min(s_target - state.s, time_left)
        return _segment([0.0, span], [state.s, state.s + span], [state.z] * 2, [state.w] * 2)


class Isotopy:
    """Family ``Ĥ_τ``, τ ∈ [0, 1], with ``Ĥ₀ = id`` and ``Ĥ₁ = Ĝ†``.

    The thirds of ``[0, 1]`` run the straight homotopy from the identity to ``Ĝ₀``, the
    family ``Ĝ_s`` and the straight homotopy from ``Ĝ₁`` to ``Ĝ†``, each reparametrised by
    a smoothstep so that ``∂Ĥ/∂τ`` vanishes at the joints.
    """
    STAGES = ('identity_to_G0', 'G_s_family', 'G1_to_Gdag')

    def __init__(self, p: MapParams, epsilon: float):
        self.params = p
        self.epsilon = epsilon

    def domain(self) -> Tuple[float, float]:
        """Radii of the annulus ``B̃_λ``."""
        lam = self.params.lam
        return (1.0 - lam) / 2.0, 2.0 / (1.0 - lam) - 1.0 - lam / 2.0

    @staticmethod
    def curve(s: float, e1):
        """``γ_s`` at ``e1 = exp(2πiθ)``."""
        return (1.0 - s) * e1 + s * e1 * e1, s * e1

    @staticmethod
    def curve_derivative(s: float, e1):
        """``γ′_s = dγ_s/dθ``."""
        return 2j * np.pi * ((1.0 - s) * e1 + 2.0 * s * e1 * e1), 2j * np.pi * s * e1

    @staticmethod
    def transverse(s: float, e1):
        """The field ``u_s``, complex-independent of ``γ′_s``."""
        ones = np.ones_like(e1)
        if s <= U_RAMP:
            x = chi(s / U_RAMP)
            return -4.0 * x * ones, (1.0 - x) * ones
        if s < 1.0 - U_RAMP:
            return -4.0 * ones, 0.0 * ones
        x = chi(1.0 - (1.0 - s) / U_RAMP)
        return -4.0 * (1.0 - x) * ones, x * np.conj(e1)

    @staticmethod
    def transverse_ds(s: float, e1):
        ones = np.ones_like(e1)
        if s <= U_RAMP:
            d = chi_derivative(s / U_RAMP) / U_RAMP
            return -4.0 * d * ones, -d * ones
        if s < 1.0 - U_RAMP:
            return 0.0 * ones, 0.0 * ones
        d = chi_derivative(1.0 - (1.0 - s) / U_RAMP) / U_RAMP
        return 4.0 * d * ones, d * np.conj(e1)

    def folding(self, s: float, z, w):
        """``Ĝ_s(z, w) = γ_s(θ) + ε(−i t γ′_s(θ) + w u_s(θ))`` with ``t = |z|``."""
        t = np.abs(z)
        e1 = z / t
        e2 = e1 * e1
        u1, u2 = self.transverse(s, e1)
        eps = self.epsilon
        first = (1.0 - s) * e1 + s * e2 + eps * (2.0 * np.pi * t * ((1.0 - s) * e1 + 2.0 * s * e2) + w * u1)
        second = s * e1 + eps * (2.0 * np.pi * t * s * e1 + w * u2)
        return first, second

    def folding_ds(self, s: float, z, w):
        t = np.abs(z)
        e1 = z / t
        e2 = e1 * e1
        du1, du2 = self.transverse_ds(s, e1)
        eps = self.epsilon
        first = e2 - e1 + eps * (2.0 * np.pi * t * (2.0 * e2 - e1) + w * du1)
        second = e1 + eps * (2.0 * np.pi * t * e1 + w * du2)
        return first, second

    def limit(self, z, w):
        t = np.abs(z)
        e1 = z / t
        return z * z / t + 1.0, e1 / 2.0 + self.params.beta1 * np.conj(e1) * w

    def stage(self, tau: float) -> str:
        return self.STAGES[min(int(3.0 * tau), 2)]

    def at(self, tau: float, z, w):
        if tau <= 1.0 / 3.0:
            k = smoothstep(3.0 * tau)
            g1, g2 = self.folding(0.0, z, w)
            return (1.0 - k) * z + k * g1, (1.0 - k) * w + k * g2
        if tau < 2.0 / 3.0:
            return self.folding(float(smoothstep(3.0 * tau - 1.0)), z, w)
        k = smoothstep(3.0 * tau - 2.0)
        a1, a2 = self.folding(1.0, z, w)
        b1, b2 = self.limit(z, w)
        return (1.0 - k) * a1 + k * b1, (1.0 - k) * a2 + k * b2

    def velocity(self, tau: float, z, w):
        """``∂Ĥ_τ/∂τ`` at the source point ``(z, w)``."""
        if tau <= 1.0 / 3.0:
            dk = 3.0 * smoothstep_derivative(3.0 * tau)
            g1, g2 = self.folding(0.0, z, w)
            return dk * (g1 - z), dk * (g2 - w)
        if tau < 2.0 / 3.0:
            ds = 3.0 * smoothstep_derivative(3.0 * tau - 1.0)
            d1, d2 = self.folding_ds(float(smoothstep(3.0 * tau - 1.0)), z, w)
            return ds * d1, ds * d2
        dk = 3.0 * smoothstep_derivative(3.0 * tau - 2.0)
        a1, a2 = self.folding(1.0, z, w)
        b1, b2 = self.limit(z, w)
        return dk * (b1 - a1), dk * (b2 - a2)

    def inverse(self, tau: float, z: complex, w: complex, guess: Optional[Tuple[complex, complex]] = None
                ) -> Tuple[complex, complex]:
        """``Ĥ_τ⁻¹`` by a damped Newton solve started at ``guess``."""
        gz, gw = guess if guess is not None else (z, w)

        def residual(x):
            a, b = self.at(tau, complex(x[0], x[1]), complex(x[2], x[3]))
            return [a.real - z.real, a.imag - z.imag, b.real - w.real, b.imag - w.imag]

        sol = root(residual, [gz.real, gz.imag, gw.real, gw.imag], method='hybr', options={'xtol': 1e-14})
        error = float(np.max(np.abs(residual(sol.x))))
        if error > INVERSE_TOL * (1.0 + abs(z) + abs(w)):
            raise ConvergenceError(f'isotopy inverse at tau={tau:.6g} did not converge', residual=error)
        return complex(sol.x[0], sol.x[1]), complex(sol.x[2], sol.x[3])


class IsotopyZone(_SZone):
    """``X̃ = (1, ∂/∂s Ĥ_{h₁(s)}(Ĥ_{h₁(s)}⁻¹(z, w)))``; the Poincaré map ``s = 2 → 3`` is ``Ĝ†``."""
    name = 'isotopy'
    s_range = (ZONE_EDGES[3], ZONE_EDGES[4])

    def __init__(self, fp: FlowParams, isotopy: Isotopy):
        super().__init__(fp)
        self.isotopy = isotopy
        self._guess: Optional[Tuple[complex, complex]] = None

    def _rate(self, s: float) -> Tuple[float, float]:
        return float(_flat_ramp(s, self.s_range[0])), float(_flat_ramp_derivative(s, self.s_range[0]))

    def _field(self, s, z, w, guess):
        tau, rate = self._rate(s)
        if rate == 0.0:
            return 0j, 0j
        z0, w0 = self.isotopy.inverse(tau, z, w, guess)
        dz, dw = self.isotopy.velocity(tau, z0, w0)
        return rate * complex(dz), rate * complex(dw)

    def velocity(self, s, z, w):
        dz, dw = self._field(s, complex(z), complex(w), None)
        return 1.0, dz, dw

    def _rhs(self, s, y):
        dz, dw = self._field(s, complex(y[0], y[1]), complex(y[2], y[3]), self._guess)
        return np.array([dz.real, dz.imag, dw.real, dw.imag])

    def advance(self, state: FlowState, s_target: float, time_left: float) -> Trajectory:
        tau = self._rate(state.s)[0]
        # every point of one trajectory has the same Ĥ-preimage
        source = self.isotopy.inverse(tau, state.z, state.w) if tau > 0.0 else (state.z, state.w)
        segment = IsotopyZone(self.params, self.isotopy)
        segment._guess = source
        return _SZone.advance(segment, state, s_target, time_left)


class PiecewiseField:
    """The four zones of ``X̃_{λ,μ}`` and the single singularity ``õ`` at the origin."""
    singularity = FlowState(0.0, 0j, 0j)

    def __init__(self, fp: FlowParams, amplitude: float, isotopy: Isotopy):
        self.params = fp
        self.amplitude = amplitude
        self.isotopy = isotopy
        self.zones: Tuple[Zone, ...] = (PullbackZone(fp, amplitude), SaddleZone(fp), ConstantZone(fp),
                                        IsotopyZone(fp, isotopy))

    @property
    def base(self) -> MapParams:
        return self.params.base

    def zone_for(self, s: float) -> Zone:
        if not ZONE_EDGES[0] <= s <= ZONE_EDGES[-1]:
            raise ParameterError(f's={s} is outside [-2, 3]')
        for zone in self.zones:
            if s < zone.s_range[1]:
                return zone
        return self.zones[-1]

    def velocity(self, state: FlowState) -> FlowState:
        ds, dz, dw = self.zone_for(state.s).velocity(state.s, state.z, state.w)
        return FlowState(float(ds), complex(dz), complex(dw))

    def velocity_vector(self, x: Sequence[float]) -> np.ndarray:
        return self.velocity(FlowState.from_vector(x)).as_vector()

    def notes(self) -> List[str]:
        return [HYBRID_NOTE, f'pullback amplitude {self.amplitude:.12g}', f'epsilon_iso {self.isotopy.epsilon:.6g}']


@dataclass(frozen=True)
class Section:
    """The level ``s = s_level`` with the chart ``B_λ × D̄`` or ``B̃_λ × D̄``."""
    s_level: float
    chart: str = 'B'

    def radii(self, p: MapParams) -> Tuple[float, float]:
        if self.chart == 'B_tilde':
            return Isotopy(p, 0.0).domain()
        return 0.0, p.radius

    def samples(self, p: MapParams, n: int, seed: int = 0, lower: Optional[float] = None,
                fiber: float = 0.9) -> List[FlowState]:
        rng = np.random.default_rng(seed)
        lo, hi = self.radii(p)
        lo = max(lo, lower if lower is not None else 0.05 * hi)
        r = np.sqrt(rng.uniform(lo * lo, hi * hi, n))
        z = r * np.exp(2j * np.pi * rng.random(n))
        w = fiber * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
        return [FlowState(self.s_level, complex(a), complex(b)) for a, b in zip(z, w)]

    def transversality(self, field: PiecewiseField, n: int = 64, seed: int = 0) -> float:
        """Smallest s-component of the field over chart samples; positive means transversal."""
        zone = field.zone_for(self.s_level)
        return min(zone.s_speed(x.s, x.z, x.w) for x in self.samples(field.base, n, seed))


SECTION_UNSTABLE = Section(ZONE_EDGES[0], 'B')
SECTION_STABLE = Section(ZONE_EDGES[3], 'B_tilde')
SECTION_RETURN = Section(ZONE_EDGES[4], 'B')


class InjectivityReport(Report):
    epsilon: float
    stages: Dict[str, int]
    min_independence: float


def _grid_neighbour_failures(images: np.ndarray, shape: Tuple[int, ...], periodic: Sequence[int]) -> int:
    """Samples whose nearest image is not the image of a neighbour in the source grid."""
    count = images.shape[0]
    _, nearest = cKDTree(images).query(images, k=2)
    own = np.arange(count)
    other = np.where(nearest[:, 0] == own, nearest[:, 1], nearest[:, 0])
    index = np.array(np.unravel_index(own, shape)).T
    delta = np.abs(index - index[other])
    for axis in periodic:
        delta[:, axis] = np.minimum(delta[:, axis], shape[axis] - delta[:, axis])
    return int(np.count_nonzero(delta.max(axis=1) > 1))


def independence_margin(isotopy: Isotopy, n_s: int = 101, n_theta: int = 64) -> float:
    """Smallest ``|det(γ′_s, u_s)| / (|γ′_s|·|u_s|)`` over an ``(s, θ)`` grid."""
    e1 = np.exp(2j * np.pi * np.arange(n_theta) / n_theta)
    worst = math.inf
    for s in np.linspace(0.0, 1.0, n_s):
        g1, g2 = isotopy.curve_derivative(float(s), e1)
        u1, u2 = isotopy.transverse(float(s), e1)
        det = np.abs(g1 * u2 - g2 * u1)
        scale = np.sqrt(np.abs(g1) ** 2 + np.abs(g2) ** 2) * np.sqrt(np.abs(u1) ** 2 + np.abs(u2) ** 2)
        worst = min(worst, float(np.min(det / scale)))
    return worst


def isotopy_injectivity(isotopy: Isotopy, n_t: int = 8, n_theta: int = 32, n_w: int = 3, n_tau: int = 13
                        ) -> InjectivityReport:
    """Sampled injectivity of every time slice of ``Ĥ`` on ``B̃_λ × D̄``."""
    lo, hi = isotopy.domain()
    t = np.linspace(lo, hi, n_t)
    theta = np.arange(n_theta) / n_theta
    axis = np.linspace(-0.6, 0.6, n_w)
    T, TH, WR, WI = np.meshgrid(t, theta, axis, axis, indexing='ij')
    z = (T * np.exp(2j * np.pi * TH)).ravel()
    w = (WR + 1j * WI).ravel()
    shape = T.shape
    stages = {name: 0 for name in Isotopy.STAGES}
    witness = None
    for tau in np.linspace(0.0, 1.0, n_tau):
        a, b = isotopy.at(float(tau), z, w)
        images = np.column_stack([a.real, a.imag, b.real, b.imag])
        failures = _grid_neighbour_failures(images, shape, periodic=(1,))
        if failures:
            stages[isotopy.stage(float(tau))] += failures
            witness = witness or {'tau': float(tau), 'stage': isotopy.stage(float(tau))}
    margin = independence_margin(isotopy)
    return InjectivityReport(
        check='isotopy_injectivity',
        epsilon=isotopy.epsilon,
        stages=stages,
        min_independence=margin,
        violations=sum(stages.values()) + int(margin <= 0.0),
        witness=witness,
    )


def build_isotopy(fp: FlowParams) -> Isotopy:
    """``Ĥ`` with the first ``epsilon_iso`` of the halving ladder whose slices sample as injective.

    Raises:
        ParameterError: If no rung passes; the message names the failing stage.
    """
    report = None
    for factor in ISOTOPY_LADDER:
        isotopy = Isotopy(fp.base, fp.epsilon_iso * factor)
        report = isotopy_injectivity(isotopy)
        if report.passed:
            return isotopy
        logger.warning('isotopy not injective at epsilon %.3g (%s); shrinking', isotopy.epsilon, report.witness)
    raise ParameterError(f"isotopy stage {report.witness['stage'] if report.witness else 'G_s_family'} "
                         f'is not injective for any epsilon_iso down to {fp.epsilon_iso * ISOTOPY_LADDER[-1]:.3g}')


def check_chart(zone: SaddleZone, n_r: int = 60, n_s: int = 40) -> int:
    """Samples of ``W`` where ``ψ_μ`` fails to be a local diffeomorphism."""
    r = np.linspace(0.01, 1.0, n_r)[:, None]
    q = np.linspace(0.01, 1.0, n_s)[None, :]
    # W is swept by L_μ-orbits from s = -1, |z| <= 1/2
    s = -q * np.minimum(1.0, (0.5 / r) ** (zone.mu / zone.sigma))
    return int(np.count_nonzero(zone.jacobian_determinant(s, r) <= 0.0))


def calibrate_pullback(fp: FlowParams) -> float:
    """Amplitude ``A`` of the pullback field for which ``s = −2 → −1`` contracts by exactly ``1/b``."""
    target = 1.0 / fp.b

    def defect(amplitude: float) -> float:
        zone = PullbackZone(fp, amplitude)
        return abs(zone.advance(FlowState(ZONE_EDGES[0], 1 + 0j, 0j), ZONE_EDGES[1], math.inf).end.z) - target

    amplitude = float(newton(defect, 1.0, x1=1.01, tol=1e-13, maxiter=20))
    error = abs(defect(amplitude))
    if error > 1e-6 * target:
        raise ConvergenceError('pullback calibration', residual=error)
    return amplitude


def build_field(fp: FlowParams) -> PiecewiseField:
    """Assembles and validates ``X̃_{λ,μ}``.

    Raises:
        ParameterError: If the fiber images leave ``D̄``, if ``ψ_μ`` degenerates on
            ``W`` or if no isotopy passes the injectivity sampling.
    """
    p = fp.base
    if p.beta0 * p.radius ** p.fiber_exponent > 1.0:
        raise ParameterError(f'beta0*R^(eta/sigma) = {p.beta0 * p.radius ** p.fiber_exponent:.4g} > 1: '
                             'the passage does not map the fiber disk into itself; lower beta0 or lambda')
    degenerate = check_chart(SaddleZone(fp))
    if degenerate:
        raise ParameterError(f'stage psi_mu is not a local diffeomorphism at {degenerate} samples of W')
    amplitude = calibrate_pullback(fp)
    isotopy = build_isotopy(fp)
    logger.info('flow field: amplitude %.12g, epsilon_iso %.3g, b=%.6g, a=%.6g', amplitude, isotopy.epsilon,
                fp.b, fp.a)
    return PiecewiseField(fp, amplitude, isotopy)


def integrate(field: PiecewiseField, x0: FlowState, until: Optional[float] = None,
              duration: Optional[float] = None) -> Trajectory:
    """Integrates from ``x0`` up to the level ``s = until`` or for ``duration`` units of time.

    Raises:
        NoCrossingError: If the level is not reached within the time cap.
        ContinuationError: If the trajectory leaves the domain of the field.
    """
    fp = field.params
    if until is None and duration is None:
        raise ParameterError('integrate needs a target level or a duration')
    target = ZONE_EDGES[-1] if until is None else float(until)
    if not ZONE_EDGES[0] <= x0.s <= target <= ZONE_EDGES[-1]:
        raise ParameterError(f'cannot integrate from s={x0.s} to s={target}')
    time_left = min(fp.time_cap, math.inf if duration is None else duration)
    state = x0
    parts: List[Tuple[str, Trajectory]] = []
    while state.s < target:
        zone = field.zone_for(state.s)
        stop = min(target, zone.s_range[1])
        part = zone.advance(state, stop, time_left)
        parts.append((zone.name, part))
        time_left -= part.duration
        state = part.end
        if state.s < stop:
            if duration is not None and time_left <= 1e-12:
                break
            raise NoCrossingError(target, fp.time_cap, state)
    if not parts:
        return _segment([0.0], [x0.s], [x0.z], [x0.w])
    return Trajectory.join(parts)


def poincare(field: PiecewiseField, source: Section, target: Section, x: FlowState) -> FlowState:
    """First hit of ``target`` from the point ``x`` of ``source``; wraps through ``s = 3 ≡ −2``."""
    state = FlowState(source.s_level, x.z, x.w)
    if target.s_level <= source.s_level:
        end = integrate(field, state, ZONE_EDGES[-1]).end
        state = FlowState(ZONE_EDGES[0], end.z, end.w)
        if target.s_level == ZONE_EDGES[0]:
            return state
    return integrate(field, state, target.s_level).end


def to_torus(fp: FlowParams, state: FlowState) -> Tuple[float, complex, complex]:
    """``Q(s, z, w) = ((s + 2)/5 mod 1, a·z, a·w)``."""
    return ((state.s + 2.0) / 5.0) % 1.0, fp.a * state.z, fp.a * state.w


def from_torus(fp: FlowParams, theta: float, z: complex, w: complex) -> FlowState:
    return FlowState(5.0 * (theta % 1.0) - 2.0, z / fp.a, w / fp.a)


def torus_velocity(field: PiecewiseField, theta: float, z: complex, w: complex) -> Tuple[float, complex, complex]:
    """``DQ(X̃)`` at a point of the solid torus."""
    fp = field.params
    v = field.velocity(from_torus(fp, theta, z, w))
    return v.s / 5.0, fp.a * v.z, fp.a * v.w


def torus_first_return(field: PiecewiseField, x: SkewPoint) -> SkewPoint:
    """Return map of ``Q(Σᵘ)`` in the chart of ``Σᵘ``: one turn around ``ℝ/ℤ``."""
    fp = field.params
    theta, z, w = to_torus(fp, FlowState.on_section(ZONE_EDGES[0], x))
    end = integrate(field, from_torus(fp, theta, z, w), ZONE_EDGES[-1]).end
    theta, z, w = to_torus(fp, end)
    return from_torus(fp, theta, z, w).skew()


def fit_fiber_constant(p: MapParams, inputs: Sequence[FlowState], outputs: Sequence[FlowState]) -> float:
    """Least-squares ``c`` in ``w_out ≈ c·|z|^{η/σ}·w_in``."""
    basis = np.array([abs(x.z) ** p.fiber_exponent * x.w for x in inputs])
    values = np.array([y.w for y in outputs])
    a = np.concatenate([basis.real, basis.imag])[:, None]
    b = np.concatenate([values.real, values.imag])
    return float(np.linalg.lstsq(a, b, rcond=None)[0][0])


def _comparison(source: FlowState, integrated: FlowState, closed: SkewPoint) -> Dict[str, Any]:
    return {
        'input': [complex_pair(source.z), complex_pair(source.w)],
        'integrated': [complex_pair(integrated.z), complex_pair(integrated.w)],
        'closed_form': [complex_pair(closed.z), complex_pair(closed.w)],
        'abs_err': max(abs(integrated.z - closed.z), abs(integrated.w - closed.w)),
    }


class LegReport(Report):
    leg: str
    samples: int
    tolerance: float
    max_z_err: float
    max_abs_err: float
    fitted_constant: Optional[float] = None
    comparisons: List[Dict[str, Any]]


def unstable_to_stable_check(field: PiecewiseField, n: int = 12, seed: int = 0, tolerance: float = 1e-6
                             ) -> LegReport:
    """``Σᵘ → Σˢ`` against ``(T(z), c|z|^{η/σ}w)`` with one fitted ``c``."""
    p = field.base
    inputs = SECTION_UNSTABLE.samples(p, n, seed, lower=0.1)
    outputs = [poincare(field, SECTION_UNSTABLE, SECTION_STABLE, x) for x in inputs]
    constant = fit_fiber_constant(p, inputs, outputs)
    model = p.with_changes(beta0=constant)
    closed = [eval_torus_skew(model, x.skew()) for x in inputs]
    comparisons = [_comparison(x, y, c) for x, y, c in zip(inputs, outputs, closed)]
    z_err = max(abs(y.z - c.z) for y, c in zip(outputs, closed))
    errors = [item['abs_err'] for item in comparisons]
    logger.info('sigma_u -> sigma_s: z error %.3e, fitted constant %.10g (beta0 %.10g)', z_err, constant, p.beta0)
    return LegReport(
        check='unstable_to_stable_leg',
        leg='sigma_u_to_sigma_s',
        samples=n,
        tolerance=tolerance,
        max_z_err=z_err,
        max_abs_err=max(errors),
        fitted_constant=constant,
        comparisons=comparisons,
        violations=sum(e >= tolerance for e in errors),
        notes=field.notes(),
    )


def stable_to_unstable_check(field: PiecewiseField, n: int = 8, seed: int = 0, tolerance: float = 1e-6
                             ) -> LegReport:
    """``Σˢ → Σᵘ`` against ``Ĝ†``."""
    p = field.base
    inputs = SECTION_STABLE.samples(p, n, seed)
    outputs = [poincare(field, SECTION_STABLE, SECTION_RETURN, x) for x in inputs]
    closed = [eval_limit_skew(p, x.skew()) for x in inputs]
    comparisons = [_comparison(x, y, c) for x, y, c in zip(inputs, outputs, closed)]
    errors = [item['abs_err'] for item in comparisons]
    return LegReport(
        check='stable_to_unstable_leg',
        leg='sigma_s_to_sigma_u',
        samples=n,
        tolerance=tolerance,
        max_z_err=max(abs(y.z - c.z) for y, c in zip(outputs, closed)),
        max_abs_err=max(errors),
        comparisons=comparisons,
        violations=sum(e >= tolerance for e in errors),
        notes=field.notes(),
    )


def first_return_check(field: PiecewiseField, n: int = 6, seed: int = 0, constant: Optional[float] = None,
                       tolerance: float = 1e-5) -> LegReport:
    """Torus first return against the skew product with ``β₀`` replaced by the fitted constant."""
    p = field.base
    model = p.with_changes(beta0=constant) if constant is not None else p
    inputs = SECTION_UNSTABLE.samples(p, n, seed, lower=0.5)
    comparisons = []
    for x in inputs:
        integrated = FlowState.on_section(ZONE_EDGES[0], torus_first_return(field, x.skew()))
        comparisons.append(_comparison(x, integrated, eval_skew(model, x.skew())))
    errors = [item['abs_err'] for item in comparisons]
    return LegReport(
        check='torus_first_return',
        leg='sigma_u_to_sigma_u',
        samples=n,
        tolerance=tolerance,
        max_z_err=max(math.dist(item['integrated'][0], item['closed_form'][0]) for item in comparisons),
        max_abs_err=max(errors),
        fitted_constant=constant,
        comparisons=comparisons,
        violations=sum(e >= tolerance for e in errors),
        notes=field.notes(),
    )


class SpectrumReport(Report):
    eigenvalues: List[float]
    expected: List[float]
    max_error: float


def singularity_spectrum(field: PiecewiseField, step: float = DIFF_STEP, tolerance: float = 1e-8) -> SpectrumReport:
    """Eigenvalues of the field's Jacobian at ``õ`` by central differences."""
    origin = field.singularity.as_vector()
    jacobian = np.empty((5, 5))
    for k in range(5):
        delta = np.zeros(5)
        delta[k] = step
        jacobian[:, k] = (field.velocity_vector(origin + delta) - field.velocity_vector(origin - delta)) / (2 * step)
    eigenvalues = np.sort(np.linalg.eigvals(jacobian).real)
    expected = np.sort(np.array(field.params.singular_eigenvalues, dtype=float))
    error = float(np.max(np.abs(eigenvalues - expected)))
    return SpectrumReport(
        check='singularity_spectrum',
        eigenvalues=eigenvalues.tolist(),
        expected=expected.tolist(),
        max_error=error,
        violations=int(error >= tolerance),
        notes=field.notes(),
    )


class ReturnFixedPoint(NamedTuple):
    point: SkewPoint
    residual: float


def return_fixed_point(field: PiecewiseField, guess: Optional[SkewPoint] = None) -> ReturnFixedPoint:
    """Fixed point of the integrated return map near the skew fixed point over ``p_F``."""
    guess = guess or skew_fixed_point(field.base)

    def residual(x):
        point = SkewPoint(complex(x[0], x[1]), complex(x[2], x[3]))
        return torus_first_return(field, point).as_vector() - point.as_vector()

    sol = root(residual, guess.as_vector(), method='hybr', options={'xtol': 1e-12})
    point = SkewPoint(complex(sol.x[0], sol.x[1]), complex(sol.x[2], sol.x[3]))
    error = float(np.max(np.abs(residual(sol.x))))
    if error > 1e-8 * (1.0 + abs(point.z)):
        raise ConvergenceError('fixed point of the return map', residual=error, iterations=int(sol.nfev))
    return ReturnFixedPoint(point, error)


class FoliationReport(Report):
    samples: int
    max_fiber_factor: float
    min_base_contraction: float
    min_separation: float
    separation_bound: float
    max_leaf_error: float
    diameter_ratio: float


def foliation_checks(field: PiecewiseField, n: int = 3, seed: int = 0, returns: int = 3,
                     leaf_tolerance: float = 1e-4) -> FoliationReport:
    """Strong stable fibers under the return map.

    Checks that fibers contract faster than the weakest base direction, that the
    images of the fibers over ``±z`` are separated by at least ``1 − 2β|z|^{η/σ}``,
    that the leaf map agrees with ``F`` and that fiber diameters shrink at least by
    the product of the per-return factors.
    """
    p = field.base
    rng = np.random.default_rng(seed)
    points = SECTION_UNSTABLE.samples(p, n, seed, lower=0.3 * p.radius)
    failures = 0
    witness = None
    factor_max, base_min, separation_min, bound_min, leaf_max, diameter_worst = 0.0, math.inf, math.inf, math.inf, \
        0.0, 0.0
    for x in points:
        w1, w2 = (0.5 * np.exp(2j * np.pi * rng.random(2))).tolist()
        first = torus_first_return(field, SkewPoint(x.z, w1))
        second = torus_first_return(field, SkewPoint(x.z, w2))
        opposite = torus_first_return(field, SkewPoint(-x.z, w2))
        leaf = torus_first_return(field, SkewPoint(x.z, 0j))

        factor = abs(first.w - second.w) / abs(w1 - w2)
        contraction = float(np.linalg.svd(derivative_matrix(p, x.z), compute_uv=False)[-1])
        separation = abs(first.w - opposite.w)
        bound = 1.0 - 2.0 * p.beta * abs(x.z) ** p.fiber_exponent
        leaf_error = abs(leaf.z - complex(eval_map(p, x.z)))

        a, b = SkewPoint(x.z, w1), SkewPoint(x.z, w2)
        product = 1.0
        for _ in range(returns):
            product *= p.beta * abs(a.z) ** p.fiber_exponent
            a, b = torus_first_return(field, a), torus_first_return(field, b)
        ratio = abs(a.w - b.w) / (product * abs(w1 - w2))

        bad = factor >= contraction or separation < bound - 1e-6 or leaf_error >= leaf_tolerance or ratio > 1 + 1e-3
        if bad:
            failures += 1
            witness = witness or complex_pair(x.z)
        factor_max = max(factor_max, factor)
        base_min = min(base_min, contraction)
        separation_min = min(separation_min, separation)
        bound_min = min(bound_min, bound)
        leaf_max = max(leaf_max, leaf_error)
        diameter_worst = max(diameter_worst, ratio)
    return FoliationReport(
        check='strong_stable_foliation',
        samples=n,
        max_fiber_factor=factor_max,
        min_base_contraction=base_min,
        min_separation=separation_min,
        separation_bound=bound_min,
        max_leaf_error=leaf_max,
        diameter_ratio=diameter_worst,
        violations=failures,
        witness=witness,
        notes=field.notes(),
    )


class PassageReport(Report):
    reference_median: float
    radii: List[float]
    times: List[float]
    factor: float


def passage_time_blowup(field: PiecewiseField, radii: Sequence[float] = (1e-4, 1e-6), n: int = 16,
                        seed: int = 0, factor: float = PASSAGE_FACTOR) -> PassageReport:
    """Time spent in the saddle zone from ``Σᵘ`` as ``z → 0`` against the median over ``Σᵘ``."""
    p = field.base

    def passage(x: FlowState) -> float:
        return integrate(field, x, ZONE_EDGES[2]).zone_times['saddle']

    reference = float(np.median([passage(x) for x in SECTION_UNSTABLE.samples(p, n, seed)]))
    times = [passage(FlowState(ZONE_EDGES[0], complex(r), 0.5 + 0j)) for r in radii]
    slow = [t for t in times if t <= factor * reference]
    return PassageReport(
        check='passage_time_blowup',
        reference_median=reference,
        radii=list(radii),
        times=times,
        factor=factor,
        violations=len(slow),
        notes=field.notes(),
    )


class InwardReport(Report):
    samples: int
    min_radial_margin: float
    min_fiber_margin: float


def inward_pointing_check(field: PiecewiseField, n: int = 8, seed: int = 0) -> InwardReport:
    """Returns of points on ``∂(B_λ × D̄)`` at ``s = −2`` land strictly inside the section.

    Half the samples sit on ``|z| = R`` and half on ``|w| = 1``.
    """
    p = field.base
    rng = np.random.default_rng(seed)
    half = max(n // 2, 1)
    angles = np.exp(2j * np.pi * rng.random((2, half)))
    edge_z = [SkewPoint(complex(p.radius * a), complex(0.9 * rng.random() * b)) for a, b in zip(*angles)]
    radii = np.sqrt(rng.uniform(0.01, 1.0, half)) * p.radius
    edge_w = [SkewPoint(complex(r * b), complex(a)) for r, a, b in zip(radii, *angles)]
    radial, fiber = math.inf, math.inf
    witness = None
    for x in edge_z + edge_w:
        y = torus_first_return(field, x)
        radial = min(radial, p.radius - abs(y.z))
        fiber = min(fiber, 1.0 - abs(y.w))
        if (p.radius - abs(y.z) <= 0 or abs(y.w) >= 1.0) and witness is None:
            witness = [complex_pair(x.z), complex_pair(x.w)]
    return InwardReport(
        check='inward_pointing',
        samples=len(edge_z) + len(edge_w),
        min_radial_margin=radial,
        min_fiber_margin=fiber,
        violations=int(radial <= 0.0) + int(fiber <= 0.0),
        witness=witness,
        notes=field.notes() + ['checked on the boundary of the section chart at s = -2'],
    )


class MuScanReport(Report):
    ratios: List[float]
    passed_ratios: List[float]
    mu0: Optional[float]


def admissible_mu_scan(fp: FlowParams, ratios: Sequence[float] = (0.5, 0.7, 0.9, 0.95, 1.0), n: int = 4,
                       seed: int = 0) -> MuScanReport:
    """Smallest μ/σ from which on every zone check passes.

    Each ratio rebuilds the field and checks the chart, the singularity spectrum and
    the ``Σᵘ → Σˢ`` leg.
    """
    passed: List[float] = []
    for ratio in sorted(ratios):
        base = fp.base.with_changes(mu=ratio * fp.base.sigma)
        try:
            field = build_field(fp.with_changes(base=base))
            ok = singularity_spectrum(field).passed and unstable_to_stable_check(field, n, seed).passed
        except (ParameterError, ConvergenceError, NoCrossingError) as e:
            logger.info('mu/sigma=%.4g rejected: %s', ratio, e)
            ok = False
        if ok:
            passed.append(ratio)
    ordered = sorted(ratios)
    mu0 = None
    for k in range(len(ordered)):
        if all(r in passed for r in ordered[k:]):
            mu0 = ordered[k]
            break
    logger.info('admissible mu/sigma from %s', mu0)
    return MuScanReport(
        check='admissible_mu_scan',
        ratios=ordered,
        passed_ratios=passed,
        mu0=mu0,
        violations=int(mu0 is None),
        notes=['mu0 is the smallest scanned ratio from which every larger ratio passes'],
    )
