"""The given microscale model: weakly damped linear waves on a staggered grid.

``full_domain_rhs`` evaluates the centred staggered finite differences

    dh/dt = -(u_{i+1,j} - u_{i-1,j})/(2 delta) - (v_{i,j+1} - v_{i,j-1})/(2 delta)
    du/dt = -(h_{i+1,j} - h_{i-1,j})/(2 delta) - c_D u
            + c_V (u_{i-2,j} - 2u + u_{i+2,j})/(4 delta^2)
            + c_V (u_{i,j-2} - 2u + u_{i,j+2})/(4 delta^2)
    dv/dt = (same with x <-> y and h differenced in y)

with periodic wrap-around, over the whole domain.  This is the trusted
model the patch schemes wrap around; everything downstream (accuracy,
stability, consistency) is judged against it.

``analytic_eigs`` gives the closed-form eigenvalues of that discrete
system per wavenumber: one real (vortex) mode and a complex-conjugate
wave pair,

    lambda_vortex = -(c_D + c_V w^2)
    lambda_wave   = -(c_D + c_V w^2)/2 +- i sqrt(w^2 - ((c_D + c_V w^2)/2)^2)

where w = sqrt(sin^2(k_x delta) + sin^2(k_y delta)) / delta is the
discrete ideal-wave frequency.  The sine form is kept exact (never
small-angle approximated): the consistency analysis compares against the
discrete dispersion, not the continuum one.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError
from .grid import MicroGridSpec, PatchGridSpec


@dataclass(frozen=True)
class PhysicalParams:
    """Dissipation coefficients: linear drag c_D and viscosity c_V, both >= 0."""

    c_D: float = 0.0
    c_V: float = 0.0

    def __post_init__(self):
        if self.c_D < 0 or self.c_V < 0:
            raise ParameterError(
                f"dissipation coefficients must be nonnegative, got "
                f"c_D={self.c_D}, c_V={self.c_V}"
            )

    @property
    def is_ideal(self) -> bool:
        return self.c_D == 0.0 and self.c_V == 0.0


@dataclass
class FullDomainState:
    """Flat state over the 3 n^2/4 nodes of a full-domain micro-grid.

    Layout follows ``MicroGridSpec.layout``: h block then u block then v
    block, each a row-major (n/2, n/2) array.
    """

    values: np.ndarray
    spec: MicroGridSpec

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.spec.state_count,):
            raise ContractError(
                f"state length {self.values.shape} does not match the "
                f"{self.spec.state_count} nodes of the n={self.spec.n} grid"
            )

    @classmethod
    def zeros(cls, spec: MicroGridSpec, dtype=np.float64) -> "FullDomainState":
        return cls(np.zeros(spec.state_count, dtype=dtype), spec)

    def fields(self):
        """Views (h, u, v), each of shape (n/2, n/2)."""
        q = self.spec.n // 2
        blocks = self.values.reshape(3, q, q)
        return blocks[0], blocks[1], blocks[2]

    @classmethod
    def from_fields(cls, spec: MicroGridSpec, h, u, v) -> "FullDomainState":
        return cls(np.concatenate([np.ravel(h), np.ravel(u), np.ravel(v)]), spec)

    @classmethod
    def from_function(cls, spec: MicroGridSpec, fh, fu, fv) -> "FullDomainState":
        """Sample three callables f(x, y) at the h/u/v node positions."""
        q = spec.n // 2
        idx = np.arange(q)
        xh, yh = np.meshgrid(2 * idx * spec.delta, 2 * idx * spec.delta, indexing="ij")
        return cls.from_fields(
            spec,
            fh(xh, yh),
            fu(xh + spec.delta, yh),
            fv(xh, yh + spec.delta),
        )


def full_domain_rhs(state: FullDomainState, params: PhysicalParams) -> FullDomainState:
    """Time derivative of the full-domain microscale model (linear in state)."""
    spec = state.spec
    h, u, v = state.fields()
    d = spec.delta
    cd, cv = params.c_D, params.c_V

    dh = -(u - np.roll(u, 1, axis=0)) / (2 * d) - (v - np.roll(v, 1, axis=1)) / (2 * d)
    du = -(np.roll(h, -1, axis=0) - h) / (2 * d) - cd * u
    dv = -(np.roll(h, -1, axis=1) - h) / (2 * d) - cd * v
    if cv != 0.0:
        c2 = cv / (4 * d * d)
        du = du + c2 * (np.roll(u, 1, 0) - 2 * u + np.roll(u, -1, 0))
        du = du + c2 * (np.roll(u, 1, 1) - 2 * u + np.roll(u, -1, 1))
        dv = dv + c2 * (np.roll(v, 1, 0) - 2 * v + np.roll(v, -1, 0))
        dv = dv + c2 * (np.roll(v, 1, 1) - 2 * v + np.roll(v, -1, 1))
    return FullDomainState.from_fields(spec, dh, du, dv)


@dataclass(frozen=True)
class EigTriple:
    """The three microscale-model eigenvalues at one wavenumber.

    ``wave_minus`` is the conjugate of ``wave_plus`` while the pair is
    underdamped; when overdamped both are real with wave_plus >= wave_minus.
    """

    vortex: complex
    wave_plus: complex
    wave_minus: complex
    wavenumber: tuple[int, int]

    def as_vector(self) -> np.ndarray:
        return np.array([self.vortex, self.wave_plus, self.wave_minus])


def ideal_frequency(k_x: int, k_y: int, delta: float) -> float:
    """Discrete ideal-wave frequency w(k) = |(sin(kx d), sin(ky d))| / d."""
    return math.hypot(math.sin(k_x * delta), math.sin(k_y * delta)) / delta


def analytic_eigs(
    k_x: int, k_y: int, delta: float, params: PhysicalParams
) -> EigTriple:
    """Closed-form eigenvalues of the discrete microscale model at (k_x, k_y)."""
    if delta <= 0:
        raise ParameterError(f"grid spacing delta={delta} must be positive")
    w2 = ideal_frequency(k_x, k_y, delta) ** 2
    s = params.c_D + params.c_V * w2
    disc = w2 - 0.25 * s * s
    if disc >= 0.0:
        root = 1j * math.sqrt(disc)
        plus, minus = -0.5 * s + root, -0.5 * s - root
    else:
        root = math.sqrt(-disc)
        plus, minus = complex(-0.5 * s + root), complex(-0.5 * s - root)
    return EigTriple(complex(-s), plus, minus, (k_x, k_y))


def single_mode_matrix(
    k_x: int, k_y: int, delta: float, params: PhysicalParams
) -> np.ndarray:
    """3x3 multiplier of the microscale RHS on the Fourier mode (k_x, k_y).

    Acting on coefficients (H, U, V) of exp(i(k_x x + k_y y)); its
    eigenvalues are exactly :func:`analytic_eigs`.
    """
    a = math.sin(k_x * delta) / delta
    b = math.sin(k_y * delta) / delta
    s = params.c_D + params.c_V * (a * a + b * b)
    return np.array(
        [
            [0.0, -1j * a, -1j * b],
            [-1j * a, -s, 0.0],
            [-1j * b, 0.0, -s],
        ]
    )


def resolved_wavenumbers_full(spec: MicroGridSpec) -> tuple[tuple[int, int], ...]:
    """Wavenumbers resolved by a full-domain grid (needs n/2 odd)."""
    q = spec.n // 2
    if q % 2 == 0:
        raise ParameterError(
            f"full-domain grid n={spec.n} has a Nyquist mode (n/2 even); "
            "the closed-form spectrum enumeration needs n/2 odd"
        )
    K = (q - 1) // 2
    return tuple((kx, ky) for kx in range(-K, K + 1) for ky in range(-K, K + 1))


def analytic_macroscale_set(
    spec: PatchGridSpec, params: PhysicalParams
) -> list[EigTriple]:
    """Reference triples for every macroscale wavenumber a patch grid resolves.

    3 N^2/4 eigenvalues in total: one triple per (k_x, k_y) with
    |k_x|, |k_y| <= (N/2 - 1)/2, evaluated at the sub-patch spacing delta.
    """
    return [
        analytic_eigs(kx, ky, spec.delta, params)
        for kx, ky in spec.resolved_wavenumbers()
    ]


def assemble_full_domain_jacobian(
    spec: MicroGridSpec, params: PhysicalParams
) -> np.ndarray:
    """Dense Jacobian of the full-domain model by unit-impulse columns."""
    dim = spec.state_count
    J = np.empty((dim, dim))
    basis = FullDomainState.zeros(spec)
    for k in range(dim):
        basis.values[:] = 0.0
        basis.values[k] = 1.0
        J[:, k] = full_domain_rhs(basis, params).values
    return J


def full_domain_analytic_spectrum(
    spec: MicroGridSpec, params: PhysicalParams
) -> list[EigTriple]:
    """Complete closed-form spectrum of the full-domain model (n/2 odd)."""
    return [
        analytic_eigs(kx, ky, spec.delta, params)
        for kx, ky in resolved_wavenumbers_full(spec)
    ]
