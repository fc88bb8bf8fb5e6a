"""Jacobians, eigenvalue spectra, classification and error metrics.

The coupled patch system is linear and autonomous, so its entire
behaviour is in the spectrum of the Jacobian.  Two routes compute it:

* :func:`assemble_jacobian` + :func:`eig` -- the direct route: the
  Jacobian is concatenated from the responses to unit impulse states and
  handed to a dense nonsymmetric eigensolver.

* :func:`block_spectrum` -- the fast route.  The scheme commutes with
  macro-cell translations (shifts of 2*Delta in x and y), so a discrete
  Fourier transform over the (N/2)^2 macro-cells block-diagonalises the
  Jacobian into one small block per macroscale wavenumber.  Each block
  carries exactly the three macroscale eigenvalues of its wavenumber
  plus that wavenumber's share of sub-patch microscale modes.  The two
  routes agree to eigensolver roundoff (see the test suite); sweeps use
  the block route, which also yields exact wavenumber labels.

Classification matches the closed-form macroscale eigenvalues to
numerical ones by minimum-total-distance assignment; everything not
matched is microscale.  The error metrics built on top:

* ``eigenvalue_error`` -- relative error of the matched three-eigenvalue
  vector at one wavenumber (consistency studies);
* ``roundoff_errors`` -- max eigenvalue discrepancy between two spectra
  of the same configuration assembled at different float precisions,
  split into microscale and macroscale parts;
* ``consistency_fit`` -- log-log power-law fit of error-vs-spacing data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.optimize

from .coupling import build_coupling
from .errors import NumericalConsistencyError, NumericalError
from .grid import PatchGridSpec, build_patch_grid
from .microscale import PhysicalParams, analytic_eigs
from .patchscheme import PatchScheme, _machinery

WORKING, EXTENDED = "working", "extended"

_DTYPES = {WORKING: np.float64, EXTENDED: np.longdouble}


@lru_cache(maxsize=12)
def _cached_coupling(spec: PatchGridSpec, scheme: str, precision: str):
    # operators are immutable after construction, so sharing across
    # schemes with different physical parameters is safe
    return build_coupling(spec, scheme, _DTYPES[precision])


def make_scheme(
    N: int,
    n: int,
    r: float,
    scheme: str,
    params: PhysicalParams,
    precision: str = WORKING,
    L: float = 2.0 * math.pi,
) -> PatchScheme:
    """Build a PatchScheme from raw parameters."""
    spec = build_patch_grid(N, n, r, L)
    return PatchScheme(spec, _cached_coupling(spec, scheme, precision), params)


@dataclass
class Jacobian:
    """Dense Jacobian of a linear patch scheme."""

    matrix: np.ndarray
    provenance: dict
    precision: str = WORKING


def assemble_jacobian(
    scheme: PatchScheme, probes: int = 3, chunk: int = 256, seed: int = 0
) -> Jacobian:
    """Jacobian by concatenating responses to unit impulse states.

    Verifies F(0) = 0 first, then checks J x == rhs(x) on random probes
    to 1e-12 relative.
    """
    dim = scheme.dim
    base = scheme.rhs_flat(np.zeros(dim, dtype=scheme.dtype))
    f0 = float(np.max(np.abs(base)))
    if f0 > 1e-14:
        raise NumericalConsistencyError(
            f"scheme is not linear through zero: |F(0)| = {f0:.3e} > 1e-14"
        )
    cols = []
    for start in range(0, dim, chunk):
        width = min(chunk, dim - start)
        X = np.zeros((width, dim), dtype=base.dtype)
        X[np.arange(width), start + np.arange(width)] = 1.0
        cols.append(scheme.rhs_flat(X))
    J = np.concatenate(cols, axis=0).T

    rng = np.random.default_rng(seed)
    J64 = J.astype(np.float64, copy=False)
    for _ in range(probes):
        x = rng.standard_normal(dim)
        got, want = J64 @ x, scheme.rhs_flat(x.astype(base.dtype))
        rel = np.max(np.abs(got - want)) / max(1.0, np.max(np.abs(want)))
        if rel > 1e-12:
            raise NumericalConsistencyError(
                f"Jacobian/RHS mismatch on random probe: {rel:.3e} relative"
            )
    precision = EXTENDED if J.dtype == np.longdouble else WORKING
    return Jacobian(J, scheme.describe() | {"precision": precision}, precision)


def eig(J: Jacobian | np.ndarray, vectors: bool = False, check: int = 10):
    """All eigenvalues of a dense matrix (LAPACK, in working precision).

    With ``vectors=True`` returns (eigenvalues, eigenvectors) and
    spot-checks ``check`` eigenpair residuals against 1e-8 * max(1, |J|).
    """
    A = J.matrix if isinstance(J, Jacobian) else J
    A = np.asarray(A, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise NumericalError("Jacobian contains non-finite entries")
    try:
        if not vectors:
            return np.linalg.eigvals(A)
        lam, vec = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        prov = J.provenance if isinstance(J, Jacobian) else {"dim": A.shape[0]}
        raise NumericalError(f"eigendecomposition failed for {prov}: {exc}") from exc
    scale = max(1.0, float(np.max(np.abs(A))))
    idx = np.linspace(0, lam.size - 1, min(check, lam.size)).astype(int)
    for k in idx:
        res = np.linalg.norm(A @ vec[:, k] - lam[k] * vec[:, k])
        res /= np.linalg.norm(vec[:, k])
        if res > 1e-8 * scale:
            raise NumericalError(
                f"eigenpair residual {res:.3e} exceeds tolerance "
                f"{1e-8 * scale:.3e} at index {k}"
            )
    return lam, vec


# -- block-diagonalised route ---------------------------------------------


@dataclass
class BlockSpectrum:
    """Eigenvalues grouped by macroscale wavenumber block.

    ``eigs[a, b]`` holds the spectrum of the block whose macroscale
    wavenumber is ``(wn[a], wn[b])`` with wn = block_wavenumbers(M).
    """

    eigs: np.ndarray  # (M, M, T) complex
    spec: PatchGridSpec
    provenance: dict

    def all_eigenvalues(self) -> np.ndarray:
        return self.eigs.reshape(-1)

    def max_real(self) -> float:
        return float(np.max(self.eigs.real))

    def wavenumber_grid(self) -> np.ndarray:
        M = self.spec.M
        wn = (np.arange(M) + (M - 1) // 2) % M - (M - 1) // 2
        return wn


def block_wavenumber_index(M: int):
    """Map block index 0..M-1 to the resolved wavenumber it carries."""
    return (np.arange(M) + (M - 1) // 2) % M - (M - 1) // 2


def block_matrices(scheme: PatchScheme) -> np.ndarray:
    """The (N/2)^2 Jacobian blocks, one per macroscale wavenumber.

    Assembles the response of one reference macro-cell's impulses and
    transforms over the cell lattice; returns a complex array of shape
    (M, M, T, T) with T = interior nodes per macro-cell.
    """
    spec = scheme.spec
    mach = _machinery(spec)
    M = spec.M
    T = sum(mach.n_int.values())
    dtype = scheme.dtype

    X = np.zeros((T, spec.state_count), dtype=dtype)
    col = 0
    for pk in ("h", "u", "v"):
        off, cnt = mach.state_offsets[pk], mach.n_int[pk]
        X[col + np.arange(cnt), off + np.arange(cnt)] = 1.0
        col += cnt
    Y = scheme.rhs_flat(X)

    # R[a, b, s, t]: response at cell (a, b), within-cell slot s, to the
    # impulse at within-cell slot t of cell (0, 0)
    R = np.empty((M, M, T, T), dtype=dtype)
    s0 = 0
    for pk in ("h", "u", "v"):
        off, cnt = mach.state_offsets[pk], mach.n_int[pk]
        seg = Y[:, off : off + M * M * cnt].reshape(T, M, M, cnt)
        R[:, :, s0 : s0 + cnt, :] = seg.transpose(1, 2, 3, 0)
        s0 += cnt

    if dtype == np.float64:
        return np.fft.fft2(R, axes=(0, 1))
    # np.fft has no extended-precision kernels; combine explicitly
    E = np.exp(
        (-2j * np.pi / M)
        * np.outer(np.arange(M), np.arange(M)).astype(np.clongdouble)
    )
    blocks = np.tensordot(E, R, axes=(1, 0))
    return np.tensordot(E, blocks, axes=(1, 1)).transpose(1, 0, 2, 3)


def _eig_blocks(blocks: np.ndarray) -> np.ndarray:
    return np.linalg.eigvals(np.ascontiguousarray(blocks.astype(np.complex128)))


def block_spectrum(scheme: PatchScheme) -> BlockSpectrum:
    """Spectrum via Fourier block-diagonalisation over macro-cells."""
    eigs = _eig_blocks(block_matrices(scheme))
    prov = scheme.describe() | {
        "precision": EXTENDED if scheme.dtype == np.longdouble else WORKING,
        "route": "block",
    }
    return BlockSpectrum(eigs, scheme.spec, prov)


class BlockFamily:
    """Jacobian blocks as an affine function of the dissipation pair.

    The RHS is affine in (c_D, c_V), so one grid configuration needs
    three basis assemblies; every parameter pair after that costs only
    the per-block eigendecompositions.  Used by the stability and
    roundoff sweeps, which revisit each grid at nine parameter pairs.
    """

    def __init__(self, N, n, r, scheme: str, precision: str = WORKING):
        self.args = (N, n, r, scheme)
        self.precision = precision
        base = make_scheme(N, n, r, scheme, PhysicalParams(0.0, 0.0), precision)
        drag = make_scheme(N, n, r, scheme, PhysicalParams(1.0, 0.0), precision)
        visc = make_scheme(N, n, r, scheme, PhysicalParams(0.0, 1.0), precision)
        self.spec = base.spec
        self._ideal = block_matrices(base)
        self._drag = block_matrices(drag) - self._ideal
        self._visc = block_matrices(visc) - self._ideal

    def spectrum(self, params: PhysicalParams) -> BlockSpectrum:
        blocks = self._ideal + params.c_D * self._drag + params.c_V * self._visc
        N, n, r, scheme = self.args
        prov = {
            "scheme": scheme, "N": N, "n": n, "r": r, "L": self.spec.L,
            "c_D": params.c_D, "c_V": params.c_V,
            "dim": self.spec.state_count,
            "precision": self.precision, "route": "block-family",
        }
        return BlockSpectrum(_eig_blocks(blocks), self.spec, prov)

    def classified(self, params: PhysicalParams) -> ClassifiedSpectrum:
        return classify_blocks(self.spectrum(params), params)


# -- classification ---------------------------------------------------------


@dataclass
class ClassifiedSpectrum:
    """Eigenvalues split into matched macroscale and residual microscale.

    Macro entries are ordered by (k_x, k_y, member) with members
    (vortex, wave_plus, wave_minus); micro eigenvalues are ordered by
    block then (Re, Im) when block labels exist, else by (Re, Im).
    """

    wavenumbers: np.ndarray       # (3 M^2, 2) int
    analytic: np.ndarray          # (3 M^2,) complex
    macro: np.ndarray             # (3 M^2,) complex, matched numerical values
    micro: np.ndarray             # (dim - 3 M^2,) complex
    matching_residuals: np.ndarray
    config: dict
    micro_blocks: np.ndarray | None = None  # (n_micro, 2) int, block route only
    flags: list = field(default_factory=list)

    @property
    def macro_count(self) -> int:
        return self.macro.size

    def macro_triple(self, k_x: int, k_y: int):
        """(analytic, matched) 3-vectors for one wavenumber."""
        sel = np.flatnonzero(
            (self.wavenumbers[:, 0] == k_x) & (self.wavenumbers[:, 1] == k_y)
        )
        if sel.size != 3:
            raise NumericalError(
                f"wavenumber ({k_x}, {k_y}) not resolved by this configuration"
            )
        return self.analytic[sel], self.macro[sel]

    def max_real(self) -> float:
        worst = self.macro.real.max()
        if self.micro.size:
            worst = max(worst, self.micro.real.max())
        return float(worst)


def _sorted_wavenumbers(spec: PatchGridSpec):
    return sorted(spec.resolved_wavenumbers())


def classify(
    eigs: np.ndarray, spec: PatchGridSpec, params: PhysicalParams, config: dict | None = None
) -> ClassifiedSpectrum:
    """Match analytic macroscale eigenvalues to numerical ones (assignment).

    Each of the 3 N^2/4 closed-form macroscale eigenvalues is paired with
    a distinct numerical eigenvalue minimising the total distance; the
    rest is microscale.  Near-ties (another candidate within 1e-14 of a
    matched one) are flagged; determinism comes from canonical sorting.
    """
    eigs = np.asarray(eigs)
    if eigs.size != spec.state_count:
        raise NumericalError(
            f"{eigs.size} eigenvalues passed for a dim-{spec.state_count} scheme"
        )
    order = np.lexsort((eigs.imag, eigs.real))
    eigs = eigs[order]
    wns, ana = [], []
    for kx, ky in _sorted_wavenumbers(spec):
        triple = analytic_eigs(kx, ky, spec.delta, params)
        for lam in triple.as_vector():
            wns.append((kx, ky))
            ana.append(lam)
    ana = np.array(ana)
    cost = np.abs(ana[:, None] - eigs[None, :])
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    matched = eigs[cols]
    residuals = np.abs(matched - ana)

    flags = []
    taken = np.zeros(eigs.size, bool)
    taken[cols] = True
    for i, c in zip(rows, cols):
        near = np.abs(eigs - ana[i]) <= cost[i, c] + 1e-14
        near[c] = False
        if np.any(near & ~taken):
            flags.append(
                f"ambiguous match at wavenumber {wns[i]}: another eigenvalue "
                f"within 1e-14 of the assigned one"
            )
    if flags:
        warnings.warn(flags[0], stacklevel=2)
    micro = eigs[~taken]
    flags += _gap_flags(ana, residuals, micro, np.array(wns))
    return ClassifiedSpectrum(
        wavenumbers=np.array(wns),
        analytic=ana,
        macro=matched,
        micro=micro,
        matching_residuals=residuals,
        config=dict(config or {}),
        flags=flags,
    )


def _gap_flags(ana, residuals, micro, wns) -> list[str]:
    """Mark matches whose residual rivals the distance to the micro cluster.

    Such configurations need manual review: the eigenvalue-only
    classification cannot be trusted across that small a gap.
    """
    if not micro.size:
        return []
    gap = np.min(np.abs(ana[:, None] - micro[None, :]), axis=1)
    bad = residuals > 0.5 * gap
    return [
        f"matched residual {residuals[i]:.3e} at wavenumber "
        f"{tuple(wns[i])} exceeds half the gap to the micro cluster "
        f"({gap[i]:.3e}); classification needs manual review"
        for i in np.flatnonzero(bad)
    ]


def classify_blocks(
    bs: BlockSpectrum, params: PhysicalParams
) -> ClassifiedSpectrum:
    """Wavenumber-exact classification of a block-route spectrum.

    Within each block the three macroscale eigenvalues of its wavenumber
    are matched by assignment; everything else in the block is micro.
    """
    spec = bs.spec
    M, T = spec.M, bs.eigs.shape[-1]
    wn_of = block_wavenumber_index(M)
    records = {}
    micro, micro_blocks = [], []
    for a in range(M):
        for b in range(M):
            kx, ky = int(wn_of[a]), int(wn_of[b])
            lam = np.asarray(bs.eigs[a, b])
            lam = lam[np.lexsort((lam.imag, lam.real))]
            ana = analytic_eigs(kx, ky, spec.delta, params).as_vector()
            cost = np.abs(ana[:, None] - lam[None, :])
            rows, cols = scipy.optimize.linear_sum_assignment(cost)
            records[(kx, ky)] = (ana, lam[cols], np.abs(lam[cols] - ana))
            rest = np.ones(T, bool)
            rest[cols] = False
            micro.append(lam[rest])
            micro_blocks.append(np.broadcast_to([kx, ky], (T - 3, 2)))
    wns, ana_all, mac_all, res_all = [], [], [], []
    for kx, ky in _sorted_wavenumbers(spec):
        ana, mac, res = records[(kx, ky)]
        for t in range(3):
            wns.append((kx, ky))
            ana_all.append(ana[t])
            mac_all.append(mac[t])
            res_all.append(res[t])
    micro = np.concatenate(micro) if micro else np.empty(0, complex)
    ana_all, res_all = np.array(ana_all), np.array(res_all)
    return ClassifiedSpectrum(
        wavenumbers=np.array(wns),
        analytic=ana_all,
        macro=np.array(mac_all),
        micro=micro,
        matching_residuals=res_all,
        config=dict(bs.provenance),
        micro_blocks=np.concatenate(micro_blocks) if micro_blocks else None,
        flags=_gap_flags(ana_all, res_all, micro, np.array(wns)),
    )


def classified_spectrum(
    scheme: PatchScheme, route: str = "block"
) -> ClassifiedSpectrum:
    """One-call spectrum + classification for a scheme."""
    if route == "block":
        return classify_blocks(block_spectrum(scheme), scheme.params)
    if route != "full":
        raise NumericalError(f"unknown spectrum route {route!r}")
    lam = eig(assemble_jacobian(scheme))
    return classify(lam, scheme.spec, scheme.params, scheme.describe())


# -- error metrics ----------------------------------------------------------


def eigenvalue_error(
    spectrum: ClassifiedSpectrum, k_x: int, k_y: int
) -> float | None:
    """Relative macroscale eigenvalue error at one wavenumber.

    Euclidean norm over the three-element complex eigenvalue vectors,
    relative to the analytic one.  Returns None (not applicable) when
    the analytic vector vanishes, which happens only at k = (0, 0) with
    c_D = 0.
    """
    ana, num = spectrum.macro_triple(k_x, k_y)
    denom = np.linalg.norm(ana)
    if denom == 0.0:
        return None
    return float(np.linalg.norm(num - ana) / denom)


def _config_key(cfg: dict) -> tuple:
    return tuple(
        cfg.get(k) for k in ("scheme", "N", "n", "r", "L", "c_D", "c_V")
    )


def roundoff_errors(
    reference: ClassifiedSpectrum, working: ClassifiedSpectrum
) -> tuple[float, float]:
    """(eps_micro, eps_macro): max eigenvalue discrepancy per class.

    Inputs must be the same configuration computed in two precisions;
    macro eigenvalues pair through their shared analytic slots, micro
    eigenvalues pair per block (block route) or by sorted order.
    """
    if _config_key(reference.config) != _config_key(working.config):
        raise NumericalConsistencyError(
            "roundoff comparison needs identical configurations, got "
            f"{reference.config} vs {working.config}"
        )
    eps_M = float(np.max(np.abs(reference.macro - working.macro)))
    if reference.micro.size != working.micro.size:
        raise NumericalConsistencyError("micro partitions differ in size")
    if reference.micro_blocks is not None and working.micro_blocks is not None:
        eps_mu = 0.0
        keys = {tuple(k) for k in reference.micro_blocks}
        for key in keys:
            ra = reference.micro[np.all(reference.micro_blocks == key, axis=1)]
            wa = working.micro[np.all(working.micro_blocks == key, axis=1)]
            cost = np.abs(ra[:, None] - wa[None, :])
            rows, cols = scipy.optimize.linear_sum_assignment(cost)
            if rows.size:
                eps_mu = max(eps_mu, float(np.max(cost[rows, cols])))
    else:
        eps_mu = float(np.max(np.abs(reference.micro - working.micro)))
    return eps_mu, eps_M


@dataclass
class PowerLawFit:
    """Least-squares line on (log spacing, log error)."""

    prefactor: float
    exponent: float
    r_squared: float
    points_used: list
    points_filtered: list

    def predict(self, spacing: float) -> float:
        return self.prefactor * spacing ** self.exponent


def consistency_fit(points, floor: float = 0.0) -> PowerLawFit:
    """Fit error = prefactor * spacing^exponent to (spacing, error) pairs.

    Nonpositive errors and errors at or below ``floor`` are filtered out
    (they sit on the roundoff plateau) and reported in the result.
    """
    points = list(points)
    if len(points) < 3:
        raise NumericalError(f"power-law fit needs >= 3 points, got {len(points)}")
    used = [(d, e) for d, e in points if e > max(0.0, floor)]
    filtered = [pt for pt in points if pt not in used]
    if len(used) < 2:
        raise NumericalError(
            f"power-law fit has only {len(used)} usable points after filtering"
        )
    lx = np.log([d for d, _ in used])
    ly = np.log([e for _, e in used])
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return PowerLawFit(float(np.exp(intercept)), float(slope), r2, used, filtered)


# -- comparison and export helpers ------------------------------------------


def pair_max_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max matched distance between two equal-size eigenvalue multisets."""
    a, b = np.asarray(a), np.asarray(b)
    if a.size != b.size:
        raise NumericalError(f"multiset sizes differ: {a.size} vs {b.size}")
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols]))


ARCSINH_SCALE = 1e-4


def arcsinh_coords(values: np.ndarray, scale: float = ARCSINH_SCALE):
    """Quasi-log plot coordinates mirroring the spectrum figures."""
    return np.arcsinh(np.asarray(values) / scale)


def spectrum_rows(cs: ClassifiedSpectrum) -> list[dict]:
    """Flat per-eigenvalue records, ready for CSV export."""
    cfg = cs.config
    base = {k: cfg.get(k) for k in ("scheme", "N", "n", "r", "c_D", "c_V")}
    rows = []
    for t in range(cs.macro.size):
        lam = cs.macro[t]
        rows.append(
            base
            | {
                "re": lam.real,
                "im": lam.imag,
                "class": "macro",
                "k_x": int(cs.wavenumbers[t, 0]),
                "k_y": int(cs.wavenumbers[t, 1]),
                "residual": float(cs.matching_residuals[t]),
                "re_arcsinh": float(arcsinh_coords(lam.real)),
                "im_arcsinh": float(arcsinh_coords(lam.imag)),
            }
        )
    for lam in cs.micro:
        rows.append(
            base
            | {
                "re": lam.real,
                "im": lam.imag,
                "class": "micro",
                "k_x": "",
                "k_y": "",
                "residual": "",
                "re_arcsinh": float(arcsinh_coords(lam.real)),
                "im_arcsinh": float(arcsinh_coords(lam.imag)),
            }
        )
    return rows
