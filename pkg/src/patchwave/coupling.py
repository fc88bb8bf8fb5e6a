"""Inter-patch coupling: macroscale values -> patch edge values.

Two families are provided, both linear and both exact on constants:

* **spectral** -- global trigonometric interpolation.  Each field's
  (N/2, N/2) array of patch-centre values is transformed with the 2D
  DFT (:func:`dft2`, no normalisation on the forward transform), then
  the inverse transform is evaluated at every edge-node position via a
  per-node phase shift.  Exact for every resolved Fourier mode.

* **square-p** -- local bivariate Lagrange interpolation of order
  p in {2, 4, 6, 8} over a near-square stencil of same-kind patches.
  Same-kind patches sit 2*Delta apart, so stencil offsets (in units of
  Delta) step by 2.  Per direction the offsets are chosen symmetric
  about the target patch:

  - target and source patches aligned in that direction (offset
    parity even): p + 1 nodes {-p, -p+2, ..., p}, polynomial degree p;
  - target between source rows (offset parity odd): p nodes
    {-(p-1), ..., p-1}, degree p - 1.

  This yields the square (p+1) x (p+1) stencils where both directions
  align and near-square rectangles where the staggering forces it; all
  stencils are parity-symmetric so no tie-breaking is needed.  Offsets
  wrap periodically (weights accumulate on the wrapped source patch),
  which leaves the interpolation of smooth periodic data well defined
  even when the stencil spans the whole macro-grid.

Operators may be realised as an explicit matrix (always, for the
polynomial family: it is reused on every RHS call and in the compute
benchmarks) or kept transform-based (optional, spectral family).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NumericalConsistencyError, ParameterError
from .grid import KIND_PARITY, KINDS, PatchGridSpec
from .patchscheme import EdgeValues, MacroValues, _machinery

SPECTRAL = "spectral"


def wavenumbers(M: int) -> np.ndarray:
    """Centred integer wavenumbers resolved by M samples (M odd)."""
    if M % 2 == 0:
        raise ParameterError(f"sample count M={M} must be odd (no Nyquist mode)")
    K = (M - 1) // 2
    return np.arange(-K, K + 1)


def dft2(values: np.ndarray, xs: np.ndarray, ys: np.ndarray, L: float = 2.0 * math.pi):
    """2D DFT of an (M, M) array sampled at positions (xs[I], ys[J]).

    C[a, b] = sum_{I,J} values[I, J] * exp(-i (k_x x_I + k_y y_J))
    with k_x = wavenumbers(M)[a] (angular, for period L), likewise k_y.
    No normalisation on the forward transform.
    """
    values = np.asarray(values)
    M = values.shape[-1]
    if values.shape[-2:] != (M, M):
        raise ParameterError(f"expected a square array, got shape {values.shape}")
    ang = 2.0 * math.pi / L
    wn = wavenumbers(M)
    Ex = np.exp(-1j * ang * np.outer(wn, xs))
    Ey = np.exp(-1j * ang * np.outer(wn, ys))
    return Ex @ values @ Ey.T


def idft2_at(coeffs: np.ndarray, x, y, L: float = 2.0 * math.pi):
    """Inverse transform of dft2 coefficients at arbitrary positions."""
    M = coeffs.shape[-1]
    ang = 2.0 * math.pi / L
    wn = wavenumbers(M)
    Ex = np.exp(1j * ang * np.outer(np.atleast_1d(x), wn))
    Ey = np.exp(1j * ang * np.outer(np.atleast_1d(y), wn))
    return np.einsum("ei,...ij,ej->...e", Ex, coeffs, Ey) / (M * M)


def lagrange_basis(nodes, point, dtype=np.float64) -> np.ndarray:
    """Cardinal Lagrange weights for distinct 1D nodes at given point(s).

    Returns shape (..., len(nodes)); rows sum to 1.
    """
    nodes = np.asarray(nodes, dtype=dtype)
    if np.unique(nodes).size != nodes.size:
        raise ParameterError(f"Lagrange nodes must be distinct, got {nodes}")
    pts = np.asarray(point, dtype=dtype)
    w = np.ones(pts.shape + nodes.shape, dtype=dtype)
    for s in range(nodes.size):
        for q in range(nodes.size):
            if q != s:
                w[..., s] *= (pts - nodes[q]) / (nodes[s] - nodes[q])
    return w


def square_p_offsets(p: int, mismatched: bool) -> np.ndarray:
    """1D stencil offsets (units of Delta) for one direction."""
    if mismatched:
        return np.arange(-(p - 1), p, 2)
    return np.arange(-p, p + 1, 2)


@dataclass
class CouplingOperator:
    """Linear map MacroValues -> EdgeValues for one grid spec."""

    kind: str
    spec: PatchGridSpec
    _apply: callable
    matrix: object = None  # scipy sparse / ndarray when materialised
    stencils: dict | None = None
    dtype: object = np.float64

    def apply_flat(self, macro_flat: np.ndarray) -> np.ndarray:
        """Map flat macro values (..., 3 M^2) to flat edge values (..., E)."""
        x = np.asarray(macro_flat)
        single = x.ndim == 1
        out = self._apply(x[None, :] if single else x)
        return out[0] if single else out

    def edge_values(self, macros: MacroValues) -> EdgeValues:
        return EdgeValues(self.apply_flat(macros.flat()), self.spec)

    def stencil_manifest(self) -> dict:
        """Inspectable description of the stencils, per (edge kind, patch kind)."""
        if self.stencils is None:
            return {"kind": self.kind, "coupling": "global spectral interpolation"}
        entries = {
            f"{F}_edge_of_{K}_patch": {
                "offsets_x": [int(o) for o in ox],
                "offsets_y": [int(o) for o in oy],
            }
            for (K, F), (ox, oy) in sorted(self.stencils.items())
        }
        return {"kind": self.kind, "offset_unit": "Delta", "stencils": entries}


def _edge_groups(spec: PatchGridSpec):
    """Edge rows grouped by (patch kind, field kind).

    Yields (K, F, rows, xi, eta, cells) where rows are flat edge-layout
    indices for all cells, xi/eta the node offsets from the patch centre
    in Delta units, and cells the (A, B) macro-cell index per row.
    """
    mach = _machinery(spec)
    M = spec.M
    ratio = spec.delta / spec.Delta
    A, B = np.divmod(np.arange(M * M), M)
    for K in KINDS:
        nodes = spec.edge_nodes[K]
        for F in KINDS:
            sel = [t for t, (_, _, fk) in enumerate(nodes) if fk == F]
            if not sel:
                continue
            ii = np.array([nodes[t][0] for t in sel])
            jj = np.array([nodes[t][1] for t in sel])
            base = mach.edge_offsets[K] + np.arange(M * M) * mach.n_edge[K]
            rows = (base[:, None] + np.array(sel)[None, :]).ravel()
            xi = np.tile(ii * ratio, M * M)
            eta = np.tile(jj * ratio, M * M)
            cells = (np.repeat(A, len(sel)), np.repeat(B, len(sel)))
            yield K, F, rows, xi, eta, cells


def build_square_p(spec: PatchGridSpec, p: int, dtype=np.float64) -> CouplingOperator:
    """Polynomial patch coupling of order p (square-p family)."""
    if p % 2 != 0 or p < 2:
        raise ParameterError(f"interpolation order p={p} must be a positive even integer")
    if p // 2 + 1 > spec.M:
        raise ParameterError(
            f"square-p{p} stencil spans more than the macro-grid: needs "
            f"p/2 + 1 = {p // 2 + 1} <= N/2 = {spec.M}"
        )
    M = spec.M
    rows_all, cols_all, data_all = [], [], []
    stencils = {}
    for K, F, rows, xi, eta, (cA, cB) in _edge_groups(spec):
        pK, pF = KIND_PARITY[K], KIND_PARITY[F]
        offs_x = square_p_offsets(p, mismatched=(pK[0] != pF[0]))
        offs_y = square_p_offsets(p, mismatched=(pK[1] != pF[1]))
        stencils[(K, F)] = (offs_x, offs_y)
        wx = lagrange_basis(offs_x, xi, dtype)          # (R, sx)
        wy = lagrange_basis(offs_y, eta, dtype)         # (R, sy)
        w = wx[:, :, None] * wy[:, None, :]             # (R, sx, sy)
        shift_x = (pK[0] - pF[0] + offs_x) // 2
        shift_y = (pK[1] - pF[1] + offs_y) // 2
        srcA = (cA[:, None, None] + shift_x[None, :, None]) % M
        srcB = (cB[:, None, None] + shift_y[None, None, :]) % M
        col_off = KINDS.index(F) * M * M
        cols = col_off + srcA * M + srcB                # (R, sx, sy)
        rows_all.append(np.broadcast_to(rows[:, None, None], w.shape).ravel())
        cols_all.append(cols.ravel())
        data_all.append(w.ravel())
    rows_all = np.concatenate(rows_all)
    cols_all = np.concatenate(cols_all)
    data_all = np.concatenate(data_all)
    shape = (spec.edge_count, spec.macro_count)

    if dtype == np.float64:
        W = sp.coo_matrix((data_all, (rows_all, cols_all)), shape=shape).tocsr()

        def apply(x):
            return (W @ x.T).T

        matrix = W
    else:
        # scipy sparse kernels do not support extended precision; apply the
        # (row, col, weight) triplets directly
        def apply(x):
            out = np.zeros(
                x.shape[:-1] + (shape[0],),
                dtype=np.result_type(x.dtype, data_all.dtype),
            )
            for b in range(x.shape[0]):
                np.add.at(out[b], rows_all, data_all * x[b, cols_all])
            return out

        matrix = (rows_all, cols_all, data_all)

    return CouplingOperator(f"square-p{p}", spec, apply, matrix, stencils, dtype)


class _SpectralTransform:
    """Transform-based realisation of the spectral coupling."""

    def __init__(self, spec: PatchGridSpec, dtype=np.float64):
        self.spec = spec
        M, Delta = spec.M, spec.Delta
        ang = 2.0 * math.pi / spec.L
        wn = wavenumbers(M)
        cdtype = np.complex128 if dtype == np.float64 else np.clongdouble
        self.dtype, self.cdtype = dtype, cdtype
        self.fwd, self.rows, self.evals = {}, {}, {}
        for F in KINDS:
            pF = KIND_PARITY[F]
            xs = (2 * np.arange(M) + pF[0]) * Delta
            ys = (2 * np.arange(M) + pF[1]) * Delta
            self.fwd[F] = (
                np.exp(-1j * ang * np.outer(wn, xs)).astype(cdtype),
                np.exp(-1j * ang * np.outer(wn, ys)).astype(cdtype),
            )
        for K, F, rows, xi, eta, (cA, cB) in _edge_groups(spec):
            pK = KIND_PARITY[K]
            xe = (2 * cA + pK[0] + xi) * Delta
            ye = (2 * cB + pK[1] + eta) * Delta
            Ex = np.exp(1j * ang * np.outer(xe, wn)).astype(cdtype)
            Ey = np.exp(1j * ang * np.outer(ye, wn)).astype(cdtype)
            self.rows.setdefault(F, []).append(rows)
            self.evals.setdefault(F, []).append((Ex, Ey))

    def __call__(self, macro_flat: np.ndarray) -> np.ndarray:
        spec, M = self.spec, self.spec.M
        x = macro_flat.reshape(macro_flat.shape[0], 3, M, M).astype(self.cdtype)
        out = np.zeros((macro_flat.shape[0], spec.edge_count), dtype=self.cdtype)
        for fi, F in enumerate(KINDS):
            Ex, Ey = self.fwd[F]
            C = np.einsum("ki,bij,lj->bkl", Ex, x[:, fi], Ey)
            for rows, (Px, Py) in zip(self.rows[F], self.evals[F]):
                out[:, rows] = np.einsum("ek,bkl,el->be", Px, C, Py) / (M * M)
        scale = max(1.0, float(np.max(np.abs(out.real), initial=1.0)))
        residue = float(np.max(np.abs(out.imag), initial=0.0))
        if residue > 1e-8 * scale:
            raise NumericalConsistencyError(
                f"spectral edge values have imaginary residue {residue:.3e}; "
                "phase-shifted inverse transform is inconsistent"
            )
        return out.real.astype(self.dtype, copy=False)


def build_spectral(
    spec: PatchGridSpec, dtype=np.float64, realisation: str = "matrix"
) -> CouplingOperator:
    """Spectral patch coupling (global Fourier interpolation).

    ``realisation='matrix'`` materialises the dense coupling matrix by
    pushing the identity through the transform; ``'transform'`` keeps
    the DFT evaluation and recomputes it per call.
    """
    transform = _SpectralTransform(spec, dtype)
    if realisation == "transform":
        return CouplingOperator(SPECTRAL, spec, transform, None, None, dtype)
    if realisation != "matrix":
        raise ParameterError(f"unknown spectral realisation {realisation!r}")
    eye = np.eye(spec.macro_count, dtype=dtype)
    W = transform(eye).T.copy()  # (E, 3 M^2)

    def apply(x):
        return x @ W.T

    return CouplingOperator(SPECTRAL, spec, apply, W, None, dtype)


def spectral_edge_values(macros: MacroValues, spec: PatchGridSpec) -> EdgeValues:
    """Edge values by the phase-shifted inverse DFT (functional path)."""
    transform = _SpectralTransform(spec)
    return EdgeValues(transform(macros.flat()[None, :])[0], spec)


def build_coupling(spec: PatchGridSpec, scheme: str, dtype=np.float64) -> CouplingOperator:
    """Build a coupling operator by scheme name.

    Names: ``spectral`` or ``square-p{2,4,6,8}``.
    """
    if scheme == SPECTRAL:
        return build_spectral(spec, dtype)
    if scheme.startswith("square-p"):
        try:
            p = int(scheme[len("square-p"):])
        except ValueError:
            raise ParameterError(f"unrecognised scheme name {scheme!r}") from None
        return build_square_p(spec, p, dtype)
    raise ParameterError(
        f"unrecognised scheme name {scheme!r}; expected 'spectral' or 'square-pP'"
    )


SCHEME_NAMES = (SPECTRAL, "square-p2", "square-p4", "square-p6", "square-p8")
