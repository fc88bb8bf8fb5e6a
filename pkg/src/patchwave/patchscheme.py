"""The coupled patch dynamical system.

A patch scheme evolves only the *interior* nodes of every patch.  Each
right-hand-side evaluation happens in three steps:

1. read one representative macroscale value per patch -- the value of
   its centre node (:func:`extract_macro_values`; no local averaging);
2. interpolate those macroscale values to every patch's edge nodes with
   a coupling operator (spectral or polynomial, see :mod:`.coupling`);
3. apply the staggered-grid wave stencils at every interior node,
   reading edge values wherever a stencil leaves the interior
   (:func:`patch_rhs`).

The composition is :func:`coupled_rhs`; it is linear in the state, and
everything downstream (Jacobians, spectra, benchmarks) leans on that.

Internally the per-patch node sets are embedded in dense
``(M, M, n+3, n+3)`` tensors, one per patch kind, so the stencils
vectorise across all patches; the flat state layout is the one from
``PatchGridSpec.layout``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractError
from .grid import KINDS, H, PatchGridSpec
from .microscale import PhysicalParams


@dataclass
class MacroValues:
    """Patch-centre values: three (N/2, N/2) arrays indexed by macro-cell."""

    H: np.ndarray
    U: np.ndarray
    V: np.ndarray
    spec: PatchGridSpec

    def flat(self) -> np.ndarray:
        return np.concatenate(
            [np.ravel(self.H), np.ravel(self.U), np.ravel(self.V)], axis=-1
        )

    @classmethod
    def from_flat(cls, values: np.ndarray, spec: PatchGridSpec) -> "MacroValues":
        M = spec.M
        blocks = np.asarray(values).reshape(3, M, M)
        return cls(blocks[0], blocks[1], blocks[2], spec)


@dataclass
class EdgeValues:
    """One value per edge node, ordered like ``PatchGridSpec.edge_layout``."""

    values: np.ndarray
    spec: PatchGridSpec

    def check_complete(self):
        vals = np.asarray(self.values)
        if vals.shape[-1] != self.spec.edge_count:
            raise ContractError(
                f"edge values have {vals.shape[-1]} entries, spec needs "
                f"{self.spec.edge_count}"
            )
        bad = np.isnan(vals)
        if bad.any():
            node = self.spec.edge_layout[int(np.argwhere(bad)[0][-1])]
            raise ContractError(f"edge value missing (NaN) at {node}")

    def for_patch(self, patch: tuple[int, int]) -> dict:
        """Edge values of one patch, keyed by (i, j, kind) -- test helper."""
        mach = _machinery(self.spec)
        pk = self.spec.patch_kind(patch)
        A, B = patch[0] // 2, patch[1] // 2
        base = mach.edge_offsets[pk] + (A * self.spec.M + B) * mach.n_edge[pk]
        nodes = self.spec.edge_nodes[pk]
        return {nodes[t]: self.values[base + t] for t in range(len(nodes))}


@dataclass
class PatchState:
    """Flat vector of every patch's interior node values."""

    values: np.ndarray
    spec: PatchGridSpec

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.spec.state_count,):
            raise ContractError(
                f"state length {self.values.shape} does not match the "
                f"{self.spec.state_count} interior nodes of the spec"
            )

    @classmethod
    def zeros(cls, spec: PatchGridSpec, dtype=np.float64) -> "PatchState":
        return cls(np.zeros(spec.state_count, dtype=dtype), spec)

    @classmethod
    def from_function(cls, spec: PatchGridSpec, fh, fu, fv) -> "PatchState":
        """Sample callables f(x, y) (one per field) at interior node positions."""
        fns = {"h": fh, "u": fu, "v": fv}
        vals = np.empty(spec.state_count)
        for k, node in enumerate(spec.layout):
            x, y = spec.node_position(node.patch, node.micro)
            vals[k] = fns[node.kind](x, y)
        return cls(vals, spec)

    def copy(self) -> "PatchState":
        return PatchState(self.values.copy(), self.spec)


class _Machinery:
    """Precomputed index arrays tying the flat layout to per-kind tensors."""

    def __init__(self, spec: PatchGridSpec):
        self.spec = spec
        M, m, n = spec.M, spec.m, spec.n
        self.S = n + 3           # padded tensor side, local index + centre offset
        self.c = m + 1
        self.n_int, self.n_edge = {}, {}
        self.int_ij, self.edge_ij = {}, {}
        self.field_ij = {}       # (patch kind, field kind) -> interior coords
        self.state_offsets, self.edge_offsets = {}, {}
        so = eo = 0
        for pk in KINDS:
            ints = spec.interior_nodes[pk]
            edges = spec.edge_nodes[pk]
            self.n_int[pk], self.n_edge[pk] = len(ints), len(edges)
            self.int_ij[pk] = (
                np.array([i + self.c for i, _, _ in ints]),
                np.array([j + self.c for _, j, _ in ints]),
            )
            self.edge_ij[pk] = (
                np.array([i + self.c for i, _, _ in edges]),
                np.array([j + self.c for _, j, _ in edges]),
            )
            for f in KINDS:
                sel = [t for t, (_, _, fk) in enumerate(ints) if fk == f]
                self.field_ij[(pk, f)] = (
                    self.int_ij[pk][0][sel],
                    self.int_ij[pk][1][sel],
                )
            self.state_offsets[pk], self.edge_offsets[pk] = so, eo
            so += M * M * self.n_int[pk]
            eo += M * M * self.n_edge[pk]
        self.h_mask = np.array([nd.kind == H for nd in spec.layout])

    # tensors have shape (B, M, M, S, S); B is a batch of states

    def tensors_from_state(self, x: np.ndarray) -> dict[str, np.ndarray]:
        spec, M = self.spec, self.spec.M
        out = {}
        for pk in KINDS:
            X = np.zeros((x.shape[0], M, M, self.S, self.S), dtype=x.dtype)
            o, cnt = self.state_offsets[pk], self.n_int[pk]
            seg = x[:, o : o + M * M * cnt].reshape(x.shape[0], M, M, cnt)
            ii, jj = self.int_ij[pk]
            X[:, :, :, ii, jj] = seg
            out[pk] = X
        return out

    def scatter_edges(self, tensors, e: np.ndarray):
        M = self.spec.M
        for pk in KINDS:
            o, cnt = self.edge_offsets[pk], self.n_edge[pk]
            seg = e[:, o : o + M * M * cnt].reshape(e.shape[0], M, M, cnt)
            ii, jj = self.edge_ij[pk]
            tensors[pk][:, :, :, ii, jj] = seg

    def state_from_tensors(self, tensors) -> np.ndarray:
        M = self.spec.M
        parts = []
        for pk in KINDS:
            ii, jj = self.int_ij[pk]
            B = tensors[pk].shape[0]
            parts.append(tensors[pk][:, :, :, ii, jj].reshape(B, -1))
        return np.concatenate(parts, axis=1)

    def gather_macros(self, tensors) -> np.ndarray:
        c = self.c
        B = tensors["h"].shape[0]
        return np.concatenate(
            [tensors[pk][:, :, :, c, c].reshape(B, -1) for pk in KINDS], axis=1
        )

    def stencil_rhs(self, tensors, params: PhysicalParams) -> dict[str, np.ndarray]:
        """Apply the staggered wave stencils at every interior node."""
        d = self.spec.delta
        cd, cv = params.c_D, params.c_V
        c2 = cv / (4 * d * d)
        out = {}
        for pk in KINDS:
            X = tensors[pk]
            Y = np.zeros_like(X)
            hi, hj = self.field_ij[(pk, "h")]
            if hi.size:
                Y[..., hi, hj] = (
                    -(X[..., hi + 1, hj] - X[..., hi - 1, hj]) / (2 * d)
                    - (X[..., hi, hj + 1] - X[..., hi, hj - 1]) / (2 * d)
                )
            for f in ("u", "v"):
                fi, fj = self.field_ij[(pk, f)]
                if not fi.size:
                    continue
                if f == "u":
                    grad = -(X[..., fi + 1, fj] - X[..., fi - 1, fj]) / (2 * d)
                else:
                    grad = -(X[..., fi, fj + 1] - X[..., fi, fj - 1]) / (2 * d)
                val = grad - cd * X[..., fi, fj]
                if cv != 0.0:
                    val = val + c2 * (
                        X[..., fi - 2, fj] - 2 * X[..., fi, fj] + X[..., fi + 2, fj]
                    )
                    val = val + c2 * (
                        X[..., fi, fj - 2] - 2 * X[..., fi, fj] + X[..., fi, fj + 2]
                    )
                Y[..., fi, fj] = val
            out[pk] = Y
        return out

    def roll_cells(self, x: np.ndarray, shift: tuple[int, int]) -> np.ndarray:
        """Shift a flat state by whole macro-cells (2*Delta per unit)."""
        M = self.spec.M
        parts = []
        for pk in KINDS:
            o, cnt = self.state_offsets[pk], self.n_int[pk]
            seg = x[..., o : o + M * M * cnt].reshape(*x.shape[:-1], M, M, cnt)
            seg = np.roll(seg, shift, axis=(-3, -2))
            parts.append(seg.reshape(*x.shape[:-1], M * M * cnt))
        return np.concatenate(parts, axis=-1)


@lru_cache(maxsize=32)
def _machinery(spec: PatchGridSpec) -> _Machinery:
    return _Machinery(spec)


def extract_macro_values(state: PatchState) -> MacroValues:
    """Patch-centre values as three (N/2, N/2) arrays; a pure projection."""
    mach = _machinery(state.spec)
    tensors = mach.tensors_from_state(state.values[None, :])
    return MacroValues.from_flat(mach.gather_macros(tensors)[0], state.spec)


def patch_rhs(
    state: PatchState, edges: EdgeValues, params: PhysicalParams
) -> PatchState:
    """Staggered wave stencils at every interior node, edges supplied.

    Jointly linear in (state, edges).
    """
    if edges.spec != state.spec:
        raise ContractError("edge values were built for a different grid spec")
    edges.check_complete()
    mach = _machinery(state.spec)
    tensors = mach.tensors_from_state(state.values[None, :])
    mach.scatter_edges(tensors, np.asarray(edges.values)[None, :])
    out = mach.stencil_rhs(tensors, params)
    return PatchState(mach.state_from_tensors(out)[0], state.spec)


def coupled_rhs(state: PatchState, coupling, params: PhysicalParams) -> PatchState:
    """The autonomous patch dynamical system F(x; x_E(x))."""
    if coupling.spec != state.spec:
        raise ContractError("coupling operator was built for a different grid spec")
    macros = extract_macro_values(state)
    edges = coupling.edge_values(macros)
    return patch_rhs(state, edges, params)


class PatchScheme:
    """A coupling operator bound to a grid spec and physical parameters.

    ``rhs_flat`` is the hot path used by Jacobian assembly, the time
    integrator and the benchmarks; it accepts a batch of states
    (shape ``(B, dim)`` or ``(dim,)``).
    """

    def __init__(self, spec: PatchGridSpec, coupling, params: PhysicalParams):
        if coupling.spec != spec:
            raise ContractError("coupling operator was built for a different spec")
        self.spec = spec
        self.coupling = coupling
        self.params = params
        self._mach = _machinery(spec)

    @property
    def dim(self) -> int:
        return self.spec.state_count

    @property
    def kind(self) -> str:
        return self.coupling.kind

    @property
    def dtype(self):
        return getattr(self.coupling, "dtype", np.float64)

    def rhs_flat(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        mach = self._mach
        tensors = mach.tensors_from_state(x)
        edge_flat = self.coupling.apply_flat(mach.gather_macros(tensors))
        mach.scatter_edges(tensors, edge_flat)
        y = mach.state_from_tensors(mach.stencil_rhs(tensors, self.params))
        return y[0] if single else y

    def rhs(self, state: PatchState) -> PatchState:
        return PatchState(self.rhs_flat(state.values), self.spec)

    def shift_state(self, x: np.ndarray, cells: tuple[int, int]) -> np.ndarray:
        return self._mach.roll_cells(x, cells)

    def total_h(self, x: np.ndarray) -> float:
        """Sum of the state over all interior h nodes."""
        return float(np.sum(np.asarray(x)[..., self._mach.h_mask], axis=-1))

    def describe(self) -> dict:
        return {
            "scheme": self.kind,
            "N": self.spec.N,
            "n": self.spec.n,
            "r": self.spec.r,
            "L": self.spec.L,
            "c_D": self.params.c_D,
            "c_V": self.params.c_V,
            "dim": self.dim,
        }


# -- snapshot serialisation ----------------------------------------------

SNAPSHOT_HEADER = "patch_I,patch_J,i,j,kind,value"


def write_state_csv(state: PatchState, path):
    """CSV rows (patch I, patch J, i, j, kind, value); bit-exact round-trip."""
    with open(path, "w") as fh:
        fh.write(SNAPSHOT_HEADER + "\n")
        for node, val in zip(state.spec.layout, state.values):
            fh.write(
                f"{node.patch[0]},{node.patch[1]},{node.micro[0]},"
                f"{node.micro[1]},{node.kind},{float(val)!r}\n"
            )


def read_state_csv(path, spec: PatchGridSpec) -> PatchState:
    vals = np.empty(spec.state_count)
    seen = 0
    with open(path) as fh:
        header = fh.readline().strip()
        if header != SNAPSHOT_HEADER:
            raise ContractError(f"unrecognised snapshot header {header!r}")
        for line in fh:
            P, Q, i, j, kind, val = line.strip().split(",")
            slot = spec.slot_of[((int(P), int(Q)), (int(i), int(j)))]
            vals[slot] = float(val)
            seen += 1
    if seen != spec.state_count:
        raise ContractError(
            f"snapshot has {seen} rows, spec needs {spec.state_count}"
        )
    return PatchState(vals, spec)
