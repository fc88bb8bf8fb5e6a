"""Staggered micro-grids and the staggered macro-grid of patches.

Two grid objects are built here:

* :class:`MicroGridSpec` -- a full-domain periodic staggered grid with
  ``n x n`` intervals.  Water depth ``h`` lives on (even, even) nodes,
  ``u`` on (odd, even), ``v`` on (even, odd); (odd, odd) holds nothing,
  so the grid carries ``3 n^2 / 4`` state variables.

* :class:`PatchGridSpec` -- an ``N x N`` macro-grid of small square
  patches over a periodic ``L x L`` domain.  The macro-grid mirrors the
  micro staggering: each ``2 Delta x 2 Delta`` macro-cell holds one
  h-centred, one u-centred and one v-centred patch.  Every patch carries
  its own ``n x n`` staggered sub-grid (spacing ``delta``) plus a frame
  of *edge nodes* whose values come from inter-patch interpolation.

Both objects are immutable after construction and safe to share
between threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

from .errors import GeometryError, ParameterError

H, U, V = "h", "u", "v"
KINDS = (H, U, V)

#: parity (i % 2, j % 2) of each node kind on the staggered lattice
KIND_PARITY = {H: (0, 0), U: (1, 0), V: (0, 1)}
PARITY_KIND = {(0, 0): H, (1, 0): U, (0, 1): V, (1, 1): None}

INTERIOR, EDGE = "interior", "edge"

#: stencil neighbours (di, dj, kind) read by the RHS at a node of each kind;
#: first differences reach +-1, the viscous second differences reach +-2
STENCIL_NEIGHBOURS = {
    H: ((1, 0, U), (-1, 0, U), (0, 1, V), (0, -1, V)),
    U: ((1, 0, H), (-1, 0, H), (2, 0, U), (-2, 0, U), (0, 2, U), (0, -2, U)),
    V: ((0, 1, H), (0, -1, H), (2, 0, V), (-2, 0, V), (0, 2, V), (0, -2, V)),
}

FULL_DOMAIN = None


def node_kind(i: int, j: int) -> str | None:
    """Kind of the staggered-lattice node at index parity (i, j), or None."""
    return PARITY_KIND[(i % 2, j % 2)]


@dataclass(frozen=True)
class NodeIndex:
    """Address of one state variable.

    ``patch`` is the (P, Q) macro-grid position of the owning patch, or
    ``None`` for a full-domain grid node.  ``micro`` is the (i, j) index,
    patch-local with (0, 0) at the patch centre node.
    """

    patch: tuple[int, int] | None
    micro: tuple[int, int]
    kind: str
    region: str = INTERIOR


@dataclass(frozen=True)
class MicroGridSpec:
    """Full-domain periodic staggered grid with ``n x n`` intervals."""

    n: int
    L: float = 2.0 * math.pi
    delta: float = field(init=False)

    def __post_init__(self):
        if self.n % 2 != 0:
            raise ParameterError(
                f"micro-grid interval count n={self.n} must be even "
                "(staggering pairs h/u/v nodes by index parity)"
            )
        if self.n < 2:
            raise ParameterError(f"micro-grid needs n >= 2 intervals, got n={self.n}")
        if self.L <= 0:
            raise ParameterError(f"domain period L={self.L} must be positive")
        object.__setattr__(self, "delta", self.L / self.n)

    @property
    def state_count(self) -> int:
        return 3 * self.n * self.n // 4

    @property
    def cell_count(self) -> int:
        return self.n * self.n // 4

    @cached_property
    def layout(self) -> tuple[NodeIndex, ...]:
        """Flat state layout: h block, then u, then v; row-major in (a, b).

        h[a, b] sits at index (2a, 2b), u[a, b] at (2a+1, 2b) and
        v[a, b] at (2a, 2b+1), for a, b in 0..n/2-1.
        """
        q = self.n // 2
        nodes = []
        for kind, (pi, pj) in KIND_PARITY.items():
            for a in range(q):
                for b in range(q):
                    nodes.append(NodeIndex(FULL_DOMAIN, (2 * a + pi, 2 * b + pj), kind))
        return tuple(nodes)

    def to_json(self) -> str:
        return json.dumps(
            {
                "grid": "full-domain",
                "n": self.n,
                "L": self.L,
                "delta": self.delta,
                "state_count": self.state_count,
                "cell_count": self.cell_count,
            },
            indent=2,
        )


def build_micro_grid(n: int, L: float = 2.0 * math.pi) -> MicroGridSpec:
    """Construct the full-domain staggered micro-grid."""
    return MicroGridSpec(n=n, L=L)


def _span(lo: int, hi: int, parity: int) -> tuple[int, ...]:
    """Integers in [lo, hi] with the given parity."""
    return tuple(k for k in range(lo, hi + 1) if k % 2 == parity)


@dataclass(frozen=True)
class PatchGridSpec:
    """Staggered macro-grid of patches over a periodic square domain.

    Parameters
    ----------
    N : int
        Macro-grid intervals per direction.  ``N/2`` must be odd so the
        resolved wavenumber range has no Nyquist mode, hence
        N in {6, 10, 14, 18, 22, 26, ...}.
    n : int
        Micro-grid intervals per patch side.  ``n/2`` must be odd so all
        four patch sides carry the same staggering relative to the centre
        node, hence n in {2, 6, 10, 14, ...}.
    r : float
        Patch ratio, half the patch side over the inter-patch spacing;
        0 < r <= 0.5 (r = 0.5 means adjacent patches touch).
    L : float
        Domain period, 2*pi by default (non-dimensional).

    Derived: ``Delta = L/N`` (inter-patch spacing), ``delta = 2*L*r/(N*n)``
    (sub-patch micro-grid spacing), patch side ``l = n*delta = 2*r*Delta``.

    Patch-local micro indices put (0, 0) on the patch centre node; valid
    indices run -(n/2+1) .. n/2+1, the outer two rings being edge nodes.
    A node at local (i, j) of a patch positioned at macro parity (p, q)
    has kind ``PARITY_KIND[((i+p) % 2, (j+q) % 2)]``.
    """

    N: int
    n: int
    r: float
    L: float = 2.0 * math.pi
    Delta: float = field(init=False)
    delta: float = field(init=False)

    def __post_init__(self):
        if self.N % 2 != 0 or self.N < 6:
            raise ParameterError(
                f"macro-grid interval count N={self.N} must be an even integer >= 6"
            )
        if (self.N // 2) % 2 == 0:
            raise ParameterError(
                f"N={self.N} violates Nyquist parity: N/2 must be odd "
                "(N in {6, 10, 14, 18, 22, 26, ...})"
            )
        if self.n % 2 != 0 or self.n < 2:
            raise ParameterError(
                f"sub-patch interval count n={self.n} must be an even integer >= 2"
            )
        if (self.n // 2) % 2 == 0:
            raise ParameterError(
                f"n={self.n} breaks the sub-patch staggering: n/2 must be odd "
                "so each patch centres a node of its own kind symmetrically "
                "(n in {2, 6, 10, 14, ...})"
            )
        if not 0.0 < self.r <= 0.5:
            raise GeometryError(
                f"patch ratio r={self.r} out of range (0, 0.5]: patches of side "
                "2*r*Delta must not overlap their neighbours"
            )
        if self.L <= 0:
            raise ParameterError(f"domain period L={self.L} must be positive")
        object.__setattr__(self, "Delta", self.L / self.N)
        object.__setattr__(self, "delta", 2.0 * self.L * self.r / (self.N * self.n))

    # -- basic geometry -------------------------------------------------

    @property
    def M(self) -> int:
        """Macro-cells per direction (= N/2 = same-kind patches per row)."""
        return self.N // 2

    @property
    def m(self) -> int:
        """Half the sub-patch interval count."""
        return self.n // 2

    @property
    def patch_side(self) -> float:
        return self.n * self.delta

    def patch_position(self, kind: str, cell: tuple[int, int]) -> tuple[int, int]:
        """Macro-grid position (P, Q) of the ``kind`` patch in a macro-cell."""
        pi, pj = KIND_PARITY[kind]
        return (2 * cell[0] + pi, 2 * cell[1] + pj)

    def patch_centre(self, patch: tuple[int, int]) -> tuple[float, float]:
        return (patch[0] * self.Delta, patch[1] * self.Delta)

    def node_position(self, patch: tuple[int, int], micro: tuple[int, int]):
        x0, y0 = self.patch_centre(patch)
        return (x0 + micro[0] * self.delta, y0 + micro[1] * self.delta)

    def patch_kind(self, patch: tuple[int, int]) -> str:
        kind = PARITY_KIND[(patch[0] % 2, patch[1] % 2)]
        if kind is None:
            raise ParameterError(f"macro position {patch} holds no patch")
        return kind

    def local_kind(self, patch_kind: str, i: int, j: int) -> str | None:
        pi, pj = KIND_PARITY[patch_kind]
        return PARITY_KIND[((i + pi) % 2, (j + pj) % 2)]

    # -- node sets -------------------------------------------------------

    @cached_property
    def interior_nodes(self) -> dict[str, tuple[tuple[int, int, str], ...]]:
        """Per patch kind: (i, j, node kind) strictly inside the patch square.

        Interior means |i|, |j| <= n/2 - 1; nodes are sorted by (i, j).
        """
        out = {}
        for pk in KINDS:
            nodes = []
            for i in range(-(self.m - 1), self.m):
                for j in range(-(self.m - 1), self.m):
                    nk = self.local_kind(pk, i, j)
                    if nk is not None:
                        nodes.append((i, j, nk))
            out[pk] = tuple(nodes)
        return out

    @cached_property
    def edge_nodes(self) -> dict[str, tuple[tuple[int, int, str], ...]]:
        """Per patch kind: the stencil-closure edge set, sorted by (i, j).

        Derived mechanically: an edge node is any stencil neighbour of an
        interior node that falls outside the interior square.  All of them
        land on the two rings |i| or |j| in {n/2, n/2 + 1}, i.e. on the
        patch boundary or one layer outside it.
        """
        out = {}
        for pk in KINDS:
            seen = set()
            for (i, j, nk) in self.interior_nodes[pk]:
                for di, dj, want in STENCIL_NEIGHBOURS[nk]:
                    ii, jj = i + di, j + dj
                    if max(abs(ii), abs(jj)) <= self.m - 1:
                        continue
                    got = self.local_kind(pk, ii, jj)
                    if got != want:
                        raise GeometryError(
                            f"staggering inconsistency at patch kind {pk}, "
                            f"node ({ii}, {jj}): stencil expects {want}, grid has {got}"
                        )
                    seen.add((ii, jj, want))
            out[pk] = tuple(sorted(seen))
        return out

    @cached_property
    def interior_counts(self) -> dict[str, int]:
        return {pk: len(v) for pk, v in self.interior_nodes.items()}

    @cached_property
    def edge_counts(self) -> dict[str, int]:
        return {pk: len(v) for pk, v in self.edge_nodes.items()}

    @property
    def state_count(self) -> int:
        """Total interior unknowns, enumerated."""
        return self.M * self.M * sum(self.interior_counts.values())

    @property
    def edge_count(self) -> int:
        return self.M * self.M * sum(self.edge_counts.values())

    @property
    def macro_count(self) -> int:
        """Number of macroscale values (3 per macro-cell)."""
        return 3 * self.M * self.M

    def interior_count_formula(self) -> int:
        """Closed-form interior count (N^2/4)(9 n^2/4 - 4 n + 2)."""
        return (self.N * self.N // 4) * (9 * self.n * self.n // 4 - 4 * self.n + 2)

    # -- layouts ---------------------------------------------------------

    @cached_property
    def layout(self) -> tuple[NodeIndex, ...]:
        """Flat interior-state layout.

        Patch kinds in order (h, u, v); within a kind, macro-cells
        row-major in (A, B); within a patch, interior nodes sorted (i, j).
        """
        nodes = []
        for pk in KINDS:
            for A in range(self.M):
                for B in range(self.M):
                    patch = self.patch_position(pk, (A, B))
                    for (i, j, nk) in self.interior_nodes[pk]:
                        nodes.append(NodeIndex(patch, (i, j), nk, INTERIOR))
        return tuple(nodes)

    @cached_property
    def edge_layout(self) -> tuple[NodeIndex, ...]:
        """Flat edge-value layout, ordered like :attr:`layout`."""
        nodes = []
        for pk in KINDS:
            for A in range(self.M):
                for B in range(self.M):
                    patch = self.patch_position(pk, (A, B))
                    for (i, j, nk) in self.edge_nodes[pk]:
                        nodes.append(NodeIndex(patch, (i, j), nk, EDGE))
        return tuple(nodes)

    @cached_property
    def slot_of(self) -> dict[tuple[tuple[int, int], tuple[int, int]], int]:
        """Map (patch, micro) -> flat interior slot."""
        return {(nd.patch, nd.micro): k for k, nd in enumerate(self.layout)}

    def resolved_wavenumbers(self) -> tuple[tuple[int, int], ...]:
        """All (k_x, k_y) the macro-grid resolves: |k| <= (N/2 - 1)/2."""
        K = (self.M - 1) // 2
        return tuple((kx, ky) for kx in range(-K, K + 1) for ky in range(-K, K + 1))

    def to_json(self) -> str:
        return json.dumps(
            {
                "grid": "staggered-patch",
                "N": self.N,
                "n": self.n,
                "r": self.r,
                "L": self.L,
                "Delta": self.Delta,
                "delta": self.delta,
                "state_count": self.state_count,
                "edge_count": self.edge_count,
                "macro_count": self.macro_count,
                "interior_counts": self.interior_counts,
                "edge_counts": self.edge_counts,
            },
            indent=2,
        )


def build_patch_grid(N: int, n: int, r: float, L: float = 2.0 * math.pi) -> PatchGridSpec:
    """Construct the staggered patch macro-grid."""
    return PatchGridSpec(N=N, n=n, r=r, L=L)


def edge_node_set(spec: PatchGridSpec, patch: tuple[int, int]) -> list[NodeIndex]:
    """Edge nodes of one patch: the stencil closure of its interior.

    For every interior node, all stencil neighbours lie in
    interior union edge (the closure property).
    """
    pk = spec.patch_kind(patch)
    return [NodeIndex(patch, (i, j), nk, EDGE) for (i, j, nk) in spec.edge_nodes[pk]]
