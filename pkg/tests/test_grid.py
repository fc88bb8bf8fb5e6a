import json
import math

import pytest
from hypothesis import given, strategies as st

from patchwave.errors import GeometryError, ParameterError
from patchwave.grid import (
    EDGE,
    INTERIOR,
    KINDS,
    PARITY_KIND,
    STENCIL_NEIGHBOURS,
    build_micro_grid,
    build_patch_grid,
    edge_node_set,
    node_kind,
)


class TestMicroGrid:
    def test_counts_n6(self):
        g = build_micro_grid(6)
        assert g.state_count == 27
        assert g.cell_count == 9

    def test_counts_n2(self):
        g = build_micro_grid(2)
        assert g.state_count == 3  # one h, one u, one v
        kinds = sorted(nd.kind for nd in g.layout)
        assert kinds == ["h", "u", "v"]

    def test_counts_n10_against_enumeration(self):
        # independent oracle: enumerate parity classes over the 10x10
        # periodic index grid
        n = 10
        count = sum(
            1 for i in range(n) for j in range(n) if node_kind(i, j) is not None
        )
        assert count == 75
        assert build_micro_grid(10).state_count == count

    @pytest.mark.parametrize("bad", [5, 7, 0, -4])
    def test_rejects_odd_or_too_small(self, bad):
        with pytest.raises(ParameterError):
            build_micro_grid(bad)

    def test_layout_is_bijective(self):
        g = build_micro_grid(6)
        seen = {nd.micro for nd in g.layout}
        assert len(seen) == g.state_count == len(g.layout)

    def test_json_keys(self):
        doc = json.loads(build_micro_grid(8).to_json())
        assert doc["n"] == 8 and doc["state_count"] == 48


class TestParity:
    @given(st.integers(-100, 100), st.integers(-100, 100))
    def test_classification_total_and_disjoint(self, i, j):
        kind = node_kind(i, j)
        if i % 2 == 1 and j % 2 == 1:
            assert kind is None
        else:
            assert kind in KINDS
        # exactly one parity cell per kind
        assert len(set(PARITY_KIND.values())) == 4


class TestPatchGrid:
    def test_delta_and_count_10_6(self, spec_10_6):
        assert spec_10_6.delta == pytest.approx(math.pi / 150, rel=1e-15)
        assert spec_10_6.state_count == 1475
        assert spec_10_6.state_count == spec_10_6.interior_count_formula()

    def test_delta_6_6(self):
        spec = build_patch_grid(6, 6, 0.1)
        assert spec.delta == pytest.approx(math.pi / 90, rel=1e-15)

    def test_touching_patches_accepted(self):
        spec = build_patch_grid(6, 6, 0.5)
        assert spec.delta == pytest.approx(math.pi / 18, rel=1e-15)
        assert spec.patch_side == pytest.approx(spec.Delta)

    def test_nyquist_parity_error(self):
        with pytest.raises(ParameterError, match="Nyquist parity"):
            build_patch_grid(8, 6, 0.1)

    def test_overlap_error(self):
        with pytest.raises(GeometryError):
            build_patch_grid(10, 6, 0.6)

    def test_subpatch_parity_error(self):
        with pytest.raises(ParameterError, match="n/2 must be odd"):
            build_patch_grid(10, 8, 0.1)

    @pytest.mark.parametrize("N", [6, 10, 14])
    @pytest.mark.parametrize("n", [6, 10])
    def test_count_formula_vs_enumeration(self, N, n):
        spec = build_patch_grid(N, n, 0.1)
        assert spec.state_count == spec.interior_count_formula()
        # cross-check against the cluster totals:
        # 3N^2/4 macro + 2 (N^2/4)(3n^2/4 - n - 1) wave micro
        # + (N^2/4)(3n^2/4 - 2n + 1) vortex micro
        cells = N * N // 4
        clusters = (
            3 * cells
            + 2 * cells * (3 * n * n // 4 - n - 1)
            + cells * (3 * n * n // 4 - 2 * n + 1)
        )
        assert spec.state_count == clusters

    def test_macro_cells_hold_three_patches(self, spec_10_6):
        for cell in [(0, 0), (2, 3)]:
            kinds = {
                spec_10_6.patch_kind(spec_10_6.patch_position(k, cell))
                for k in KINDS
            }
            assert kinds == set(KINDS)

    def test_centre_node_kind_matches_patch_kind(self, spec_10_6):
        for pk in KINDS:
            assert spec_10_6.local_kind(pk, 0, 0) == pk

    def test_layout_bijection(self, spec_10_6):
        assert len(spec_10_6.slot_of) == spec_10_6.state_count
        for k, nd in enumerate(spec_10_6.layout):
            assert spec_10_6.slot_of[(nd.patch, nd.micro)] == k

    def test_json_roundtrip_keys(self, spec_10_6):
        doc = json.loads(spec_10_6.to_json())
        for key in ("N", "n", "r", "L", "Delta", "delta", "state_count"):
            assert key in doc


class TestEdgeNodes:
    def test_closure_property(self, spec_10_6):
        # every stencil neighbour of an interior node is interior or edge
        for pk in KINDS:
            interior = {(i, j) for i, j, _ in spec_10_6.interior_nodes[pk]}
            edge = {(i, j) for i, j, _ in spec_10_6.edge_nodes[pk]}
            for (i, j, nk) in spec_10_6.interior_nodes[pk]:
                for di, dj, _ in STENCIL_NEIGHBOURS[nk]:
                    assert (i + di, j + dj) in interior | edge

    def test_h_interior_adjacent_to_boundary_reads_first_layer(self, spec_10_6):
        # an h node at (m-1, j) reads u at (m, j): first edge layer
        m = spec_10_6.m
        edges = {(i, j, k) for i, j, k in spec_10_6.edge_nodes["h"]}
        assert (m, 0, "u") in edges

    def test_u_interior_one_row_inside_reads_second_layer(self, spec_10_6):
        # viscous +-2 stencil: u at (i, m-1) reads u at (i, m+1)
        m = spec_10_6.m
        edges = spec_10_6.edge_nodes["h"]
        layer2 = {(i, j) for i, j, k in edges if k == "u" and abs(j) == m + 1}
        assert layer2, "second-layer u nodes must be present"

    def test_two_layers_on_each_side(self, spec_10_6):
        m = spec_10_6.m
        for pk in KINDS:
            for i, j, _ in spec_10_6.edge_nodes[pk]:
                assert m <= max(abs(i), abs(j)) <= m + 1

    def test_edge_node_set_op(self, spec_10_6):
        nodes = edge_node_set(spec_10_6, (1, 0))  # a u-patch
        assert all(nd.region == EDGE for nd in nodes)
        assert len(nodes) == spec_10_6.edge_counts["u"]
        assert all(nd.patch == (1, 0) for nd in nodes)

    def test_interior_region_label(self, spec_10_6):
        assert all(nd.region == INTERIOR for nd in spec_10_6.layout)
