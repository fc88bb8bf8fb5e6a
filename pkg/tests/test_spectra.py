import numpy as np
import pytest

from patchwave.errors import NumericalConsistencyError, NumericalError
from patchwave.grid import build_micro_grid
from patchwave.microscale import (
    PhysicalParams,
    analytic_macroscale_set,
    assemble_full_domain_jacobian,
    full_domain_analytic_spectrum,
)
from patchwave.spectra import (
    EXTENDED,
    arcsinh_coords,
    assemble_jacobian,
    block_spectrum,
    classified_spectrum,
    classify,
    classify_blocks,
    consistency_fit,
    eig,
    eigenvalue_error,
    make_scheme,
    pair_max_distance,
    roundoff_errors,
    spectrum_rows,
)


@pytest.fixture(scope="module")
def spectral_cs(weak_damping):
    scheme = make_scheme(10, 6, 0.1, "spectral", weak_damping)
    return classified_spectrum(scheme, route="full")


class TestJacobian:
    def test_random_probe_identity(self, weak_damping, rng):
        scheme = make_scheme(6, 6, 0.1, "square-p2", weak_damping)
        J = assemble_jacobian(scheme)
        for _ in range(10):
            x = rng.standard_normal(scheme.dim)
            got, want = J.matrix @ x, scheme.rhs_flat(x)
            assert np.max(np.abs(got - want)) <= 1e-12 * max(
                1.0, np.max(np.abs(want))
            )

    def test_dimension_10_6(self, weak_damping):
        scheme = make_scheme(10, 6, 0.1, "spectral", weak_damping)
        assert assemble_jacobian(scheme).matrix.shape == (1475, 1475)

    def test_ideal_spectral_neutral(self):
        scheme = make_scheme(10, 6, 0.1, "spectral", PhysicalParams())
        lam = eig(assemble_jacobian(scheme))
        assert np.max(np.abs(lam.real)) <= 1e-10

    def test_extended_precision_assembly(self, weak_damping):
        scheme = make_scheme(6, 6, 0.1, "square-p2", weak_damping, EXTENDED)
        J = assemble_jacobian(scheme)
        assert J.matrix.dtype == np.longdouble
        assert J.precision == EXTENDED


class TestEig:
    def test_diagonal(self):
        lam = eig(np.diag([3.0, -1.0, 0.5]))
        assert pair_max_distance(lam, np.array([3.0, -1.0, 0.5])) < 1e-14

    def test_rotation_block(self):
        lam = eig(np.array([[0.0, -1.0], [1.0, 0.0]]))
        assert pair_max_distance(lam, np.array([1j, -1j])) < 1e-14

    def test_full_domain_micro_model(self, weak_damping):
        spec = build_micro_grid(6)
        lam = eig(assemble_full_domain_jacobian(spec, weak_damping))
        ana = np.concatenate(
            [t.as_vector() for t in full_domain_analytic_spectrum(spec, weak_damping)]
        )
        assert pair_max_distance(lam, ana) <= 1e-10

    def test_vectors_residual_checked(self, rng):
        A = rng.standard_normal((40, 40))
        lam, vec = eig(A, vectors=True)
        k = 7
        res = np.linalg.norm(A @ vec[:, k] - lam[k] * vec[:, k])
        assert res < 1e-8 * max(1.0, np.max(np.abs(A)))

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericalError):
            eig(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestClassify:
    def test_census_10_6(self, spectral_cs):
        assert spectral_cs.macro_count == 75
        assert spectral_cs.micro.size == 1400

    def test_exact_match_gives_zero_residuals(self, spec_10_6, weak_damping):
        # inject the analytic values verbatim plus far-away decoys
        ana = np.concatenate(
            [t.as_vector() for t in analytic_macroscale_set(spec_10_6, weak_damping)]
        )
        decoys = -50.0 - np.arange(spec_10_6.state_count - ana.size) * 1j
        cs = classify(np.concatenate([ana, decoys]), spec_10_6, weak_damping)
        assert np.max(cs.matching_residuals) < 1e-14
        assert cs.micro.size == decoys.size

    def test_macro_partition_always_full(self, strong_damping):
        for name in ("spectral", "square-p2"):
            scheme = make_scheme(6, 6, 0.1, name, strong_damping)
            cs = classified_spectrum(scheme, route="block")
            assert cs.macro_count == 3 * 6 * 6 // 4

    def test_residuals_stay_clear_of_micro_cluster(self, weak_damping):
        # square-p2 matching residuals at the low wavenumbers are the
        # eigenvalue errors feeding the consistency metric: nonzero, with
        # the vortex members below the real-part cluster gap (~1e-2) and
        # every member well inside the distance to the micro cluster
        cs = classified_spectrum(
            make_scheme(10, 6, 0.1, "square-p2", weak_damping), route="full"
        )
        for kx, ky in [(1, 0), (1, 1), (2, 1)]:
            sel = np.flatnonzero(
                (cs.wavenumbers[:, 0] == kx) & (cs.wavenumbers[:, 1] == ky)
            )
            res = cs.matching_residuals[sel]
            assert np.all(res > 0)
            assert res[0] < 1e-2  # vortex member, Re-gap scale
            for a, rv in zip(cs.analytic[sel], res):
                assert rv < 0.5 * np.min(np.abs(cs.micro - a))

    def test_spectrum_closed_under_conjugation(self, spectral_cs):
        allv = np.concatenate([spectral_cs.macro, spectral_cs.micro])
        assert pair_max_distance(allv, allv.conj()) <= 1e-10


class TestBlockRoute:
    @pytest.mark.parametrize("name", ["spectral", "square-p4"])
    def test_block_matches_full_spectrum(self, name, weak_damping):
        scheme = make_scheme(6, 6, 0.1, name, weak_damping)
        full = eig(assemble_jacobian(scheme))
        blocks = block_spectrum(scheme).all_eigenvalues()
        assert pair_max_distance(full, blocks) <= 1e-10

    def test_block_classification_agrees_at_low_k(self, weak_damping):
        # the two routes may legitimately disagree about which eigenvalue
        # "is" a badly-resolved high-wavenumber macro mode; at the low
        # wavenumbers driving the consistency metrics they must agree
        scheme = make_scheme(10, 6, 0.1, "square-p4", weak_damping)
        cb = classify_blocks(block_spectrum(scheme), weak_damping)
        cf = classified_spectrum(scheme, route="full")
        assert cb.macro_count == cf.macro_count
        for kx, ky in [(1, 0), (1, 1), (2, 1)]:
            eb = eigenvalue_error(cb, kx, ky)
            ef = eigenvalue_error(cf, kx, ky)
            assert eb == pytest.approx(ef, rel=1e-3)

    def test_wavenumber_blocks_carry_their_triples(self, weak_damping):
        scheme = make_scheme(10, 6, 0.1, "spectral", weak_damping)
        cs = classify_blocks(block_spectrum(scheme), weak_damping)
        assert np.max(cs.matching_residuals) < 1e-10


class TestEigenvalueError:
    def test_identical_vectors_zero(self, spectral_cs):
        assert eigenvalue_error(spectral_cs, 1, 0) <= 1e-10

    def test_square_p4_magnitude(self, strong_damping):
        # the convergence law at p=4, N=10 puts eps(1,0) near 1.2e-2
        cs = classified_spectrum(
            make_scheme(10, 6, 0.1, "square-p4", strong_damping), route="block"
        )
        err = eigenvalue_error(cs, 1, 0)
        assert 1.2e-2 / 3 < err < 1.2e-2 * 3

    def test_not_applicable_at_origin_without_drag(self):
        cs = classified_spectrum(
            make_scheme(6, 6, 0.1, "spectral", PhysicalParams(0.0, 1e-4)),
            route="block",
        )
        assert eigenvalue_error(cs, 0, 0) is None

    def test_unresolved_wavenumber_raises(self, spectral_cs):
        with pytest.raises(NumericalError):
            eigenvalue_error(spectral_cs, 5, 5)


class TestRoundoff:
    def test_identical_spectra_zero(self, weak_damping):
        scheme = make_scheme(6, 6, 0.1, "square-p2", weak_damping)
        cs = classified_spectrum(scheme, route="block")
        assert roundoff_errors(cs, cs) == (0.0, 0.0)

    def test_moderate_r_is_tiny(self, strong_damping):
        ref = classified_spectrum(
            make_scheme(6, 6, 0.1, "square-p2", strong_damping, EXTENDED),
            route="block",
        )
        wrk = classified_spectrum(
            make_scheme(6, 6, 0.1, "square-p2", strong_damping), route="block"
        )
        eps_mu, eps_M = roundoff_errors(ref, wrk)
        assert eps_M <= 1e-10
        assert eps_mu <= 1e-10

    def test_config_mismatch_rejected(self, weak_damping, strong_damping):
        a = classified_spectrum(
            make_scheme(6, 6, 0.1, "square-p2", weak_damping), route="block"
        )
        b = classified_spectrum(
            make_scheme(6, 6, 0.1, "square-p2", strong_damping), route="block"
        )
        with pytest.raises(NumericalConsistencyError):
            roundoff_errors(a, b)


class TestConsistencyFit:
    def test_synthetic_quartic(self):
        deltas = [0.8, 0.4, 0.2, 0.1]
        fit = consistency_fit([(d, d**4) for d in deltas])
        assert fit.exponent == pytest.approx(4.0, abs=1e-12)
        assert fit.prefactor == pytest.approx(1.0, rel=1e-12)
        assert fit.r_squared == pytest.approx(1.0)

    def test_floor_filtering_reported(self):
        pts = [(0.8, 0.8**2), (0.4, 0.4**2), (0.2, 0.2**2), (0.1, 5e-9)]
        fit = consistency_fit(pts, floor=1e-8)
        assert len(fit.points_filtered) == 1
        assert fit.exponent == pytest.approx(2.0, abs=1e-9)

    def test_too_few_points(self):
        with pytest.raises(NumericalError):
            consistency_fit([(0.1, 1e-3), (0.2, 4e-3)])


class TestExport:
    def test_rows_and_arcsinh(self, spectral_cs):
        rows = spectrum_rows(spectral_cs)
        assert len(rows) == 1475
        macro = [r for r in rows if r["class"] == "macro"]
        assert len(macro) == 75
        assert all("re_arcsinh" in r for r in rows)
        assert arcsinh_coords(0.0) == 0.0
