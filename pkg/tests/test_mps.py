import numpy as np
import pytest
import scipy.linalg

from hyperising.dense import OTOCSpec, diagonalize, otoc_regularized, thermal_energy
from hyperising.fits import scrambling_time
from hyperising.model import ModelParams, build_hamiltonian, build_terms
from hyperising.mps import (
    PurifiedMPS,
    TrotterScheme,
    TruncationPolicy,
    expect_hamiltonian,
    infinite_tfd,
    lightcone_scan,
    otoc_mps,
    otoc_mps_series,
    tebd_step,
    thermal_tfd,
)

SCHEME = TrotterScheme(dt=0.01, order=2)
POLICY = TruncationPolicy(chi_max=64, cutoff=1e-12)


def densify(state: PurifiedMPS) -> np.ndarray:
    """Contract a purification into its (physical, ancilla) matrix."""
    vec = np.ones((1, 1))
    for tensor in state.tensors:
        vec = np.tensordot(vec, tensor, axes=([-1], [0]))
    vec = vec.reshape([2] * state.n_sites)
    n = state.n_phys
    perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    mat = vec.transpose(perm).reshape(2**n, 2**n)
    return mat * np.exp(state.log_norm)


class TestInfiniteTfd:
    def test_norm(self):
        state = infinite_tfd(3)
        assert abs(state.overlap(state)) == pytest.approx(1.0, abs=1e-12)

    def test_single_pair_reduced_state(self):
        state = infinite_tfd(1)
        rho = state.reduced_single_site(0)
        assert np.abs(rho - np.eye(2) / 2).max() < 1e-12

    def test_maximally_mixed_physical_marginal(self):
        # dense-contraction check: tracing ancillas leaves identity / 2^n
        state = infinite_tfd(4)
        psi = densify(state)
        rho_phys = psi @ psi.conj().T
        assert np.abs(rho_phys - np.eye(16) / 16).max() < 1e-12

    def test_physical_bonds_are_product(self):
        state = infinite_tfd(4)
        assert state.bond_dims[1::2] == [1, 1, 1]


class TestTebdStep:
    def test_zero_step_identity(self):
        terms = build_terms(ModelParams(n=4, j=1, h=1, m=0.05, l_max=1))
        state = infinite_tfd(4)
        tebd_step(state, TrotterScheme(dt=1e-9, order=2), POLICY, terms)
        ref = infinite_tfd(4)
        assert abs(1 - abs(state.overlap(ref))) < 1e-12

    def test_real_step_preserves_norm(self):
        terms = build_terms(ModelParams(n=5, j=1, h=1, m=0.05, l_max=2))
        state = infinite_tfd(5)
        for _ in range(20):
            tebd_step(state, TrotterScheme(dt=0.05, order=2), POLICY, terms)
        assert abs(state.overlap(state) - 1.0) < 1e-10
        assert state.log_norm == 0.0

    def test_first_order_step_runs(self):
        terms = build_terms(ModelParams(n=4, j=1, h=1, m=0.05, l_max=1))
        state = infinite_tfd(4)
        tebd_step(state, TrotterScheme(dt=0.01, order=1), POLICY, terms)
        assert abs(state.overlap(state) - 1.0) < 1e-10

    def test_imaginary_accumulates_log_norm(self):
        terms = build_terms(ModelParams(n=4, j=1, h=1, m=0.05, l_max=1))
        state = infinite_tfd(4)
        tebd_step(state, TrotterScheme(dt=0.05, order=2, direction="imaginary"), POLICY, terms)
        assert state.log_norm != 0.0
        assert abs(state.overlap(state) - 1.0) < 1e-10

    def test_scheme_validation(self):
        with pytest.raises(ValueError):
            TrotterScheme(dt=-0.1)
        with pytest.raises(ValueError):
            TrotterScheme(dt=0.1, order=3)
        with pytest.raises(ValueError):
            TrotterScheme(dt=0.1, direction="sideways")
        with pytest.raises(ValueError):
            TruncationPolicy(chi_max=0)


class TestThermalTfd:
    def test_beta_zero_returns_infinite_tfd(self):
        terms = build_terms(ModelParams(n=3, j=1, h=1, m=0.05, l_max=1))
        state = thermal_tfd(3, 0.0, SCHEME, POLICY, terms)
        assert abs(state.overlap(infinite_tfd(3)) - 1.0) < 1e-12

    def test_matches_dense_purification(self):
        params = ModelParams(n=3, j=1, h=1, m=0.05, l_max=1)
        terms = build_terms(params)
        ham = build_hamiltonian(params)
        beta = 1.2
        state = thermal_tfd(3, beta, SCHEME, POLICY, terms)
        got = densify(state)
        want = scipy.linalg.expm(-beta * ham / 2.0) / np.sqrt(8.0)
        assert np.abs(got - want).max() < 5e-5

    @pytest.mark.parametrize("beta", [0.5, 2.0])
    def test_thermal_energy(self, beta):
        params = ModelParams(n=5, j=1, h=1, m=0.05, l_max=2)
        terms = build_terms(params)
        spec = diagonalize(build_hamiltonian(params))
        state = thermal_tfd(5, beta, SCHEME, POLICY, terms)
        assert expect_hamiltonian(state, terms) == pytest.approx(
            thermal_energy(spec, beta), abs=1e-3
        )

    def test_large_beta_approaches_ground_state(self):
        params = ModelParams(n=4, j=1, h=1, m=0.05, l_max=1)
        terms = build_terms(params)
        spec = diagonalize(build_hamiltonian(params))
        state = thermal_tfd(4, 12.0, SCHEME, POLICY, terms)
        assert expect_hamiltonian(state, terms) == pytest.approx(
            spec.eigenvalues[0], abs=1e-3
        )

    def test_partition_function_bookkeeping(self):
        # squared norm of the unnormalized purification equals Z / 2^n
        params = ModelParams(n=5, j=1, h=1, m=0.05, l_max=2)
        terms = build_terms(params)
        spec = diagonalize(build_hamiltonian(params))
        beta = 1.0
        state = thermal_tfd(5, beta, SCHEME, POLICY, terms)
        z_over_d = np.sum(np.exp(-beta * spec.eigenvalues)) / 32.0
        assert np.exp(2 * state.log_norm) == pytest.approx(z_over_d, rel=1e-3)


class TestOtocMps:
    def test_trivial_point(self):
        params = ModelParams(n=4, j=1, h=1, m=0.05, l_max=1)
        terms = build_terms(params)
        f, info = otoc_mps(4, 0.0, OTOCSpec(w_site=2, v_site=0), 0.0, SCHEME, POLICY, terms)
        assert f.real == pytest.approx(1.0, abs=1e-10)
        assert info["discarded_left"] == 0.0

    @pytest.mark.parametrize("beta", [0.0, 1.0])
    def test_matches_dense(self, beta):
        params = ModelParams(n=5, j=1, h=1, m=0.05, l_max=2)
        terms = build_terms(params)
        spec = diagonalize(build_hamiltonian(params))
        ospec = OTOCSpec(w_site=2, v_site=0)
        for t in (0.5, 1.5):
            f_mps, _ = otoc_mps(5, beta, ospec, t, SCHEME, POLICY, terms)
            f_dense = otoc_regularized(spec, beta, ospec, t)
            assert abs(f_mps - f_dense) < 1e-3

    def test_series_collects_diagnostics(self):
        params = ModelParams(n=4, j=1, h=1, m=0.05, l_max=1)
        terms = build_terms(params)
        grid = np.array([0.0, 0.4, 0.8])
        series = otoc_mps_series(4, 0.5, OTOCSpec(w_site=2, v_site=0), grid, SCHEME, POLICY, terms)
        assert series.meta["backend"] == "mps"
        assert series.meta["discarded_weight"].shape == (3,)
        assert np.allclose(series.c, 2 * series.o)

    def test_rejects_negative_time(self):
        terms = build_terms(ModelParams(n=4))
        with pytest.raises(ValueError):
            otoc_mps(4, 0.0, OTOCSpec(w_site=2, v_site=0), -1.0, SCHEME, POLICY, terms)

    def test_truncation_monotonicity(self):
        # tightening the policy must not worsen agreement with dense
        params = ModelParams(n=5, j=1, h=1, m=0.05, l_max=2)
        terms = build_terms(params)
        spec = diagonalize(build_hamiltonian(params))
        ospec = OTOCSpec(w_site=2, v_site=0)
        t = 1.5
        f_dense = otoc_regularized(spec, 0.0, ospec, t)
        loose = TruncationPolicy(chi_max=4, cutoff=1e-4, warn_threshold=np.inf)
        tight = TruncationPolicy(chi_max=64, cutoff=1e-12)
        f_loose, _ = otoc_mps(5, 0.0, ospec, t, SCHEME, loose, terms)
        f_tight, _ = otoc_mps(5, 0.0, ospec, t, SCHEME, tight, terms)
        assert abs(f_tight - f_dense) <= abs(f_loose - f_dense) + 1e-12

    def test_excessive_truncation_flagged(self):
        params = ModelParams(n=5, j=1, h=1, m=0.05, l_max=2)
        terms = build_terms(params)
        tiny = TruncationPolicy(chi_max=2, cutoff=1e-12, warn_threshold=1e-6)
        _, info = otoc_mps(5, 0.0, OTOCSpec(w_site=2, v_site=0), 1.5, SCHEME, tiny, terms)
        assert "excessive_truncation" in info["flags"]


class TestLightconeScan:
    @pytest.fixture(scope="class")
    def scan(self):
        params = ModelParams(n=5, j=1, h=1, m=0.05, l_max=1)
        terms = build_terms(params)
        grid = np.arange(0.0, 3.01, 0.25)
        o_mat, f_mat, cone = lightcone_scan(
            5, 0.0, 2, [0, 1, 3, 4], grid, SCHEME, POLICY, terms, threshold=0.5
        )
        return params, grid, o_mat, f_mat, cone

    def test_zero_time_column_vanishes(self, scan):
        _, _, o_mat, _, _ = scan
        assert np.abs(o_mat[:, 0]).max() < 1e-8

    def test_mirror_symmetry(self, scan):
        # sites 0/4 and 1/3 are reflections through the center probe; for odd
        # chains the even/odd layer split is not reflection-covariant, so the
        # residual sits at the Trotter-asymmetry scale rather than truncation
        _, _, o_mat, _, cone = scan
        assert np.abs(o_mat[0] - o_mat[3]).max() < 1e-4
        assert np.abs(o_mat[1] - o_mat[2]).max() < 1e-4

    def test_scrambling_times_match_dense(self, scan):
        params, grid, o_mat, _, cone = scan
        from hyperising.dense import OTOCSeries, otoc_site_matrix

        spec = diagonalize(build_hamiltonian(params))
        o_dense, _ = otoc_site_matrix(spec, 0.0, 2, [0, 1, 3, 4], grid, precision="float64")
        for row in range(4):
            series = OTOCSeries(
                times=grid, f=np.zeros(0), o=o_dense[row], c=2 * o_dense[row]
            )
            t_dense, _ = scrambling_time(series, 0.5)
            assert abs(cone.t_s[row] - t_dense) <= 0.25  # within grid resolution
