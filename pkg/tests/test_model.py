import numpy as np
import pytest

from hyperising.model import (
    CapacityError,
    ModelParams,
    build_dense_hamiltonian,
    build_hamiltonian,
    build_terms,
    coupling_profile,
    discretize_rho,
    reversal_operator,
    site_operator,
)

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]])
SZ = np.diag([1.0, -1.0])


def kron_all(ops):
    out = ops[0]
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


def flat_mfi_reference(n, j, h, m):
    """Independent flat mixed-field Ising builder (plain Kronecker products)."""
    d = 2**n
    ham = np.zeros((d, d))
    for i in range(n - 1):
        ops = [np.eye(2)] * n
        ops[i] = SZ
        ops[i + 1] = SZ
        ham += -j * kron_all(ops)
    for i in range(n):
        ops = [np.eye(2)] * n
        ops[i] = SX
        ham += h * kron_all(ops)
        ops[i] = SZ
        ham += m * kron_all(ops)
    return ham


class TestDiscretizeRho:
    def test_three_sites_unit_curvature(self):
        rho = discretize_rho(ModelParams(n=3, l_max=1))
        assert np.allclose(rho, [-1.0, 0.0, 1.0])

    def test_flat_limit(self):
        assert np.all(discretize_rho(ModelParams(n=5, l_max=0)) == 0.0)

    def test_endpoints_and_center(self):
        rho = discretize_rho(ModelParams(n=37, l_max=5))
        assert rho[0] == -5.0
        assert rho[36] == 5.0
        assert abs(rho[18]) < 1e-14

    def test_too_few_sites(self):
        with pytest.raises(ValueError):
            ModelParams(n=1)


class TestCouplingProfile:
    def test_flat(self):
        prof = coupling_profile(ModelParams(n=5, l_max=0))
        assert np.allclose(prof.eta, 1.0)

    def test_cosh_values(self):
        prof = coupling_profile(ModelParams(n=3, l_max=1))
        assert prof.eta == pytest.approx([1.5430806348152437, 1.0, 1.5430806348152437])

    def test_large_curvature_endpoint(self):
        prof = coupling_profile(ModelParams(n=37, l_max=5))
        assert prof.eta[0] == pytest.approx(74.20994852478785, abs=1e-12)

    @pytest.mark.parametrize("n,l_max", [(5, 2.0), (8, 3.5), (11, 0.7)])
    def test_invariants(self, n, l_max):
        prof = coupling_profile(ModelParams(n=n, l_max=l_max))
        assert np.all(prof.eta >= 1.0)
        assert np.allclose(prof.eta, prof.eta[::-1])
        if n % 2 == 1:
            assert prof.eta[(n - 1) // 2] == 1.0

    def test_monotone_curvature(self):
        edges = [
            coupling_profile(ModelParams(n=7, l_max=l)).eta[0] for l in (0.5, 1.0, 2.0)
        ]
        assert edges[0] < edges[1] < edges[2]


class TestBuildTerms:
    def test_flat_two_site(self):
        terms = build_terms(ModelParams(n=2, j=1, h=1, m=0))
        as_dict = {(sites, labels): c for sites, labels, c in terms.terms}
        assert as_dict[((0, 1), ("Z", "Z"))] == pytest.approx(-1.0)
        assert as_dict[((0,), ("X",))] == pytest.approx(1.0)
        assert as_dict[((1,), ("X",))] == pytest.approx(1.0)

    def test_longitudinal_profile(self):
        terms = build_terms(ModelParams(n=3, j=1, h=0, m=1, l_max=1))
        z_coeffs = terms.field_coefficients("Z")
        assert z_coeffs == pytest.approx([np.cosh(1), 1.0, np.cosh(1)])

    @pytest.mark.parametrize("n", [2, 5, 9])
    def test_term_counts(self, n):
        terms = build_terms(ModelParams(n=n))
        kinds = {"zz": 0, "x": 0, "z": 0}
        for sites, labels, _ in terms.terms:
            if labels == ("Z", "Z"):
                kinds["zz"] += 1
            elif labels == ("X",):
                kinds["x"] += 1
            else:
                kinds["z"] += 1
        assert (kinds["zz"], kinds["x"], kinds["z"]) == (n - 1, n, n)

    def test_bond_coefficients(self):
        params = ModelParams(n=4, j=2.0, h=1, m=0.05, l_max=1.5)
        eta = coupling_profile(params).eta
        zz = build_terms(params).zz_coefficients()
        assert zz == pytest.approx([-2.0 * (eta[i] + eta[i + 1]) / 2 for i in range(3)])


class TestDenseHamiltonian:
    def test_two_site_flat_matrix(self):
        ham = build_hamiltonian(ModelParams(n=2, j=1, h=1, m=0))
        assert np.allclose(np.diag(ham), [-1.0, 1.0, 1.0, -1.0])
        reference = -np.kron(SZ, SZ) + np.kron(SX, np.eye(2)) + np.kron(np.eye(2), SX)
        assert np.allclose(np.linalg.eigvalsh(ham), np.linalg.eigvalsh(reference))
        assert np.allclose(ham, reference)

    @pytest.mark.parametrize("l_max", [0.0, 1.0, 4.0])
    def test_hermitian(self, l_max):
        ham = build_hamiltonian(ModelParams(n=5, l_max=l_max))
        assert np.abs(ham - ham.T).max() <= 1e-12 * np.abs(ham).max()

    def test_flat_limit_matches_reference(self):
        ham = build_hamiltonian(ModelParams(n=6, j=1.3, h=0.9, m=0.2, l_max=0))
        ref = flat_mfi_reference(6, 1.3, 0.9, 0.2)
        assert np.array_equal(ham, ham.T)
        assert np.abs(ham - ref).max() < 1e-12

    @pytest.mark.parametrize("n", [4, 6, 8])
    def test_reflection_symmetry(self, n):
        ham = build_hamiltonian(ModelParams(n=n, j=1, h=1, m=0.05, l_max=2.5))
        rev = reversal_operator(n)
        assert np.abs(ham @ rev - rev @ ham).max() <= 1e-10

    def test_capacity_error(self):
        terms = build_terms(ModelParams(n=6))
        with pytest.raises(CapacityError, match="tensor-network"):
            build_dense_hamiltonian(terms, 6, dense_cap=5)

    def test_generic_label_fallback(self):
        from hyperising.model import TermList

        terms = TermList(n=2, terms=(((0, 1), ("X", "Y"), 0.7),))
        ham = build_dense_hamiltonian(terms, 2)
        assert np.allclose(ham, 0.7 * np.kron(SX, SY))


class TestSiteOperator:
    @pytest.mark.parametrize("label,single", [("X", SX), ("Y", SY), ("Z", SZ)])
    def test_against_kron(self, label, single):
        got = site_operator(3, 1, label)
        want = kron_all([np.eye(2), single, np.eye(2)])
        assert np.abs(got - want).max() < 1e-15

    def test_bad_site(self):
        with pytest.raises(ValueError):
            site_operator(3, 3, "Z")
