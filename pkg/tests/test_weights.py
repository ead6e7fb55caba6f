import dataclasses

import numpy as np
import pytest

import bergbundle as bb
from bergbundle.weights import HessianBlocks


def fd_full_hessian(model, t, z, h=1e-4):
    """Independent full-Hessian oracle from plain second differences of phi."""
    from bergbundle.weights import _axis_indices, _fd_mixed, _real_coords

    m, n = model.m, model.n
    x = _real_coords(np.asarray(t).reshape(m), np.asarray(z).reshape(n))
    full = np.empty((m + n, m + n), dtype=np.complex128)
    axes = [_axis_indices(model, "t", j) for j in range(m)] + [
        _axis_indices(model, "z", lam) for lam in range(n)
    ]
    for i, ax_i in enumerate(axes):
        for j, ax_j in enumerate(axes):
            full[i, j] = _fd_mixed(model, x, ax_i, ax_j, h)
    return full


class TestBuiltins:
    def test_fock_shift_partials_are_constant(self, fock0):
        t = np.array([0.3 - 0.7j])
        z = np.array([[1.1 + 0.2j], [-0.4j]])
        assert np.allclose(fock0.phi_tt(t, z), 1.0)
        assert np.allclose(fock0.phi_tz(t, z), -1.0)
        assert np.allclose(fock0.phi_zz(t, z), 1.0)

    def test_product_has_no_coupling(self, product):
        t = np.array([0.5 + 0.5j])
        z = np.array([[0.2 + 0.9j]])
        assert np.allclose(product.phi_tz(t, z), 0.0)
        assert np.allclose(product.phi_t(t, z)[0, 0], np.conj(t[0]))

    def test_coupled_partials(self, coupled):
        t = np.array([0.4 + 0.1j])
        z = np.array([[0.8 - 0.3j]])
        assert coupled.phi_tt(t, z)[0, 0, 0] == pytest.approx(abs(z[0, 0]) ** 2)
        assert coupled.phi_tz(t, z)[0, 0, 0] == pytest.approx(np.conj(t[0]) * z[0, 0])
        assert coupled.phi_zz(t, z)[0, 0, 0] == pytest.approx(1 + abs(t[0]) ** 2)

    def test_unknown_name_and_bad_params(self):
        with pytest.raises(ValueError, match="unknown weight"):
            bb.builtin("gauss")
        with pytest.raises(ValueError, match="nonnegative"):
            bb.builtin("fock_shift", [-0.5])
        with pytest.raises(ValueError, match="parameter"):
            bb.builtin("product", [1.0])

    def test_declared_margins(self, fock0, fock025, product, coupled):
        assert fock0.margin == 0.0
        assert fock025.margin == 0.25
        assert product.margin == 1.0
        assert coupled.margin == 0.0


class TestValidateDerivatives:
    def test_fock_shift_passes_tightly(self):
        w = bb.builtin("fock_shift", [0.1])
        report = bb.validate_derivatives(w, bb.default_probes(w, 50, seed=3))
        assert report.passed
        assert report.max_deviation < 1e-6

    def test_quadratic_weight_is_difference_exact(self, product):
        # quadratic weight: differences are exact up to roundoff, which for
        # second differences at step 1e-4 sits near eps*|phi|/h^2 ~ 1e-7
        report = bb.validate_derivatives(product, bb.default_probes(product, 20, seed=4))
        assert report.deviations["phi_t"] < 1e-9
        assert report.max_deviation < 1e-6

    def test_corrupted_model_is_named(self, fock0):
        broken = dataclasses.replace(
            fock0, phi_t=lambda t, z, f=fock0.phi_t: 1.01 * f(t, z)
        )
        report = bb.validate_derivatives(broken, bb.default_probes(broken, 10, seed=5))
        assert not report.passed
        assert "phi_t" in report.failures
        assert "phi_tt" not in report.failures

    def test_m2_builtins_pass(self):
        for name in ("product2", "rank_one"):
            w = bb.builtin(name)
            report = bb.validate_derivatives(w, bb.default_probes(w, 20, seed=6))
            assert report.passed, name

    def test_custom_two_fiber_model(self):
        # phi = |z1|^2 + 2|z2|^2 + |t|^2, n = 2
        def phi(t, z):
            return np.abs(z[:, 0]) ** 2 + 2 * np.abs(z[:, 1]) ** 2 + abs(t[0]) ** 2

        w = bb.WeightModel(
            name="two-fiber", m=1, n=2, margin=1.0,
            phi=phi,
            phi_t=lambda t, z: np.full((z.shape[0], 1), np.conj(t[0]), dtype=complex),
            phi_tt=lambda t, z: np.ones((z.shape[0], 1, 1), dtype=complex),
            phi_tz=lambda t, z: np.zeros((z.shape[0], 1, 2), dtype=complex),
            phi_zz=lambda t, z: np.tile(np.diag([1.0, 2.0]).astype(complex), (z.shape[0], 1, 1)),
        )
        report = bb.validate_derivatives(w, bb.default_probes(w, 15, seed=8))
        assert report.passed
        D = bb.schur_D(w, [0.3 + 0.2j], [0.1, 0.4j])
        assert D[0, 0] == pytest.approx(1.0, abs=1e-12)


class TestSchur:
    def test_fock_flat_is_zero(self, fock0):
        D = bb.schur_D(fock0, [0.9 - 0.2j], [1.3 + 0.4j])
        assert abs(D[0, 0]) < 1e-14

    def test_margin_shifts_schur(self):
        for eps in (0.1, 0.25):
            w = bb.builtin("fock_shift", [eps])
            D = bb.schur_D(w, [0.5], [0.7 - 0.2j])
            assert D[0, 0] == pytest.approx(eps, abs=1e-13)

    def test_coupled_closed_form(self, coupled):
        t = np.array([0.5 + 0.2j])
        z = np.array([0.7 - 0.3j])
        D = bb.schur_D(coupled, t, z)
        assert D[0, 0].real == pytest.approx(abs(z[0]) ** 2 / (1 + abs(t[0]) ** 2), abs=1e-14)

    def test_coupled_matches_fd_block_elimination(self, coupled):
        # oracle: eliminate the fiber block of the finite-difference Hessian
        t, z = np.array([0.4 - 0.6j]), np.array([0.9 + 0.5j])
        full = fd_full_hessian(coupled, t, z)
        T, B, Z = full[:1, :1], full[:1, 1:], full[1:, 1:]
        oracle = T - B @ np.linalg.solve(Z, B.conj().T)
        D = bb.schur_D(coupled, t, z)
        assert abs(D[0, 0] - oracle[0, 0]) < 1e-5

    def test_degenerate_fiber_block(self, coupled):
        flat = dataclasses.replace(
            coupled, phi_zz=lambda t, z: np.zeros((z.shape[0], 1, 1), dtype=complex)
        )
        with pytest.raises(bb.DegenerateHessianError, match="degenerate fiber Hessian"):
            bb.schur_D(flat, [0.1], [0.5])

    def test_conformal_additivity(self, coupled):
        t, z = np.array([0.3 + 0.3j]), np.array([0.6])
        base = bb.schur_D(coupled, t, z)
        shifted = bb.schur_D(bb.add_conformal(coupled, 0.7), t, z)
        assert abs(shifted[0, 0] - base[0, 0] - 0.7) < 1e-10


class TestCheckPsh:
    def test_fock_margin_probes(self):
        w = bb.builtin("fock_shift", [0.1])
        report = bb.check_psh(w, bb.default_probes(w, 100, seed=9))
        assert report.passed
        assert np.allclose(report.schur_min, 0.1, atol=1e-12)

    def test_coupled_positive_off_axis(self, coupled):
        probes = [(np.array([0.2 + 0.1j]), np.array([z])) for z in (0.5, 1.0j, -0.7 + 0.2j)]
        report = bb.check_psh(coupled, probes)
        assert report.passed
        assert np.all(report.schur_min[~report.degenerate] > 0)

    def test_coupled_degenerate_at_origin_is_flagged(self, coupled):
        report = bb.check_psh(coupled, [(np.array([0.5]), np.array([0.0]))])
        # z = 0 kills the |z|^2 factor: full Hessian singular but not negative
        assert report.passed
        assert report.full_min[0] == pytest.approx(0.0, abs=1e-12)
        assert report.schur_min[0] == pytest.approx(0.0, abs=1e-12)


class TestInvariants:
    @pytest.mark.parametrize("name,params", [
        ("fock_shift", [0.2]), ("product", []), ("coupled", []),
        ("product2", []), ("rank_one", []),
    ])
    def test_schur_identity_and_congruence(self, name, params):
        w = bb.builtin(name, params)
        for t, z in bb.default_probes(w, 25, seed=10):
            T, B, Z = w.point_blocks(t, z)
            blocks = HessianBlocks(T=T, B=B, Z=Z)
            full = blocks.stacked()
            full_min = bb.min_eigenvalue(full)
            if bb.min_eigenvalue(Z) <= 1e-12:
                continue
            D = bb.schur_D(w, t, z)
            scale = max(1.0, np.max(np.abs(full)))
            if full_min >= -1e-12 * scale:
                assert bb.min_eigenvalue(D) >= -1e-10 * scale
            det_full = np.linalg.det(full)
            det_split = np.linalg.det(Z) * np.linalg.det(D)
            assert abs(det_full - det_split) <= 1e-8 * max(abs(det_full), 1.0)

    def test_conformal_additivity_numeric(self):
        for name in ("product", "coupled", "rank_one"):
            w = bb.builtin(name)
            t, z = bb.default_probes(w, 1, seed=11)[0]
            base = bb.schur_D(w, t, z)
            shifted = bb.schur_D(bb.add_conformal(w, 0.3), t, z)
            assert np.max(np.abs(shifted - base - 0.3 * np.eye(w.m))) < 1e-10
