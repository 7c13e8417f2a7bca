"""Plane-wave fibers and the cell-phase Bloch transform.

The transform is pinned by two independent facts frozen here: it is exactly
unitary on sample arrays (adjoint = inverse, checked on seeded noise), and a
pure plane wave with unwrapped integer frequency q = n + N g lands entirely
in momentum slot n with per-cell profile equal to mode g. Together these
determine the convention uniquely.
"""

import numpy as np
import pytest

from blochtopo import (
    FourierPotential,
    Lattice,
    SampledFunction,
    bf_forward,
    bf_inverse,
    classical_intertwiner_check,
    fiber_symmetry_ops,
    fibered_hamiltonian,
    load_potential,
    make_plane_wave_basis,
    potential_matrix,
    save_potential,
)

TWO_PI = 2 * np.pi


def line():
    return Lattice.from_basis(np.eye(1))


def noise(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


class TestPlaneWaveBasis:
    def test_modes_within_cutoff_and_negation_closed(self):
        lat = Lattice.from_basis(np.array([[1.0, 0.5], [0.0, 1.2]]))
        basis = make_plane_wave_basis(lat, 3.1 * TWO_PI)
        norms = np.linalg.norm(basis.g_cart, axis=1)
        assert np.all(norms <= basis.cutoff * (1 + 1e-10))
        table = basis.index_table()
        for g in basis.g_integers:
            assert tuple(-g) in table
        perm = basis.negation_permutation
        assert np.array_equal(perm[perm], np.arange(basis.n_modes))

    def test_sorted_by_magnitude(self):
        basis = make_plane_wave_basis(line(), 4.5 * TWO_PI)
        norms = np.linalg.norm(basis.g_cart, axis=1)
        assert np.all(np.diff(norms) >= -1e-12)
        assert tuple(basis.g_integers[0]) == (0,)

    def test_bad_cutoff_rejected(self):
        with pytest.raises(ValueError):
            make_plane_wave_basis(line(), -1.0)


class TestFourierPotential:
    def test_reality_enforced(self):
        with pytest.raises(ValueError):
            FourierPotential({(1,): 0.5 + 0.1j, (-1,): 0.5 + 0.1j})

    def test_value_lookup_and_default(self):
        pot = FourierPotential({(1,): 0.5 + 0.1j, (-1,): 0.5 - 0.1j})
        assert pot.value((1,)) == 0.5 + 0.1j
        assert pot.value((7,)) == 0.0

    def test_evenness_detection(self):
        even = FourierPotential({(1,): 0.3, (-1,): 0.3})
        skew = FourierPotential({(1,): 0.3 + 0.2j, (-1,): 0.3 - 0.2j})
        assert even.is_even()
        assert not skew.is_even()

    def test_round_trip_through_file(self, tmp_path):
        lat = line()
        pot = FourierPotential({(1,): 0.5 + 0.1j, (-1,): 0.5 - 0.1j, (0,): 0.7})
        path = tmp_path / "pot.json"
        save_potential(lat, pot, path)
        lat2, pot2 = load_potential(path)
        assert np.allclose(lat2.basis, lat.basis)
        assert pot2.coefficients == pot.coefficients


class TestFiberedHamiltonian:
    def test_hermitian_and_kinetic_diagonal(self):
        basis = make_plane_wave_basis(line(), 3.5 * TWO_PI)
        pot = FourierPotential({(1,): 0.4, (-1,): 0.4})
        h = fibered_hamiltonian(pot, basis, [0.21])
        assert np.allclose(h, h.conj().T, atol=1e-13)
        kin = np.diag(h).real - pot.value((0,)).real
        expect = 0.5 * np.linalg.norm(basis.g_cart + basis.lattice.kcart([0.21]), axis=1) ** 2
        assert np.allclose(kin, expect, atol=1e-12)

    def test_free_spectrum_exact(self):
        basis = make_plane_wave_basis(line(), 3.5 * TWO_PI)
        empty = FourierPotential({})
        for k in (0.0, 0.3, -0.5):
            e = np.linalg.eigvalsh(fibered_hamiltonian(empty, basis, [k]))
            expect = np.sort(0.5 * (TWO_PI * (k + basis.g_integers[:, 0])) ** 2)
            assert np.allclose(e, expect, atol=1e-10)

    def test_agrees_with_classical_assembly(self):
        rng = np.random.default_rng(31)
        basis = make_plane_wave_basis(line(), 4.5 * TWO_PI)
        pot = FourierPotential({(1,): 0.8 + 0.3j, (-1,): 0.8 - 0.3j, (2,): 0.25, (-2,): 0.25})
        for _ in range(5):
            k = rng.uniform(-0.5, 0.5)
            assert classical_intertwiner_check(pot, basis, [k]) < 1e-10

    def test_potential_matrix_is_convolution(self):
        basis = make_plane_wave_basis(line(), 2.5 * TWO_PI)
        pot = FourierPotential({(1,): 0.4 - 0.2j, (-1,): 0.4 + 0.2j})
        v = potential_matrix(pot, basis)
        table = basis.index_table()
        i, j = table[(1,)], table[(0,)]
        assert v[i, j] == pot.value((1,))
        assert v[j, i] == pot.value((-1,))


class TestFiberSymmetries:
    def test_time_reversal_relates_opposite_momenta(self):
        basis = make_plane_wave_basis(line(), 3.5 * TWO_PI)
        pot = FourierPotential({(1,): 0.5 + 0.1j, (-1,): 0.5 - 0.1j})
        ops = fiber_symmetry_ops(basis)
        for k in (0.13, 0.4):
            h_plus = fibered_hamiltonian(pot, basis, [k])
            h_minus = fibered_hamiltonian(pot, basis, [-k])
            assert np.linalg.norm(ops.theta.conjugate(h_plus) - h_minus) < 1e-12

    def test_reflection_needs_even_potential(self):
        basis = make_plane_wave_basis(line(), 3.5 * TWO_PI)
        ops = fiber_symmetry_ops(basis)
        even = FourierPotential({(1,): 0.5, (-1,): 0.5})
        skew = FourierPotential({(1,): 0.5 + 0.2j, (-1,): 0.5 - 0.2j})
        for pot, fits in ((even, True), (skew, False)):
            h_plus = fibered_hamiltonian(pot, basis, [0.2])
            h_minus = fibered_hamiltonian(pot, basis, [-0.2])
            res = np.linalg.norm(ops.reflection.conjugate(h_plus) - h_minus)
            assert (res < 1e-12) == fits

    def test_tau_theta_compatibility(self):
        basis = make_plane_wave_basis(line(), 3.5 * TWO_PI)
        ops = fiber_symmetry_ops(basis)
        t1 = ops.tau.matrix((1,))
        th = ops.theta.unitary
        kept = ops.tau.retained((1,)) & ops.tau.retained((-1,))
        lhs = th @ np.conj(t1)
        rhs = ops.tau.matrix((-1,)) @ th
        assert np.linalg.norm((lhs - rhs)[:, kept]) < 1e-14


class TestTransformUnitarity:
    def test_round_trip_and_parseval_1d(self):
        rng = np.random.default_rng(32)
        w = SampledFunction("supercell", (16,), (32,), noise(rng, (16, 32)))
        phi = bf_forward(w)
        assert phi.kind == "bloch"
        assert abs(phi.norm() - w.norm()) < 1e-12 * w.norm()
        back = bf_inverse(phi)
        assert np.max(np.abs(back.values - w.values)) < 1e-12

    def test_round_trip_and_parseval_2d(self):
        rng = np.random.default_rng(33)
        w = SampledFunction("supercell", (8, 8), (16, 16), noise(rng, (8, 8, 16, 16)))
        phi = bf_forward(w)
        assert abs(phi.norm() - w.norm()) < 1e-12 * w.norm()
        back = bf_inverse(phi)
        assert np.max(np.abs(back.values - w.values)) < 1e-12

    def test_inverse_is_adjoint(self):
        rng = np.random.default_rng(34)
        w = SampledFunction("supercell", (4,), (8,), noise(rng, (4, 8)))
        phi = SampledFunction("bloch", (4,), (8,), noise(rng, (4, 8)))
        lhs = np.vdot(bf_forward(w).values, phi.values)
        rhs = np.vdot(w.values, bf_inverse(phi).values)
        assert abs(lhs - rhs) < 1e-12 * abs(lhs)

    def test_plane_wave_lands_in_one_momentum_slot(self):
        # oracle: x_s = c + j/m in lattice units; exp(2 pi i q x / N) with
        # q = n + N g must transform to sqrt(N) delta(slot n) x mode g
        n_cells, m_per = 8, 16
        cs = np.arange(n_cells)
        js = np.arange(m_per)
        x = cs[:, None] + js[None, :] / m_per
        for q in (1, -3, 11, -14):
            w = SampledFunction(
                "supercell", (n_cells,), (m_per,), np.exp(2j * np.pi * q * x / n_cells)
            )
            phi = bf_forward(w)
            slot = (q + n_cells // 2) % n_cells - n_cells // 2
            g = (q - slot) // n_cells
            idx = slot + n_cells // 2
            expect = np.sqrt(n_cells) * np.exp(2j * np.pi * g * js / m_per)
            assert np.max(np.abs(phi.values[idx] - expect)) < 1e-12
            others = np.delete(phi.values, idx, axis=0)
            assert np.max(np.abs(others)) < 1e-12

    def test_kind_mismatch_rejected(self):
        rng = np.random.default_rng(35)
        w = SampledFunction("supercell", (4,), (8,), noise(rng, (4, 8)))
        with pytest.raises(ValueError):
            bf_inverse(w)
        with pytest.raises(ValueError):
            bf_forward(bf_forward(w))

    def test_per_cell_power_of_two_enforced(self):
        with pytest.raises(ValueError):
            SampledFunction("supercell", (4,), (6,), np.zeros((4, 6)))
