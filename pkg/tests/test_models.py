"""Tight-binding model zoo.

Every builtin is audited against its own declared symmetries, and each
model's gap-closing locus is pinned by a closed form frozen here: the SSH
spectrum, the Haldane and Kane-Mele Dirac masses at the K point, and the
Wilson-Dirac mass inversions. These formulas were derived by hand from the
small Bloch matrices and act as oracles for the builders.
"""

import numpy as np
import pytest

from blochtopo import (
    BrillouinGrid,
    HermiticityError,
    UnknownModelError,
    bloch_hamiltonian,
    build_builtin,
    load_model,
    save_model,
    verify_model_symmetries,
)
from blochtopo.models import BUILTIN_DEFAULTS, bloch_hamiltonian_batch

SQ3 = np.sqrt(3.0)


def grid_for(model, n=8):
    return BrillouinGrid(model.lattice, (n,) * model.lattice.dim)


class TestBuiltinCatalog:
    def test_unknown_name_lists_choices(self):
        with pytest.raises(UnknownModelError) as err:
            build_builtin("shh")
        assert "ssh" in str(err.value)

    def test_unknown_parameter_named(self):
        with pytest.raises(UnknownModelError) as err:
            build_builtin("ssh", {"tprime": 0.4})
        assert "tprime" in str(err.value)

    def test_defaults_round_trip(self):
        for name, defaults in BUILTIN_DEFAULTS.items():
            model = build_builtin(name)
            assert model.params == pytest.approx(defaults)

    def test_every_builtin_passes_its_own_audit(self):
        for name in BUILTIN_DEFAULTS:
            model = build_builtin(name)
            audit = verify_model_symmetries(model, grid_for(model, 6))
            for key, verdict in audit.verdicts.items():
                assert verdict in (True, None), f"{name}: {key} fails its audit"
            for res in (audit.tr_residual, audit.sr_residual, audit.tau_residual):
                assert res is None or res < 1e-10


class TestBlochHamiltonian:
    def test_hermitian_at_random_points(self):
        rng = np.random.default_rng(21)
        for name in BUILTIN_DEFAULTS:
            model = build_builtin(name)
            for _ in range(10):
                k = rng.uniform(-0.5, 0.5, size=model.lattice.dim)
                h = bloch_hamiltonian(model, k)
                assert np.allclose(h, h.conj().T, atol=1e-13)

    def test_periodicity_in_reduced_coordinates(self):
        model = build_builtin("haldane")
        k = np.array([0.21, -0.37])
        h1 = bloch_hamiltonian(model, k)
        h2 = bloch_hamiltonian(model, k + np.array([1.0, -2.0]))
        assert np.allclose(h1, h2, atol=1e-12)

    def test_batch_matches_loop(self):
        model = build_builtin("kane_mele", {"lr": 0.05, "lv": 0.1})
        g = grid_for(model, 6)
        batch = bloch_hamiltonian_batch(model, g.reduced)
        for i, k in enumerate(g.reduced):
            assert np.allclose(batch[i], bloch_hamiltonian(model, k), atol=1e-13)

    def test_nonhermitian_hoppings_rejected(self):
        model = build_builtin("ssh")
        bad = dict(model.hoppings)
        bad[(0,)] = bad[(0,)] + np.array([[0, 0.1], [0, 0]])
        with pytest.raises(HermiticityError):
            type(model)(
                lattice=model.lattice,
                fiber_dim=2,
                n_occ=1,
                hoppings=bad,
            )


class TestSshSpectrum:
    def test_matches_closed_form(self):
        # two flat bands at +-|t + tp e^{-i 2 pi k}|
        rng = np.random.default_rng(22)
        for _ in range(20):
            t, tp = rng.uniform(0.2, 2.0, size=2)
            model = build_builtin("ssh", {"t": t, "tp": tp})
            for k in rng.uniform(-0.5, 0.5, size=5):
                e = np.linalg.eigvalsh(bloch_hamiltonian(model, [k]))
                mag = abs(t + tp * np.exp(-2j * np.pi * k))
                assert np.allclose(e, [-mag, mag], atol=1e-12)

    def test_gapless_exactly_at_equal_hoppings(self):
        e = np.linalg.eigvalsh(
            bloch_hamiltonian(build_builtin("ssh", {"t": 1.0, "tp": 1.0}), [-0.5])
        )
        assert abs(e[1] - e[0]) < 1e-14


class TestHaldaneMass:
    def test_k_point_gap(self):
        # Dirac mass at K is M - 3 sqrt(3) t2 sin(phi)
        K = np.array([1 / 3, -1 / 3])
        for phi in (np.pi / 2, -np.pi / 2, 0.7):
            for M in (0.0, 0.3, 1.2):
                model = build_builtin("haldane", {"t1": 1, "t2": 0.2, "phi": phi, "M": M})
                e = np.linalg.eigvalsh(bloch_hamiltonian(model, K))
                mass = M - 3 * SQ3 * 0.2 * np.sin(phi)
                assert abs((e[1] - e[0]) - 2 * abs(mass)) < 1e-10

    def test_time_reversal_only_at_special_phases(self):
        for phi, has_tr in ((0.0, True), (np.pi, True), (np.pi / 2, False), (1.1, False)):
            model = build_builtin("haldane", {"phi": phi, "M": 0.1})
            assert (model.time_reversal is not None) == has_tr
            if has_tr:
                assert model.time_reversal.sign == +1


class TestKaneMele:
    def test_k_point_gap_without_rashba(self):
        # middle levels at K sit at +-(3 sqrt(3) lso - lv)
        rng = np.random.default_rng(23)
        K = np.array([1 / 3, -1 / 3])
        for _ in range(10):
            lso = rng.uniform(0.02, 0.1)
            lv = rng.uniform(0.0, 0.6)
            model = build_builtin("kane_mele", {"t": 1, "lso": lso, "lr": 0, "lv": lv})
            e = np.linalg.eigvalsh(bloch_hamiltonian(model, K))
            assert abs((e[2] - e[1]) - 2 * abs(3 * SQ3 * lso - lv)) < 1e-10

    def test_rashba_shifts_the_transition_quadratically(self):
        # with the geometric-bond Rashba the K gap closes at
        # lv = D - 3 lr^2 / (4 D), D = 3 sqrt(3) lso
        from scipy.optimize import minimize_scalar

        K = np.array([1 / 3, -1 / 3])
        lso, lr = 0.06, 0.05
        d = 3 * SQ3 * lso

        def gap(lv):
            model = build_builtin("kane_mele", {"t": 1, "lso": lso, "lr": lr, "lv": lv})
            e = np.linalg.eigvalsh(bloch_hamiltonian(model, K))
            return e[2] - e[1]

        res = minimize_scalar(gap, bounds=(0.25, 0.35), method="bounded",
                              options={"xatol": 1e-10})
        assert abs(res.x - (d - 3 * lr**2 / (4 * d))) < 1e-6
        assert res.fun < 1e-7

    def test_fermionic_time_reversal_always_declared(self):
        for params in ({}, {"lr": 0.05}, {"lv": 0.4}, {"lr": 0.03, "lv": 0.2}):
            model = build_builtin("kane_mele", params)
            assert model.time_reversal is not None
            assert model.time_reversal.sign == -1

    def test_reflection_broken_by_rashba_and_staggering(self):
        assert build_builtin("kane_mele").space_reflection is not None
        assert build_builtin("kane_mele", {"lr": 0.05}).space_reflection is None
        assert build_builtin("kane_mele", {"lv": 0.1}).space_reflection is None

    def test_audit_with_rashba(self):
        model = build_builtin("kane_mele", {"lr": 0.05, "lv": 0.1})
        audit = verify_model_symmetries(model, grid_for(model, 6))
        assert audit.verdicts["time_reversal"] is True
        assert audit.verdicts["space_reflection"] is None
        assert audit.spectrum_parity < 1e-10


class TestBhz:
    def test_gap_closes_at_zero_mass(self):
        gamma = np.zeros(2)
        for M, gapped in ((-0.5, True), (0.5, True), (0.0, False)):
            model = build_builtin("bhz", {"M": M})
            e = np.linalg.eigvalsh(bloch_hamiltonian(model, gamma))
            assert ((e[2] - e[1]) > 0.1) == gapped

    def test_kramers_degenerate_spectrum(self):
        # fermionic TR with [theta, H(k)] compatible: bands pair at TRIMs
        model = build_builtin("bhz", {"M": -0.5})
        for trim in ([0.0, 0.0], [-0.5, 0.0], [0.0, -0.5], [-0.5, -0.5]):
            e = np.linalg.eigvalsh(bloch_hamiltonian(model, trim))
            assert abs(e[0] - e[1]) < 1e-12 and abs(e[2] - e[3]) < 1e-12


class TestWilsonDirac3d:
    def test_mass_inversion_points(self):
        # band touching at the eight TRIMs happens at m in {-3,-1,1,3}
        for m, gapped in ((-2.0, True), (-4.0, True), (-3.0, False), (-1.0, False),
                          (1.0, False), (3.0, False), (0.5, True)):
            model = build_builtin("wilson_dirac_3d", {"m": m})
            gaps = []
            for trim in np.ndindex(2, 2, 2):
                k = -0.5 * np.array(trim)
                e = np.linalg.eigvalsh(bloch_hamiltonian(model, k))
                gaps.append(e[2] - e[1])
            assert (min(gaps) > 0.1) == gapped

    def test_fermionic_and_reflection_symmetric(self):
        model = build_builtin("wilson_dirac_3d")
        audit = verify_model_symmetries(model, grid_for(model, 4))
        assert audit.verdicts["time_reversal"] is True
        assert audit.verdicts["space_reflection"] is True
        assert audit.tr_residual < 1e-12


class TestSerialization:
    def test_round_trip_every_builtin(self, tmp_path):
        for name in BUILTIN_DEFAULTS:
            model = build_builtin(name)
            path = tmp_path / f"{name}.json"
            save_model(model, path)
            back = load_model(path)
            assert back.fiber_dim == model.fiber_dim
            assert back.n_occ == model.n_occ
            assert np.allclose(back.lattice.basis, model.lattice.basis)
            assert set(back.hoppings) == set(model.hoppings)
            for r, mat in model.hoppings.items():
                assert np.allclose(back.hoppings[r], mat, atol=1e-15)
            k = np.full(model.lattice.dim, 0.137)
            assert np.allclose(
                bloch_hamiltonian(back, k), bloch_hamiltonian(model, k), atol=1e-14
            )

    def test_reloaded_model_keeps_symmetries(self, tmp_path):
        model = build_builtin("kane_mele", {"lr": 0.05, "lv": 0.1})
        path = tmp_path / "km.json"
        save_model(model, path)
        back = load_model(path)
        assert back.time_reversal is not None
        assert back.time_reversal.sign == -1
        assert np.allclose(back.time_reversal.unitary, model.time_reversal.unitary)
