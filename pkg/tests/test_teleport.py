"""Dual-homodyne teleportation maps and the fidelity experiment."""

import math

import numpy as np
import pytest

import lophase.ensembles as en
import lophase.fock as fk
import lophase.teleport as tp


def brute_force_projection(eta, gamma, phi, N, m_max):
    """Columns of the projection map by explicit three-mode construction:
    |m> with a shared pair at phase 2 phi on modes (1, 2), 50:50 mix of
    (input, mode 1), quadrature projections at phi and phi + pi/2."""
    x1 = math.sqrt(2.0) * gamma.real
    x2 = math.sqrt(2.0) * gamma.imag
    tmss = fk.two_mode_squeezed(eta, 2 * phi, N, tail_cap=1.0)
    b1 = fk.quadrature_eigenvector(x1, phi, N).amplitudes.conj()
    b2 = fk.quadrature_eigenvector(x2, phi + math.pi / 2, N).amplitudes.conj()
    cols = np.empty((N, m_max + 1), dtype=complex)
    for m in range(m_max + 1):
        base = fk.tensor(fk.fock_basis_state(m, N), tmss)
        mixed = fk.beamsplitter_5050(base, 0, 1)
        cols[:, m] = np.einsum("a,b,abc->c", b1, b2, mixed.amplitudes.reshape(N, N, N))
    return cols


class TestDualOutcome:
    def test_gamma_recomputable_exactly(self):
        o = tp.DualOutcome(1.25, -0.5)
        assert o.gamma == (1.25 - 0.5j) / math.sqrt(2.0)

    def test_from_gamma_roundtrip(self):
        g = 0.7 - 1.3j
        o = tp.DualOutcome.from_gamma(g)
        assert o.gamma == pytest.approx(g, abs=1e-15)


class TestProjectionMap:
    def test_all_exponentials_collapse_at_origin(self):
        M = tp.dual_homodyne_project(0.0, 0.0, 0.0, 0.0, 8).matrix
        want = np.zeros((8, 8), dtype=complex)
        want[0, 0] = math.sqrt(1.0 / (2 * math.pi))
        np.testing.assert_array_equal(M, want)

    def test_reference_point_matches_brute_force(self):
        eta, gamma, phi, N = 0.6, 1.0 + 0.5j, 0.3, 25
        bf = brute_force_projection(eta, gamma, phi, N, 12)
        cf = tp.dual_homodyne_project(eta, 2 * phi, gamma, phi, N).matrix
        np.testing.assert_allclose(cf[:13, :13], bf[:13, :13], atol=1e-8)

    def test_twenty_random_draws_match_brute_force(self):
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(20):
            eta = rng.uniform(0.0, 0.7)
            gamma = complex(rng.normal(), rng.normal()) * 0.8
            phi = rng.uniform(0, 2 * math.pi)
            bf = brute_force_projection(eta, gamma, phi, 25, 12)
            cf = tp.dual_homodyne_project(eta, 2 * phi, gamma, phi, 25).matrix
            worst = max(worst, np.max(np.abs(bf[:13, :13] - cf[:13, :13])))
        assert worst <= 1e-8

    def test_phase_enters_only_through_rotated_outcome(self):
        eta, gamma, phi = 0.55, 0.7 - 0.3j, 1.234
        a = tp.dual_homodyne_project(eta, 2 * phi, gamma, phi, 20).matrix
        b = tp.dual_homodyne_project(eta, 0.0, gamma * np.exp(1j * phi), 0.0, 20).matrix
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_pair_phase_lock_enforced(self):
        with pytest.raises(ValueError):
            tp.dual_homodyne_project(0.5, 0.4, 1.0, 0.3, 10)
        # equality mod 2 pi is accepted
        tp.dual_homodyne_project(0.5, 0.6 + 4 * math.pi, 1.0, 0.3, 10)

    def test_eta_domain(self):
        for bad in (-0.1, 1.0, 1.5):
            with pytest.raises(ValueError):
                tp.dual_homodyne_project(bad, 0.0, 0.0, 0.0, 8)


class TestTransferMap:
    def test_correction_after_projection_gives_transfer(self):
        rng = np.random.default_rng(21)
        worst = 0.0
        for _ in range(20):
            eta = rng.uniform(0.05, 0.7)
            gamma = complex(rng.normal(), rng.normal()) * 0.6
            phi = rng.uniform(0, 2 * math.pi)
            M = tp.dual_homodyne_project(eta, 2 * phi, gamma, phi, 40).matrix
            T = tp.transfer_operator(eta, gamma, phi, 40).matrix
            D = tp.bob_correction(gamma, eta, phi, 40)
            worst = max(worst, np.max(np.abs((D @ M)[:25, :25] - T[:25, :25])))
        assert worst <= 1e-9

    def test_phase_covariance_exact(self):
        eta, gamma, phi = 0.55, 0.7 - 0.3j, 1.234
        a = tp.transfer_operator(eta, gamma, phi, 20).matrix
        b = tp.transfer_operator(eta, gamma * np.exp(1j * phi), 0.0, 20).matrix
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_bounded_for_eta_below_one(self):
        # the norm is largest at gamma = 0 where T = pre * K; never above
        # the two-quadrature projection bound 1/sqrt(2 pi)
        cap = 1.0 / math.sqrt(2 * math.pi)
        for eta in (0.0, 0.3, 0.6, 0.9, 0.99):
            for g in (0.0, 0.5 + 0.2j, 1.5 - 1.0j, 3.0):
                s = np.linalg.norm(tp.transfer_operator(eta, g, 0.7, 40).matrix, 2)
                assert s <= cap * (1 + 1e-12)

    def test_outcome_completeness_on_grid(self):
        # sum over the (x1_bar, x2_bar) grid of Tr[T rho T+] dx^2 = 1
        N, eta = 25, 0.6
        rho = fk.coherent_state(0.7 + 0.2j, N)
        phis = en.uniform_phase_grid(48)
        w = np.full(48, 1.0 / 48)
        xs = np.arange(-9.0, 9.0 + 1e-9, 0.06)
        x1, x2 = np.meshgrid(xs, xs, indexing="ij")
        gam = ((x1 + 1j * x2) / math.sqrt(2.0)).ravel()
        dens = tp.outcome_density(eta, rho, phis, w, gam)
        assert abs(float(dens.sum()) * 0.06**2 - 1.0) <= 1e-4

    def test_phase_dependence_dies_toward_unit_efficiency(self):
        # after factoring the scalar prefactor, the max relative deviation of
        # the n <= 5 block over a phi sweep shrinks monotonically in eta
        gamma, N = 0.6 + 0.4j, 80
        devs = []
        for eta in (0.9, 0.99, 0.999):
            pre = math.exp(-abs(gamma) ** 2 * (1 - eta**2) / 2.0) * math.sqrt(
                (1 - eta**2) / (2 * math.pi)
            )
            t0 = tp.transfer_operator(eta, gamma, 0.0, N).matrix[:6, :6] / pre
            dev = 0.0
            for phi in np.linspace(0.0, 2 * math.pi, 17)[:-1]:
                t_phi = tp.transfer_operator(eta, gamma, phi, N).matrix[:6, :6] / pre
                dev = max(dev, np.max(np.abs(t_phi - t0)) / np.max(np.abs(t0)))
            devs.append(dev)
        assert devs[0] > devs[1] > devs[2]
        assert devs[2] < 0.01


class TestBobCorrection:
    def test_identity_cases(self):
        np.testing.assert_allclose(tp.bob_correction(0.0, 0.7, 0.4, 12), np.eye(12), atol=1e-14)
        np.testing.assert_allclose(tp.bob_correction(1.3, 0.0, 0.4, 12), np.eye(12), atol=1e-14)

    def test_unitary(self):
        D = tp.bob_correction(1.1 - 0.6j, 0.8, 0.3, 40)
        np.testing.assert_allclose(D.conj().T @ D, np.eye(40), atol=1e-12)

    def test_displacement_argument_covariance(self):
        a = tp.bob_correction(0.9 - 0.2j, 0.7, 1.1, 30)
        b = tp.bob_correction((0.9 - 0.2j) * np.exp(1.1j), 0.7, 0.0, 30)
        np.testing.assert_allclose(a, b, atol=1e-13)


class TestOutcomeDensity:
    def test_vacuum_closed_form(self):
        # vacuum input: P(gamma) = (1-eta^2)/(2 pi) exp(-(1-eta^2)|gamma|^2)
        eta = 0.5
        phis = en.uniform_phase_grid(16)
        w = np.full(16, 1.0 / 16)
        gams = np.array([0.0, 0.4 + 0.3j, -1.1j, 2.0])
        got = tp.outcome_density(eta, fk.vacuum_state(1, 20), phis, w, gams)
        want = (1 - eta**2) / (2 * math.pi) * np.exp(-(1 - eta**2) * np.abs(gams) ** 2)
        np.testing.assert_allclose(got, want, rtol=1e-10)

    def test_coherent_closed_form(self):
        eta, alpha = 0.6, 0.9 - 0.4j
        phis = en.uniform_phase_grid(24)
        w = np.full(24, 1.0 / 24)
        gams = np.array([0.2, 1.0 + 0.5j, -0.7 + 1.2j])
        got = tp.outcome_density(eta, fk.coherent_state(alpha, 35), phis, w, gams)
        t = np.exp(-(1 - eta**2) * np.abs(gams[:, None] * np.exp(1j * phis)[None, :] - alpha) ** 2)
        want = (1 - eta**2) / (2 * math.pi) * t.mean(axis=1)
        np.testing.assert_allclose(got, want, rtol=1e-9)

    def test_mixed_input_matches_direct_matrices(self):
        N = 25
        v1 = fk.coherent_state(0.8, N).amplitudes
        v2 = fk.fock_basis_state(1, N).amplitudes
        rho = 0.7 * np.outer(v1, v1.conj()) + 0.3 * np.outer(v2, v2.conj())
        dm = fk.DensityMatrix(1, N, rho)
        phis = en.uniform_phase_grid(16)
        w = np.full(16, 1.0 / 16)
        gams = np.array([0.3 + 0.1j, -1.2 + 0.7j, 2.0])
        got = tp.outcome_density(0.5, dm, phis, w, gams)
        want = []
        for g in gams:
            acc = 0.0
            for ph, wk in zip(phis, w):
                T = tp.transfer_operator(0.5, complex(g), ph, N).matrix
                acc += wk * float(np.trace(T @ rho @ T.conj().T).real)
            want.append(acc)
        np.testing.assert_allclose(got, np.array(want), rtol=1e-12)


class TestTeleportOnce:
    def test_zero_efficiency_sends_vacuum(self):
        N = 20
        ens = en.cvqt_initial_ensemble(100.0, 0.0, fk.vacuum_state(1, N).density(), K=16, N=N, tail_cap=1.0)
        out = tp.teleport_once(ens, tp.DualOutcome(0.7, -0.3))
        f = fk.state_fidelity(fk.vacuum_state(1, N), out.reduced_density(0))
        assert f == pytest.approx(1.0, abs=1e-10)
        assert out.meta["kind"] == "cvqt_output"
        assert out.num_modes == 1

    def test_single_outcome_fidelity_monotone_in_eta(self):
        rho_in = fk.coherent_state(1.0, 60).density()
        target = fk.coherent_state(1.0, 60)
        prev = 0.0
        for eta in (0.5, 0.8, 0.95, 0.99):
            ens = en.cvqt_initial_ensemble(100.0, eta, rho_in, K=12, N=60, tail_cap=1.0)
            out = tp.teleport_once(ens, tp.DualOutcome(1.1, 0.4))
            f = fk.state_fidelity(target, out.reduced_density(0))
            assert f > prev
            prev = f
        assert prev > 0.999

    def test_posterior_weights_and_density_match_closed_form(self):
        eta, alpha, K, N = 0.6, 1.0, 24, 30
        ens = en.cvqt_initial_ensemble(100.0, eta, fk.coherent_state(alpha, N).density(), K=K, N=N, tail_cap=1.0)
        outc = tp.DualOutcome(1.3, -0.8)
        out = tp.teleport_once(ens, outc)
        t = np.exp(-(1 - eta**2) * np.abs(outc.gamma * np.exp(1j * ens.phases) - alpha) ** 2)
        np.testing.assert_allclose(out.weights, t / t.sum(), atol=1e-12)
        dens = (1 - eta**2) / (2 * math.pi) * t.mean()
        assert out.meta["outcome_density"] == pytest.approx(dens, rel=1e-10)

    def test_aggregated_output_differs_from_phase_fixed(self):
        ens = en.cvqt_initial_ensemble(
            100.0, 0.6, fk.coherent_state(1.0, 30).density(), K=16, N=30, tail_cap=1.0
        )
        out = tp.teleport_once(ens, tp.DualOutcome(1.1, 0.4), shared_phase=False)
        agg = out.reduced_density(0)
        fixed = out.factor_of_mode(0).rhos[0]
        assert fk.trace_distance(agg, fixed) > 0.05

    def test_zero_probability_outcome_rejected(self):
        ens = en.cvqt_initial_ensemble(
            100.0, 0.6, fk.coherent_state(1.0, 20).density(), K=8, N=20, tail_cap=1.0
        )
        with pytest.raises(ValueError, match="zero probability"):
            tp.teleport_once(ens, tp.DualOutcome(60.0, 0.0))

    def test_requires_initial_ensemble_kind(self):
        ens = en.single_laser_ensemble(1.0, K=16, N=10, tail_cap=1e-3)
        with pytest.raises(ValueError, match="cvqt_initial"):
            tp.teleport_once(ens, tp.DualOutcome(0.0, 0.0))


class TestFidelityExperiment:
    def test_zero_efficiency_vacuum_exact(self):
        rep = tp.fidelity_experiment([0.0], fk.vacuum_state(1, 20), True, 200, seed=3)
        assert rep["rows"][0]["mean_fidelity"] == pytest.approx(1.0, abs=1e-10)

    def test_shared_phase_matches_oracle(self):
        rep = tp.fidelity_experiment([0.0, 0.2, 0.5, 0.8], fk.coherent_state(1.0, 45), True, 2000, seed=11)
        for row in rep["rows"]:
            oracle = tp.mean_fidelity_oracle(row["eta"], 1.0, shared_phase=True)
            tol = max(3.0 * row["sem"], 1e-9)
            assert abs(row["mean_fidelity"] - oracle) <= tol

    def test_unshared_matches_quadrature_oracle(self):
        rep = tp.fidelity_experiment([0.8], fk.coherent_state(1.0, 45), False, 4000, seed=12)
        row = rep["rows"][0]
        oracle = tp.mean_fidelity_oracle(0.8, 1.0, shared_phase=False)
        assert abs(row["mean_fidelity"] - oracle) <= max(3.0 * row["sem"], 1e-3)

    def test_unshared_strictly_below_shared(self):
        shared = tp.fidelity_experiment([0.8], fk.coherent_state(1.0, 45), True, 2000, seed=4)
        unshared = tp.fidelity_experiment([0.8], fk.coherent_state(1.0, 45), False, 2000, seed=4)
        s, u = shared["rows"][0], unshared["rows"][0]
        gap_sigma = math.hypot(s["sem"], u["sem"])
        assert s["mean_fidelity"] - u["mean_fidelity"] > 3.0 * max(gap_sigma, 1e-12)

    def test_deterministic_given_seed(self):
        a = tp.fidelity_experiment([0.5], fk.coherent_state(1.0, 40), True, 300, seed=9)
        b = tp.fidelity_experiment([0.5], fk.coherent_state(1.0, 40), True, 300, seed=9)
        assert a == b

    def test_mixed_input_rejected(self):
        rho = fk.DensityMatrix(1, 10, np.diag([0.5, 0.5] + [0.0] * 8).astype(complex))
        with pytest.raises(ValueError, match="pure"):
            tp.fidelity_experiment([0.5], rho, True, 10, seed=1)

    def test_unshared_non_coherent_rejected(self):
        with pytest.raises(ValueError, match="coherent"):
            tp.fidelity_experiment([0.5], fk.fock_basis_state(1, 20), False, 10, seed=1)

    def test_insufficient_truncation_rejected(self):
        with pytest.raises(ValueError, match="truncation"):
            tp.fidelity_experiment([0.99], fk.coherent_state(1.0, 30), True, 10, seed=1)
