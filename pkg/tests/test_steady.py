import numpy as np
import pytest
from scipy.linalg import expm

from feedbacktn.errors import AccuracyError, ConvergenceError
from feedbacktn.model import SimParams, make_two_level_node, single_node_network, validate_network
from feedbacktn.mpso import SiteTensor
from feedbacktn.propagator import ChainSpec
from feedbacktn.steady import (
    SpectralData,
    build_steady_window,
    itebd_propagator,
    relaxation_time,
    steady_correlator,
    steady_correlator_scan,
    steady_pipeline,
    steady_state,
    transfer_matrix,
    transfer_spectrum,
    transfer_spectrum_cell,
)
from feedbacktn.superop import lindblad_matrix, trace_covector, vec

from conftest import network_at


def test_itebd_undriven_identity():
    node = make_two_level_node(0.0, 0.0, 0.0, 0.0, 0.0)
    net, sim = network_at(node, tau=1.0, dt=0.1, chi_max=8)
    cell = itebd_propagator(ChainSpec(list(net.nodes), 2), sim, s_final=1.0)
    ident = np.eye(4, dtype=complex).reshape(1, 16, 1)
    assert np.max(np.abs(cell.site_tensor_a().data - ident)) <= 1e-12
    assert np.max(np.abs(cell.site_tensor_b().data - ident)) <= 1e-12


def test_itebd_decoupled_factorizes(decoupled_node):
    """gamma_R = 0: the unit tensor is exp(tau lindblad(H, [L])) at chi = 1."""
    net, sim = network_at(decoupled_node, tau=1.0, dt=0.001, chi_max=16,
                          svd_cutoff=1e-13)
    cell = itebd_propagator(ChainSpec(list(net.nodes), 2), sim, s_final=1.0)
    a = cell.site_tensor_a()
    assert a.data.shape == (1, 16, 1)
    gate = expm(lindblad_matrix(decoupled_node.hamiltonian,
                                [decoupled_node.jump_l]).data)
    # site tensor holds the map with (out, in) grouping
    got = a.data.reshape(4, 4)
    assert np.max(np.abs(got - gate)) <= 1e-6


def test_itebd_asymmetry_small(standard_node):
    net, sim = network_at(standard_node, tau=1.0, dt=0.001, chi_max=20,
                          svd_cutoff=1e-10)
    cell = itebd_propagator(ChainSpec(list(net.nodes), 2), sim, s_final=1.0)
    assert cell.asymmetry() <= 1e-3


def test_transfer_spectrum_identity_degenerate():
    ident = SiteTensor(np.eye(4, dtype=complex).reshape(1, 16, 1), 2)
    spec = transfer_spectrum(ident)
    assert spec.degenerate
    with pytest.raises(AccuracyError):
        steady_state(spec)


def test_transfer_matrix_convention():
    """M[(alpha,in),(beta,out)] = C[alpha,(out,in),beta]: decoupled check."""
    rng = np.random.default_rng(3)
    k = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    c = SiteTensor(k.reshape(1, 16, 1), 2)
    assert np.array_equal(transfer_matrix(c), k.T)


def test_steady_state_decoupled_bloch(decoupled_node):
    net, sim = network_at(decoupled_node, tau=1.0, dt=0.001, chi_max=16,
                          svd_cutoff=1e-13)
    cell, spec, rho_ss, t_ss = steady_pipeline(net, sim)
    assert rho_ss[1, 1].real == pytest.approx(1.0 / 3.0, abs=1e-4)
    assert np.trace(rho_ss).real == pytest.approx(1.0, abs=1e-14)
    assert spec.drift <= 1e-3
    # analytic slowest Lindblad mode for the optical Bloch equations at
    # Omega = gamma = 1/2: eigenvalues of the dense generator
    gen = lindblad_matrix(decoupled_node.hamiltonian,
                          [decoupled_node.jump_l]).data
    vals = np.linalg.eigvals(gen)
    gap = sorted(abs(vals.real))[1]
    t_ref = 2.0 * np.log(2.0) / gap
    assert t_ss == pytest.approx(t_ref, rel=0.02)


def test_relaxation_time_arithmetic():
    spec = SpectralData(
        eigenvalues=np.array([1.0, 0.5]),
        right_leading=np.zeros((1, 4)), left_leading=np.zeros((1, 4)),
        chi=1, d=2, drift=0.0, degenerate=False, period_sites=1,
    )
    assert relaxation_time(spec, tau=1.0) == pytest.approx(2.0)


def test_relaxation_time_divergence_flag():
    spec = SpectralData(
        eigenvalues=np.array([1.0, 1.0 - 1e-15]),
        right_leading=np.zeros((1, 4)), left_leading=np.zeros((1, 4)),
        chi=1, d=2, drift=0.0, degenerate=False, period_sites=1,
    )
    with pytest.raises(ConvergenceError):
        relaxation_time(spec, tau=1.0)


def test_unit_cell_spectrum_drift_small(standard_node):
    net, sim = network_at(standard_node, tau=2.0, dt=0.05, chi_max=32,
                          svd_cutoff=1e-10)
    cell = itebd_propagator(ChainSpec(list(net.nodes), 2), sim, s_final=2.0)
    spec = transfer_spectrum_cell(cell, sim)
    assert spec.drift <= 1e-3
    assert abs(spec.eigenvalues[0]) == pytest.approx(1.0, abs=1e-12)


def test_steady_checkpoints(standard_node):
    net, sim = network_at(standard_node, tau=1.0, dt=0.1, chi_max=16)
    cell, ckpts = itebd_propagator(
        ChainSpec(list(net.nodes), 2), sim, s_final=1.0,
        checkpoint_times=[0.0, 0.5, 1.0],
    )
    assert set(np.round(list(ckpts), 6)) == {0.0, 0.5, 1.0}
    ident = np.eye(4, dtype=complex).reshape(1, 16, 1)
    assert np.max(np.abs(ckpts[0.0].site_tensor_a().data - ident)) == 0.0


def test_steady_correlator_identity_normalization(standard_node):
    net, sim = network_at(standard_node, tau=1.0, dt=0.02, chi_max=24,
                          svd_cutoff=1e-10)
    _, ckpts = itebd_propagator(
        ChainSpec(list(net.nodes), 2), sim, s_final=1.0,
        checkpoint_times=[0.3, 0.7, 1.0],
    )
    window = build_steady_window(ckpts[0.7], ckpts[0.3], sim)
    assert steady_correlator(window, []) == pytest.approx(1.0)
    eye = np.kron(np.eye(2), np.eye(2))
    val = steady_correlator(window, [(2, 1, eye), (1, 2, eye)])
    assert val == pytest.approx(1.0, abs=1e-8)


def test_steady_correlator_coincident_reduction(standard_node):
    """t' = 0 with x = sigma+, y = sigma-: returns rho_ee of the steady state."""
    net, sim = network_at(standard_node, tau=1.0, dt=0.02, chi_max=24,
                          svd_cutoff=1e-10)
    cell, ckpts = itebd_propagator(
        ChainSpec(list(net.nodes), 2), sim, s_final=1.0,
        checkpoint_times=[0.0, 1.0],
    )
    spec = transfer_spectrum_cell(cell, sim)
    rho_ss = steady_state(spec)
    window = build_steady_window(ckpts[1.0], ckpts[0.0], sim)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    eye = np.eye(2)
    ins = [
        (1, 2, np.kron(sm, eye)),           # sigma- applied first
        (1, 2, np.kron(sm.conj().T, eye)),  # then sigma+
    ]
    val = steady_correlator(window, ins)
    assert val.real == pytest.approx(rho_ss[1, 1].real, abs=2e-3)
    assert abs(val.imag) <= 1e-6


def test_steady_correlator_decoupled_vs_dense_regression(decoupled_node):
    """gamma_R = 0: <sigma+(t) sigma-(t - t')> against dense regression, 1e-5."""
    net, sim = network_at(decoupled_node, tau=1.0, dt=0.00025, chi_max=12,
                          svd_cutoff=1e-13)
    gen = lindblad_matrix(decoupled_node.hamiltonian,
                          [decoupled_node.jump_l]).data
    vals, vecs = np.linalg.eig(gen)
    rho_ss = vecs[:, np.argmin(np.abs(vals))].reshape(2, 2)
    rho_ss /= np.trace(rho_ss)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)

    def dense_g(u):
        seed = sm @ rho_ss
        out = (expm(u * gen) @ vec(seed)).reshape(2, 2)
        return np.trace(sm.conj().T @ out)

    _, ckpts = itebd_propagator(
        ChainSpec(list(net.nodes), 2), sim, s_final=1.0,
        checkpoint_times=[0.25, 0.75, 1.0],
    )
    window = build_steady_window(ckpts[0.75], ckpts[0.25], sim)
    eye = np.eye(2)
    got = steady_correlator_scan(
        window,
        early=[(1, np.kron(sm, eye))],
        late=[(2, np.kron(sm.conj().T, eye))],
        n_windows=3,
    )
    for mbar in (1, 2, 3):
        u = (mbar - 1) * 1.0 + 0.25
        assert abs(got[mbar - 1] - dense_g(u)) <= 1e-5


def test_steady_cross_validation_short(standard_node, ground_state):
    """Reduced version of the steady cross-check at Gamma tau = 2."""
    from feedbacktn.contraction import reduced_state

    net, sim = network_at(standard_node, tau=2.0, dt=0.1, chi_max=40,
                          svd_cutoff=1e-12)
    cell, spec, rho_ss, t_ss = steady_pipeline(net, sim)
    t_target = np.ceil(6 * t_ss / net.tau) * net.tau
    rho_late = reduced_state(net, sim, float(t_target), ground_state)
    td = 0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho_late - rho_ss)))
    assert td <= 5e-4


@pytest.mark.acceptance
def test_relaxation_time_monotone_weak_driving():
    """At phi = 0, Gamma tau = 20, t_ss grows as the drive weakens (0.5 -> 0.1).

    Qualitative reproduction of the photon-trapping trend; exact values are
    not pinned, only the ordering over the three sampled drives.
    """
    times = []
    for omega in (0.1, 0.2, 0.5):
        node = make_two_level_node(omega, 0.0, 0.5, 0.5, 0.0)
        net, sim = network_at(node, tau=20.0, dt=0.1, chi_max=48,
                              svd_cutoff=1e-9)
        _, _, _, t_ss = steady_pipeline(net, sim)
        times.append(t_ss)
    assert times[0] > times[1] > times[2]
