import numpy as np
import pytest

from feedbacktn.errors import ResourceGuardError
from feedbacktn.model import SimParams
from feedbacktn.mpso import materialize, max_cut_entropy, trace_out_last
from feedbacktn.propagator import ChainSpec, dense_oracle, evolve_propagator
from feedbacktn.superop import regroup_sitewise, trace_covector, vec


def test_evolve_zero_time_is_identity(standard_node):
    sim = SimParams(dt=0.01, chi_max=50, svd_cutoff=0.0)
    psi = evolve_propagator(ChainSpec([standard_node], 3), 0.0, sim)
    assert np.max(np.abs(materialize(psi).data - np.eye(64))) <= 1e-14


def test_dense_oracle_zero_time(standard_node):
    assert np.allclose(dense_oracle(ChainSpec([standard_node], 2), 0.0).data,
                       np.eye(16))


def test_dense_oracle_trace_fixed_point(standard_node):
    t3 = trace_covector(8)
    dense = dense_oracle(ChainSpec([standard_node], 3), 1.3).data
    assert np.max(np.abs(t3 @ dense - t3)) <= 1e-10


def test_dense_oracle_m2_matches_gate_assembly(standard_node):
    """Independent assembly paths: global operators vs bond + boundary sum."""
    from feedbacktn.superop import (
        build_boundary_left,
        build_boundary_right,
        build_cascaded,
        gate_exponential,
        regroup_global,
    )

    s = 0.9
    dense = dense_oracle(ChainSpec([standard_node], 2), s).data
    eye4 = np.eye(4, dtype=complex)
    casc = regroup_sitewise(build_cascaded(standard_node, standard_node).data,
                            [2, 2])
    bd_l = np.kron(build_boundary_left(standard_node).data, eye4)
    bd_r = np.kron(eye4, build_boundary_right(standard_node).data)
    gen_sitewise = casc + bd_l + bd_r
    from scipy.linalg import expm

    ref = regroup_global(expm(s * gen_sitewise), [2, 2])
    assert np.max(np.abs(dense - ref)) <= 1e-12


def test_dense_oracle_guard(standard_node):
    with pytest.raises(ResourceGuardError):
        dense_oracle(ChainSpec([standard_node], 7), 0.1)


def test_tebd_matches_dense_oracle(standard_node):
    """m=3, paper drive parameters, cutoff 0: max-abs error <= 2e-3 at dt=0.01."""
    chain = ChainSpec([standard_node], 3)
    sim = SimParams(dt=0.01, chi_max=400, svd_cutoff=0.0)
    psi = evolve_propagator(chain, 1.0, sim)
    ref = regroup_sitewise(dense_oracle(chain, 1.0).data, [2, 2, 2])
    assert np.max(np.abs(materialize(psi).data - ref)) <= 2e-3


def test_tebd_first_order_convergence(standard_node):
    chain = ChainSpec([standard_node], 3)
    ref = regroup_sitewise(dense_oracle(chain, 1.0).data, [2, 2, 2])
    errs = []
    for dt in (0.01, 0.005):
        sim = SimParams(dt=dt, chi_max=400, svd_cutoff=0.0)
        psi = evolve_propagator(chain, 1.0, sim)
        errs.append(np.max(np.abs(materialize(psi).data - ref)))
    assert 1.5 <= errs[0] / errs[1] <= 2.5


def test_remainder_step(standard_node):
    """s not divisible by dt runs a final short gate set."""
    chain = ChainSpec([standard_node], 2)
    sim = SimParams(dt=0.01, chi_max=300, svd_cutoff=0.0)
    psi = evolve_propagator(chain, 0.507, sim)
    ref = regroup_sitewise(dense_oracle(chain, 0.507).data, [2, 2])
    assert np.max(np.abs(materialize(psi).data - ref)) <= 1e-3


def test_second_order_flag(standard_node):
    chain = ChainSpec([standard_node], 3)
    ref = regroup_sitewise(dense_oracle(chain, 1.0).data, [2, 2, 2])
    sim1 = SimParams(dt=0.02, chi_max=400, svd_cutoff=0.0, trotter_order=1)
    sim2 = SimParams(dt=0.02, chi_max=400, svd_cutoff=0.0, trotter_order=2)
    err1 = np.max(np.abs(materialize(evolve_propagator(chain, 1.0, sim1)).data - ref))
    err2 = np.max(np.abs(materialize(evolve_propagator(chain, 1.0, sim2)).data - ref))
    assert err2 < err1 / 5


def test_trace_out_unidirectionality(standard_node):
    """(1/d) tr_m E^[m](tau) equals E^[m-1](tau) exactly at cutoff 0."""
    sim = SimParams(dt=0.01, chi_max=400, svd_cutoff=0.0)
    for m in (3, 4):
        big = evolve_propagator(ChainSpec([standard_node], m), 1.0, sim)
        small = evolve_propagator(ChainSpec([standard_node], m - 1), 1.0, sim)
        diff = np.max(np.abs(materialize(trace_out_last(big)).data
                             - materialize(small).data))
        assert diff <= 1e-10


def test_multi_node_unit_cell_bonds():
    """Bond (j, j+1) couples cell[j mod n] upstream to cell[(j+1) mod n]."""
    from feedbacktn.model import make_two_level_node
    from feedbacktn.superop import build_cascaded

    node_a = make_two_level_node(0.2, 0.0, 0.5, 0.5, np.pi)
    node_b = make_two_level_node(0.7, 0.1, 0.3, 0.1, np.pi)
    chain = ChainSpec([node_a, node_b], 4)
    assert np.array_equal(chain.cascaded_generator(0).data,
                          build_cascaded(node_a, node_b).data)
    assert np.array_equal(chain.cascaded_generator(1).data,
                          build_cascaded(node_b, node_a).data)
    assert np.array_equal(chain.cascaded_generator(2).data,
                          build_cascaded(node_a, node_b).data)
    assert chain.node_at(0) is node_a
    assert chain.node_at(3) is node_b


def test_discarded_weight_accumulates(standard_node):
    sim = SimParams(dt=0.05, chi_max=4, svd_cutoff=1e-12)
    psi = evolve_propagator(ChainSpec([standard_node], 5), 2.0, sim)
    assert psi.discarded_weight > 0.0


def test_entropy_saturation_small(standard_node):
    """Area-law trend at reduced size: S grows then flattens with m."""
    sim = SimParams(dt=0.05, chi_max=40, svd_cutoff=1e-9)
    psi = evolve_propagator(ChainSpec([standard_node], 10), 2.0, sim)
    s10 = max_cut_entropy(psi)
    s6 = max_cut_entropy(trace_out_last(psi, 4))
    assert s10 - s6 <= 0.05
