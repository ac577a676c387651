"""Shifted-periodic-boundary contraction and the multi-time insertion engine.

The reduced state at t_n = (m-1) tau + r (0 < r <= tau) is obtained by
contracting the pair E^[m](r), E^[m-1](tau - r) with the spiral wiring

    lower.out(j) -> upper.in(j)        j = 1..m-1
    upper.out(j) -> lower.in(j+1)      j = 1..m-1

with free legs lower.in(1) (initial state) and lower.out(m) (result).  The
same wiring generalizes to q stacked segments: consecutive segments compose
site-by-site without shift, and the final (tau-closing, m-1 site) segment
wraps into the first segment one site later.  Each multi-time insertion is
a d^2 x d^2 sandwich superoperator applied to the flowing leg of its site
at a segment boundary.

The sweep carries a boundary tensor with one bond index per segment plus
the d^2 in-flight leg, costing O(m chi^(q+1) d^4) overall.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AccuracyError, ParameterError
from .model import NetworkSpec, SimParams
from .mpso import MPSO, trace_out_last
from .propagator import ChainSpec, dense_oracle, evolve_propagator
from .superop import SuperOpDense, regroup_sitewise, trace_covector, vec


@dataclass(frozen=True)
class Insertion:
    """A sandwich superoperator applied at (replica, local time in [0, tau])."""

    site: int
    local_time: float
    op: SuperOpDense

    def absolute_time(self, tau: float) -> float:
        return (self.site - 1) * tau + self.local_time


@dataclass
class ContractionInfo:
    """Diagnostics recorded by the state pipeline."""

    trace_defect: float = 0.0
    hermiticity_defect: float = 0.0
    min_eigenvalue: float = 0.0
    discarded_weight: float = 0.0


def split_time(t: float, tau: float) -> tuple[int, float]:
    """Decompose t = (m-1) tau + r with r in (0, tau] (m=1, r=t for t <= tau)."""
    if t < 0:
        raise ParameterError(f"time must be non-negative, got {t}")
    if t == 0.0:
        return 1, 0.0
    m = int(np.ceil(t / tau - 1e-12))
    m = max(m, 1)
    return m, t - (m - 1) * tau


def _single_chain(net: NetworkSpec) -> ChainSpec:
    if net.n != 1:
        raise ParameterError("this pipeline handles single-node networks; "
                             "use the multinode module for n > 1")
    return ChainSpec(list(net.nodes), 1)


def spiral_contract(
    segments: list[MPSO],
    rho0_vec: np.ndarray,
    insertions: list[tuple[int, int, np.ndarray]] | None = None,
    trace_result: bool = False,
) -> np.ndarray | complex:
    """Contract stacked propagator segments with the spiral wiring.

    ``segments[:-1]`` must have m sites each and ``segments[-1]`` (the
    tau-closing layer) m-1 sites; for m = 1 the closing layer is absent and
    ``segments`` may all be single-site.  ``insertions`` are
    (site j [1-based], boundary b, d^2 x d^2 matrix) with boundary b meaning
    "applied after segment b" (b = 0: before the first segment).  Returns
    the final d^2 vector, or its trace when ``trace_result``.
    """
    insertions = insertions or []
    m = segments[0].m
    q = len(segments)
    for seg in segments[:-1]:
        if seg.m != m:
            raise ParameterError("all non-closing segments must have m sites")
    has_closing = q > 1 and segments[-1].m == m - 1
    if q > 1 and not has_closing and segments[-1].m != m:
        raise ParameterError(
            f"closing segment must have {m - 1} or {m} sites, got {segments[-1].m}"
        )
    by_locus: dict[tuple[int, int], list[np.ndarray]] = {}
    for site, boundary, op in insertions:
        if not 1 <= site <= m:
            raise ParameterError(f"insertion site {site} outside chain of {m}")
        if not 0 <= boundary <= q:
            raise ParameterError(f"insertion boundary {boundary} out of range")
        by_locus.setdefault((site, boundary), []).append(op)

    # boundary tensor: one bond axis per segment (segment order) + flight leg
    acc = np.asarray(rho0_vec, dtype=complex).reshape([1] * q + [-1])

    for site in range(1, m + 1):
        last_present = q - 1 if (site == m and has_closing) else q
        acc = _apply_insertions_nd(acc, by_locus.get((site, 0), []))
        for ell in range(1, last_present + 1):
            seg = segments[ell - 1]
            tensor = seg.sites[site - 1].data  # (chi_l, (o, i), chi_r)
            d2 = seg.sites[site - 1].d ** 2
            ten = tensor.reshape(tensor.shape[0], d2, d2, tensor.shape[2])
            # contract segment ell's left bond and the in-flight leg
            acc = np.tensordot(acc, ten, axes=([ell - 1, acc.ndim - 1], [0, 2]))
            # result axes: (other bonds..., o, chi_r); move chi_r back to
            # the segment's bond slot, leaving o as the new flight leg
            nd = acc.ndim
            order = list(range(nd - 2))
            order.insert(ell - 1, nd - 1)
            order.append(nd - 2)
            acc = acc.transpose(order)
            acc = _apply_insertions_nd(acc, by_locus.get((site, ell), []))
        # the flight leg now carries this site's output; it wraps into the
        # next site's first-segment input by construction
    result = acc.reshape(-1, acc.shape[-1])
    if result.shape[0] != 1:
        raise ParameterError("contraction left unexpected open bonds")
    out = result[0]
    if trace_result:
        d = int(round(np.sqrt(out.shape[0])))
        return complex(trace_covector(d) @ out)
    return out


def _apply_insertions_nd(acc: np.ndarray, ops: list[np.ndarray]) -> np.ndarray:
    for op in ops:
        acc = np.tensordot(acc, op, axes=(acc.ndim - 1, 1))
    return acc


def _hermitize_normalize(
    rho_raw: np.ndarray, sim: SimParams, info: ContractionInfo
) -> np.ndarray:
    d = rho_raw.shape[0]
    info.trace_defect = abs(np.trace(rho_raw) - 1.0)
    herm = 0.5 * (rho_raw + rho_raw.conj().T)
    info.hermiticity_defect = float(np.max(np.abs(rho_raw - herm)))
    if info.trace_defect > sim.trace_warn or info.hermiticity_defect > sim.trace_warn:
        warnings.warn(
            f"accuracy warning: trace defect {info.trace_defect:.2e}, "
            f"hermiticity defect {info.hermiticity_defect:.2e}",
            stacklevel=3,
        )
    herm = herm / np.trace(herm).real
    eigs = np.linalg.eigvalsh(herm)
    info.min_eigenvalue = float(eigs[0])
    if eigs[0] < sim.positivity_tol:
        raise AccuracyError(
            f"reduced state has negative eigenvalue {eigs[0]:.3e}"
        )
    return herm


def build_segments(
    chain: ChainSpec,
    splits: list[float],
    tau: float,
    sim: SimParams,
    via_trace_out: bool = False,
) -> list[MPSO]:
    """Evolve the segment propagators [0,s1],[s1,s2],...,[sK,tau].

    All segments are m-site chains except the closing [s_K, tau] layer,
    which has m-1 sites (direct build by default; set ``via_trace_out`` to
    derive it from the m-site propagator instead).
    """
    m = chain.m
    segs: list[MPSO] = []
    prev = 0.0
    for s in splits:
        if s < prev - 1e-12:
            raise ParameterError("segment split times must be non-decreasing")
        segs.append(evolve_propagator(chain, max(s - prev, 0.0), sim))
        prev = s
    closing_duration = max(tau - prev, 0.0)
    if m >= 2:
        if via_trace_out:
            segs.append(trace_out_last(evolve_propagator(chain, closing_duration, sim)))
        else:
            shorter = ChainSpec(chain.unit_cell, m - 1)
            segs.append(evolve_propagator(shorter, closing_duration, sim))
    return segs


def reduced_state(
    net: NetworkSpec,
    sim: SimParams,
    t_n: float,
    rho0: np.ndarray,
    info: ContractionInfo | None = None,
    via_trace_out: bool = False,
) -> np.ndarray:
    """Reduced system state at time t_n for a single-node feedback network."""
    d = net.nodes[0].d
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (d, d):
        raise ParameterError(f"initial state must be {d}x{d}")
    m, r = split_time(t_n, net.tau)
    chain = ChainSpec(list(net.nodes), m)
    if t_n == 0.0:
        return rho0.copy()
    segments = build_segments(chain, [r], net.tau, sim, via_trace_out=via_trace_out)
    out = spiral_contract(segments, vec(rho0))
    rho_raw = out.reshape(d, d)
    local_info = info if info is not None else ContractionInfo()
    local_info.discarded_weight = sum(s.discarded_weight for s in segments)
    return _hermitize_normalize(rho_raw, sim, local_info)


def multitime_correlator(
    net: NetworkSpec,
    sim: SimParams,
    insertions: list[Insertion],
    rho0: np.ndarray,
) -> complex:
    """tr{ P(E ... X_q ... E ... X_1 ... E) rho0 } for ordered insertions.

    Insertions must be sorted by absolute time (site-1) tau + local_time;
    each segment split occurs at a distinct insertion local time, the
    closing m-1 site layer covers [max local time, tau], and insertion
    superoperators act on their replica's flowing leg at the split point.
    """
    if not insertions:
        raise ParameterError("need at least one insertion")
    tau = net.tau
    times = [ins.absolute_time(tau) for ins in insertions]
    if any(t2 < t1 - 1e-12 for t1, t2 in zip(times, times[1:])):
        raise ParameterError("insertions must be sorted by absolute time")
    m = max(ins.site for ins in insertions)
    for ins in insertions:
        if not (0.0 <= ins.local_time <= tau + 1e-12):
            raise ParameterError(
                f"insertion local time {ins.local_time} outside [0, tau]"
            )
    chain = ChainSpec(list(net.nodes), m)
    splits = sorted({ins.local_time for ins in insertions if ins.local_time > 1e-12})
    segments = build_segments(chain, splits, tau, sim)
    boundary_of = {0.0: 0}
    for idx, s in enumerate(splits):
        boundary_of[s] = idx + 1
    engine_insertions = [
        (ins.site, boundary_of[ins.local_time if ins.local_time > 1e-12 else 0.0],
         ins.op.data)
        for ins in insertions
    ]
    return spiral_contract(
        segments, vec(rho0), insertions=engine_insertions, trace_result=True
    )


# ---------------------------------------------------------------------------
# Dense oracles: independent implementations of the same wiring, used in tests
# ---------------------------------------------------------------------------


def dense_spiral_apply(
    lower_sitewise: np.ndarray,
    upper_sitewise: np.ndarray | None,
    dims: list[int],
    rho0: np.ndarray,
) -> np.ndarray:
    """Apply P(upper . lower) to rho0 with fully dense tensors.

    ``lower_sitewise``/``upper_sitewise`` are the m- and (m-1)-site
    propagators in the sitewise grouping; the composite is contracted with
    the shifted periodic boundary: total out_j ties to total in_{j+1}.
    """
    m = len(dims)
    d2s = [d * d for d in dims]
    low = lower_sitewise.reshape(d2s + d2s)
    if m == 1:
        return (lower_sitewise @ vec(rho0)).reshape(dims[0], dims[0])
    up = upper_sitewise.reshape(d2s[:-1] + d2s[:-1])
    # contract upper.in(j) with lower.out(j), j = 1..m-1
    comp = np.tensordot(up, low, axes=(list(range(m - 1, 2 * (m - 1))),
                                       list(range(m - 1))))
    # comp axes: (Out_1..Out_{m-1}, o_m, i_1..i_m); wrap Out_j -> i_{j+1}
    for k in range(m - 1):
        comp = np.trace(comp, axis1=0, axis2=m - k + 1)
    # remaining axes: (o_m, i_1)
    out = np.tensordot(comp, vec(rho0), axes=(1, 0))
    d = dims[-1]
    return out.reshape(d, d)


def dense_reduced_state(
    net: NetworkSpec, t_n: float, rho0: np.ndarray
) -> np.ndarray:
    """Brute-force reduced state: dense propagators + dense spiral wiring."""
    d = net.nodes[0].d
    if t_n == 0.0:
        return np.asarray(rho0, dtype=complex).copy()
    m, r = split_time(t_n, net.tau)
    chain = ChainSpec(list(net.nodes), m)
    lower = regroup_sitewise(dense_oracle(chain, r).data, chain.dims)
    if m == 1:
        rho = dense_spiral_apply(lower, None, chain.dims, rho0)
    else:
        shorter = ChainSpec(chain.unit_cell, m - 1)
        upper = regroup_sitewise(
            dense_oracle(shorter, net.tau - r).data, shorter.dims
        )
        rho = dense_spiral_apply(lower, upper, chain.dims, rho0)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def dense_multitime_correlator(
    net: NetworkSpec, insertions: list[Insertion], rho0: np.ndarray
) -> complex:
    """Dense mirror of ``multitime_correlator`` (quantum-regression oracle)."""
    tau = net.tau
    m = max(ins.site for ins in insertions)
    chain = ChainSpec(list(net.nodes), m)
    dims = chain.dims
    d2s = [d * d for d in dims]
    dtot2 = int(np.prod(d2s))
    splits = sorted({ins.local_time for ins in insertions if ins.local_time > 1e-12})

    def embed(ins: Insertion) -> np.ndarray:
        mats = [np.eye(d2, dtype=complex) for d2 in d2s]
        mats[ins.site - 1] = ins.op.data
        acc = mats[0]
        for mat in mats[1:]:
            acc = np.kron(acc, mat)
        return acc

    composite = np.eye(dtot2, dtype=complex)
    prev = 0.0
    for idx, s in enumerate([*splits]):
        seg = regroup_sitewise(dense_oracle(chain, s - prev).data, dims)
        composite = seg @ composite
        boundary = idx + 1
        for ins in insertions:
            b = 0 if ins.local_time <= 1e-12 else splits.index(ins.local_time) + 1
            if b == boundary:
                composite = embed(ins) @ composite
        prev = s
    for ins in insertions:
        if ins.local_time <= 1e-12:
            composite = composite @ embed(ins)
    if m >= 2:
        shorter = ChainSpec(chain.unit_cell, m - 1)
        upper = regroup_sitewise(
            dense_oracle(shorter, tau - prev).data, shorter.dims
        )
        upper_full = np.kron(upper, np.eye(d2s[-1], dtype=complex))
        composite = upper_full @ composite
        reduced = _dense_shifted_pbc(composite, dims)
    else:
        reduced = composite
    d = dims[-1]
    out = reduced @ vec(np.asarray(rho0, dtype=complex))
    return complex(trace_covector(d) @ out)


def _dense_shifted_pbc(composite: np.ndarray, dims: list[int]) -> np.ndarray:
    """P(M): tie total out_j to total in_{j+1}; returns a d^2 x d^2 map."""
    m = len(dims)
    d2s = [d * d for d in dims]
    ten = composite.reshape(d2s + d2s)
    for k in range(m - 1):
        ten = np.trace(ten, axis1=0, axis2=m - k + 1)
    return ten
