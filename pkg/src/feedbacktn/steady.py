"""Infinite-chain propagator (iTEBD), transfer-tensor spectral analysis,
steady states, relaxation times, and steady-state correlators.

The infinite cascaded chain is evolved with a translation-invariant two-site
ansatz (tensors A and B; for a single-node network they describe the same
physics and agree up to Trotter error and bond gauge).  The unit tensor at
time tau, reshaped into a chi d^2 x chi d^2 matrix so that chain products
contract out_j with in_{j+1}, is a completely positive trace-preserving
column map: its leading eigenvalue has magnitude one (up to truncation
drift, which is logged), the leading left/right eigenvectors assemble the
steady state, and the subleading magnitude sets the relaxation time
t_ss = -2 tau / log2 |lam_2|.

Because an SVD fixes each bond basis only up to a unitary, the A and B
tensors live in unrelated bond gauges; single-tensor chains mix those
gauges.  The pipeline therefore works with the exact two-site column
M_A M_B (gauge consistent, and exactly CPTP for the Trotterized gates),
reporting per-site eigenvalue magnitudes.  ``transfer_spectrum`` on a
single tensor is retained for consistent-gauge inputs.

Steady two-time quantities use a stack of segment layers per column, with
columns alternating between the A and B sublattices; the semi-infinite left
part is replaced by the fixed point of the two-column composite and the
right end is closed by the reversed fixed point fed with the maximally
mixed input.  Raw contractions are normalized by an identity-insertion run
over the same window, which removes every environment scale factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import AccuracyError, ConvergenceError, ParameterError
from .model import NetworkSpec, SimParams
from .mpso import SiteTensor, svd_truncate
from .propagator import ChainSpec
from .superop import trace_covector


@dataclass
class UnitCellTensors:
    """Two-site unit cell of the infinite-chain propagator at time s."""

    gamma_a: np.ndarray
    lam_a: np.ndarray
    gamma_b: np.ndarray
    lam_b: np.ndarray
    d: int
    s: float
    discarded_weight: float = 0.0

    def site_tensor_a(self) -> SiteTensor:
        return SiteTensor(self.gamma_a * self.lam_a[None, None, :], self.d)

    def site_tensor_b(self) -> SiteTensor:
        return SiteTensor(self.gamma_b * self.lam_b[None, None, :], self.d)

    def asymmetry(self) -> float:
        """Relative difference of the two bond singular-value spectra.

        Bond bases are gauge degrees of freedom, so raw tensor differences
        are meaningless; the singular values are gauge invariant and agree
        between sublattices up to Trotter error.
        """
        na, nb = len(self.lam_a), len(self.lam_b)
        n = max(na, nb)
        a = np.zeros(n)
        b = np.zeros(n)
        a[:na] = self.lam_a
        b[:nb] = self.lam_b
        scale = max(a[0], b[0]) if n else 1.0
        return float(np.max(np.abs(a - b)) / scale) if scale else 0.0

    def bond_entropy(self) -> float:
        """Operator entanglement entropy of the unit-cell bond singular values."""
        best = 0.0
        for lam in (self.lam_a, self.lam_b):
            norm = np.linalg.norm(lam)
            if norm == 0:
                continue
            p = (lam / norm) ** 2
            p = p[p > 1e-300]
            best = max(best, float(-np.sum(p * np.log2(p))))
        return best


@dataclass
class SpectralData:
    """Spectrum of the reshaped transfer tensor, sorted by magnitude.

    ``period_sites`` records how many chain sites one application of the
    analyzed column map advances (1 for a single tensor, 2 for the unit-cell
    column); eigenvalues are renormalized so |lam_1| = 1.
    """

    eigenvalues: np.ndarray
    right_leading: np.ndarray  # shape (chi, d^2), index pair (bond, in)
    left_leading: np.ndarray   # shape (chi, d^2), index pair (bond, out)
    chi: int
    d: int
    drift: float               # per-site | |lam_1| - 1 | before renormalization
    degenerate: bool
    period_sites: int = 1

    @property
    def gap_magnitude(self) -> float:
        """Per-site |lam_2| after renormalization."""
        if len(self.eigenvalues) < 2:
            return 0.0
        return float(abs(self.eigenvalues[1]) ** (1.0 / self.period_sites))


def _pinv_diag(lam: np.ndarray) -> np.ndarray:
    guard = 1e-14 * np.max(lam) if lam.size else 0.0
    inv = np.zeros_like(lam)
    mask = lam > guard
    inv[mask] = 1.0 / lam[mask]
    return inv


def _itebd_bond_update(
    gamma_l, lam_mid, gamma_r, lam_outer, gate_sitewise, d, sim: SimParams
):
    """Apply a two-site gate across the (gamma_l, gamma_r) bond, Vidal style.

    The chain fragment is lam_outer . gamma_l . lam_mid . gamma_r . lam_outer.
    The updated singular values are kept at unit 2-norm with the physical
    scale folded symmetrically into the gammas; the represented chain is
    unchanged and both sectors stay O(1) (trace preservation pins the
    per-site scale).
    """
    d2 = d * d
    chi_l = gamma_l.shape[0]
    chi_r = gamma_r.shape[2]
    theta = gamma_l * lam_mid[None, None, :]
    theta = np.tensordot(theta, gamma_r, axes=(2, 0))  # (l, p1, p2, r)
    theta = lam_outer[:, None, None, None] * theta
    theta = theta * lam_outer[None, None, None, :]
    th = theta.reshape(chi_l, d2, d2, d2, d2, chi_r)
    gt = gate_sitewise.reshape(d2, d2, d2, d2)
    th = np.tensordot(gt, th, axes=([2, 3], [1, 3]))  # (o1, o2, l, i1, i2, r)
    th = th.transpose(2, 0, 3, 1, 4, 5)
    mat = th.reshape(chi_l * d2 * d2, d2 * d2 * chi_r)
    u, s, vh, discarded = svd_truncate(mat, sim.chi_max, sim.svd_cutoff)
    if s[0] < 1e-12:
        raise AccuracyError("bond collapse in iTEBD update (leading singular "
                            f"value {s[0]:.3e})")
    chi_new = s.shape[0]
    nu = float(np.linalg.norm(s))
    lam_new = s / nu
    root = np.sqrt(nu)
    inv_outer = _pinv_diag(lam_outer)
    new_l = (u.reshape(chi_l, d2 * d2, chi_new)
             * inv_outer[:, None, None]) * root
    new_r = (vh.reshape(chi_new, d2 * d2, chi_r)
             * inv_outer[None, None, :]) * root
    return new_l, lam_new, new_r, discarded


def itebd_propagator(
    chain: ChainSpec,
    sim: SimParams,
    s_final: float | None = None,
    checkpoint_times: list[float] | None = None,
) -> UnitCellTensors | tuple[UnitCellTensors, dict[float, UnitCellTensors]]:
    """Integrate the translation-invariant propagator from identity to s_final.

    Alternates the (A,B) and (B,A) cascaded gates with SVD truncation; no
    boundary gates appear (the infinite chain has no boundary).  When
    ``checkpoint_times`` is given, unit-cell snapshots at those times are
    returned as well (times are matched to the step grid).
    """
    if chain.n != 1:
        raise ParameterError("infinite-chain steady state supports single-node "
                             "unit cells only")
    if s_final is None:
        raise ParameterError("s_final is required")
    d = chain.node_at(0).d
    d2 = d * d
    gate_full = chain.bond_gate(0, sim.dt, sitewise=True).data
    gamma_a = np.eye(d2, dtype=complex).reshape(1, d2 * d2, 1)
    gamma_b = gamma_a.copy()
    lam_a = np.ones(1)
    lam_b = np.ones(1)
    discarded = 0.0
    checkpoints: dict[float, UnitCellTensors] = {}
    want = sorted(checkpoint_times or [])

    def snapshot(s_now: float) -> UnitCellTensors:
        return UnitCellTensors(
            gamma_a.copy(), lam_a.copy(), gamma_b.copy(), lam_b.copy(),
            d, s_now, discarded,
        )

    for t_req in want:
        if t_req <= 1e-12:
            checkpoints[t_req] = snapshot(0.0)
    n_steps = int(np.floor(s_final / sim.dt + 1e-12))
    tail = s_final - n_steps * sim.dt
    has_tail = tail > 1e-12 * max(sim.dt, 1.0)
    s_now = 0.0
    for i in range(n_steps + (1 if has_tail else 0)):
        dt_i = sim.dt if i < n_steps else tail
        gate = gate_full if i < n_steps else chain.bond_gate(0, dt_i, sitewise=True).data
        gamma_a, lam_a, gamma_b, disc1 = _itebd_bond_update(
            gamma_a, lam_a, gamma_b, lam_b, gate, d, sim
        )
        gamma_b, lam_b, gamma_a, disc2 = _itebd_bond_update(
            gamma_b, lam_b, gamma_a, lam_a, gate, d, sim
        )
        discarded += disc1 + disc2
        s_now += dt_i
        for t_req in want:
            if t_req not in checkpoints and t_req <= s_now + 1e-9 * sim.dt:
                checkpoints[t_req] = snapshot(s_now)
    cell = snapshot(s_now)
    if checkpoint_times is not None:
        return cell, checkpoints
    return cell


def transfer_matrix(c: SiteTensor) -> np.ndarray:
    """Reshape C[alpha, (out, in), beta] into M[(alpha, in), (beta, out)].

    Chain products then contract out_j with in_{j+1}; a state propagates as
    a row vector, rho(t + tau)^T = rho(t)^T M.
    """
    chi_l, _, chi_r = c.data.shape
    d2 = c.d * c.d
    ten = c.data.reshape(chi_l, d2, d2, chi_r)  # (alpha, out, in, beta)
    return ten.transpose(0, 2, 3, 1).reshape(chi_l * d2, chi_r * d2)


def _spectral_from_matrix(
    m: np.ndarray, d: int, sim: SimParams | None, period_sites: int
) -> SpectralData:
    drift_tol = sim.lambda_drift_tol if sim is not None else 1e-3
    gap_tol = sim.degeneracy_gap if sim is not None else 1e-8
    vals, vl, vr = scipy.linalg.eig(m, left=True, right=True)
    order = np.lexsort((-vals.real, -np.abs(vals)))
    vals = vals[order]
    vl = vl[:, order]
    vr = vr[:, order]
    mag1 = abs(vals[0])
    drift = abs(mag1 ** (1.0 / period_sites) - 1.0)
    if drift > drift_tol:
        raise AccuracyError(
            f"leading transfer eigenvalue drifted by {drift:.2e} per site; "
            "increase chi or decrease dt"
        )
    degenerate = len(vals) > 1 and abs(mag1 - abs(vals[1])) < gap_tol
    d2 = d * d
    chi = m.shape[0] // d2
    return SpectralData(
        eigenvalues=vals / mag1,
        right_leading=vr[:, 0].reshape(chi, d2),
        left_leading=np.conj(vl[:, 0]).reshape(chi, d2),
        chi=chi,
        d=d,
        drift=drift,
        degenerate=degenerate,
        period_sites=period_sites,
    )


def transfer_spectrum(c: SiteTensor, sim: SimParams | None = None) -> SpectralData:
    """Spectral decomposition of a single-tensor column map.

    Only meaningful when both bond indices of ``c`` refer to the same basis
    (for example chi = 1, or an explicitly gauge-aligned tensor); the
    unit-cell pipeline uses ``transfer_spectrum_cell`` instead.
    """
    m = transfer_matrix(c)
    if m.shape[0] != m.shape[1]:
        raise ParameterError("transfer tensor must have equal bond dimensions")
    return _spectral_from_matrix(m, c.d, sim, period_sites=1)


def transfer_spectrum_cell(
    cell: UnitCellTensors, sim: SimParams | None = None
) -> SpectralData:
    """Spectral decomposition of the exact two-site unit-cell column M_A M_B.

    The product is gauge consistent and exactly CPTP for the Trotterized
    gates, so the leading magnitude deviates from one only through
    truncation; the drift is reported per site.
    """
    m = transfer_matrix(cell.site_tensor_a()) @ transfer_matrix(cell.site_tensor_b())
    return _spectral_from_matrix(m, cell.d, sim, period_sites=2)


def steady_state(spec: SpectralData) -> np.ndarray:
    """Assemble rho_ss from the leading left/right transfer eigenvectors.

    The right eigenvector is fed the maximally mixed operator on its input
    slot, the virtual bond is traced against the left eigenvector, and the
    remaining output slot is the state; scale and phase are fixed by
    Hermiticity and unit trace.
    """
    if spec.degenerate:
        raise AccuracyError(
            "leading transfer eigenvalue is degenerate: steady state not unique"
        )
    d = spec.d
    mixed = trace_covector(d) / d  # vec(identity/d)
    w = spec.right_leading @ mixed          # (chi,)
    rho_vec = w @ spec.left_leading          # (d^2,)
    rho = rho_vec.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-14:
        raise AccuracyError("steady-state assembly produced zero trace")
    rho = rho / tr
    eigs = np.linalg.eigvalsh(rho)
    if eigs[0] < -1e-8:
        raise AccuracyError(
            f"steady state has negative eigenvalue {eigs[0]:.3e}"
        )
    return rho


def relaxation_time(spec: SpectralData, tau: float) -> float:
    """t_ss = -2 tau / log2 |lam_2| from the per-site subleading magnitude."""
    gap = spec.gap_magnitude
    if gap <= 0.0:
        return 0.0
    if gap >= 1.0 - 1e-12:
        raise ConvergenceError(
            "transfer spectrum has no gap: relaxation time diverges"
        )
    return -2.0 * tau / np.log2(gap)


# ---------------------------------------------------------------------------
# Steady-state multi-time correlators
# ---------------------------------------------------------------------------


@dataclass
class SteadyWindow:
    """Layered steady columns with environments, period-2 in the site index.

    ``layers_by_parity[p]`` holds the segment tensors (local-time order) of
    the columns at sites with parity p (site index counted from the right
    end, site 1 having parity 1).  ``left_env[p]`` is the boundary entering
    a parity-p column from the semi-infinite left part; ``right_close[p]``
    closes the right end of a window whose rightmost column has parity p.
    """

    layers_by_parity: dict[int, list[SiteTensor]]
    d: int
    left_env: dict[int, np.ndarray]
    right_seed: dict[int, np.ndarray]
    column_eig: float


def _column_pass_left(
    b: np.ndarray, layers: list[SiteTensor],
    ins: dict[int, list[np.ndarray]] | None = None,
) -> np.ndarray:
    """Advance the (bond_1, .., bond_q, flight) boundary through one column."""
    ins = ins or {}
    for op in ins.get(0, []):
        b = np.tensordot(b, op, axes=(b.ndim - 1, 1))
    for ell, layer in enumerate(layers, start=1):
        d2 = layer.d ** 2
        ten = layer.data.reshape(layer.data.shape[0], d2, d2, layer.data.shape[2])
        b = np.tensordot(b, ten, axes=([ell - 1, b.ndim - 1], [0, 2]))
        nd = b.ndim
        order = list(range(nd - 2))
        order.insert(ell - 1, nd - 1)
        order.append(nd - 2)
        b = b.transpose(order)
        for op in ins.get(ell, []):
            b = np.tensordot(b, op, axes=(b.ndim - 1, 1))
    return b


def _column_pass_right(
    v: np.ndarray, layers: list[SiteTensor],
    ins: dict[int, list[np.ndarray]] | None = None,
) -> np.ndarray:
    """Pull the (bond_1, .., bond_q, flight-in) covector one column leftward.

    Insertion matrices that act on the flowing leg from the left in sweep
    order contract transposed here, late boundaries first.
    """
    ins = ins or {}
    q = len(layers)
    for ell in range(q, -1, -1):
        for op in reversed(ins.get(ell, [])):
            v = np.tensordot(v, op, axes=(v.ndim - 1, 0))
        if ell > 0:
            layer = layers[ell - 1]
            d2 = layer.d ** 2
            ten = layer.data.reshape(
                layer.data.shape[0], d2, d2, layer.data.shape[2]
            )
            v = np.tensordot(v, ten, axes=([ell - 1, v.ndim - 1], [3, 1]))
            nd = v.ndim
            order = list(range(nd - 2))
            order.insert(ell - 1, nd - 2)
            order.append(nd - 1)
            v = v.transpose(order)
    return v


def _power_iterate(step, v0: np.ndarray, tol: float, maxiter: int = 5000):
    v = v0 / np.linalg.norm(v0)
    lam = 0.0
    for _ in range(maxiter):
        w = step(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise ConvergenceError("power iteration collapsed to zero")
        w = w / norm
        delta = min(np.linalg.norm(w - v), np.linalg.norm(w + v))
        v = w
        lam = norm
        if delta < tol:
            return v, lam
    raise ConvergenceError(
        f"power iteration did not converge within {maxiter} iterations"
    )


def build_steady_window(
    cells_first: UnitCellTensors,
    cells_second: UnitCellTensors,
    sim: SimParams,
) -> SteadyWindow:
    """Environment setup for the combined two-layer steady column.

    Layer 1 is the tau - r segment (earlier local time), layer 2 the r
    segment; sites alternate between the A and B sublattices of the two
    iTEBD runs, site 1 carrying the A tensors.
    """
    d = cells_first.d
    d2 = d * d
    layers_by_parity = {
        1: [cells_first.site_tensor_a(), cells_second.site_tensor_a()],
        0: [cells_first.site_tensor_b(), cells_second.site_tensor_b()],
    }
    t_cov = trace_covector(d)

    def shapes(p):
        return [t.data.shape[0] for t in layers_by_parity[p]]

    def left_step_pair(vec: np.ndarray) -> np.ndarray:
        # entering parity 1 after passing parity 0 then parity 1 columns:
        # composite advances two sites and returns to the same parity space
        b = vec.reshape(*shapes(0), d2)
        b = _column_pass_left(b, layers_by_parity[0])
        b = _column_pass_left(b, layers_by_parity[1])
        return b.reshape(-1)

    seed = np.einsum(
        "a,b,p->abp", np.ones(shapes(0)[0]), np.ones(shapes(0)[1]), t_cov
    ).reshape(-1)
    env0, lam_pair = _power_iterate(left_step_pair, seed, tol=1e-13)
    # env0 enters a parity-0 column; one more pass gives the parity-1 entry
    env0 = env0.reshape(*shapes(0), d2)
    env1 = _column_pass_left(env0, layers_by_parity[0])
    norm1 = np.linalg.norm(env1)
    if norm1 == 0:
        raise ConvergenceError("steady environment vanished")
    env1 = env1 / norm1

    def right_step_pair(vec: np.ndarray) -> np.ndarray:
        v = vec.reshape(*shapes(1), d2)
        v = _column_pass_right(v, layers_by_parity[1])
        v = _column_pass_right(v, layers_by_parity[0])
        return v.reshape(-1)

    seed_r = np.einsum(
        "a,b,p->abp", np.ones(shapes(1)[0]), np.ones(shapes(1)[1]), t_cov / d
    ).reshape(-1)
    close1, _ = _power_iterate(right_step_pair, seed_r, tol=1e-13)
    close1 = close1.reshape(*shapes(1), d2)
    close0 = _column_pass_right(close1, layers_by_parity[1])
    norm0 = np.linalg.norm(close0)
    close0 = close0 / norm0 if norm0 else close0
    # feed the maximally mixed operator into the flight-in slot
    mixed = trace_covector(d) / d
    right_seed = {
        1: np.tensordot(close1, mixed, axes=(close1.ndim - 1, 0)),
        0: np.tensordot(close0, mixed, axes=(close0.ndim - 1, 0)),
    }
    return SteadyWindow(
        layers_by_parity=layers_by_parity,
        d=d,
        left_env={1: env1, 0: env0},
        right_seed=right_seed,
        column_eig=lam_pair,
    )


def _terminal_vector(window: SteadyWindow, parity: int) -> np.ndarray:
    """Covector closing the right end of a window ending at given parity."""
    return np.einsum(
        "ab,p->abp", window.right_seed[parity], trace_covector(window.d)
    )


def steady_windowed_value(
    window: SteadyWindow,
    insertions: dict[int, dict[int, list[np.ndarray]]],
    max_site: int,
) -> complex:
    """Contract the finite window with insertions; NOT normalized.

    ``insertions[site][boundary]`` lists d^2 x d^2 matrices applied on the
    flowing leg of that (right-counted) site at that layer boundary.
    """
    b = window.left_env[max_site % 2]
    for site in range(max_site, 0, -1):
        b = _column_pass_left(
            b, window.layers_by_parity[site % 2], insertions.get(site)
        )
    term = _terminal_vector(window, parity=1)
    return complex(np.tensordot(b, term, axes=([0, 1, 2], [0, 1, 2])))


def steady_correlator(
    window: SteadyWindow,
    insertions: list[tuple[int, int, np.ndarray]],
) -> complex:
    """Identity-normalized steady correlator for insertions (site, boundary, op)."""
    if not insertions:
        return 1.0 + 0.0j
    max_site = max(site for site, _, _ in insertions)
    by_site: dict[int, dict[int, list[np.ndarray]]] = {}
    for site, boundary, op in insertions:
        by_site.setdefault(site, {}).setdefault(boundary, []).append(op)
    raw = steady_windowed_value(window, by_site, max_site)
    norm = steady_windowed_value(window, {}, max_site)
    if abs(norm) < 1e-300:
        raise AccuracyError("steady window normalization vanished")
    return raw / norm


def steady_correlator_scan(
    window: SteadyWindow,
    early: list[tuple[int, np.ndarray]],
    late: list[tuple[int, np.ndarray]],
    n_windows: int,
) -> np.ndarray:
    """Identity-normalized correlators with the early group at sites 1..n_windows.

    ``early``/``late`` are (boundary, matrix) lists; the late group is fixed
    at site 1 while the early group slides leftward one site (one delay
    time) at a time.  One leftward iteration of the right part evaluates
    every window size in O(n_windows) column passes.
    """
    late_ins: dict[int, list[np.ndarray]] = {}
    for boundary, op in late:
        late_ins.setdefault(boundary, []).append(op)
    early_ins: dict[int, list[np.ndarray]] = {}
    for boundary, op in early:
        early_ins.setdefault(boundary, []).append(op)

    values = np.zeros(n_windows, dtype=complex)
    # mbar = 1: both groups share the site-1 column
    combined: dict[int, list[np.ndarray]] = {}
    for bnd, ops in early_ins.items():
        combined.setdefault(bnd, []).extend(ops)
    for bnd, ops in late_ins.items():
        combined.setdefault(bnd, []).extend(ops)
    term1 = _terminal_vector(window, parity=1)
    layers1 = window.layers_by_parity[1]
    raw1 = np.tensordot(
        _column_pass_left(window.left_env[1], layers1, combined), term1,
        axes=([0, 1, 2], [0, 1, 2]),
    )
    norm1 = np.tensordot(
        _column_pass_left(window.left_env[1], layers1), term1,
        axes=([0, 1, 2], [0, 1, 2]),
    )
    values[0] = raw1 / norm1
    if n_windows == 1:
        return values

    # iterate the right part leftward starting from the site-1 column
    r_vec = _column_pass_right(term1, layers1, late_ins)
    r_plain = _column_pass_right(term1, layers1)
    for mbar in range(2, n_windows + 1):
        parity = mbar % 2
        layers = window.layers_by_parity[parity]
        b_early = _column_pass_left(window.left_env[parity], layers, early_ins)
        b_plain = _column_pass_left(window.left_env[parity], layers)
        raw = np.tensordot(b_early, r_vec, axes=([0, 1, 2], [0, 1, 2]))
        norm = np.tensordot(b_plain, r_plain, axes=([0, 1, 2], [0, 1, 2]))
        values[mbar - 1] = raw / norm
        if mbar < n_windows:
            r_vec = _column_pass_right(r_vec, layers)
            r_plain = _column_pass_right(r_plain, layers)
    return values


def steady_pipeline(
    net: NetworkSpec, sim: SimParams
) -> tuple[UnitCellTensors, SpectralData, np.ndarray, float]:
    """Convenience: iTEBD to tau, unit-cell spectrum, steady state, t_ss."""
    chain = ChainSpec(list(net.nodes), 2)
    cell = itebd_propagator(chain, sim, s_final=net.tau)
    spec = transfer_spectrum_cell(cell, sim)
    rho_ss = steady_state(spec)
    t_ss = relaxation_time(spec, net.tau)
    return cell, spec, rho_ss, t_ss
