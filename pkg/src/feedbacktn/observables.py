"""Output-field observables: input-output expansion, steady spectrum, g2,
and operator-entropy scans.

The detected output field at the open side is a two-path interference of
the direct emission and the emission one delay earlier:

    b_out(t) ~ sqrt(gamma_L) c(t) + sqrt(gamma_R) e^{i phi} c(t - tau)

(the vacuum input term never contributes to normally ordered expectations).
Time shifts by tau map to adjacent replica sites exactly; the commensurate
grid guarantees no interpolation is ever needed.

g2 is implemented in the conventional time-ordered form
< b^dag(s) b^dag(s+t') b(s+t') b(s) > (earlier time outermost), evaluated
by forward regression.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AccuracyError, ParameterError
from .model import NetworkSpec, NodeSpec, SimParams
from .mpso import max_cut_entropy
from .propagator import ChainSpec, evolve_propagator
from .steady import (
    SteadyWindow,
    UnitCellTensors,
    build_steady_window,
    itebd_propagator,
    steady_correlator,
    steady_correlator_scan,
    steady_pipeline,
)


@dataclass(frozen=True)
class OutputFieldTerm:
    """One system term of a b_out factor: coefficient, operator, time shift."""

    coefficient: complex
    operator: np.ndarray
    time: float
    dagger: bool


def output_field_params(node: NodeSpec) -> tuple[float, float, float, np.ndarray]:
    """Extract (gamma_L, gamma_R, phi, bare lowering operator) from a node.

    Requires the two jump operators to be proportional (true for every
    supported example); phi is their relative phase.
    """
    if node.d != 2:
        raise ParameterError("output-field observables support two-level nodes")
    c_l = node.jump_l[0, 1]
    c_r = node.jump_r[0, 1]
    if abs(node.jump_l[1, 0]) > 1e-12 or abs(node.jump_r[1, 0]) > 1e-12:
        raise ParameterError("jump operators must be pure lowering operators")
    gamma_l = float(abs(c_l) ** 2)
    gamma_r = float(abs(c_r) ** 2)
    if gamma_l > 0 and gamma_r > 0:
        phi = float(np.angle(c_l / c_r))
    else:
        phi = 0.0
    lower = np.zeros((2, 2), dtype=complex)
    lower[0, 1] = 1.0
    return gamma_l, gamma_r, phi, lower


def expand_output_correlator(
    pattern: list[tuple[bool, float]],
    node: NodeSpec,
    tau: float,
) -> list[tuple[complex, list[OutputFieldTerm]]]:
    """Distribute a normally ordered b_out product over its system terms.

    ``pattern`` lists (dagger, time) factors in product order; all daggered
    factors must precede all undaggered ones.  Each factor contributes the
    direct term sqrt(gamma_L) c at its own time and the delayed term
    sqrt(gamma_R) e^{i phi} c at time - tau; vacuum input terms are dropped,
    leaving exactly 2^p system terms for p factors.
    """
    seen_undagger = False
    for dagger, _ in pattern:
        if dagger and seen_undagger:
            raise ParameterError("pattern is not normally ordered")
        if not dagger:
            seen_undagger = True
    gamma_l, gamma_r, phi, lower = output_field_params(node)
    raise_op = lower.conj().T
    factor_terms: list[list[OutputFieldTerm]] = []
    for dagger, t in pattern:
        op = raise_op if dagger else lower
        direct = OutputFieldTerm(
            coefficient=np.sqrt(gamma_l), operator=op, time=t, dagger=dagger
        )
        phase = np.exp(-1j * phi) if dagger else np.exp(1j * phi)
        delayed = OutputFieldTerm(
            coefficient=np.sqrt(gamma_r) * phase, operator=op, time=t - tau,
            dagger=dagger,
        )
        factor_terms.append([direct, delayed])
    expanded: list[tuple[complex, list[OutputFieldTerm]]] = []
    n = len(pattern)
    for choice in range(2 ** n):
        coeff = 1.0 + 0.0j
        ops: list[OutputFieldTerm] = []
        for pos in range(n):
            term = factor_terms[pos][(choice >> pos) & 1]
            coeff *= term.coefficient
            ops.append(term)
        expanded.append((coeff, ops))
    return expanded


def _term_to_steady_insertions(
    ops: list[OutputFieldTerm],
    t_ref: float,
    delta_r: float,
    tau: float,
) -> list[tuple[int, int, np.ndarray]]:
    """Map a system term to steady-window insertions (site, boundary, matrix).

    ``t_ref`` anchors the latest possible time at (site 1, column end); the
    window layers split local time at tau - delta_r, so an operator at
    t_ref - (j tau + delta_r) sits at (site j+1, boundary 1) and one at
    t_ref - j tau at (site j+1, boundary 2).

    Output-field operators at distinct times live on distinct bath bins and
    commute; input-output telescoping turns each into system insertions at
    its wire points with the side fixed by the dagger alone: undaggered
    pieces multiply the state from the left (ket side), daggered pieces
    from the right.  At a shared locus, ket pieces compose in reverse
    product order and bra pieces in product order.
    """
    eye = np.eye(2, dtype=complex)
    loci: list[tuple[int, int, np.ndarray, bool, int]] = []
    for pos, term in enumerate(ops):
        delta = t_ref - term.time
        steps = delta / tau
        if delta_r > 1e-12:
            frac = delta - np.floor(steps + 1e-9) * tau
            if abs(frac) < 1e-9:
                site = int(round(steps)) + 1
                boundary = 2
            elif abs(frac - delta_r) < 1e-9:
                site = int(np.floor(steps + 1e-9)) + 1
                boundary = 1
            else:
                raise ParameterError(
                    f"operator time offset {delta} incommensurate with window"
                )
        else:
            if abs(steps - round(steps)) > 1e-9:
                raise ParameterError(
                    f"operator time offset {delta} incommensurate with window"
                )
            site = int(round(steps)) + 1
            boundary = 2
        ket_side = not term.dagger
        if ket_side:
            mat = np.kron(term.operator, eye)
        else:
            mat = np.kron(eye, term.operator.T)
        loci.append((site, boundary, mat, ket_side, pos))
    ket = [x for x in loci if x[3]]
    bra = [x for x in loci if not x[3]]
    ordered = [(s, b, m) for s, b, m, _, _ in reversed(ket)]
    ordered += [(s, b, m) for s, b, m, _, _ in bra]
    return ordered


def term_to_transient_insertions(
    ops: list[OutputFieldTerm], t_ref: float, tau: float
):
    """Map a system term to finite-chain insertions at absolute times.

    Times are measured from ``t_ref`` (each term time is an offset <= 0);
    sides follow the dagger rule, with ket pieces composed in reverse
    product order and bra pieces in product order at coincident loci.
    """
    from .contraction import Insertion
    from .superop import SuperOpDense, sandwich_matrix

    eye = np.eye(ops[0].operator.shape[0], dtype=complex)
    loci = []
    for pos, term in enumerate(ops):
        t_abs = t_ref + term.time
        if t_abs < -1e-12:
            raise ParameterError("operator time precedes the initial time")
        site = int(np.ceil(t_abs / tau - 1e-12)) or 1
        local = t_abs - (site - 1) * tau
        if term.dagger:
            mat = sandwich_matrix(eye, term.operator)
        else:
            mat = sandwich_matrix(term.operator, eye)
        loci.append((site, local, mat, not term.dagger, pos))
    ket = [x for x in loci if x[3]]
    bra = [x for x in loci if not x[3]]
    ordered = [(s, lt, m) for s, lt, m, _, _ in reversed(ket)]
    ordered += [(s, lt, m) for s, lt, m, _, _ in bra]
    ordered.sort(key=lambda x: ((x[0] - 1) * tau + x[1]))
    return [Insertion(s, lt, SuperOpDense(m)) for s, lt, m in ordered]


def steady_output_pair_correlator(
    windows: dict[float, SteadyWindow],
    node: NodeSpec,
    tau: float,
    tprimes: np.ndarray,
) -> np.ndarray:
    """G(t') = <b_out^dag(t) b_out(t - t')>_ss on a grid of t' >= 0.

    ``windows`` maps the layer split delta_r to a prepared SteadyWindow;
    every t' and its tau-shifted partners reuse the window at
    delta_r = t' mod tau.
    """
    values = np.zeros(len(tprimes), dtype=complex)
    for idx, tp in enumerate(tprimes):
        delta_r, window = _window_for(windows, tp, tau)
        pattern = [(True, 0.0), (False, -tp)]
        total = 0.0 + 0.0j
        for coeff, ops in expand_output_correlator(pattern, node, tau):
            ins = _term_to_steady_insertions(ops, 0.0, delta_r, tau)
            total += coeff * steady_correlator(window, ins)
        values[idx] = total
    return values


def _bare_pair_scan(
    window: SteadyWindow,
    lower: np.ndarray,
    delta_r: float,
    n_windows: int,
) -> np.ndarray:
    """g(u) = <c^dag(t) c(t-u)> for u = (mbar-1) tau + delta_r, mbar = 1..n.

    The raising operator sits at (site 1, column end); the lowering operator
    slides leftward at the layer boundary (local time tau - delta_r), both
    as ket-side insertions per quantum regression.
    """
    eye = np.eye(2, dtype=complex)
    raise_mat = np.kron(lower.conj().T, eye)
    lower_mat = np.kron(lower, eye)
    early_boundary = 1 if delta_r > 1e-12 else 2
    return steady_correlator_scan(
        window,
        early=[(early_boundary, lower_mat)],
        late=[(2, raise_mat)],
        n_windows=n_windows,
    )


def _window_for(
    windows: dict[float, SteadyWindow], tprime: float, tau: float
) -> tuple[float, SteadyWindow]:
    delta_r = tprime - np.floor(tprime / tau + 1e-9) * tau
    if delta_r < 1e-9:
        delta_r = 0.0
    for key, window in windows.items():
        if abs(key - delta_r) < 1e-9:
            return key, window
    raise ParameterError(f"no steady window prepared for delta_r = {delta_r}")


def prepare_steady_windows(
    net: NetworkSpec,
    sim: SimParams,
    delta_rs: list[float],
) -> dict[float, SteadyWindow]:
    """Run one iTEBD pass with checkpoints and build all required windows."""
    chain = ChainSpec(list(net.nodes), 2)
    needed = sorted({net.tau - dr for dr in delta_rs} | set(delta_rs) | {net.tau})
    _, checkpoints = itebd_propagator(
        chain, sim, s_final=net.tau, checkpoint_times=needed
    )
    windows: dict[float, SteadyWindow] = {}
    for dr in sorted(set(delta_rs)):
        first = _nearest_checkpoint(checkpoints, net.tau - dr)
        second = _nearest_checkpoint(checkpoints, dr)
        windows[dr] = build_steady_window(first, second, sim)
    return windows


def _nearest_checkpoint(
    checkpoints: dict[float, UnitCellTensors], s: float
) -> UnitCellTensors:
    key = min(checkpoints, key=lambda x: abs(x - s))
    if abs(key - s) > 1e-6:
        raise ParameterError(f"no iTEBD checkpoint near s = {s}")
    return checkpoints[key]


def steady_mean_output(net: NetworkSpec, sim: SimParams) -> complex:
    """|<b_out>_ss| phase-fixed expectation (sqrt(gL) + sqrt(gR) e^{i phi}) <c>."""
    gamma_l, gamma_r, phi, lower = output_field_params(net.nodes[0])
    _, _, rho_ss, _ = steady_pipeline(net, sim)
    mean_c = np.trace(lower @ rho_ss)
    return (np.sqrt(gamma_l) + np.sqrt(gamma_r) * np.exp(1j * phi)) * mean_c


def spectrum_from_correlator(
    g_vals: np.ndarray, dt: float, nu_grid: np.ndarray
) -> np.ndarray:
    """S(nu) = 2 Re integral_0^T G(t') e^{-i nu t'} dt' by plain trapezoid."""
    t = np.arange(len(g_vals)) * dt
    out = np.zeros(len(nu_grid))
    for i, nu in enumerate(nu_grid):
        integrand = g_vals * np.exp(-1j * nu * t)
        out[i] = 2.0 * np.real(np.trapezoid(integrand, dx=dt))
    return out


def steady_spectrum(
    net: NetworkSpec,
    sim: SimParams,
    nu_grid: np.ndarray,
    t_max: float,
    sample_stride: int = 1,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Steady output spectrum S(nu) and its incoherent part.

    Samples G(t') on the (possibly strided) dt grid up to t_max (a multiple
    of tau), Fourier transforms by trapezoid with no windowing function, and
    subtracts |<b_out>|^2 for the incoherent part.  A window warning fires
    when the correlator has not decayed at t_max.
    """
    tau = net.tau
    node = net.nodes[0]
    if abs(t_max / tau - round(t_max / tau)) > 1e-9:
        raise ParameterError("t_max must be a multiple of tau")
    gamma_l, gamma_r, phi, lower = output_field_params(node)
    step = sim.dt * sample_stride
    n_samples = int(round(t_max / step)) + 1
    tprimes = np.arange(n_samples) * step
    # the bare two-point function g(u) is needed out to t_max + tau
    n_per_tau = int(round(tau / step))
    delta_rs = [0.0 if k == 0 else k * step for k in range(n_per_tau)]
    windows = prepare_steady_windows(net, sim, delta_rs)
    m_windows = int(round(t_max / tau)) + 2
    g_table: dict[int, np.ndarray] = {}
    for k, dr in enumerate(delta_rs):
        g_table[k] = _bare_pair_scan(windows[dr], lower, dr, m_windows)

    def g_of(u: float) -> complex:
        if u < 0:
            return np.conj(g_of(-u))
        steps = int(round(u / step))
        k = steps % n_per_tau
        mbar = steps // n_per_tau
        return complex(g_table[k][mbar])

    g_vals = np.array([
        (gamma_l + gamma_r) * g_of(tp)
        + np.sqrt(gamma_l * gamma_r) * (
            np.exp(1j * phi) * g_of(tp + tau)
            + np.exp(-1j * phi) * g_of(tp - tau)
        )
        for tp in tprimes
    ])
    coherent = abs(steady_mean_output(net, sim)) ** 2
    g_inc = g_vals - coherent
    flux = g_vals[0].real
    if flux > 0 and abs(g_inc[-1]) > 1e-4 * flux:
        warnings.warn(
            f"correlator not decayed at t_max: |G_inc(T)| = {abs(g_inc[-1]):.3e} "
            f"vs G(0) = {flux:.3e}",
            stacklevel=2,
        )
    s_nu = spectrum_from_correlator(g_vals, step, nu_grid)
    s_inc = spectrum_from_correlator(g_inc, step, nu_grid)
    diag = {"flux": flux, "coherent": coherent}
    return s_nu, s_inc, diag


def steady_g2(
    net: NetworkSpec,
    sim: SimParams,
    tprime_grid: np.ndarray,
    windows: dict[float, SteadyWindow] | None = None,
) -> np.ndarray:
    """Normalized second-order output coincidence g2(t').

    Numerator: the 16-term expansion of the time-ordered coincidence
    correlator; denominator: the squared steady flux <b_out^dag b_out>.
    """
    tau = net.tau
    node = net.nodes[0]
    delta_rs = sorted({float(tp - np.floor(tp / tau + 1e-9) * tau)
                       for tp in tprime_grid} | {0.0})
    delta_rs = [0.0 if dr < 1e-9 else dr for dr in delta_rs]
    if windows is None:
        windows = prepare_steady_windows(net, sim, delta_rs)
    flux = steady_output_pair_correlator(
        windows, node, tau, np.array([0.0])
    )[0].real
    if flux < 1e-12:
        raise AccuracyError("no output flux: g2 undefined")
    out = np.zeros(len(tprime_grid))
    for idx, tp in enumerate(tprime_grid):
        delta_r, window = _window_for(windows, tp, tau)
        # earlier time outermost; later time (the peak) at the anchor
        pattern = [(True, -tp), (True, 0.0), (False, 0.0), (False, -tp)]
        total = 0.0 + 0.0j
        for coeff, ops in expand_output_correlator(pattern, node, tau):
            ins = _term_to_steady_insertions(ops, 0.0, delta_r, tau)
            total += coeff * steady_correlator(window, ins)
        if abs(total.imag) > 1e-8 * max(abs(total.real), 1.0):
            warnings.warn(
                f"g2 numerator has imaginary residue {total.imag:.3e}",
                stacklevel=2,
            )
        out[idx] = total.real / flux ** 2
    return out


def entropy_scan(
    net_builder,
    sim_builder,
    omegas: list[float],
    gamma_taus: list[float],
    phis: list[float],
    m_sites: int = 20,
    sample_every: int = 5,
) -> list[dict]:
    """Max-cut entropy during evolution and steady-state entropy per grid point.

    ``net_builder(omega, gamma_tau, phi)`` and ``sim_builder(gamma_tau)``
    supply the physical and numerical parameters; S_max is the maximum over
    sampled evolution steps of the maximum-cut entropy of the m-site
    propagator, S_ss the unit-cell bond entropy of the infinite chain at tau.
    """
    rows: list[dict] = []
    for omega in omegas:
        for gtau in gamma_taus:
            for phi in phis:
                net = net_builder(omega, gtau, phi)
                sim = sim_builder(gtau)
                chain = ChainSpec(list(net.nodes), m_sites)
                tracker = {"s_max": 0.0}

                def cb(step, s_reached, psi, tracker=tracker):
                    if step % sample_every == 0:
                        tracker["s_max"] = max(
                            tracker["s_max"], max_cut_entropy(psi)
                        )

                psi = evolve_propagator(chain, net.tau, sim, callback=cb)
                tracker["s_max"] = max(tracker["s_max"], max_cut_entropy(psi))
                cell = itebd_propagator(
                    ChainSpec(list(net.nodes), 2), sim, s_final=net.tau
                )
                rows.append({
                    "omega": omega,
                    "gamma_tau": gtau,
                    "phi": phi,
                    "s_max": tracker["s_max"],
                    "s_ss": cell.bond_entropy(),
                    "discarded_weight": psi.discarded_weight,
                })
    return rows
