"""Physical model declarations: nodes, networks, and numerical parameters.

Conventions used throughout the package:

* hbar = 1 and all rates are expressed in units of a reference rate Gamma
  (for the standard two-level node with gamma_l = gamma_r = 1/2 this is the
  total decay rate); times are in units of 1/Gamma.
* Two-level basis ordering is (g, e), i.e. index 0 = ground, 1 = excited.
* The waveguide propagation phase is folded into the left-moving jump
  operator at construction time; no separate phase field survives.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError

HERMITICITY_TOL = 1e-12

TOPOLOGIES = ("single-feedback", "bidirectional-pair", "unidirectional-ring")


@dataclass(frozen=True)
class NodeSpec:
    """A quantum optical node coupled to the waveguide at one point.

    Attributes:
        d: local Hilbert space dimension (>= 2).
        hamiltonian: d x d Hermitian matrix (rotating frame, units of Gamma).
        jump_l: left-moving jump operator, includes sqrt(gamma_l) e^{i phi}.
        jump_r: right-moving jump operator, includes sqrt(gamma_r).
        label: optional human-readable tag used in outputs.
    """

    d: int
    hamiltonian: np.ndarray
    jump_l: np.ndarray
    jump_r: np.ndarray
    label: str = "node"

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ParameterError(f"node dimension must be >= 2, got {self.d}")
        for name in ("hamiltonian", "jump_l", "jump_r"):
            mat = np.asarray(getattr(self, name), dtype=complex)
            if mat.shape != (self.d, self.d):
                raise ParameterError(
                    f"{name} must be {self.d}x{self.d}, got {mat.shape}"
                )
            mat = mat.copy()
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)
        herm_defect = np.max(np.abs(self.hamiltonian - self.hamiltonian.conj().T))
        if herm_defect > HERMITICITY_TOL:
            raise ParameterError(
                f"hamiltonian is not Hermitian (max |H - H^dag| = {herm_defect:.3e})"
            )


@dataclass(frozen=True)
class NetworkSpec:
    """A network of nodes sharing a single inter-node delay time.

    Only equal-delay topologies are supported: a single node with feedback
    (delay tau for the full round trip), a two-node bidirectional pair, and
    an n-node unidirectional ring.
    """

    nodes: tuple[NodeSpec, ...]
    tau: float
    topology: str = "single-feedback"

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if self.tau <= 0:
            raise ParameterError(f"delay tau must be positive, got {self.tau}")
        if self.topology not in TOPOLOGIES:
            raise ParameterError(
                f"unknown topology {self.topology!r}; expected one of {TOPOLOGIES}"
            )
        n = len(self.nodes)
        if self.topology == "single-feedback" and n != 1:
            raise ParameterError(f"single-feedback requires 1 node, got {n}")
        if self.topology == "bidirectional-pair" and n != 2:
            raise ParameterError(f"bidirectional-pair requires 2 nodes, got {n}")
        if self.topology == "unidirectional-ring" and n < 2:
            raise ParameterError(f"unidirectional-ring requires >= 2 nodes, got {n}")

    @property
    def n(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class SimParams:
    """Numerical parameters for the tensor-network pipelines.

    ``k`` (Trotter steps per delay time) is derived by ``validate_network``
    and must not be set by hand.
    """

    dt: float
    chi_max: int = 100
    svd_cutoff: float = 1e-12
    t_final: float = 0.0
    trotter_order: int = 1
    k: int = 0
    # accuracy guards and solver tolerances
    trace_warn: float = 1e-6
    positivity_tol: float = -1e-8
    lambda_drift_tol: float = 1e-3
    degeneracy_gap: float = 1e-8
    fixed_point_tol: float = 1e-10
    fixed_point_maxiter: int = 1000
    eig_tol: float = 1e-12
    joint_dim_max: int = 64
    boundary_bytes_max: int = 1 << 30

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.chi_max < 1:
            raise ParameterError(f"chi_max must be >= 1, got {self.chi_max}")
        if self.svd_cutoff < 0:
            raise ParameterError(f"svd_cutoff must be >= 0, got {self.svd_cutoff}")
        if self.trotter_order not in (1, 2):
            raise ParameterError("trotter_order must be 1 or 2")


def sigma_minus() -> np.ndarray:
    """|g><e| in the (g, e) basis."""
    op = np.zeros((2, 2), dtype=complex)
    op[0, 1] = 1.0
    return op


def make_two_level_node(
    omega: float,
    delta: float,
    gamma_l: float,
    gamma_r: float,
    phi: float,
    label: str = "node",
) -> NodeSpec:
    """Build a driven two-level node.

    H = -delta |e><e| - (omega/2)(|g><e| + |e><g|), jump operators
    L = sqrt(gamma_l) e^{i phi} |g><e| and R = sqrt(gamma_r) |g><e|.
    """
    if gamma_l < 0 or gamma_r < 0:
        raise ParameterError(
            f"decay rates must be non-negative, got gamma_l={gamma_l}, gamma_r={gamma_r}"
        )
    sm = sigma_minus()
    ham = -delta * np.diag([0.0, 1.0]).astype(complex)
    ham -= 0.5 * omega * (sm + sm.conj().T)
    jump_l = np.sqrt(gamma_l) * np.exp(1j * phi) * sm
    jump_r = np.sqrt(gamma_r) * sm
    return NodeSpec(d=2, hamiltonian=ham, jump_l=jump_l, jump_r=jump_r, label=label)


def validate_network(net: NetworkSpec, sim: SimParams) -> tuple[NetworkSpec, SimParams]:
    """Check network/parameter invariants and fix k = tau/dt.

    tau/dt must be an integer to within a relative adjustment of 1e-9; the
    commensurate grid is what makes delay shifts map to exact replica shifts.
    """
    ratio = net.tau / sim.dt
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise ParameterError(
            f"tau/dt = {ratio!r} is not an integer within 1e-9; "
            "choose dt commensurate with the delay"
        )
    return net, replace(sim, k=k)


def single_node_network(node: NodeSpec, tau: float) -> NetworkSpec:
    return NetworkSpec(nodes=(node,), tau=tau, topology="single-feedback")
