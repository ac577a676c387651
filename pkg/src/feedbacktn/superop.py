"""Dense superoperators: vectorization conventions and Lindbladian builders.

Vectorization is row-major throughout the package:

    vec(rho)[i*d + j] = rho[i, j]

so the map X -> A X B has matrix A (x) B^T (numpy.kron, first factor indexes
the row pair).  Every other module defers to the helpers here; do not
introduce a second convention anywhere.

Multi-site operator spaces come in two equivalent index groupings:

* "global": row-major vectorization of the joint operator, i.e. the row
  index is (i_1..i_m, j_1..j_m).  This is what ``lindblad_matrix`` on a
  joint Hilbert space and ``scipy`` expm produce naturally.
* "sitewise": one d_j^2 superoperator index per site, (i_1,j_1)(i_2,j_2)...
  This is the grouping of MPSO physical legs.

``regroup_sitewise`` / ``regroup_global`` convert between the two.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isqrt

import numpy as np
from scipy.linalg import expm

from .errors import ParameterError
from .model import NodeSpec


@dataclass(frozen=True)
class SuperOpDense:
    """A dense matrix representation of a linear map on operators."""

    data: np.ndarray

    def __post_init__(self) -> None:
        mat = np.asarray(self.data, dtype=complex)
        if mat.ndim != 2:
            raise ParameterError(f"superoperator must be a matrix, got ndim={mat.ndim}")
        object.__setattr__(self, "data", mat)

    @property
    def dim_out(self) -> int:
        return self.data.shape[0]

    @property
    def dim_in(self) -> int:
        return self.data.shape[1]


def vec(rho: np.ndarray) -> np.ndarray:
    """Row-major vectorization of a matrix."""
    return np.asarray(rho, dtype=complex).reshape(-1)


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v, dtype=complex).reshape(d, d)


def trace_covector(d: int) -> np.ndarray:
    """Covector t with t . vec(rho) = tr(rho)."""
    return np.eye(d, dtype=complex).reshape(-1)


def sandwich_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of X -> a X b."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex).T)


def insertion_superop(
    a: np.ndarray | None, b: np.ndarray | None, d: int | None = None
) -> SuperOpDense:
    """Superoperator X -> a X b; ``None`` stands for the identity."""
    if a is None and b is None:
        if d is None:
            raise ParameterError("need d to build an identity insertion")
        return SuperOpDense(np.eye(d * d, dtype=complex))
    if a is None:
        a = np.eye(np.asarray(b).shape[0], dtype=complex)
    if b is None:
        b = np.eye(np.asarray(a).shape[0], dtype=complex)
    return SuperOpDense(sandwich_matrix(a, b))


def _dissipator_matrix(c: np.ndarray) -> np.ndarray:
    """Matrix of D[C] X = C X C^dag - (1/2){C^dag C, X}."""
    c = np.asarray(c, dtype=complex)
    d = c.shape[0]
    eye = np.eye(d, dtype=complex)
    cdc = c.conj().T @ c
    return (
        np.kron(c, c.conj())
        - 0.5 * np.kron(cdc, eye)
        - 0.5 * np.kron(eye, cdc.T)
    )


def _commutator_matrix(h: np.ndarray) -> np.ndarray:
    """Matrix of X -> -i [H, X]."""
    h = np.asarray(h, dtype=complex)
    eye = np.eye(h.shape[0], dtype=complex)
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def lindblad_matrix(h: np.ndarray, jumps: list[np.ndarray]) -> SuperOpDense:
    """Vectorized Lindbladian -i[H, .] + sum_c D[C]."""
    h = np.asarray(h, dtype=complex)
    d = h.shape[0]
    if h.shape != (d, d):
        raise ParameterError(f"Hamiltonian must be square, got {h.shape}")
    herm = np.max(np.abs(h - h.conj().T)) if d else 0.0
    if herm > 1e-10:
        raise ParameterError(f"Hamiltonian not Hermitian (defect {herm:.2e})")
    mat = _commutator_matrix(h)
    for c in jumps:
        c = np.asarray(c, dtype=complex)
        if c.shape != (d, d):
            raise ParameterError(f"jump operator shape {c.shape} != {(d, d)}")
        mat = mat + _dissipator_matrix(c)
    return SuperOpDense(mat)


def build_cascaded(node_a: NodeSpec, node_b: NodeSpec) -> SuperOpDense:
    """Cascaded Lindbladian for a unidirectional bond A -> B.

    Acts on B(H_A (x) H_B): coherent part (1/2)(H_A + H_B + i(R_A^dag L_B -
    L_B^dag R_A)) with A-operators lifted as X (x) 1 and B-operators as
    1 (x) X, plus a single dissipator D[R_A (x) 1 + 1 (x) L_B].
    """
    da, db = node_a.d, node_b.d
    eye_a = np.eye(da, dtype=complex)
    eye_b = np.eye(db, dtype=complex)
    ra = np.kron(node_a.jump_r, eye_b)
    lb = np.kron(eye_a, node_b.jump_l)
    h_casc = 0.5 * (
        np.kron(node_a.hamiltonian, eye_b)
        + np.kron(eye_a, node_b.hamiltonian)
        + 1j * (ra.conj().T @ lb - lb.conj().T @ ra)
    )
    mat = _commutator_matrix(h_casc) + _dissipator_matrix(ra + lb)
    return SuperOpDense(mat)


def build_boundary_left(node: NodeSpec) -> SuperOpDense:
    """Left chain boundary: -(i/2)[H, .] + D[L]."""
    mat = 0.5 * _commutator_matrix(node.hamiltonian) + _dissipator_matrix(node.jump_l)
    return SuperOpDense(mat)


def build_boundary_right(node: NodeSpec) -> SuperOpDense:
    """Right chain boundary: -(i/2)[H, .] + D[R]."""
    mat = 0.5 * _commutator_matrix(node.hamiltonian) + _dissipator_matrix(node.jump_r)
    return SuperOpDense(mat)


def gate_exponential(gen: SuperOpDense, s: float) -> SuperOpDense:
    """exp(s * gen) via Pade scaling-and-squaring.

    Eigendecomposition is deliberately avoided: cascaded Liouvillians are
    non-normal and may be defective.
    """
    mat = gen.data
    if mat.shape[0] != mat.shape[1]:
        raise ParameterError(f"generator must be square, got {mat.shape}")
    if s == 0.0:
        return SuperOpDense(np.eye(mat.shape[0], dtype=complex))
    result = expm(s * mat)
    if not np.all(np.isfinite(result)):
        raise ParameterError("matrix exponential produced non-finite entries")
    return SuperOpDense(result)


def _axes_permutation(dims: list[int], to_sitewise: bool) -> list[int]:
    m = len(dims)
    # global axis order: (i_1..i_m, j_1..j_m); sitewise: (i_1,j_1,...,i_m,j_m)
    if to_sitewise:
        return [ax for s in range(m) for ax in (s, m + s)]
    perm = [0] * (2 * m)
    for s in range(m):
        perm[s] = 2 * s
        perm[m + s] = 2 * s + 1
    return perm


def _regroup(mat: np.ndarray, dims: list[int], to_sitewise: bool) -> np.ndarray:
    dims = list(dims)
    dtot = 1
    for d in dims:
        dtot *= d
    if mat.shape != (dtot * dtot, dtot * dtot):
        raise ParameterError(
            f"matrix shape {mat.shape} does not match site dims {dims}"
        )
    if to_sitewise:
        shape = dims + dims
    else:
        shape = [x for d in dims for x in (d, d)]
    perm = _axes_permutation(dims, to_sitewise)
    row = mat.reshape(shape + shape)
    full_perm = perm + [p + 2 * len(dims) for p in perm]
    return row.transpose(full_perm).reshape(dtot * dtot, dtot * dtot)


def regroup_sitewise(mat: np.ndarray, dims: list[int]) -> np.ndarray:
    """Global-vec grouping -> one d_j^2 superoperator index per site."""
    return _regroup(mat, dims, to_sitewise=True)


def regroup_global(mat: np.ndarray, dims: list[int]) -> np.ndarray:
    """Sitewise grouping -> global row-major vectorization."""
    return _regroup(mat, dims, to_sitewise=False)


def vec_sitewise(rho: np.ndarray, dims: list[int]) -> np.ndarray:
    """Vectorize a joint operator with one d_j^2 leg per site."""
    dims = list(dims)
    m = len(dims)
    arr = np.asarray(rho, dtype=complex).reshape(dims + dims)
    perm = [ax for s in range(m) for ax in (s, m + s)]
    return arr.transpose(perm).reshape(-1)


def unvec_sitewise(v: np.ndarray, dims: list[int]) -> np.ndarray:
    """Inverse of ``vec_sitewise``; returns the joint d_tot x d_tot matrix."""
    dims = list(dims)
    m = len(dims)
    dtot = 1
    for d in dims:
        dtot *= d
    shape = [x for d in dims for x in (d, d)]
    arr = np.asarray(v, dtype=complex).reshape(shape)
    perm = [0] * (2 * m)
    for s in range(m):
        perm[s] = 2 * s
        perm[m + s] = 2 * s + 1
    return arr.transpose(perm).reshape(dtot, dtot)


def choi_matrix(superop: np.ndarray, d: int) -> np.ndarray:
    """Choi matrix C[(i,k),(j,l)] = Phi(|i><j|)[k,l] of a d^2 x d^2 map."""
    return (
        np.asarray(superop, dtype=complex)
        .reshape(d, d, d, d)
        .transpose(2, 0, 3, 1)
        .reshape(d * d, d * d)
    )


def square_root_dim(dim: int) -> int:
    d = isqrt(dim)
    if d * d != dim:
        raise ParameterError(f"operator-space dimension {dim} is not a perfect square")
    return d
