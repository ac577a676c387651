"""Matrix-product superoperators and their primitive manipulations.

A site tensor has shape (bond_left, D, bond_right) with physical dimension
D = d^4 grouped as (out: d^2) x (in: d^2), out index major.  The MPSO as a
whole represents a linear map on the m-fold replicated operator space; its
dense materialization uses one d_j^2 leg per site (see ``superop`` for the
grouping conventions).

No canonical form is maintained between gate applications (the gates are
non-unitary, so strict canonicality is unavailable); a full gauging sweep
runs only when entropies are requested.  Accuracy is tracked through the
cumulative discarded weight.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ParameterError, ResourceGuardError
from .superop import SuperOpDense, regroup_sitewise

_CHECKPOINT_MAGIC = b"MPSO"
_CHECKPOINT_VERSION = 1


@dataclass
class SiteTensor:
    """Rank-3 site tensor with local operator-space dims recorded."""

    data: np.ndarray
    d: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=complex)
        if arr.ndim != 3:
            raise ParameterError(f"site tensor must be rank 3, got {arr.ndim}")
        if arr.shape[1] != self.d ** 4:
            raise ParameterError(
                f"physical dimension {arr.shape[1]} != d^4 = {self.d ** 4}"
            )
        if not np.all(np.isfinite(arr)):
            raise ParameterError("site tensor contains non-finite entries")
        self.data = arr

    @property
    def bond_left(self) -> int:
        return self.data.shape[0]

    @property
    def bond_right(self) -> int:
        return self.data.shape[2]


@dataclass
class MPSO:
    """Tensor train of site tensors plus truncation bookkeeping."""

    sites: list[SiteTensor]
    discarded_weight: float = 0.0
    bond_singular_values: list[np.ndarray] | None = field(default=None)

    def __post_init__(self) -> None:
        if not self.sites:
            raise ParameterError("MPSO needs at least one site")
        for left, right in zip(self.sites, self.sites[1:]):
            if left.bond_right != right.bond_left:
                raise ParameterError(
                    f"bond mismatch: {left.bond_right} vs {right.bond_left}"
                )
        if self.sites[0].bond_left != 1 or self.sites[-1].bond_right != 1:
            raise ParameterError("outer bonds must have dimension 1")

    @property
    def m(self) -> int:
        return len(self.sites)

    @property
    def dims(self) -> list[int]:
        return [s.d for s in self.sites]

    @property
    def bond_dims(self) -> list[int]:
        return [s.bond_right for s in self.sites[:-1]]

    def copy(self) -> "MPSO":
        return MPSO(
            sites=[SiteTensor(s.data.copy(), s.d) for s in self.sites],
            discarded_weight=self.discarded_weight,
        )


def identity_mpso(m: int, d: int = 2) -> MPSO:
    """Product MPSO representing the identity map on m replicas."""
    if m < 1:
        raise ParameterError(f"need at least one site, got m={m}")
    phys = np.eye(d * d, dtype=complex).reshape(-1)  # out == in
    site = phys.reshape(1, d ** 4, 1)
    return MPSO(sites=[SiteTensor(site.copy(), d) for _ in range(m)])


def _svd_robust(mat: np.ndarray):
    try:
        return scipy.linalg.svd(
            mat, full_matrices=False, lapack_driver="gesdd",
            check_finite=False, overwrite_a=False,
        )
    except (np.linalg.LinAlgError, ValueError):
        return scipy.linalg.svd(
            np.nan_to_num(mat), full_matrices=False, lapack_driver="gesvd",
            check_finite=False,
        )


def svd_truncate(
    mat: np.ndarray, chi_max: int, svd_cutoff: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """SVD with relative cutoff and hard bond cap.

    Returns (U, S, Vh, discarded) where discarded is the truncated relative
    weight sum(sigma_dropped^2) / sum(sigma^2).  The relative cutoff is
    floored at 1e-100: sectors that far below the leading singular value
    are pure rounding noise, and carrying them lets repeated products decay
    into denormal floats that stall LAPACK.
    """
    u, s, vh = _svd_robust(mat)
    total = float(np.sum(s ** 2))
    if total == 0.0:
        return u[:, :1], s[:1], vh[:1], 0.0
    keep = int(np.sum(s >= max(svd_cutoff, 1e-100) * s[0]))
    keep = max(1, min(keep, chi_max))
    discarded = float(np.sum(s[keep:] ** 2) / total)
    return u[:, :keep], s[:keep], vh[:keep], discarded


def _apply_two_site_inplace(
    psi: MPSO,
    j: int,
    gate_sitewise: np.ndarray,
    chi_max: int,
    svd_cutoff: float,
) -> None:
    """In-place two-site gate application; hot path of the TEBD loop."""
    t1, t2 = psi.sites[j], psi.sites[j + 1]
    da, db = t1.d, t2.d
    d2a, d2b = da * da, db * db
    gten = gate_sitewise.reshape(d2a, d2b, d2a, d2b)
    chi_l, chi_m, chi_r = t1.bond_left, t1.bond_right, t2.bond_right
    a = t1.data.reshape(chi_l, d2a, d2a, chi_m)  # (l, o1, i1, m)
    b = t2.data.reshape(chi_m, d2b, d2b, chi_r)  # (m, o2, i2, r)
    theta = np.tensordot(a, b, axes=(3, 0))  # (l, o1, i1, o2, i2, r)
    theta = np.tensordot(gten, theta, axes=([2, 3], [1, 3]))  # (o1, o2, l, i1, i2, r)
    theta = theta.transpose(2, 0, 3, 1, 4, 5)
    mat = theta.reshape(chi_l * da ** 4, db ** 4 * chi_r)
    u, s, vh, discarded = svd_truncate(mat, chi_max, svd_cutoff)
    chi_new = s.shape[0]
    psi.sites[j] = SiteTensor(u.reshape(chi_l, da ** 4, chi_new), da)
    psi.sites[j + 1] = SiteTensor(
        (s[:, None] * vh).reshape(chi_new, db ** 4, chi_r), db
    )
    psi.discarded_weight += discarded
    psi.bond_singular_values = None


def apply_two_site_gate(
    psi: MPSO,
    j: int,
    gate: SuperOpDense,
    chi_max: int,
    svd_cutoff: float,
    gate_is_sitewise: bool = False,
) -> MPSO:
    """Apply a two-site gate to the output legs of sites j, j+1 (0-based bond j).

    The gate is the d_a^2 d_b^2 square matrix of a superoperator on the
    joint pair space in the global-vec grouping (as built by ``superop``);
    it composes from the left, W o E, leaving input legs untouched.  The
    result is re-split by SVD with the configured truncation.
    """
    m = psi.m
    if not 0 <= j <= m - 2:
        raise ParameterError(f"bond index {j} out of range for m={m}")
    t1, t2 = psi.sites[j], psi.sites[j + 1]
    da, db = t1.d, t2.d
    if gate.data.shape != (da * da * db * db,) * 2:
        raise ParameterError(
            f"gate dimension {gate.data.shape} does not match sites "
            f"({da}^2 x {db}^2)"
        )
    gmat = gate.data if gate_is_sitewise else regroup_sitewise(gate.data, [da, db])
    out = psi.copy()
    _apply_two_site_inplace(out, j, gmat, chi_max, svd_cutoff)
    return out


def _apply_single_site_inplace(psi: MPSO, j: int, gate: np.ndarray) -> None:
    t = psi.sites[j]
    d2 = t.d * t.d
    arr = t.data.reshape(t.bond_left, d2, d2, t.bond_right)
    arr = np.einsum("ab,lbir->lair", gate, arr, optimize=True)
    psi.sites[j] = SiteTensor(arr.reshape(t.bond_left, d2 * d2, t.bond_right), t.d)
    psi.bond_singular_values = None


def apply_single_site(psi: MPSO, j: int, gate: SuperOpDense) -> MPSO:
    """Contract a d^2 x d^2 gate with the output sub-leg of site j."""
    if not 0 <= j < psi.m:
        raise ParameterError(f"site index {j} out of range for m={psi.m}")
    t = psi.sites[j]
    d2 = t.d * t.d
    if gate.data.shape != (d2, d2):
        raise ParameterError(
            f"gate dimension {gate.data.shape} does not match site d^2={d2}"
        )
    out = psi.copy()
    _apply_single_site_inplace(out, j, gate.data)
    return out


def canonical_compress(psi: MPSO, chi_max: int, svd_cutoff: float) -> None:
    """In-place gauge sweep plus optimal re-truncation.

    A left-to-right QR pass makes the train left-orthogonal, after which
    the right-to-left SVD pass sees the true Schmidt values of every bond;
    truncating there is optimal.  Without this, per-gate truncations of a
    non-unitary evolution operate in a drifting gauge whose local singular
    values can overstate the tail by orders of magnitude.  Mutates ``psi``.
    """
    m = psi.m
    if m == 1:
        return
    for j in range(m - 1):
        t = psi.sites[j]
        mat = t.data.reshape(t.bond_left * t.data.shape[1], t.bond_right)
        q, r = np.linalg.qr(mat)
        chi = q.shape[1]
        psi.sites[j] = SiteTensor(q.reshape(t.bond_left, t.data.shape[1], chi),
                                  t.d)
        nxt = psi.sites[j + 1]
        psi.sites[j + 1] = SiteTensor(np.tensordot(r, nxt.data, axes=(1, 0)),
                                      nxt.d)
    for j in range(m - 1, 0, -1):
        t = psi.sites[j]
        mat = t.data.reshape(t.bond_left, t.data.shape[1] * t.bond_right)
        u, s, vh, discarded = svd_truncate(mat, chi_max, svd_cutoff)
        chi = s.shape[0]
        psi.sites[j] = SiteTensor(vh.reshape(chi, t.data.shape[1],
                                             t.bond_right), t.d)
        prev = psi.sites[j - 1]
        carried = np.tensordot(prev.data, u * s[None, :], axes=(2, 0))
        psi.sites[j - 1] = SiteTensor(carried, prev.d)
        psi.discarded_weight += discarded
    psi.bond_singular_values = None


def gauge_and_entropies(psi: MPSO) -> list[tuple[np.ndarray, float]]:
    """Full gauging sweep; returns (normalized singular values, S) per bond.

    A left-to-right QR sweep followed by a right-to-left SVD sweep makes the
    per-bond singular values the true Schmidt coefficients of the full
    tensor.  S = -sum sigma_bar^2 log2 sigma_bar^2 with sigma_bar the
    2-norm-normalized values.  The input is not modified.
    """
    work = psi.copy()
    m = work.m
    if m == 1:
        work.bond_singular_values = []
        return []
    # left-to-right orthogonalization
    for j in range(m - 1):
        t = work.sites[j]
        mat = t.data.reshape(t.bond_left * t.data.shape[1], t.bond_right)
        q, r = np.linalg.qr(mat)
        chi = q.shape[1]
        work.sites[j] = SiteTensor(
            q.reshape(t.bond_left, t.data.shape[1], chi), t.d
        )
        nxt = work.sites[j + 1]
        work.sites[j + 1] = SiteTensor(
            np.tensordot(r, nxt.data, axes=(1, 0)), nxt.d
        )
    # right-to-left SVD sweep collecting true Schmidt values
    results: list[tuple[np.ndarray, float]] = [None] * (m - 1)  # type: ignore[list-item]
    for j in range(m - 1, 0, -1):
        t = work.sites[j]
        mat = t.data.reshape(t.bond_left, t.data.shape[1] * t.bond_right)
        u, s, vh = _svd_robust(mat)
        norm = np.linalg.norm(s)
        sbar = s / norm if norm > 0 else s
        nonzero = sbar[sbar > 1e-300] ** 2
        entropy = float(-np.sum(nonzero * np.log2(nonzero))) if nonzero.size else 0.0
        results[j - 1] = (sbar.copy(), entropy)
        chi = s.shape[0]
        work.sites[j] = SiteTensor(
            vh.reshape(chi, t.data.shape[1], t.bond_right), t.d
        )
        prev = work.sites[j - 1]
        carried = np.tensordot(prev.data, u * s[None, :], axes=(2, 0))
        work.sites[j - 1] = SiteTensor(carried, prev.d)
    return results


def max_cut_entropy(psi: MPSO) -> float:
    """Maximum operator entanglement entropy over all bipartitions."""
    ents = gauge_and_entropies(psi)
    return max((e for _, e in ents), default=0.0)


def materialize(psi: MPSO) -> SuperOpDense:
    """Dense matrix of the MPSO with sitewise index grouping (out_1..out_m | in_1..in_m).

    Guarded to prod(d_j^4) <= 4096^2 (m <= 6 at d = 2).
    """
    total = 1
    for s in psi.sites:
        total *= s.d ** 4
    if total > 4096 ** 2:
        raise ResourceGuardError(
            f"materialization of size {total} exceeds the 4096^2 guard"
        )
    acc = psi.sites[0].data  # (1, p1, chi)
    for site in psi.sites[1:]:
        acc = np.tensordot(acc, site.data, axes=(acc.ndim - 1, 0))
    acc = acc.reshape(acc.shape[1:-1])  # (p_1, ..., p_m)
    m = psi.m
    dims = psi.dims
    # split each p_j = (o_j, i_j), then group (o_1..o_m | i_1..i_m)
    shape = [x for d in dims for x in (d * d, d * d)]
    acc = acc.reshape(shape)
    perm = list(range(0, 2 * m, 2)) + list(range(1, 2 * m, 2))
    acc = acc.transpose(perm)
    dout = 1
    for d in dims:
        dout *= d * d
    return SuperOpDense(acc.reshape(dout, dout))


def trace_out_covector(d: int) -> np.ndarray:
    """Covector on a d^4 physical leg: feed maximally mixed input, trace output."""
    tr = np.eye(d, dtype=complex).reshape(-1)
    return np.kron(tr, tr) / d


def trace_out_last(psi: MPSO, n_sites: int = 1) -> MPSO:
    """(1/d) tr over the last ``n_sites`` replicas; shortens the chain.

    Contracts each final site's physical leg with the trace-out covector and
    absorbs the resulting bond vector into its left neighbor.
    """
    if psi.m - n_sites < 1:
        raise ParameterError(f"cannot trace {n_sites} sites out of {psi.m}")
    out = psi.copy()
    for _ in range(n_sites):
        last = out.sites.pop()
        w = trace_out_covector(last.d)
        bond_vec = np.tensordot(last.data, w, axes=(1, 0))  # (chi_l, 1)
        prev = out.sites[-1]
        merged = np.tensordot(prev.data, bond_vec, axes=(2, 0))
        out.sites[-1] = SiteTensor(merged, prev.d)
    out.bond_singular_values = None
    return out


def save_mpso(psi: MPSO, path) -> None:
    """Binary checkpoint: versioned header, then complex128 row-major tensors."""
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", _CHECKPOINT_VERSION, psi.m, 0))
        fh.write(struct.pack("<d", psi.discarded_weight))
        for site in psi.sites:
            fh.write(
                struct.pack(
                    "<IIII", site.d, site.bond_left, site.data.shape[1], site.bond_right
                )
            )
        for site in psi.sites:
            fh.write(np.ascontiguousarray(site.data, dtype="<c16").tobytes())


def load_mpso(path) -> MPSO:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CHECKPOINT_MAGIC:
            raise ParameterError(f"not an MPSO checkpoint: magic {magic!r}")
        version, m, _ = struct.unpack("<III", fh.read(12))
        if version != _CHECKPOINT_VERSION:
            raise ParameterError(f"unsupported checkpoint version {version}")
        (discarded,) = struct.unpack("<d", fh.read(8))
        shapes = []
        for _ in range(m):
            d, bl, phys, br = struct.unpack("<IIII", fh.read(16))
            shapes.append((d, bl, phys, br))
        sites = []
        for d, bl, phys, br in shapes:
            count = bl * phys * br
            buf = fh.read(count * 16)
            arr = np.frombuffer(buf, dtype="<c16").reshape(bl, phys, br)
            sites.append(SiteTensor(arr.astype(complex), d))
    return MPSO(sites=sites, discarded_weight=discarded)
