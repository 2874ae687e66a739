"""Matrix-product states: storage, extraction from dense vectors, contraction.

Site tensors are stored as arrays of shape ``(d, chi_out, chi_in)`` where
``chi_in`` is the bond towards site 1 and ``chi_out`` the bond towards site N.
Matrices multiply right to left, so the amplitude of ``|i_1 ... i_N>`` is

    R @ A_N[i_N] @ ... @ A_1[i_1] @ L

and site 1 is the most significant digit of the dense index. The right
boundary ``R`` is applied as a plain row vector (no conjugation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _caps
from .channels import Channel, complete_columns, validate_tp
from .errors import InvalidInput, NotCanonical, ShapeError

VECTOR = "vector"
PROJECTED = "projected"
PERIODIC = "periodic"
BOUNDARIES = (VECTOR, PROJECTED, PERIODIC)

CANONICAL_TOL = 1e-10


@dataclass(frozen=True)
class Mps:
    tensors: tuple[np.ndarray, ...]
    boundary: str = VECTOR
    left: np.ndarray | None = field(default=None)
    right: np.ndarray | None = field(default=None)

    def __init__(self, tensors: Sequence[np.ndarray], boundary: str = VECTOR,
                 left: np.ndarray | None = None, right: np.ndarray | None = None):
        ts = tuple(np.array(t, dtype=complex) for t in tensors)
        if not ts:
            raise ShapeError("an MPS needs at least one site")
        if boundary not in BOUNDARIES:
            raise InvalidInput(f"unknown boundary {boundary!r}")
        d = ts[0].shape[0]
        for n, t in enumerate(ts):
            if t.ndim != 3 or t.shape[0] != d:
                raise ShapeError(f"site {n}: expected (d, chi_out, chi_in) with d={d}, got {t.shape}")
            if n and t.shape[2] != ts[n - 1].shape[1]:
                raise ShapeError(f"bond mismatch between sites {n - 1} and {n}")
            t.setflags(write=False)
        if boundary == VECTOR:
            if ts[0].shape[2] != 1 or ts[-1].shape[1] != 1:
                raise ShapeError("vector boundary needs a column first site and a row last site")
            left = right = None
        elif boundary == PROJECTED:
            if left is None or right is None:
                raise InvalidInput("projected boundary needs left and right vectors")
            left = np.array(left, dtype=complex).reshape(-1)
            right = np.array(right, dtype=complex).reshape(-1)
            if left.size != ts[0].shape[2] or right.size != ts[-1].shape[1]:
                raise ShapeError("boundary vector sizes do not match end bonds")
        else:
            if ts[0].shape[2] != ts[-1].shape[1]:
                raise ShapeError("periodic boundary needs matching end bonds")
            left = right = None
        object.__setattr__(self, "tensors", ts)
        object.__setattr__(self, "boundary", boundary)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def d(self) -> int:
        return self.tensors[0].shape[0]

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bonds(self) -> list[int]:
        """Bond dimensions chi_0 .. chi_N (chi_0 and chi_N are the boundary bonds)."""
        return [self.tensors[0].shape[2]] + [t.shape[1] for t in self.tensors]

    @property
    def max_bond(self) -> int:
        return max(self.bonds)

    def canonical_deviation(self, n: int) -> float:
        t = self.tensors[n]
        gram = np.einsum("iab,iac->bc", t.conj(), t)
        return float(np.max(np.abs(gram - np.eye(t.shape[2]))))

    @property
    def canonical(self) -> tuple[bool, ...]:
        return tuple(self.canonical_deviation(n) <= CANONICAL_TOL for n in range(self.n_sites))

    def left_vector(self) -> np.ndarray:
        if self.boundary == PROJECTED:
            return self.left
        return np.ones(1, dtype=complex)

    def right_vector(self) -> np.ndarray:
        if self.boundary == PROJECTED:
            return self.right
        return np.ones(1, dtype=complex)


def _split_phase(u: np.ndarray, vh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of each left singular vector made real positive
    idx = np.argmax(np.abs(u), axis=0)
    ph = u[idx, np.arange(u.shape[1])]
    mag = np.abs(ph)
    ph = np.divide(ph, mag, out=np.ones_like(ph), where=mag > 0)
    return u * ph.conj(), vh * ph[:, None]


def svd_fixed(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD with a deterministic phase convention on the left vectors."""
    u, s, vh = np.linalg.svd(x, full_matrices=False)
    u, vh = _split_phase(u, vh)
    return u, s, vh


def from_statevector(psi: np.ndarray, d: int, n_sites: int | None = None,
                     rank_tol: float = 1e-12) -> Mps:
    """Right-canonical vector-boundary MPS of a dense state.

    Sweeps from the last site: each step keeps the right singular vectors as
    the site isometry and pushes ``U S`` onto the remaining sites. Singular
    values below ``rank_tol`` times the largest are discarded.
    """
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if n_sites is None:
        n_sites = int(round(np.log(psi.size) / np.log(d))) if psi.size > 1 else 1
    if d < 1 or d**n_sites != psi.size:
        raise ShapeError(f"dimension {psi.size} is not {d}^{n_sites}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > 1e-8:
        raise InvalidInput(f"state is not normalized (norm {norm:.6g})")
    tensors: list[np.ndarray] = [None] * n_sites  # type: ignore[list-item]
    rest = psi.reshape(-1, 1)  # columns: (i_{n+1} .. i_N) bond of the part already split off
    chi = 1
    for n in range(n_sites - 1, 0, -1):
        mat = rest.reshape(d**n, d * chi)
        u, s, vh = svd_fixed(mat)
        keep = max(1, int(np.sum(s > rank_tol * s[0]))) if s[0] > 0 else 1
        u, s, vh = u[:, :keep], s[:keep], vh[:keep]
        # vh[b, (i, a)] -> A[i][a, b]
        tensors[n] = vh.reshape(keep, d, chi).transpose(1, 2, 0)
        rest = u * s
        chi = keep
    tensors[0] = rest.reshape(d, chi, 1)
    return Mps(tensors, VECTOR)


def contract(m: Mps, cap: int | None = None) -> np.ndarray:
    """Raw amplitudes of ``m`` per its boundary mode (no renormalization)."""
    d, n_sites = m.d, m.n_sites
    _caps.check_cap(d**n_sites, cap or _caps.STATEVECTOR_CAP)
    if m.boundary == PERIODIC:
        chi0 = m.tensors[0].shape[2]
        acc = np.eye(chi0, dtype=complex)[None]  # (prefix, a, b0)
    else:
        acc = m.left_vector()[None, :, None]
    for t in m.tensors:
        # acc[p, b, x] -> new[p, i, a, x] = sum_b t[i, a, b] acc[p, b, x]
        acc = np.einsum("iab,pbx->piax", t, acc).reshape(-1, t.shape[1], acc.shape[2])
    if m.boundary == PERIODIC:
        return np.einsum("paa->p", acc)
    return np.einsum("a,pa->p", m.right_vector(), acc[:, :, 0])


def to_statevector(m: Mps, cap: int | None = None, return_probability: bool = False):
    """Dense state of ``m``.

    Vector and periodic boundaries give the raw contraction. A projected
    boundary is renormalized; its squared pre-normalization norm (the success
    probability of the final projection) is returned alongside when
    ``return_probability`` is set.
    """
    psi = contract(m, cap)
    prob = 1.0
    if m.boundary == PROJECTED:
        prob = float(np.vdot(psi, psi).real)
        if prob > 0:
            psi = psi / np.sqrt(prob)
    return (psi, prob) if return_probability else psi


def pbc_to_obc(m: Mps) -> Mps:
    """Rewrite a periodic MPS as a projected one on the doubled bond ``chi^2``.

    Uses ``tr(M) = <w|(M (x) 1)|w>`` with ``|w> = sum_i |ii>``: tensors become
    ``A (x) 1``, ``L = |w>/sqrt(chi)`` (normalized) and ``R = sqrt(chi) <w|``.
    """
    if m.boundary != PERIODIC:
        raise InvalidInput("pbc_to_obc needs a periodic MPS")
    chi = m.tensors[0].shape[2]
    if any(b != chi for b in m.bonds):
        chi_max = m.max_bond
        m = pad_bond(m, chi_max)
        chi = chi_max
    eye = np.eye(chi)
    tensors = [np.stack([np.kron(a, eye) for a in t]) for t in m.tensors]
    omega = eye.reshape(-1).astype(complex)
    return Mps(tensors, PROJECTED, left=omega / np.sqrt(chi), right=omega * np.sqrt(chi))


def _embed(t: np.ndarray, chi_out: int, chi_in: int) -> np.ndarray:
    out = np.zeros((t.shape[0], chi_out, chi_in), dtype=complex)
    out[:, : t.shape[1], : t.shape[2]] = t
    return out


def _complete_site(t: np.ndarray, used_in: int) -> np.ndarray:
    """Fill input columns ``used_in..`` so that ``sum_i A^dag A = 1`` where possible."""
    d, chi_out, chi_in = t.shape
    if d * chi_out < chi_in:
        return t
    v = t.reshape(d * chi_out, chi_in)
    gram = v[:, :used_in].conj().T @ v[:, :used_in]
    if np.max(np.abs(gram - np.eye(used_in))) > CANONICAL_TOL:
        return t
    full = complete_columns(v[:, :used_in], chi_in)
    return full.reshape(d, chi_out, chi_in)


def pad_bond(m: Mps, chi: int) -> Mps:
    """Zero-pad bonds to ``chi``.

    Interior bonds are padded for every boundary; the end bonds are padded
    too for projected and periodic states. For vector and projected states
    the unused input columns of canonical sites are completed to keep each
    site trace preserving (they only ever see zero amplitude).
    """
    if chi < max(m.bonds[1:-1] or [1]) or (m.boundary != VECTOR and chi < m.max_bond):
        raise InvalidInput(f"chi={chi} is smaller than an existing bond")
    bonds = list(m.bonds)
    new = [chi] * len(bonds)
    if m.boundary == VECTOR:
        new[0] = new[-1] = 1
    tensors = []
    for n, t in enumerate(m.tensors):
        p = _embed(t, new[n + 1], new[n])
        if m.boundary != PERIODIC:
            p = _complete_site(p, bonds[n])
        tensors.append(p)
    left = right = None
    if m.boundary == PROJECTED:
        left = np.zeros(chi, dtype=complex)
        left[: m.left.size] = m.left
        right = np.zeros(chi, dtype=complex)
        right[: m.right.size] = m.right
    return Mps(tensors, m.boundary, left, right)


def site_channel(m: Mps, n: int, tol: float = CANONICAL_TOL) -> Channel:
    if not 0 <= n < m.n_sites:
        raise InvalidInput(f"site {n} out of range")
    ch = Channel(list(m.tensors[n]))
    report = validate_tp(ch, tol)
    if not report.is_tp:
        raise NotCanonical(f"site {n} is not right-canonical (deviation {report.deviation:.3e})", site=n)
    return ch


def product_mps(local_states: Sequence[np.ndarray]) -> Mps:
    tensors = [np.asarray(v, dtype=complex).reshape(-1, 1, 1) for v in local_states]
    return Mps(tensors, VECTOR)


def random_mps(d: int, n_sites: int, chi: int, rng: np.random.Generator,
               boundary: str = PROJECTED) -> Mps:
    """Random complex MPS with constant bond ``chi`` (end bonds 1 for vector boundary)."""
    bonds = [chi] * (n_sites + 1)
    if boundary == VECTOR:
        bonds[0] = bonds[-1] = 1
    tensors = [rng.normal(size=(d, bonds[n + 1], bonds[n])) + 1j * rng.normal(size=(d, bonds[n + 1], bonds[n]))
               for n in range(n_sites)]
    if boundary == PROJECTED:
        left = rng.normal(size=chi) + 1j * rng.normal(size=chi)
        right = rng.normal(size=chi) + 1j * rng.normal(size=chi)
        return Mps(tensors, PROJECTED, left / np.linalg.norm(left), right)
    return Mps(tensors, boundary)


def bell_mps() -> Mps:
    """The two-site Bell tensors with <0| ... |0> boundaries; evaluates to (|00>+|11>)/sqrt(2)."""
    eye = np.eye(2)
    sx = np.array([[0, 1], [1, 0]])
    p0 = np.array([[1, 0], [0, 0]])
    sp = np.array([[0, 1], [0, 0]])
    a = np.stack([eye, sx]) / np.sqrt(2)
    b = np.stack([p0, sp])
    e0 = np.array([1, 0])
    return Mps([a, b], PROJECTED, left=e0, right=e0)
