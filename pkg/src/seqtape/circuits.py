"""Sequential preparation circuits for MPS.

A :class:`SeqCircuit` is a list of ``d*chi`` square unitaries. Gate ``n`` acts
on ``site_n (x) correlator`` (site index outermost) and site ``n`` starts in
``|0>``, so the first block-column of each gate (the ``chi`` columns with site
input 0) is the embedded site isometry ``sum_i |i> (x) A^i``.

Dense runs order the joint register as ``site_1 ... site_N (x) correlator``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import _caps
from .channels import complete_columns, isometry_to_unitary
from .errors import DecouplingError, NotCanonical, RouteRefused, ShapeError
from .mps import PERIODIC, PROJECTED, VECTOR, Mps, pad_bond, pbc_to_obc, svd_fixed

UNITARY_TOL = 1e-10
ENTANGLEMENT_TOL = 1e-8


@dataclass(frozen=True)
class SeqCircuit:
    chi: int
    d: int
    gates: tuple[np.ndarray, ...]
    init_correlator: np.ndarray
    measurements: tuple[tuple[int, str], ...] = ()
    decoupled: bool = False
    unilateral: bool = True
    site_dims: tuple[int, ...] | None = field(default=None)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        size = self.d * self.chi
        gates = tuple(np.asarray(g, dtype=complex) for g in self.gates)
        for n, g in enumerate(gates):
            if g.shape != (size, size):
                raise ShapeError(f"gate {n} has shape {g.shape}, expected {(size, size)}")
        init = np.asarray(self.init_correlator, dtype=complex).reshape(-1)
        if init.size != self.chi:
            raise ShapeError("initial correlator must have dimension chi")
        object.__setattr__(self, "gates", gates)
        object.__setattr__(self, "init_correlator", init)

    @property
    def n_sites(self) -> int:
        return len(self.gates)

    def max_unitarity_deviation(self) -> float:
        if not self.gates:
            return 0.0
        return max(float(np.max(np.abs(g.conj().T @ g - np.eye(g.shape[0])))) for g in self.gates)


def basis_state(dim: int, k: int = 0) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[k] = 1
    return v


def embed_isometry(vp: np.ndarray, d: int, chi: int, r_out: int) -> np.ndarray:
    """Place an isometry ``(d*r_out) x r_in`` into ``(d*chi) x chi``.

    Rows of each site block are padded with ``chi - r_out`` zero rows (the
    correlator stays on its first ``r_out`` levels); input columns beyond
    ``r_in`` are completed by deterministic Gram-Schmidt.
    """
    r_in = vp.shape[1]
    big = np.zeros((d, chi, r_in), dtype=complex)
    big[:, :r_out, :] = vp.reshape(d, r_out, r_in)
    return complete_columns(big.reshape(d * chi, r_in), chi)


def site_case(d: int, chi: int) -> int:
    """Which of the three decoupling embeddings applies to bond ``chi``."""
    if chi <= d:
        return 2
    if chi <= d * d:
        return 1
    return 3


def dilate_mps_naive(m: Mps, tol: float = 1e-10) -> SeqCircuit:
    """Dilate each site channel directly.

    Works for right-canonical vector or projected states whose last site is
    trace preserving after absorbing ``<R|``. When ``d < chi`` at the last cut
    the correlator would need a final projection, so the route is refused.
    """
    if m.boundary == PERIODIC:
        raise RouteRefused("periodic boundary needs a final projection; use decouple_compile")
    d = m.d
    tensors = list(m.tensors)
    if m.boundary == PROJECTED:
        last = np.einsum("a,iab->ib", m.right, tensors[-1])
        tensors[-1] = last[:, None, :]
    chi_last = tensors[-1].shape[2]
    if d < chi_last:
        raise RouteRefused(
            f"d={d} < chi={chi_last} at the last cut: the final projection on the correlator "
            "is probabilistic; use the decoupling route")
    for n, t in enumerate(tensors):
        gram = np.einsum("iab,iac->bc", t.conj(), t)
        dev = float(np.max(np.abs(gram - np.eye(t.shape[2]))))
        if dev > tol:
            if n == len(tensors) - 1 and m.boundary == PROJECTED:
                raise RouteRefused(
                    "<R| leaves a non trace-preserving last site: a probabilistic final projection "
                    "would be required; use the decoupling route")
            raise NotCanonical(f"site {n} is not right-canonical (deviation {dev:.3e})", site=n)
    chi = max([t.shape[1] for t in tensors] + [t.shape[2] for t in tensors])
    left = m.left_vector()
    norm = np.linalg.norm(left)
    if abs(norm - 1) > tol:
        raise NotCanonical("left boundary vector is not normalized")
    init = np.zeros(chi, dtype=complex)
    init[: left.size] = left
    gates = []
    for t in tensors:
        dd, r_out, r_in = t.shape
        block = np.zeros((dd, chi, r_in), dtype=complex)
        block[:, :r_out, :] = t
        v = complete_columns(block.reshape(dd * chi, r_in), chi)
        gates.append(isometry_to_unitary(v))
    return SeqCircuit(chi, d, tuple(gates), init, decoupled=True,
                      meta={"route": "naive", "bonds": [t.shape[2] for t in tensors] + [1]})


def _as_projected(m: Mps) -> Mps:
    if m.boundary == PERIODIC:
        return pbc_to_obc(m)
    if m.boundary == VECTOR:
        return Mps(m.tensors, PROJECTED, left=np.ones(1), right=np.ones(1))
    return m


def decouple_compile(m: Mps, chi: int | None = None, iso_tol: float = 1e-12) -> SeqCircuit:
    """Compile any MPS into a circuit whose correlator ends in ``|0>``.

    Sweeping from the last site, ``(1 (x) M_{n+1}) V_n`` (with ``M_{N+1} = <R|``)
    is split as ``V'_n M_n`` by SVD; the isometries ``V'_n`` are embedded into
    ``d*chi x chi`` isometries and dilated. The leftover ``M_1 |L>`` is
    normalized and absorbed into the first gate so the correlator starts in
    ``|0>``. When the matrix to split is already an isometry it is taken as
    ``V'`` with ``M = 1``.
    """
    m = _as_projected(m)
    chi = max(chi or 1, m.max_bond)
    if any(b != chi for b in m.bonds):
        m = pad_bond(m, chi)
    d, n_sites = m.d, m.n_sites
    vprimes: list[np.ndarray] = [None] * n_sites  # type: ignore[list-item]
    r_outs = [0] * n_sites
    carry = m.right[None, :]  # M_{N+1}: r_{N+1} x chi
    for n in range(n_sites - 1, -1, -1):
        t = m.tensors[n]  # (d, chi, chi)
        x = np.einsum("ra,iab->irb", carry, t).reshape(d * carry.shape[0], chi)
        r_outs[n] = carry.shape[0]
        gram = x.conj().T @ x
        if x.shape[0] >= chi and np.max(np.abs(gram - np.eye(chi))) <= iso_tol:
            vprimes[n], carry = x, np.eye(chi, dtype=complex)
        else:
            u, s, vh = svd_fixed(x)
            vprimes[n], carry = u, s[:, None] * vh
    lprime = carry @ m.left
    prob = float(np.vdot(lprime, lprime).real)
    if prob <= 0:
        raise RouteRefused("the MPS evaluates to the zero vector")
    lprime = lprime / np.sqrt(prob)
    gates = []
    for n in range(n_sites):
        big = embed_isometry(vprimes[n], d, chi, r_outs[n])
        gates.append(isometry_to_unitary(big))
    rot = np.zeros(chi, dtype=complex)
    rot[: lprime.size] = lprime
    w = isometry_to_unitary(rot[:, None])
    gates[0] = gates[0] @ np.kron(np.eye(d), w)
    cases = [site_case(d, chi)] * n_sites
    return SeqCircuit(chi, d, tuple(gates), basis_state(chi), decoupled=True,
                      meta={"route": "decouple", "cases": cases, "probability": prob,
                            "ranks": [v.shape[1] for v in vprimes]})


class RunResult(NamedTuple):
    joint: np.ndarray  # (tape_dim, chi)
    tape: np.ndarray | None
    correlator: np.ndarray | None
    schmidt: np.ndarray


def _dims(c: SeqCircuit) -> list[int]:
    return list(c.site_dims) if c.site_dims else [c.d] * c.n_sites


def run_circuit(c: SeqCircuit, tape_in: np.ndarray | None = None,
                cap: int | None = None) -> RunResult:
    """Dense execution of ``c`` on ``tape_in (x) init_correlator``.

    When the circuit claims to be decoupled the final state must be a product
    of tape and correlator (second Schmidt coefficient at most 1e-8).
    """
    dims = _dims(c)
    tape_dim = int(np.prod(dims)) if dims else 1
    _caps.check_cap(tape_dim * c.chi, cap or _caps.CIRCUIT_CAP)
    if tape_in is None:
        tape_in = basis_state(tape_dim)
    tape_in = np.asarray(tape_in, dtype=complex).reshape(-1)
    if tape_in.size != tape_dim:
        raise ShapeError(f"tape input has dimension {tape_in.size}, expected {tape_dim}")
    state = np.kron(tape_in, c.init_correlator).reshape(dims + [c.chi])
    n_sites = len(dims)
    for n, g in enumerate(c.gates):
        dn = dims[n]
        g4 = g.reshape(dn, c.chi, dn, c.chi)
        state = np.tensordot(g4, state, axes=([2, 3], [n, n_sites]))
        # result axes: (s', c', rest...) -> put back in place
        state = np.moveaxis(state, [0, 1], [n, n_sites])
    joint = state.reshape(tape_dim, c.chi)
    u, s, vh = np.linalg.svd(joint, full_matrices=False)
    tape = corr = None
    second = s[1] if s.size > 1 else 0.0
    if second <= ENTANGLEMENT_TOL:
        corr = vh[0].conj()
        k = int(np.argmax(np.abs(corr)))
        phase = corr[k] / abs(corr[k])
        corr = corr / phase
        tape = u[:, 0] * s[0] * phase
    elif c.decoupled:
        raise DecouplingError(f"correlator still entangled with the tape (Schmidt coefficient {second:.3e})")
    return RunResult(joint, tape, corr, s)


def correlator_overlap(result: RunResult) -> float:
    """``<0| rho_corr |0>`` of the final correlator."""
    joint = result.joint
    return float(np.sum(np.abs(joint[:, 0]) ** 2) / np.sum(np.abs(joint) ** 2))


def correlator_state(result: RunResult) -> np.ndarray:
    joint = result.joint
    return joint.T @ joint.conj()


def _embed_left(u: np.ndarray, d: int, chi_a: int, chi_b: int) -> np.ndarray:
    """``U_a`` on (site, corr_a) lifted to (site, corr_a, corr_b)."""
    return np.kron(u, np.eye(chi_b))


def _embed_right(u: np.ndarray, d: int, chi_a: int, chi_b: int) -> np.ndarray:
    """``U_b`` on (site, corr_b) lifted to (site, corr_a, corr_b)."""
    u4 = u.reshape(d, chi_b, d, chi_b)
    full = np.einsum("sbtc,ae->sabtec", u4, np.eye(chi_a))
    size = d * chi_a * chi_b
    return full.reshape(size, size)


def compose(a: SeqCircuit, b: SeqCircuit) -> SeqCircuit:
    """Run ``b``'s preparation on the tape produced by ``a``, site by site.

    Gate ``n`` of the result acts on ``site_n (x) corr_a (x) corr_b`` and applies
    ``a``'s gate before ``b``'s. Gates of ``a`` and ``b`` on different sites
    commute, so this equals running ``a`` completely and then ``b``.
    """
    if a.d != b.d or a.n_sites != b.n_sites:
        raise ShapeError("compose needs circuits with equal d and site count")
    if not (a.unilateral and b.unilateral):
        raise ShapeError("compose needs site-sequential circuits")
    gates = tuple(_embed_right(gb, a.d, a.chi, b.chi) @ _embed_left(ga, a.d, a.chi, b.chi)
                  for ga, gb in zip(a.gates, b.gates))
    return SeqCircuit(a.chi * b.chi, a.d, gates, np.kron(a.init_correlator, b.init_correlator),
                      measurements=a.measurements + b.measurements, decoupled=False,
                      site_dims=a.site_dims, meta={"route": "compose"})


def tensor_compose(a: SeqCircuit, b: SeqCircuit) -> SeqCircuit:
    """Prepare ``state_a (x) state_b`` on a doubled tape.

    Site ``n`` of the result is the pair ``(site_n^a, site_n^b)`` and the
    correlator is ``corr_a (x) corr_b``.
    """
    if a.n_sites != b.n_sites:
        raise ShapeError("tensor_compose needs equal site counts")
    da, db = a.d, b.d
    gates = []
    for ga, gb in zip(a.gates, b.gates):
        ua = ga.reshape(da, a.chi, da, a.chi)
        ub = gb.reshape(db, b.chi, db, b.chi)
        g = np.einsum("sxty,uvwz->suxvtwyz", ua, ub)
        size = da * db * a.chi * b.chi
        gates.append(g.reshape(size, size))
    return SeqCircuit(a.chi * b.chi, da * db, tuple(gates),
                      np.kron(a.init_correlator, b.init_correlator),
                      decoupled=a.decoupled and b.decoupled, meta={"route": "tensor"})


def interleave_tapes(psi_a: np.ndarray, psi_b: np.ndarray, da: int, db: int, n_sites: int) -> np.ndarray:
    """Reorder ``psi_a (x) psi_b`` into the paired-site order used by :func:`tensor_compose`."""
    t = np.kron(psi_a, psi_b).reshape([da] * n_sites + [db] * n_sites)
    order = [ax for n in range(n_sites) for ax in (n, n_sites + n)]
    return t.transpose(order).reshape(-1)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    return float(abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real))


def with_measurements(c: SeqCircuit, measurements: Sequence[tuple[int, str]]) -> SeqCircuit:
    return replace(c, measurements=tuple(measurements))
