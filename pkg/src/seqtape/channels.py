"""Quantum channels as Kraus sets, and the objects derived from them.

Conventions used throughout the package:

* A channel maps ``dim_in`` to ``dim_out``; every Kraus matrix has shape
  ``(dim_out, dim_in)``.
* The isometry stacks Kraus operators as block rows, ``V = sum_l |l> (x) K_l``,
  so row ``l * dim_out + i`` of ``V`` is row ``i`` of ``K_l``.
* Density matrices are vectorized row-major, ``|rho> = sum_ij rho_ij |i>|j>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NotIsometry, NotTracePreserving, ShapeError

VALIDATION_TOL = 1e-10


@dataclass(frozen=True)
class Channel:
    """A completely positive map given by its Kraus operators."""

    kraus: tuple[np.ndarray, ...]

    def __init__(self, kraus: Sequence[np.ndarray] | np.ndarray):
        mats = tuple(np.array(k, dtype=complex) for k in kraus)
        if not mats:
            raise ShapeError("a channel needs at least one Kraus operator")
        shape = mats[0].shape
        if len(shape) != 2:
            raise ShapeError(f"Kraus operators must be matrices, got shape {shape}")
        for k in mats:
            if k.shape != shape:
                raise ShapeError(f"Kraus shape mismatch: {k.shape} vs {shape}")
            if not np.all(np.isfinite(k)):
                raise ShapeError("Kraus operators must have finite entries")
            k.setflags(write=False)
        object.__setattr__(self, "kraus", mats)

    @property
    def dim_in(self) -> int:
        return self.kraus[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.kraus[0].shape[0]

    @property
    def rank(self) -> int:
        return len(self.kraus)

    def __len__(self) -> int:
        return len(self.kraus)

    @classmethod
    def unitary(cls, u: np.ndarray) -> Channel:
        return cls([u])

    @classmethod
    def mixture(cls, parts: Sequence[tuple[float, Channel]]) -> Channel:
        """Convex combination ``sum_k p_k E_k`` by merging sqrt(p)-weighted Kraus lists."""
        kraus = []
        for p, ch in parts:
            if p < 0:
                raise ShapeError("mixture weights must be nonnegative")
            kraus.extend(np.sqrt(p) * k for k in ch.kraus)
        return cls(kraus)


class TPReport(NamedTuple):
    is_tp: bool
    deviation: float


def validate_tp(ch: Channel, tol: float = VALIDATION_TOL) -> TPReport:
    gram = sum(k.conj().T @ k for k in ch.kraus)
    deviation = float(np.max(np.abs(gram - np.eye(ch.dim_in))))
    return TPReport(deviation <= tol, deviation)


def _require_tp(ch: Channel, tol: float) -> None:
    report = validate_tp(ch, tol)
    if not report.is_tp:
        raise NotTracePreserving(f"sum K^dag K deviates from identity by {report.deviation:.3e}")


def kraus_to_isometry(ch: Channel, tol: float = VALIDATION_TOL) -> np.ndarray:
    """Stack the Kraus operators into ``V = sum_l |l> K_l`` of shape ``(r*dim_out, dim_in)``."""
    _require_tp(ch, tol)
    return np.vstack(ch.kraus)


def isometry_to_kraus(v: np.ndarray, dim_out: int) -> Channel:
    rows, _ = v.shape
    if rows % dim_out:
        raise ShapeError(f"{rows} rows do not split into blocks of {dim_out}")
    return Channel([v[l * dim_out:(l + 1) * dim_out] for l in range(rows // dim_out)])


def complete_columns(v: np.ndarray, size: int | None = None, tol: float = 1e-6) -> np.ndarray:
    """Extend orthonormal columns ``v`` to ``size`` orthonormal columns.

    New columns come from Gram-Schmidt over the canonical basis vectors taken in
    index order, so the completion is deterministic. The input columns are kept
    verbatim.
    """
    v = np.asarray(v, dtype=complex)
    rows, cols = v.shape
    size = rows if size is None else size
    if size > rows:
        raise ShapeError(f"cannot fit {size} orthonormal columns in dimension {rows}")
    basis = [v[:, j] for j in range(cols)]
    for k in range(rows):
        if len(basis) == size:
            break
        w = np.zeros(rows, dtype=complex)
        w[k] = 1.0
        # two passes keep the result orthogonal to working precision
        for _ in range(2):
            for b in basis:
                w = w - b * np.vdot(b, w)
        norm = np.linalg.norm(w)
        if norm > tol:
            basis.append(w / norm)
    if len(basis) < size:
        raise NotIsometry("input columns are not linearly independent")
    return np.column_stack(basis) if basis else np.zeros((rows, 0), dtype=complex)


def isometry_to_unitary(v: np.ndarray, tol: float = VALIDATION_TOL) -> np.ndarray:
    """Complete an isometry to a square unitary whose leading columns equal ``v``."""
    v = np.asarray(v, dtype=complex)
    if v.ndim == 1:
        v = v[:, None]
    rows, cols = v.shape
    if cols > rows:
        raise NotIsometry(f"{rows}x{cols} matrix cannot be an isometry")
    dev = float(np.max(np.abs(v.conj().T @ v - np.eye(cols)))) if cols else 0.0
    if dev > tol:
        raise NotIsometry(f"V^dag V deviates from identity by {dev:.3e}")
    return complete_columns(v, rows)


def dilate(ch: Channel, tol: float = VALIDATION_TOL) -> tuple[np.ndarray, int]:
    """Unitary dilation of a (possibly dimension-altering) channel.

    The input ancilla has dimension ``ceil(r*m/n)``; the returned unitary acts on
    ``ancilla (x) system_in`` with the ancilla outermost and recovers
    ``K_l = <l| U |0>`` on the leading rows.
    """
    v = kraus_to_isometry(ch, tol)
    n, m, r = ch.dim_in, ch.dim_out, ch.rank
    ancilla = -(-r * m // n)
    total = ancilla * n
    padded = np.zeros((total, n), dtype=complex)
    padded[: r * m] = v
    return isometry_to_unitary(padded, tol), ancilla


def apply_channel(ch: Channel, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ch.dim_in, ch.dim_in):
        raise ShapeError(f"state of shape {rho.shape} does not match channel input {ch.dim_in}")
    return sum(k @ rho @ k.conj().T for k in ch.kraus)


def transfer_matrix(ch: Channel) -> np.ndarray:
    return sum(np.kron(k, k.conj()) for k in ch.kraus)


def stochastic_matrix(ch: Channel, tol: float = VALIDATION_TOL) -> np.ndarray:
    """Entrywise ``sum_l |k^l_ij|^2``: the classical shadow of the transfer matrix.

    Column-stochastic for every trace-preserving channel.
    """
    _require_tp(ch, tol)
    return sum(np.abs(k) ** 2 for k in ch.kraus)


def is_density_matrix(rho: np.ndarray, tol: float = VALIDATION_TOL) -> bool:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if np.max(np.abs(rho - rho.conj().T)) > tol or abs(np.trace(rho) - 1) > tol:
        return False
    return bool(np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2)) >= -tol)


def amplitude_damping(gamma: float) -> Channel:
    return Channel([
        np.array([[1, 0], [0, np.sqrt(1 - gamma)]]),
        np.array([[0, np.sqrt(gamma)], [0, 0]]),
    ])
