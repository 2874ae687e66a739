"""Local Turing machines: a classical head walking a finite tape.

Every computing map acts on ``processor (x) one tape site`` with the processor
index outermost, i.e. a ``(q*d) x (q*d)`` matrix. Three kinds are supported:

* ``lctm``: permutation matrices; the configuration is ``(q, tape bits)``.
* ``lptm``: column-stochastic matrices acting on a joint distribution.
* ``lqtm``: unitaries (or :class:`Channel` maps) acting on a joint state
  vector, or on a density matrix once any channel gate is present.

Joint vectors are ordered ``processor (x) site_0 (x) ... (x) site_{N-1}``.
A step applies its gate at the head, then shifts the head by -1, 0 or +1 and
optionally moves the classical control to a new state.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _caps
from .channels import Channel
from .errors import InvalidInput, MachineError

KINDS = ("lctm", "lptm", "lqtm")
RUN, HALT = "run", "halt"

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
T = np.diag([1, np.exp(1j * np.pi / 4)])
CZ = np.diag([1, 1, 1, -1]).astype(complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
SINGLE_QUBIT = {"H": H, "T": T, "X": X, "Z": Z}


@dataclass(frozen=True)
class GateStep:
    gate: str | None  # None is the identity map
    site: int | None = None  # expected head position; None means "wherever the head is"
    shift: int = 0
    ctrl: str | None = None  # next classical control state; None keeps the current one


@dataclass(frozen=True)
class LtmSpec:
    kind: str
    q_dim: int
    d: int
    n_sites: int
    gates: dict
    control_states: tuple[str, ...] = (RUN, HALT)
    start_control: str = RUN
    halting: frozenset = frozenset({HALT})
    processor_states: frozenset = frozenset({0})  # F: start/halt processor states
    input_alphabet: frozenset | None = None  # Sigma, stored only
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"unknown machine kind {self.kind!r}")
        if self.start_control not in self.control_states:
            raise InvalidInput("start control state not in the control set")
        if not set(self.halting) <= set(self.control_states):
            raise InvalidInput("halting states must belong to the control set")
        size = self.q_dim * self.d
        for name, g in self.gates.items():
            mats = g.kraus if isinstance(g, Channel) else (np.asarray(g),)
            for k in mats:
                if k.shape != (size, size):
                    raise InvalidInput(f"gate {name!r} has shape {k.shape}, expected {(size, size)}")
            if isinstance(g, Channel) and self.kind != "lqtm":
                raise InvalidInput("channel gates are only meaningful for quantum machines")
            g = np.asarray(g) if not isinstance(g, Channel) else None
            if g is None:
                continue
            if self.kind == "lctm" and not is_permutation(g):
                raise InvalidInput(f"gate {name!r} is not a permutation")
            if self.kind == "lptm" and not is_column_stochastic(g):
                raise InvalidInput(f"gate {name!r} is not column stochastic")
            if self.kind == "lqtm" and np.max(np.abs(g.conj().T @ g - np.eye(size))) > 1e-10:
                raise InvalidInput(f"gate {name!r} is not unitary")

    @property
    def uses_channels(self) -> bool:
        return any(isinstance(g, Channel) for g in self.gates.values())


@dataclass(frozen=True)
class Configuration:
    """Machine state: tape (+ processor) state, head position, control state.

    ``state`` is ``(q, bits)`` for lctm, a probability vector for lptm and a
    state vector or density matrix for lqtm.
    """

    state: object
    head: int
    control: str


class MachineRun(NamedTuple):
    final: Configuration
    trace: list
    halted: bool


def is_permutation(g: np.ndarray) -> bool:
    g = np.asarray(g)
    ok = np.all((np.abs(g) < 1e-12) | (np.abs(g - 1) < 1e-12))
    return bool(ok and np.all(np.abs(g.sum(0) - 1) < 1e-12) and np.all(np.abs(g.sum(1) - 1) < 1e-12))


def is_column_stochastic(g: np.ndarray, tol: float = 1e-10) -> bool:
    g = np.asarray(g)
    return bool(np.all(np.isreal(g)) and np.min(g.real) >= -tol and np.all(np.abs(g.real.sum(0) - 1) <= tol))


def permutation_matrix(perm: Sequence[int]) -> np.ndarray:
    """Matrix with ``P[perm[j], j] = 1``: basis state ``j`` goes to ``perm[j]``."""
    n = len(perm)
    p = np.zeros((n, n))
    p[list(perm), range(n)] = 1
    return p


def initial_configuration(spec: LtmSpec, tape, processor=0, head: int = 0) -> Configuration:
    """Build the start configuration from a tape and a processor state.

    ``tape`` is a bit/digit sequence (any kind) or, for lptm/lqtm, a joint or
    tape-only vector. ``processor`` is an index or a vector.
    """
    tape_dim = spec.d**spec.n_sites
    if spec.kind == "lctm":
        bits = tuple(int(b) for b in tape)
        if len(bits) != spec.n_sites or any(not 0 <= b < spec.d for b in bits):
            raise InvalidInput("tape does not fit the machine")
        return Configuration((int(processor), bits), head, spec.start_control)
    _caps.check_cap(tape_dim * spec.q_dim, _caps.CIRCUIT_CAP)
    tape = np.asarray(tape)
    if tape.ndim == 1 and tape.size == spec.n_sites and tape_dim != spec.n_sites:
        idx = int(np.ravel_multi_index(tuple(int(b) for b in tape), (spec.d,) * spec.n_sites))
        tape = np.zeros(tape_dim)
        tape[idx] = 1
    dtype = float if spec.kind == "lptm" else complex
    tape = np.asarray(tape, dtype=dtype).reshape(-1)
    if np.ndim(processor) == 0:
        proc = np.zeros(spec.q_dim, dtype=dtype)
        proc[int(processor)] = 1
    else:
        proc = np.asarray(processor, dtype=dtype).reshape(-1)
    if tape.size == tape_dim:
        state = np.kron(proc, tape)
    elif tape.size == tape_dim * spec.q_dim:
        state = tape
    else:
        raise InvalidInput(f"tape vector has size {tape.size}, expected {tape_dim}")
    if spec.kind == "lqtm" and spec.uses_channels:
        state = np.outer(state, state.conj())
    return Configuration(state, head, spec.start_control)


def apply_local(state: np.ndarray, op: np.ndarray, site: int, q_dim: int, d: int, n_sites: int) -> np.ndarray:
    """Apply ``op`` on ``processor (x) site`` of a joint vector."""
    left, right = d**site, d ** (n_sites - site - 1)
    psi = state.reshape(q_dim, left, d, right)
    g = op.reshape(q_dim, d, q_dim, d)
    out = np.einsum("abcd,cldr->albr", g, psi)
    return out.reshape(-1)


def _apply_local_rho(rho: np.ndarray, op: np.ndarray, site: int, q_dim: int, d: int, n_sites: int) -> np.ndarray:
    dim = rho.shape[0]
    left = np.stack([apply_local(rho[:, k], op, site, q_dim, d, n_sites) for k in range(dim)], axis=1)
    return np.stack([apply_local(left[k].conj(), op, site, q_dim, d, n_sites) for k in range(dim)]).conj()


def _apply_gate(spec: LtmSpec, state, gate, head: int):
    if spec.kind == "lctm":
        q, bits = state
        col = q * spec.d + bits[head]
        row = int(np.argmax(np.asarray(gate)[:, col]))
        q2, s2 = divmod(row, spec.d)
        return q2, bits[:head] + (s2,) + bits[head + 1:]
    if isinstance(gate, Channel) or (spec.kind == "lqtm" and state.ndim == 2):
        kraus = gate.kraus if isinstance(gate, Channel) else (np.asarray(gate),)
        return sum(_apply_local_rho(state, k, head, spec.q_dim, spec.d, spec.n_sites) for k in kraus)
    return apply_local(state, np.asarray(gate), head, spec.q_dim, spec.d, spec.n_sites)


def step(cfg: Configuration, spec: LtmSpec, s: GateStep) -> Configuration:
    if cfg.control in spec.halting:
        raise MachineError("cannot step a halted machine")
    if s.shift not in (-1, 0, 1):
        raise MachineError(f"head shift {s.shift} is not local")
    if s.site is not None and s.site != cfg.head:
        raise MachineError(f"step targets site {s.site} but the head is at {cfg.head}")
    if not 0 <= cfg.head < spec.n_sites:
        raise MachineError(f"head {cfg.head} is off the tape")
    state = cfg.state
    if s.gate is not None:
        if s.gate not in spec.gates:
            raise MachineError(f"unknown gate {s.gate!r}")
        state = _apply_gate(spec, state, spec.gates[s.gate], cfg.head)
    head = cfg.head + s.shift
    if not 0 <= head < spec.n_sites:
        raise MachineError(f"head moved off the tape to {head}")
    control = cfg.control if s.ctrl is None else s.ctrl
    if control not in spec.control_states:
        raise MachineError(f"unknown control state {control!r}")
    return Configuration(state, head, control)


def run(spec: LtmSpec, program: Sequence[GateStep], cfg: Configuration,
        record_states: bool = True) -> MachineRun:
    """Step through ``program`` until the control halts or the program ends.

    The trace lists every configuration, starting with ``cfg``; quantum
    states are dropped from it when ``record_states`` is false.
    """
    def snap(c: Configuration) -> Configuration:
        return c if record_states or spec.kind == "lctm" else replace(c, state=None)

    trace = [snap(cfg)]
    for s in program:
        if cfg.control in spec.halting:
            break
        cfg = step(cfg, spec, s)
        trace.append(snap(cfg))
    return MachineRun(cfg, trace, cfg.control in spec.halting)


def tape_marginal(spec: LtmSpec, cfg: Configuration) -> np.ndarray:
    """Distribution (lptm) or reduced density matrix (lqtm) of the tape alone."""
    tape_dim = spec.d**spec.n_sites
    if spec.kind == "lptm":
        return cfg.state.reshape(spec.q_dim, tape_dim).sum(0)
    if spec.kind == "lqtm":
        if cfg.state.ndim == 1:
            psi = cfg.state.reshape(spec.q_dim, tape_dim)
            return psi.T @ psi.conj()
        rho = cfg.state.reshape(spec.q_dim, tape_dim, spec.q_dim, tape_dim)
        return np.einsum("qaqb->ab", rho)
    raise InvalidInput("tape_marginal is for probabilistic and quantum machines")


def processor_state(spec: LtmSpec, cfg: Configuration) -> np.ndarray:
    """Reduced density matrix (lqtm) or marginal (lptm) of the processor."""
    tape_dim = spec.d**spec.n_sites
    if spec.kind == "lptm":
        return cfg.state.reshape(spec.q_dim, tape_dim).sum(1)
    if cfg.state.ndim == 1:
        psi = cfg.state.reshape(spec.q_dim, tape_dim)
        return psi @ psi.conj().T
    rho = cfg.state.reshape(spec.q_dim, tape_dim, spec.q_dim, tape_dim)
    return np.einsum("aqbq->ab", rho)


def head_positions(trace: Iterable[Configuration]) -> list[int]:
    return [c.head for c in trace]


def _walk(head: int, target: int) -> tuple[list[GateStep], int]:
    steps = []
    while head != target:
        sign = 1 if target > head else -1
        steps.append(GateStep(None, head, sign))
        head += sign
    return steps, head


def _schedule(actions: Sequence[tuple[str, int]], head: int = 0) -> list[GateStep]:
    """Turn (gate, site) actions into a head-walking program ending in ``halt``."""
    program: list[GateStep] = []
    for gate, site in actions:
        walk, head = _walk(head, site)
        program.extend(walk)
        program.append(GateStep(gate, site, 0))
    program.append(GateStep(None, head, 0, HALT))
    return program


def invert_program(spec: LtmSpec, program: Sequence[GateStep], head0: int = 0) -> tuple[LtmSpec, list[GateStep], int]:
    """Inverse of a classical (permutation) program.

    Returns a machine with transposed gates, the reversed program and the head
    position it must start from.
    """
    if spec.kind != "lctm":
        raise InvalidInput("only permutation programs have exact inverses")
    body = [s for s in program if not (s.gate is None and s.shift == 0)]
    heads = [head0]
    for s in body:
        heads.append(heads[-1] + s.shift)
    gates = {f"{k}^-1": np.asarray(g).T for k, g in spec.gates.items()}
    inv: list[GateStep] = []
    for s, h in zip(reversed(body), reversed(heads[:-1])):
        # undo the shift first, then the gate
        if s.shift:
            inv.append(GateStep(None, h + s.shift, -s.shift))
        if s.gate is not None:
            inv.append(GateStep(f"{s.gate}^-1", h, 0))
    inv.append(GateStep(None, None, 0, HALT))
    return replace(spec, gates=gates), inv, heads[-1]


# ----------------------------------------------------------------------------
# Classical circuits -> LCTM
# ----------------------------------------------------------------------------

BOOLEAN_GATES = ("NOT", "CNOT", "TOFFOLI")


def _classical_gates() -> dict[str, np.ndarray]:
    # processor: two register bits (r0, r1), q = 2*r0 + r1; site bit s
    def perm(f):
        out = []
        for q in range(4):
            for s in range(2):
                r0, r1 = divmod(q, 2)
                r0, r1, s2 = f(r0, r1, s)
                out.append((2 * r0 + r1) * 2 + s2)
        return permutation_matrix(out)

    return {
        "not": perm(lambda r0, r1, s: (r0, r1, 1 - s)),
        "ld0": perm(lambda r0, r1, s: (r0 ^ s, r1, s)),
        "ld1": perm(lambda r0, r1, s: (r0, r1 ^ s, s)),
        "cx0": perm(lambda r0, r1, s: (r0, r1, s ^ r0)),
        "ccx": perm(lambda r0, r1, s: (r0, r1, s ^ (r0 & r1))),
        "swap0": perm(lambda r0, r1, s: (s, r1, r0)),
    }


def eval_boolean(circuit: Sequence[tuple], bits: Sequence[int]) -> tuple[int, ...]:
    """Direct evaluation of a reversible Boolean circuit (reference semantics)."""
    b = list(bits)
    for g in circuit:
        if g[0] == "NOT":
            b[g[1]] ^= 1
        elif g[0] == "CNOT":
            b[g[2]] ^= b[g[1]]
        elif g[0] == "TOFFOLI":
            b[g[3]] ^= b[g[1]] & b[g[2]]
        else:
            raise InvalidInput(f"unsupported Boolean gate {g[0]!r}")
    return tuple(b)


def compile_ccm_to_lctm(circuit: Sequence[tuple], n_bits: int) -> tuple[LtmSpec, list[GateStep]]:
    """Realize a reversible Boolean circuit with local permutations.

    The processor holds two scratch bits. ``CNOT(c, t)`` loads ``c`` into the
    processor, XORs it into ``t`` and unloads it again; ``TOFFOLI`` does the
    same with both scratch bits. AND is a Toffoli onto a zero target.
    """
    if n_bits > 16:
        raise InvalidInput("at most 16 bits")
    actions: list[tuple[str, int]] = []
    for g in circuit:
        name = g[0]
        if name == "NOT":
            actions.append(("not", g[1]))
        elif name == "CNOT":
            c, t = g[1], g[2]
            actions += [("ld0", c), ("cx0", t), ("ld0", c)]
        elif name in ("TOFFOLI", "AND"):
            a, b, t = g[1], g[2], g[3]
            actions += [("ld0", a), ("ld1", b), ("ccx", t), ("ld1", b), ("ld0", a)]
        else:
            raise InvalidInput(f"unsupported Boolean gate {name!r}")
    spec = LtmSpec("lctm", 4, 2, n_bits, _classical_gates())
    return spec, _schedule(actions)


# ----------------------------------------------------------------------------
# Quantum circuits
# ----------------------------------------------------------------------------

QUANTUM_GATES = ("H", "T", "CZ")


def _check_quantum(circuit: Sequence[tuple], n_qubits: int) -> None:
    for g in circuit:
        if g[0] not in QUANTUM_GATES:
            raise InvalidInput(f"gate {g[0]!r} outside {{CZ, H, T}}")
        qs = g[1:]
        if any(not 0 <= q < n_qubits for q in qs) or len(set(qs)) != len(qs):
            raise InvalidInput(f"bad qubit indices in {g}")


def apply_on(psi: np.ndarray, op: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Apply a ``k``-qubit operator to ``qubits`` of an ``n``-qubit vector (qubit 0 most significant)."""
    k = len(qubits)
    t = np.asarray(psi).reshape([2] * n)
    t = np.tensordot(op.reshape([2] * (2 * k)), t, axes=(list(range(k, 2 * k)), list(qubits)))
    return np.moveaxis(t, list(range(k)), list(qubits)).reshape(-1)


def op_on(op: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Dense ``2^n x 2^n`` matrix of ``op`` acting on ``qubits``."""
    eye = np.eye(2**n, dtype=complex).reshape([2] * n + [2**n])
    k = len(qubits)
    t = np.tensordot(op.reshape([2] * (2 * k)), eye, axes=(list(range(k, 2 * k)), list(qubits)))
    return np.moveaxis(t, list(range(k)), list(qubits)).reshape(2**n, 2**n)


def gate_matrix(g: tuple, n: int) -> np.ndarray:
    if g[0] == "CZ":
        return op_on(CZ, [g[1], g[2]], n)
    return op_on(SINGLE_QUBIT[g[0]], [g[1]], n)


def apply_qubit_gate(psi: np.ndarray, g: tuple, n: int) -> np.ndarray:
    if g[0] == "CZ":
        return apply_on(psi, CZ, g[1:3], n)
    if g[0] not in SINGLE_QUBIT:
        raise InvalidInput(f"unsupported gate {g[0]!r}")
    return apply_on(psi, SINGLE_QUBIT[g[0]], g[1:2], n)


def simulate_dense(circuit: Sequence[tuple], n_qubits: int, state: np.ndarray | None = None) -> np.ndarray:
    """Gate-by-gate dense simulation; qubit 0 is the most significant index."""
    _caps.check_cap(2**n_qubits, _caps.STATEVECTOR_CAP)
    if state is None:
        psi = np.zeros(2**n_qubits, dtype=complex)
        psi[0] = 1
    else:
        psi = np.asarray(state, dtype=complex).reshape(-1)
        if psi.size != 2**n_qubits:
            raise InvalidInput(f"state has size {psi.size}, expected {2**n_qubits}")
    for g in circuit:
        psi = apply_qubit_gate(psi, g, n_qubits)
    return psi


def circuit_unitary(circuit: Sequence[tuple], n_qubits: int) -> np.ndarray:
    u = np.eye(2**n_qubits, dtype=complex)
    for g in circuit:
        u = gate_matrix(g, n_qubits) @ u
    return u


def compile_qcm_to_lqtm(circuit: Sequence[tuple], n_qubits: int) -> tuple[LtmSpec, list[GateStep]]:
    """Logical qubits stay on the tape; the processor is one ancilla ``e``.

    ``H`` and ``T`` are single local gates; ``CZ(i, j)`` is swap ``i``<->``e``,
    ``CZ`` between ``e`` and ``j``, and swap back, which returns ``e`` to ``|0>``.
    """
    _check_quantum(circuit, n_qubits)
    gates = {
        "H": np.kron(I2, H),
        "T": np.kron(I2, T),
        "SWAP": SWAP,
        "CZ": CZ,
    }
    actions: list[tuple[str, int]] = []
    for g in circuit:
        if g[0] == "CZ":
            i, j = g[1], g[2]
            actions += [("SWAP", i), ("CZ", j), ("SWAP", i)]
        else:
            actions.append((g[0], g[1]))
    spec = LtmSpec("lqtm", 2, 2, n_qubits, gates, meta={"gadget": "swap"})
    return spec, _schedule(actions)


# ----------------------------------------------------------------------------
# Unilateral machine: one forward sweep, CZ by teleportation
# ----------------------------------------------------------------------------

PAULIS = {"I": I2, "X": X, "Y": np.array([[0, -1j], [1j, 0]]), "Z": Z}


def gadget_byproduct(a: int, b: int) -> np.ndarray:
    """Byproduct ``X^a Z^b`` left on the teleported qubit for outcomes ``(a, b)``."""
    return np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b)


def pauli_label(u: np.ndarray, tol: float = 1e-10) -> str | None:
    """Name of the Pauli string ``u`` is proportional to (qubit 0 first), or None."""
    n = int(np.log2(u.shape[0]))
    for labels in itertools.product("IXYZ", repeat=n):
        p = reduce_kron([PAULIS[c] for c in labels])
        if abs(abs(np.trace(p.conj().T @ u)) / 2**n - 1) < tol:
            return "".join(labels)
    return None


def reduce_kron(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


@dataclass(frozen=True)
class Corrections:
    """Outcome-indexed corrections for a unilateral program.

    ``measured`` lists the tape sites read out at the end, in outcome order;
    ``unitaries[m]`` maps the raw branch output to the ideal output and
    ``labels[m]`` names it when it is a Pauli string.
    """

    measured: tuple[int, ...]
    unitaries: dict
    labels: dict


class Branch(NamedTuple):
    outcome: tuple[int, ...]
    probability: float
    raw: np.ndarray
    corrected: np.ndarray


def compile_unilateral(circuit: Sequence[tuple], n_qubits: int) -> tuple[LtmSpec, list[GateStep], Corrections]:
    """Compile a {CZ, H, T} circuit to a machine whose head only moves right.

    The processor carries ``n_qubits + 1`` qubit slots: one per logical qubit
    and one spare kept in ``|0>``. The tape holds, in order, ``n`` input
    sites, two fresh sites ``(alpha, beta)`` per CZ, and ``n`` output sites.
    Every step touches one new site and moves right; processor-only gates
    are folded into the next step.

    ``CZ(i, j)`` at ``alpha``: Bell pair between ``alpha`` and the spare,
    ``CZ`` between qubit ``j`` and ``alpha``, then the Bell-measurement
    rotation ``H_i CNOT(i -> alpha)``. At ``beta`` qubit ``i`` is swapped
    out for a later Z readout and the spare slot becomes qubit ``i``.
    Measuring ``alpha`` and ``beta`` with outcomes ``(a, b)`` leaves
    ``CZ(i, j) X_i^a Z_i^b`` applied to the logical state.
    """
    _check_quantum(circuit, n_qubits)
    n = n_qubits
    slots = n + 1
    width = slots + 1  # processor slots then the site qubit
    site_q = slots
    n_cz = sum(g[0] == "CZ" for g in circuit)
    n_sites = 2 * n + 2 * n_cz
    _caps.check_cap(2**(slots + n_sites), _caps.CIRCUIT_CAP)

    slot_of = list(range(n))
    free = n
    pending = np.eye(2**slots, dtype=complex)
    step_ops: list[np.ndarray] = []

    def proc(op, qs):
        return op_on(op, qs, slots)

    def emit(local: np.ndarray):
        nonlocal pending
        step_ops.append(local @ np.kron(pending, I2))
        pending = np.eye(2**slots, dtype=complex)

    for k in range(n):
        emit(op_on(SWAP, [k, site_q], width))
    measured: list[int] = []
    cz_events: list[tuple[int, int]] = []
    for g in circuit:
        if g[0] != "CZ":
            pending = proc(SINGLE_QUBIT[g[0]], [slot_of[g[1]]]) @ pending
            continue
        i, j = g[1], g[2]
        si, sj = slot_of[i], slot_of[j]
        local = reduce_right([
            op_on(H, [site_q], width),
            op_on(CNOT, [site_q, free], width),
            op_on(CZ, [sj, site_q], width),
            op_on(CNOT, [si, site_q], width),
            op_on(H, [si], width),
        ])
        alpha = len(step_ops)
        emit(local)
        emit(op_on(SWAP, [si, site_q], width))
        measured += [alpha, alpha + 1]
        cz_events.append((i, j))
        slot_of[i], free = free, si
    out0 = len(step_ops)
    for k in range(n):
        emit(op_on(SWAP, [slot_of[k], site_q], width))
    assert len(step_ops) == n_sites

    gates = {f"u{s}": op for s, op in enumerate(step_ops)}
    program = [GateStep(f"u{s}", s, 1 if s < n_sites - 1 else 0, None if s < n_sites - 1 else HALT)
               for s in range(n_sites)]
    spec = LtmSpec("lqtm", 2**slots, 2, n_sites, gates, meta={
        "n_qubits": n,
        "input_sites": list(range(n)),
        "output_sites": list(range(out0, out0 + n)),
        "measured_sites": measured,
        "circuit": [list(g) for g in circuit],
    })

    ideal = circuit_unitary(circuit, n)
    unitaries, labels = {}, {}
    for outcome in itertools.product((0, 1), repeat=2 * n_cz):
        u = branch_unitary(circuit, n, outcome)
        c = ideal @ u.conj().T
        unitaries[outcome] = c
        labels[outcome] = pauli_label(c)
    return spec, program, Corrections(tuple(measured), unitaries, labels)


def reduce_right(ops: Sequence[np.ndarray]) -> np.ndarray:
    """Product of ``ops`` applied in list order (first element acts first)."""
    out = ops[0]
    for op in ops[1:]:
        out = op @ out
    return out


def branch_unitary(circuit: Sequence[tuple], n: int, outcome: Sequence[int]) -> np.ndarray:
    """Logical map of one branch: every CZ preceded by its teleportation byproduct."""
    u = np.eye(2**n, dtype=complex)
    k = 0
    for g in circuit:
        if g[0] == "CZ":
            u = op_on(gadget_byproduct(outcome[2 * k], outcome[2 * k + 1]), [g[1]], n) @ u
            k += 1
        u = gate_matrix(g, n) @ u
    return u


def unilateral_input(spec: LtmSpec, psi: np.ndarray | None = None) -> Configuration:
    """Processor in ``|0>``, logical input on the input sites, all other sites ``|0>``."""
    n = spec.meta["n_qubits"]
    if psi is None:
        psi = np.zeros(2**n, dtype=complex)
        psi[0] = 1
    rest = np.zeros(2 ** (spec.n_sites - n), dtype=complex)
    rest[0] = 1
    return initial_configuration(spec, np.kron(np.asarray(psi, dtype=complex), rest))


def _project(spec: LtmSpec, state: np.ndarray, outcome: Sequence[int]) -> np.ndarray:
    """Branch amplitude on the output sites: processor, input and measured sites fixed."""
    n = spec.meta["n_qubits"]
    t = state.reshape([spec.q_dim] + [2] * spec.n_sites)
    idx: list = [0] + [slice(None)] * spec.n_sites
    for site in spec.meta["input_sites"]:
        idx[1 + site] = 0
    for site, bit in zip(spec.meta["measured_sites"], outcome):
        idx[1 + site] = bit
    out = t[tuple(idx)]
    return out.reshape(2**n)


def enumerate_branches(spec: LtmSpec, program: Sequence[GateStep], corr: Corrections,
                       psi: np.ndarray | None = None) -> tuple[list[Branch], MachineRun]:
    """Run once, then read off every measurement branch and apply its correction.

    Processor and input sites end in ``|0>`` on every branch, so slicing the
    final state at those values loses no weight.
    """
    res = run(spec, program, unilateral_input(spec, psi), record_states=False)
    branches = []
    for outcome, c in corr.unitaries.items():
        raw = _project(spec, res.final.state, outcome)
        p = float(np.vdot(raw, raw).real)
        unit = raw / np.sqrt(p) if p > 0 else raw
        branches.append(Branch(outcome, p, unit, c @ unit))
    return branches, res


def sample_branch(spec: LtmSpec, program: Sequence[GateStep], corr: Corrections,
                  rng: np.random.Generator, psi: np.ndarray | None = None) -> Branch:
    branches, _ = enumerate_branches(spec, program, corr, psi)
    probs = np.array([b.probability for b in branches])
    return branches[int(rng.choice(len(branches), p=probs / probs.sum()))]
