import itertools

import numpy as np
import pytest

from seqtape import ltm
from seqtape.channels import Channel
from seqtape.errors import InvalidInput, MachineError

from conftest import random_state

INCREMENT = [("TOFFOLI", 1, 2, 0), ("CNOT", 2, 1), ("NOT", 2)]


def _swap_spec(n_sites=3):
    # processor bit (x) tape bit, swap the two
    return ltm.LtmSpec("lctm", 2, 2, n_sites, {"swap": ltm.permutation_matrix([0, 2, 1, 3])})


def test_identity_step_moves_head_only():
    spec = _swap_spec()
    cfg = ltm.initial_configuration(spec, [1, 0, 1])
    out = ltm.step(cfg, spec, ltm.GateStep(None, 0, 1))
    assert out.state == cfg.state and out.head == 1


def test_swap_step():
    spec = _swap_spec()
    out = ltm.step(ltm.initial_configuration(spec, [1, 0, 0]), spec, ltm.GateStep("swap", 0, 0))
    assert out.state == (1, (0, 0, 0))


def test_step_errors():
    spec = _swap_spec()
    cfg = ltm.initial_configuration(spec, [0, 0, 0])
    with pytest.raises(MachineError):
        ltm.step(cfg, spec, ltm.GateStep(None, 0, -1))
    with pytest.raises(MachineError):
        ltm.step(cfg, spec, ltm.GateStep("swap", 2, 0))
    halted = ltm.step(cfg, spec, ltm.GateStep(None, 0, 0, ltm.HALT))
    with pytest.raises(MachineError):
        ltm.step(halted, spec, ltm.GateStep(None, 0, 0))
    with pytest.raises(MachineError):
        ltm.step(cfg, spec, ltm.GateStep("nope", 0, 0))


def test_spec_validation():
    with pytest.raises(InvalidInput):
        ltm.LtmSpec("lctm", 2, 2, 1, {"g": np.full((4, 4), 0.25)})
    with pytest.raises(InvalidInput):
        ltm.LtmSpec("lptm", 2, 2, 1, {"g": np.eye(4) * 2})
    with pytest.raises(InvalidInput):
        ltm.LtmSpec("lqtm", 2, 2, 1, {"g": np.ones((4, 4))})
    with pytest.raises(InvalidInput):
        ltm.LtmSpec("xtm", 2, 2, 1, {})


def test_empty_program():
    spec = _swap_spec()
    cfg = ltm.initial_configuration(spec, [1, 1, 0])
    res = ltm.run(spec, [], cfg)
    assert res.final == cfg and not res.halted
    halting = ltm.LtmSpec("lctm", 2, 2, 3, spec.gates, start_control=ltm.HALT)
    assert ltm.run(halting, [], ltm.initial_configuration(halting, [0, 0, 0])).halted


def test_hadamard_step_matches_dense(rng):
    spec = ltm.LtmSpec("lqtm", 2, 2, 2, {"h": np.kron(np.eye(2), ltm.H)})
    psi = random_state(rng, 4)
    cfg = ltm.initial_configuration(spec, psi)
    out = ltm.run(spec, [ltm.GateStep(None, 0, 1), ltm.GateStep("h", 1, 0)], cfg).final
    np.testing.assert_allclose(out.state.reshape(2, 4)[0], ltm.simulate_dense([("H", 1)], 2, psi), atol=1e-14)


def test_incrementer_truth_table():
    spec, prog = ltm.compile_ccm_to_lctm(INCREMENT, 3)
    for x in range(8):
        bits = tuple(int(b) for b in format(x, "03b"))
        res = ltm.run(spec, prog, ltm.initial_configuration(spec, bits))
        assert res.halted
        assert res.final.state == (0, tuple(int(b) for b in format((x + 1) % 8, "03b")))


def test_single_not_is_one_step():
    spec, prog = ltm.compile_ccm_to_lctm([("NOT", 0)], 1)
    assert [s.gate for s in prog if s.gate] == ["not"]


@pytest.mark.parametrize("circuit,n,fn", [
    ([("CNOT", 0, 1)], 2, lambda b: (b[0], b[0] ^ b[1])),
    # bit 3 ^= ab ^ ac ^ bc, the majority of bits 0..2
    ([("TOFFOLI", 0, 1, 3), ("TOFFOLI", 0, 2, 3), ("TOFFOLI", 1, 2, 3)], 4,
     lambda b: (b[0], b[1], b[2], b[3] ^ ((b[0] & b[1]) ^ (b[0] & b[2]) ^ (b[1] & b[2])))),
])
def test_boolean_circuits(circuit, n, fn):
    spec, prog = ltm.compile_ccm_to_lctm(circuit, n)
    for bits in itertools.product((0, 1), repeat=n):
        res = ltm.run(spec, prog, ltm.initial_configuration(spec, bits))
        assert res.final.state == (0, fn(bits))
        assert res.final.state[1] == ltm.eval_boolean(circuit, bits)


def test_majority_value():
    # XOR of pairwise ANDs equals majority for three bits
    spec, prog = ltm.compile_ccm_to_lctm([("TOFFOLI", 0, 1, 3), ("TOFFOLI", 0, 2, 3), ("TOFFOLI", 1, 2, 3)], 4)
    for bits in itertools.product((0, 1), repeat=3):
        res = ltm.run(spec, prog, ltm.initial_configuration(spec, bits + (0,)))
        assert res.final.state[1][3] == int(sum(bits) >= 2)


def test_unsupported_gate():
    with pytest.raises(InvalidInput):
        ltm.compile_ccm_to_lctm([("OR", 0, 1)], 2)
    with pytest.raises(InvalidInput):
        ltm.compile_qcm_to_lqtm([("CNOT", 0, 1)], 2)


def test_reversibility():
    spec, prog = ltm.compile_ccm_to_lctm(INCREMENT, 3)
    ispec, iprog, head = ltm.invert_program(spec, prog)
    for g in spec.gates.values():
        assert ltm.is_permutation(g)
    for bits in itertools.product((0, 1), repeat=3):
        fwd = ltm.run(spec, prog, ltm.initial_configuration(spec, bits)).final
        back = ltm.run(ispec, iprog, ltm.Configuration(fwd.state, head, ltm.RUN)).final
        assert back.state == (0, bits) and back.head == 0


def test_head_locality():
    spec, prog = ltm.compile_qcm_to_lqtm([("CZ", 0, 3), ("H", 1), ("CZ", 2, 0)], 4)
    res = ltm.run(spec, prog, ltm.initial_configuration(spec, [0, 0, 0, 0]))
    heads = ltm.head_positions(res.trace)
    assert all(abs(b - a) <= 1 for a, b in zip(heads, heads[1:]))


def test_cz_on_plus_plus():
    spec, prog = ltm.compile_qcm_to_lqtm([("CZ", 0, 1)], 2)
    psi = np.full(4, 0.5)
    out = ltm.run(spec, prog, ltm.initial_configuration(spec, psi)).final.state.reshape(2, 4)
    np.testing.assert_allclose(out[0], [0.5, 0.5, 0.5, -0.5], atol=1e-15)
    assert np.linalg.norm(out[1]) < 1e-15


def test_ancilla_reset_after_every_gadget(rng):
    circ = [("CZ", 0, 1), ("H", 2), ("CZ", 2, 1), ("T", 0), ("CZ", 0, 2)]
    spec, prog = ltm.compile_qcm_to_lqtm(circ, 3)
    res = ltm.run(spec, prog, ltm.initial_configuration(spec, random_state(rng, 8)))
    # after each second swap the processor is back in |0>
    swaps = [k for k, s in enumerate(prog) if s.gate == "SWAP"][1::2]
    for k in swaps:
        psi = res.trace[k + 1].state.reshape(2, -1)
        assert np.linalg.norm(psi[1]) < 1e-12


def test_random_circuit_fidelity(rng):
    gates = []
    for _ in range(15):
        kind = rng.choice(["H", "T", "CZ"])
        if kind == "CZ":
            i, j = rng.choice(4, 2, replace=False)
            gates.append(("CZ", int(i), int(j)))
        else:
            gates.append((str(kind), int(rng.integers(4))))
    psi = random_state(rng, 16)
    spec, prog = ltm.compile_qcm_to_lqtm(gates, 4)
    out = ltm.run(spec, prog, ltm.initial_configuration(spec, psi), record_states=False).final.state
    ref = ltm.simulate_dense(gates, 4, psi)
    assert abs(np.vdot(ref, out.reshape(2, 16)[0])) ** 2 > 1 - 1e-10


def test_simulate_dense_basics(rng):
    psi = random_state(rng, 8)
    np.testing.assert_allclose(ltm.simulate_dense([], 3, psi), psi)
    np.testing.assert_allclose(ltm.simulate_dense([("H", 0), ("H", 0)], 1), [1, 0], atol=1e-15)
    # qubit 0 is most significant
    np.testing.assert_allclose(ltm.gate_matrix(("H", 0), 2), np.kron(ltm.H, np.eye(2)))


def test_channel_gates_give_density_matrix():
    damp = Channel([np.kron(np.eye(2), k) for k in ([[1, 0], [0, 0]], [[0, 1], [0, 0]])])
    spec = ltm.LtmSpec("lqtm", 2, 2, 1, {"reset": damp})
    cfg = ltm.initial_configuration(spec, [1])
    out = ltm.run(spec, [ltm.GateStep("reset", 0, 0)], cfg).final
    np.testing.assert_allclose(ltm.tape_marginal(spec, out), [[1, 0], [0, 0]], atol=1e-15)


# -- unilateral machine --------------------------------------------------------

def test_byproduct_table():
    np.testing.assert_allclose(ltm.gadget_byproduct(0, 0), np.eye(2))
    np.testing.assert_allclose(ltm.gadget_byproduct(1, 0), ltm.X)
    np.testing.assert_allclose(ltm.gadget_byproduct(0, 1), ltm.Z)
    np.testing.assert_allclose(ltm.gadget_byproduct(1, 1), ltm.X @ ltm.Z)


def test_single_cz_corrections_are_paulis():
    _, _, corr = ltm.compile_unilateral([("CZ", 0, 1)], 2)
    # CZ X_0 CZ = X_0 Z_1 and Z commutes with CZ
    assert corr.labels == {(0, 0): "II", (0, 1): "ZI", (1, 0): "XZ", (1, 1): "YZ"}


def test_cz_on_zero_zero_every_branch():
    spec, prog, corr = ltm.compile_unilateral([("CZ", 0, 1)], 2)
    branches, _ = ltm.enumerate_branches(spec, prog, corr)
    assert len(branches) == 4
    for b in branches:
        assert b.probability == pytest.approx(0.25, abs=1e-12)
        np.testing.assert_allclose(b.corrected, [1, 0, 0, 0], atol=1e-12)


def test_unilateral_structure():
    circ = [("H", 0), ("CZ", 0, 1), ("T", 1), ("CZ", 1, 2), ("H", 2)]
    spec, prog, corr = ltm.compile_unilateral(circ, 3)
    assert spec.n_sites == 3 + 4 + 3
    assert [s.shift for s in prog] == [1] * (spec.n_sites - 1) + [0]
    assert [s.site for s in prog] == list(range(spec.n_sites))
    assert len(set(s.gate for s in prog)) == spec.n_sites  # one interaction per site


def test_unilateral_random_branches(rng):
    circ = [("H", 0), ("CZ", 0, 1), ("T", 1), ("H", 2), ("CZ", 1, 2), ("T", 0), ("CZ", 2, 0), ("H", 1)]
    psi = random_state(rng, 8)
    spec, prog, corr = ltm.compile_unilateral(circ, 3)
    branches, res = ltm.enumerate_branches(spec, prog, corr, psi)
    ref = ltm.simulate_dense(circ, 3, psi)
    assert len(branches) == 64
    for b in branches:
        assert b.probability == pytest.approx(1 / 64, abs=1e-12)
        np.testing.assert_allclose(b.corrected, ref, atol=1e-10)
    heads = ltm.head_positions(res.trace)
    assert heads == sorted(heads)


def test_sample_branch_is_seeded():
    spec, prog, corr = ltm.compile_unilateral([("H", 0), ("CZ", 0, 1)], 2)
    a = ltm.sample_branch(spec, prog, corr, np.random.default_rng(7))
    b = ltm.sample_branch(spec, prog, corr, np.random.default_rng(7))
    assert a.outcome == b.outcome
