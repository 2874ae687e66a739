import numpy as np
import pytest

from seqtape import circuits, mps, tns
from seqtape.channels import Channel
from seqtape.errors import CycleError, ShapeError


def rk(rng, r, out, inp):
    return rng.normal(size=(r, out, inp)) + 1j * rng.normal(size=(r, out, inp))


def grid(rng):
    """2x2 grid: a feeds b and c, both feed d; non-TP random maps."""
    w = [tns.Wire("in", 2, None, "a"), tns.Wire("ab", 2, "a", "b"), tns.Wire("ac", 3, "a", "c"),
         tns.Wire("bd", 2, "b", "d"), tns.Wire("cd", 2, "c", "d"), tns.Wire("out", 2, "d", None)]
    v = [tns.Vertex("a", rk(rng, 2, 6, 2), ["in"], ["ab", "ac"]),
         tns.Vertex("b", rk(rng, 2, 2, 2), ["ab"], ["bd"]),
         tns.Vertex("c", rk(rng, 2, 2, 3), ["ac"], ["cd"]),
         tns.Vertex("d", rk(rng, 2, 2, 4), ["bd", "cd"], ["out"])]
    return tns.ChannelNetwork(v, w, rng.normal(size=2), rng.normal(size=2))


def coupled(rng, n=3):
    """Two chains x1..xn and y1..yn with a bridge vertex taking x2 and y2 wires."""
    w, v = [], []
    for c in "xy":
        w.append(tns.Wire(f"{c}0", 2, None, f"{c}1"))
        for k in range(1, n):
            w.append(tns.Wire(f"{c}{k}", 2, f"{c}{k}", f"{c}{k + 1}" if k != 2 else "bridge"))
        w.append(tns.Wire(f"{c}{n}", 2, f"{c}{n}", None))
    w.append(tns.Wire("bx", 2, "bridge", "x3"))
    w.append(tns.Wire("by", 2, "bridge", "y3"))
    for c in "xy":
        for k in range(1, n + 1):
            inp = [f"{c}{k - 1}"] if k != 3 else [f"b{c}"]
            v.append(tns.Vertex(f"{c}{k}", rk(rng, 2, 2, 2), inp, [f"{c}{k}"]))
    v.append(tns.Vertex("bridge", rk(rng, 2, 4, 4), ["x2", "y2"], ["bx", "by"]))
    return tns.ChannelNetwork(v, w, rng.normal(size=4), rng.normal(size=4))


def permute_sites(psi, d, order_from, order_to):
    t = psi.reshape([d] * len(order_from))
    return t.transpose([order_from.index(x) for x in order_to]).reshape(-1)


def test_stages():
    rng = np.random.default_rng(0)
    m = mps.random_mps(2, 9, 2, rng, boundary=mps.VECTOR)
    assert len(tns.validate_acyclic(tns.network_from_mps(m)).stages) == 9
    single = tns.ChannelNetwork([tns.Vertex("v", rk(rng, 2, 1, 1))], [])
    assert tns.validate_acyclic(single).stages == [["v"]]
    assert tns.validate_acyclic(grid(rng)).stages == [["a"], ["b", "c"], ["d"]]


def test_cycle_witness():
    rng = np.random.default_rng(0)
    w = [tns.Wire("x", 2, "a", "b"), tns.Wire("y", 2, "b", "a")]
    v = [tns.Vertex("a", rk(rng, 1, 2, 2), ["y"], ["x"]), tns.Vertex("b", rk(rng, 1, 2, 2), ["x"], ["y"])]
    net = tns.ChannelNetwork(v, w)
    rep = tns.validate_acyclic(net)
    assert not rep.acyclic and set(rep.cycle) == {"a", "b"}
    with pytest.raises(CycleError):
        tns.evaluate(net)


def test_wire_dimension_mismatch():
    rng = np.random.default_rng(0)
    with pytest.raises(ShapeError):
        tns.ChannelNetwork([tns.Vertex("a", rk(rng, 2, 3, 1), [], ["o"])], [tns.Wire("o", 2, "a", None)],
                           output_functional=np.ones(2))


def test_linear_chain_equals_mps():
    rng = np.random.default_rng(1)
    for boundary in (mps.VECTOR, mps.PROJECTED, mps.PERIODIC):
        m = mps.random_mps(2, 5, 3, rng, boundary=boundary)
        psi, norm = tns.evaluate(tns.network_from_mps(m))
        np.testing.assert_allclose(psi, mps.contract(m), atol=1e-12)
        assert norm == pytest.approx(np.linalg.norm(psi))


def test_tp_chain_has_unit_norm():
    rng = np.random.default_rng(2)
    psi0 = rng.normal(size=32) + 1j * rng.normal(size=32)
    m = mps.from_statevector(psi0 / np.linalg.norm(psi0), 2)
    assert tns.evaluate(tns.network_from_mps(m))[1] == pytest.approx(1, abs=1e-10)


@pytest.mark.parametrize("build", [grid, coupled])
def test_against_brute_force(build):
    rng = np.random.default_rng(3)
    net = build(rng)
    psi, _ = tns.evaluate(net)
    np.testing.assert_allclose(psi, tns.brute_force(net), atol=1e-10 * np.abs(psi).max())


def test_order_invariance():
    rng = np.random.default_rng(4)
    net = grid(rng)
    a, _ = tns.evaluate(net, ["a", "b", "c", "d"])
    b, _ = tns.evaluate(net, ["a", "c", "b", "d"])
    np.testing.assert_allclose(a, b, atol=1e-12 * np.abs(a).max())
    with pytest.raises(CycleError):
        tns.evaluate(net, ["b", "a", "c", "d"])


@pytest.mark.parametrize("build,order", [
    (grid, ["a", "c", "b", "d"]),
    (coupled, ["x1", "y1", "x2", "y2", "bridge", "x3", "y3"]),
])
def test_flatten_matches_evaluate(build, order):
    rng = np.random.default_rng(5)
    net = build(rng)
    psi, _ = tns.evaluate(net)
    flat = tns.flatten_to_mps(net, order)
    names = [v.name for v in net.vertices]
    got = permute_sites(mps.contract(flat), 2, order, names)
    np.testing.assert_allclose(got, psi, atol=1e-10 * np.abs(psi).max())
    assert flat.bonds == tns.cut_dimensions(net, order)


def test_flatten_linear_chain_returns_same_tensors():
    rng = np.random.default_rng(6)
    m = mps.random_mps(2, 4, 3, rng)
    f = tns.flatten_to_mps(tns.network_from_mps(m))
    for a, b in zip(f.tensors, m.tensors):
        np.testing.assert_allclose(a, b)


def test_interleaved_chains_bond_and_tensor_composition():
    rng = np.random.default_rng(7)
    ma, mb = mps.random_mps(2, 3, 2, rng), mps.random_mps(2, 3, 3, rng)
    na, nb = tns.network_from_mps(ma), tns.network_from_mps(mb)
    verts, wires = [], []
    for tag, net in (("A", na), ("B", nb)):
        for w in net.wires:
            wires.append(tns.Wire(tag + w.name, w.dim, w.src and tag + w.src, w.dst and tag + w.dst))
        for v in net.vertices:
            verts.append(tns.Vertex(tag + v.name, v.kraus, [tag + x for x in v.inputs], [tag + x for x in v.outputs]))
    # source wires: A.b0, B.b0 ; sink wires: A.b3, B.b3 (in wires order)
    net = tns.ChannelNetwork(verts, wires, np.kron(na.input_state, nb.input_state),
                             np.kron(na.output_functional, nb.output_functional))
    wire_order = [w.name for w in net.wires]
    assert wire_order.index("Ab0") < wire_order.index("Bb0")
    order = ["As1", "Bs1", "As2", "Bs2", "As3", "Bs3"]
    flat = tns.flatten_to_mps(net, order)
    assert flat.bonds[2] == 2 * 3  # one A bond and one B bond cross that cut
    expect = circuits.interleave_tapes(mps.contract(ma), mps.contract(mb), 2, 2, 3)
    got = mps.contract(flat).reshape([2] * 6)
    # flat sites alternate a, b; interleave_tapes pairs (a_n, b_n) in the same order
    np.testing.assert_allclose(got.reshape(-1), expect, atol=1e-12)


def test_mixture_vertex():
    x = np.array([[0, 1], [1, 0]])
    mix = Channel.mixture([(0.25, Channel.unitary(np.eye(2))), (0.75, Channel.unitary(x))])
    net = tns.ChannelNetwork([tns.Vertex("m", mix, ["i"], ["o"])],
                             [tns.Wire("i", 2, None, "m"), tns.Wire("o", 2, "m", None)],
                             np.array([1, 0]), np.array([0, 1]))
    psi, _ = tns.evaluate(net)
    np.testing.assert_allclose(psi, [0, np.sqrt(0.75)], atol=1e-15)
