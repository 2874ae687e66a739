"""Acyclic channel networks and the tensor-network states they define.

Each vertex is a CP map given by Kraus operators ``K_i`` of shape
``(out, in)``; the Kraus index ``i`` is the physical spin the vertex emits.
The vertex input space is the tensor product of its input wires in the
listed order (first wire most significant), likewise for outputs.

Wires with ``src=None`` are fed by the network input state ``|I>`` and wires
with ``dst=None`` are closed by the output functional ``<O|``, both ordered
as the wires appear in ``ChannelNetwork.wires``. The functional is applied as
a plain row vector, without conjugation.

The state is ``|Psi> = <O| prod_v V_v |I>`` with ``V_v = sum_i |i> K_i``;
amplitudes are indexed by vertex spins in vertex order, first most significant.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import networkx as nx
import numpy as np

from . import _caps
from .channels import Channel
from .errors import CapExceeded, CycleError, InvalidInput, ShapeError
from .mps import PERIODIC, PROJECTED, Mps, pbc_to_obc


@dataclass(frozen=True)
class Wire:
    name: str
    dim: int
    src: str | None = None
    dst: str | None = None


@dataclass(frozen=True)
class Vertex:
    name: str
    kraus: np.ndarray  # (r, out, in)
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()

    def __init__(self, name: str, kraus, inputs: Sequence[str] = (), outputs: Sequence[str] = ()):
        if isinstance(kraus, Channel):
            kraus = kraus.kraus
        k = np.array(kraus, dtype=complex)
        if k.ndim != 3:
            raise ShapeError(f"vertex {name!r}: Kraus stack must be 3-d, got shape {k.shape}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "kraus", k)
        object.__setattr__(self, "inputs", tuple(inputs))
        object.__setattr__(self, "outputs", tuple(outputs))

    @property
    def phys_dim(self) -> int:
        return self.kraus.shape[0]


@dataclass(frozen=True)
class ChannelNetwork:
    vertices: tuple[Vertex, ...]
    wires: tuple[Wire, ...]
    input_state: np.ndarray
    output_functional: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __init__(self, vertices: Sequence[Vertex], wires: Sequence[Wire],
                 input_state=None, output_functional=None, meta: dict | None = None):
        object.__setattr__(self, "vertices", tuple(vertices))
        object.__setattr__(self, "wires", tuple(wires))
        object.__setattr__(self, "meta", dict(meta or {}))
        src_dim = int(np.prod([w.dim for w in self.source_wires]))
        snk_dim = int(np.prod([w.dim for w in self.sink_wires]))
        i = np.ones(1) if input_state is None else input_state
        o = np.ones(1) if output_functional is None else output_functional
        i = np.asarray(i, dtype=complex).reshape(-1)
        o = np.asarray(o, dtype=complex).reshape(-1)
        if i.size != src_dim:
            raise ShapeError(f"input state has size {i.size}, source wires need {src_dim}")
        if o.size != snk_dim:
            raise ShapeError(f"output functional has size {o.size}, sink wires need {snk_dim}")
        object.__setattr__(self, "input_state", i)
        object.__setattr__(self, "output_functional", o)
        self._check_wiring()

    @property
    def source_wires(self) -> list[Wire]:
        return [w for w in self.wires if w.src is None]

    @property
    def sink_wires(self) -> list[Wire]:
        return [w for w in self.wires if w.dst is None]

    def vertex(self, name: str) -> Vertex:
        for v in self.vertices:
            if v.name == name:
                return v
        raise InvalidInput(f"no vertex named {name!r}")

    def _check_wiring(self) -> None:
        names = [v.name for v in self.vertices]
        if len(set(names)) != len(names):
            raise InvalidInput("vertex names must be unique")
        wires = {w.name: w for w in self.wires}
        if len(wires) != len(self.wires):
            raise InvalidInput("wire names must be unique")
        for w in self.wires:
            if w.src is None and w.dst is None:
                raise InvalidInput(f"wire {w.name!r} is attached to nothing")
            for end in (w.src, w.dst):
                if end is not None and end not in names:
                    raise InvalidInput(f"wire {w.name!r} refers to unknown vertex {end!r}")
        for v in self.vertices:
            for port, attr in ((v.inputs, "dst"), (v.outputs, "src")):
                for wn in port:
                    if wn not in wires:
                        raise InvalidInput(f"vertex {v.name!r} uses unknown wire {wn!r}")
                    if getattr(wires[wn], attr) != v.name:
                        raise InvalidInput(f"wire {wn!r} is not attached to {v.name!r} as declared")
            din = int(np.prod([wires[w].dim for w in v.inputs]))
            dout = int(np.prod([wires[w].dim for w in v.outputs]))
            if v.kraus.shape[1:] != (dout, din):
                raise ShapeError(
                    f"vertex {v.name!r}: Kraus shape {v.kraus.shape[1:]} does not match wires {(dout, din)}")
        for w in self.wires:
            if w.src is not None and w.name not in self.vertex(w.src).outputs:
                raise InvalidInput(f"wire {w.name!r} missing from outputs of {w.src!r}")
            if w.dst is not None and w.name not in self.vertex(w.dst).inputs:
                raise InvalidInput(f"wire {w.name!r} missing from inputs of {w.dst!r}")


class AcyclicReport(NamedTuple):
    acyclic: bool
    order: list
    stages: list
    cycle: list


def graph(net: ChannelNetwork) -> nx.MultiDiGraph:
    g = nx.MultiDiGraph()
    g.add_nodes_from(v.name for v in net.vertices)
    for w in net.wires:
        if w.src is not None and w.dst is not None:
            g.add_edge(w.src, w.dst, key=w.name)
    return g


def validate_acyclic(net: ChannelNetwork) -> AcyclicReport:
    """Topological order and stages of the flow, or a cycle witness."""
    g = graph(net)
    try:
        stages = [sorted(s, key=_position(net)) for s in nx.topological_generations(g)]
    except nx.NetworkXUnfeasible:
        cycle = [u for u, _, _ in nx.find_cycle(g)]
        return AcyclicReport(False, [], [], cycle)
    order = [n for s in stages for n in s]
    return AcyclicReport(True, order, stages, [])


def _position(net: ChannelNetwork):
    pos = {v.name: k for k, v in enumerate(net.vertices)}
    return pos.__getitem__


def _check_order(net: ChannelNetwork, order: Sequence[str]) -> None:
    names = [v.name for v in net.vertices]
    if sorted(order) != sorted(names):
        raise InvalidInput("order must list every vertex exactly once")
    seen = set()
    for name in order:
        v = net.vertex(name)
        for wn in v.inputs:
            w = next(x for x in net.wires if x.name == wn)
            if w.src is not None and w.src not in seen:
                raise CycleError(f"order is not topological: {name!r} precedes {w.src!r}")
        seen.add(name)


def _require_acyclic(net: ChannelNetwork) -> AcyclicReport:
    rep = validate_acyclic(net)
    if not rep.acyclic:
        raise CycleError(f"network has a cycle through {rep.cycle}")
    return rep


def evaluate(net: ChannelNetwork, order: Sequence[str] | None = None,
             cap: int | None = None) -> tuple[np.ndarray, float]:
    """Contract the network in a topological order; returns ``(state, norm)``.

    The state is left unnormalized.
    """
    rep = _require_acyclic(net)
    order = rep.order if order is None else list(order)
    _check_order(net, order)
    limit = _caps.cap(_caps.WIRE_CAP) if cap is None else cap
    dims = {w.name: w.dim for w in net.wires}

    # tensor axes are labelled by wire names (live) or ("phys", vertex)
    src = net.source_wires
    t = net.input_state.reshape([w.dim for w in src] or [1])
    labels: list = [w.name for w in src] or [("unit",)]
    for name in order:
        v = net.vertex(name)
        k = v.kraus.reshape([v.phys_dim] + [dims[w] for w in v.outputs] + [dims[w] for w in v.inputs])
        n_out = len(v.outputs)
        axes_t = [labels.index(w) for w in v.inputs]
        axes_k = list(range(1 + n_out, 1 + n_out + len(v.inputs)))
        t = np.tensordot(k, t, axes=(axes_k, axes_t))
        rest = [lab for j, lab in enumerate(labels) if j not in axes_t]
        labels = [("phys", name)] + list(v.outputs) + rest
        live = int(np.prod([dims[x] for x in labels if isinstance(x, str)]))
        if live > limit:
            raise CapExceeded(f"live wire dimension {live} exceeds cap {limit}")
    sink = net.sink_wires
    if sink:
        o = net.output_functional.reshape([w.dim for w in sink])
        t = np.tensordot(o, t, axes=(list(range(len(sink))), [labels.index(w.name) for w in sink]))
        labels = [lab for lab in labels if not (isinstance(lab, str))]
    else:
        t = t * net.output_functional[0]
    if ("unit",) in labels:
        t = np.take(t, 0, axis=labels.index(("unit",)))
        labels.remove(("unit",))
    perm = [labels.index(("phys", v.name)) for v in net.vertices]
    psi = np.transpose(t, perm).reshape(-1)
    return psi, float(np.linalg.norm(psi))


def brute_force(net: ChannelNetwork) -> np.ndarray:
    """Single einsum over every index; reference for :func:`evaluate`."""
    letters = iter(string.ascii_letters)
    wl = {w.name: next(letters) for w in net.wires}
    pl = {v.name: next(letters) for v in net.vertices}
    dims = {w.name: w.dim for w in net.wires}
    ops, subs = [], []
    src = net.source_wires
    if src:
        ops.append(net.input_state.reshape([w.dim for w in src]))
        subs.append("".join(wl[w.name] for w in src))
    for v in net.vertices:
        ops.append(v.kraus.reshape([v.phys_dim] + [dims[w] for w in v.outputs] + [dims[w] for w in v.inputs]))
        subs.append(pl[v.name] + "".join(wl[w] for w in v.outputs) + "".join(wl[w] for w in v.inputs))
    snk = net.sink_wires
    if snk:
        ops.append(net.output_functional.reshape([w.dim for w in snk]))
        subs.append("".join(wl[w.name] for w in snk))
    expr = ",".join(subs) + "->" + "".join(pl[v.name] for v in net.vertices)
    out = np.einsum(expr, *ops).reshape(-1)
    if not src:
        out = out * net.input_state[0]
    if not snk:
        out = out * net.output_functional[0]
    return out


def flatten_to_mps(net: ChannelNetwork, site_order: Sequence[str] | None = None) -> Mps:
    """Single-tape form: one MPS site per vertex, bond = all wires crossing the cut.

    After placing the first ``k`` vertices of ``site_order`` the live wires are
    those already produced (or fed by the input) but not yet consumed. Each
    site acts as its Kraus map on its own wires and as identity on the rest.
    The returned MPS has a projected boundary with ``|I>`` and ``<O|``; its
    site order is ``site_order``.
    """
    rep = _require_acyclic(net)
    order = rep.order if site_order is None else list(site_order)
    _check_order(net, order)
    d = {v.phys_dim for v in net.vertices}
    if len(d) != 1:
        raise InvalidInput("flattening needs the same physical dimension at every vertex")
    d = d.pop()
    dims = {w.name: w.dim for w in net.wires}
    wire_rank = {w.name: k for k, w in enumerate(net.wires)}
    cap = _caps.cap(_caps.WIRE_CAP)

    live = sorted((w.name for w in net.source_wires), key=wire_rank.__getitem__)
    tensors = []
    for name in order:
        v = net.vertex(name)
        spectators = [w for w in live if w not in v.inputs]
        new_live = sorted(spectators + list(v.outputs), key=wire_rank.__getitem__)
        chi_in = int(np.prod([dims[w] for w in live]))
        chi_out = int(np.prod([dims[w] for w in new_live]))
        if max(chi_in, chi_out) > cap:
            raise CapExceeded(f"bond {max(chi_in, chi_out)} exceeds cap {cap}")
        spec_dim = int(np.prod([dims[w] for w in spectators]))
        k = v.kraus.reshape([d] + [dims[w] for w in v.outputs] + [dims[w] for w in v.inputs])
        eye = np.eye(spec_dim).reshape([dims[w] for w in spectators] * 2)
        # full: (phys, outs, ins, spect_out, spect_in)
        full = np.multiply.outer(k, eye)
        n_o, n_i, n_s = len(v.outputs), len(v.inputs), len(spectators)
        out_axes = [1 + list(v.outputs).index(w) if w in v.outputs else 1 + n_o + n_i + spectators.index(w)
                    for w in new_live]
        in_axes = [1 + n_o + list(v.inputs).index(w) if w in v.inputs else 1 + n_o + n_i + n_s + spectators.index(w)
                   for w in live]
        a = np.transpose(full, [0] + out_axes + in_axes).reshape(d, chi_out, chi_in)
        tensors.append(a)
        live = new_live
    sink_order = sorted((w.name for w in net.sink_wires), key=wire_rank.__getitem__)
    assert live == sink_order
    return Mps(tensors, PROJECTED, left=net.input_state, right=net.output_functional)


def network_from_mps(m: Mps) -> ChannelNetwork:
    """Linear chain: vertex ``s<n>`` carries site ``n``'s matrices, bonds become wires."""
    if m.boundary == PERIODIC:
        m = pbc_to_obc(m)
    n = m.n_sites
    bonds = m.bonds
    wires = [Wire(f"b{k}", bonds[k], f"s{k}" if k > 0 else None, f"s{k + 1}" if k < n else None)
             for k in range(n + 1)]
    verts = [Vertex(f"s{k + 1}", m.tensors[k], [f"b{k}"], [f"b{k + 1}"]) for k in range(n)]
    return ChannelNetwork(verts, wires, m.left_vector(), m.right_vector())


def cut_dimensions(net: ChannelNetwork, site_order: Sequence[str]) -> list[int]:
    """Product of crossing wire dimensions at every cut of ``site_order``."""
    dims = {w.name: w.dim for w in net.wires}
    placed: set = set()
    out = [int(np.prod([w.dim for w in net.source_wires]))]
    for name in site_order:
        placed.add(name)
        crossing = [w for w in net.wires
                    if (w.src is None or w.src in placed) and (w.dst is None or w.dst not in placed)]
        out.append(int(np.prod([dims[w.name] for w in crossing])))
    return out
