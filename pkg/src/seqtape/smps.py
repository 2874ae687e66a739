"""Classical counterparts: stochastic machines, NMF and stochastic MPS.

A stochastic MPS stores nonnegative site tensors ``B[n]`` of shape
``(d, chi_{n-1}, chi_n)`` and nonnegative boundaries ``l``, ``r``:

    p(i_1 ... i_N) = l^T B_1[i_1] B_2[i_2] ... B_N[i_N] r

with site 1 the most significant digit. ``S[n] = sum_i B_n[i]`` is column
stochastic, so ``B_n[i][a, b]`` reads as the probability of emitting ``i`` and
moving the correlator to ``a`` given correlator ``b``. Generation therefore
runs from site N down to site 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _caps, ltm
from .errors import FactorizationError, InvalidInput, NotStochastic, ShapeError

STOCH_TOL = 1e-8
EPS = 1e-12


def is_column_stochastic(m: np.ndarray, tol: float = STOCH_TOL) -> bool:
    m = np.asarray(m, dtype=float)
    return bool(m.size == 0 or (m.min() >= -tol and np.all(np.abs(m.sum(0) - 1) <= tol)))


def is_doubly_stochastic(m: np.ndarray, tol: float = STOCH_TOL) -> bool:
    m = np.asarray(m, dtype=float)
    return m.shape[0] == m.shape[1] and is_column_stochastic(m, tol) and is_column_stochastic(m.T, tol)


def check_distribution(p, tol: float = 1e-12) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size == 0 or p.min() < -tol or abs(p.sum() - 1) > tol:
        raise InvalidInput("not a probability vector")
    return np.clip(p, 0, None)


# ----------------------------------------------------------------------------
# Birkhoff decomposition
# ----------------------------------------------------------------------------

def _max_matching(w: np.ndarray, support: np.ndarray) -> tuple[float, np.ndarray]:
    n = w.shape[0]
    score = np.where(support, w, -(n + 1.0))
    rows, cols = linear_sum_assignment(score, maximize=True)
    return float(score[rows, cols].sum()), cols


def _lex_smallest_matching(w: np.ndarray, support: np.ndarray, tie_tol: float = 1e-12) -> np.ndarray:
    """Lexicographically smallest permutation among the maximum-weight matchings."""
    n = w.shape[0]
    best, _ = _max_matching(w, support)
    perm = np.full(n, -1)
    fixed_weight = 0.0
    free_rows, free_cols = list(range(n)), list(range(n))
    for row in range(n):
        free_rows.remove(row)
        for c in sorted(free_cols):
            if not support[row, c]:
                continue
            rest_cols = [x for x in free_cols if x != c]
            if free_rows:
                sub_w = w[np.ix_(free_rows, rest_cols)]
                sub_s = support[np.ix_(free_rows, rest_cols)]
                val, _ = _max_matching(sub_w, sub_s)
            else:
                val = 0.0
            if fixed_weight + w[row, c] + val >= best - tie_tol:
                perm[row] = c
                fixed_weight += w[row, c]
                free_cols.remove(c)
                break
        else:  # pragma: no cover - guarded by the maximum matching above
            raise NotStochastic("no perfect matching on the support")
    return perm


def birkhoff_decompose(s: np.ndarray, tol: float = 1e-9) -> list[tuple[float, np.ndarray]]:
    """Write a doubly stochastic matrix as ``sum_l p_l Pi_l``.

    Each round takes the lexicographically smallest maximum-weight perfect
    matching on the current support and peels off its smallest entry.
    Permutations are returned as index arrays ``perm`` with
    ``Pi[perm[j], j] = 1``.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or not is_doubly_stochastic(s, max(tol, 1e-12)):
        raise NotStochastic("matrix is not doubly stochastic")
    n = s.shape[0]
    r = s.copy()
    out: list[tuple[float, np.ndarray]] = []
    for _ in range(n * n + 1):
        support = r > tol
        if not support.any() or r.sum() <= n * tol:
            break
        # r is stored row = output, column = input; match input columns to rows
        best, _ = _max_matching(r.T, support.T)
        if best < 0:
            break
        cols_of_row = _lex_smallest_matching(r.T, support.T)  # input j -> output cols_of_row[j]
        perm = cols_of_row
        weight = float(r[perm, np.arange(n)].min())
        r[perm, np.arange(n)] -= weight
        r[np.abs(r) <= tol * 1e-3] = 0.0
        out.append((weight, perm))
    total = sum(w for w, _ in out)
    if abs(total - 1) > n * n * tol:
        raise NotStochastic(f"decomposition weights sum to {total}")
    return out


def birkhoff_reconstruct(terms: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    return sum(w * ltm.permutation_matrix(p) for w, p in terms)


def sinkhorn(m: np.ndarray, iters: int = 5000, tol: float = 1e-15) -> np.ndarray:
    """Scale a positive matrix to doubly stochastic form."""
    m = np.asarray(m, dtype=float).copy()
    for _ in range(iters):
        m /= m.sum(0, keepdims=True)
        m /= m.sum(1, keepdims=True)
        if np.max(np.abs(m.sum(0) - 1)) < tol:
            break
    return m


# ----------------------------------------------------------------------------
# Probabilistic local machines
# ----------------------------------------------------------------------------

def _gate_terms(spec: ltm.LtmSpec, tol: float) -> dict:
    return {name: birkhoff_decompose(np.asarray(g, dtype=float), tol) for name, g in spec.gates.items()}


def _trajectory_spec(spec: ltm.LtmSpec, terms: dict) -> ltm.LtmSpec:
    gates = {f"{name}#{k}": ltm.permutation_matrix(p) for name, ts in terms.items() for k, (_, p) in enumerate(ts)}
    return ltm.LtmSpec("lctm", spec.q_dim, spec.d, spec.n_sites, gates, spec.control_states,
                       spec.start_control, spec.halting)


def _input_support(spec: ltm.LtmSpec, joint: np.ndarray):
    tape_dim = spec.d**spec.n_sites
    for idx in np.flatnonzero(joint > 0):
        q, t = divmod(int(idx), tape_dim)
        bits = tuple(int(b) for b in np.unravel_index(t, (spec.d,) * spec.n_sites))
        yield float(joint[idx]), q, bits


def _tape_index(spec: ltm.LtmSpec, bits) -> int:
    return int(np.ravel_multi_index(bits, (spec.d,) * spec.n_sites)) if spec.n_sites else 0


def _joint_input(spec: ltm.LtmSpec, tape, processor=0) -> np.ndarray:
    return ltm.initial_configuration(spec, tape, processor).state


class LptmResult(NamedTuple):
    distribution: np.ndarray  # over tapes
    joint: np.ndarray | None  # over processor (x) tape (exact mode only)
    counts: np.ndarray | None  # sample mode only


def lptm_run(spec: ltm.LtmSpec, program: Sequence[ltm.GateStep], tape, processor=0,
             mode: str = "exact", shots: int = 1000, seed: int = 0, tol: float = 1e-9) -> LptmResult:
    """Output tape distribution of a probabilistic machine.

    ``exact`` propagates the joint distribution and sums out the processor
    (the head is classical and deterministic). ``sample`` decomposes every
    step into permutations and runs ``shots`` seeded deterministic
    trajectories.
    """
    if spec.kind != "lptm":
        raise InvalidInput("lptm_run needs a probabilistic machine")
    joint0 = _joint_input(spec, tape, processor)
    if mode == "exact":
        res = ltm.run(spec, program, ltm.Configuration(joint0, 0, spec.start_control))
        return LptmResult(ltm.tape_marginal(spec, res.final), res.final.state, None)
    if mode != "sample":
        raise InvalidInput(f"unknown mode {mode!r}")
    terms = _gate_terms(spec, tol)
    tspec = _trajectory_spec(spec, terms)
    rng = np.random.default_rng(seed)
    starts = list(_input_support(spec, joint0))
    start_p = np.array([w for w, _, _ in starts])
    counts = np.zeros(spec.d**spec.n_sites, dtype=np.int64)
    for _ in range(shots):
        _, q, bits = starts[int(rng.choice(len(starts), p=start_p / start_p.sum()))]
        cfg = ltm.Configuration((q, bits), 0, spec.start_control)
        prog = []
        for s in program:
            if s.gate is None:
                prog.append(s)
                continue
            ws = np.array([w for w, _ in terms[s.gate]])
            k = int(rng.choice(len(ws), p=ws / ws.sum()))
            prog.append(ltm.GateStep(f"{s.gate}#{k}", s.site, s.shift, s.ctrl))
        final = ltm.run(tspec, prog, cfg).final
        counts[_tape_index(spec, final.state[1])] += 1
    return LptmResult(counts / shots, None, counts)


def lptm_trajectories(spec: ltm.LtmSpec, program: Sequence[ltm.GateStep], tape, processor=0,
                      tol: float = 1e-9) -> np.ndarray:
    """Tape distribution by enumerating every permutation trajectory with its weight."""
    terms = _gate_terms(spec, tol)
    tspec = _trajectory_spec(spec, terms)
    joint0 = _joint_input(spec, tape, processor)
    gated = [k for k, s in enumerate(program) if s.gate is not None]
    out = np.zeros(spec.d**spec.n_sites)
    for w0, q, bits in _input_support(spec, joint0):
        choices = [range(len(terms[program[k].gate])) for k in gated]
        for pick in itertools.product(*choices):
            prog = list(program)
            weight = w0
            for k, lam in zip(gated, pick):
                s = program[k]
                weight *= terms[s.gate][lam][0]
                prog[k] = ltm.GateStep(f"{s.gate}#{lam}", s.site, s.shift, s.ctrl)
            final = ltm.run(tspec, prog, ltm.Configuration((q, bits), 0, spec.start_control)).final
            out[_tape_index(spec, final.state[1])] += weight
    return out


# ----------------------------------------------------------------------------
# NMF with the generalized KL divergence
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class NmfResult:
    P: np.ndarray  # (m, k), column stochastic
    D: np.ndarray  # (k, k) diagonal
    Qt: np.ndarray  # (k, n), rows sum to one
    k: int
    divergence: float
    iterations: int
    trace: tuple[float, ...] = field(default=(), compare=False)

    @property
    def approx(self) -> np.ndarray:
        return self.P @ self.D @ self.Qt


def kl_divergence(a: np.ndarray, b: np.ndarray) -> float:
    """Generalized KL divergence ``sum a log(a/b) - a + b`` with ``0 log 0 = 0``."""
    a = np.asarray(a, dtype=float)
    b = np.maximum(np.asarray(b, dtype=float), EPS)
    pos = a > 0
    return float(np.sum(a[pos] * np.log(a[pos] / b[pos])) - a.sum() + b.sum())


def normalize_factors(w: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split ``W H`` into ``P D Q^T`` with stochastic ``P`` and row-stochastic ``Q^T``."""
    m, k = w.shape
    cw = w.sum(0)
    p = np.where(cw > 0, w / np.where(cw > 0, cw, 1), 1.0 / m)
    h = h * cw[:, None]
    dh = h.sum(1)
    qt = np.where(dh[:, None] > 0, h / np.where(dh > 0, dh, 1)[:, None], 1.0 / h.shape[1])
    return p, np.diag(dh), qt


def nmf_kl(a: np.ndarray, k: int, max_iter: int = 2000, tol: float = 1e-12,
           seed: int = 0) -> NmfResult:
    """Multiplicative-update NMF ``A ~ P D Q^T`` for the generalized KL divergence.

    Updates ``H`` then ``W`` each iteration from a seeded uniform start and
    stops once the divergence changes by less than ``tol``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ShapeError("NMF needs a matrix")
    if a.size and a.min() < 0:
        raise InvalidInput("NMF input has negative entries")
    m, n = a.shape
    if not 1 <= k <= min(m, n):
        raise InvalidInput(f"rank {k} outside 1..{min(m, n)}")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(max(a.mean(), EPS) / k)
    w = rng.uniform(0.5, 1.5, size=(m, k)) * scale
    h = rng.uniform(0.5, 1.5, size=(k, n)) * scale
    trace = [kl_divergence(a, w @ h)]
    it = 0
    for it in range(1, max_iter + 1):
        wh = np.maximum(w @ h, EPS)
        h = h * (w.T @ (a / wh)) / np.maximum(w.sum(0)[:, None], EPS)
        wh = np.maximum(w @ h, EPS)
        w = w * ((a / wh) @ h.T) / np.maximum(h.sum(1)[None, :], EPS)
        trace.append(kl_divergence(a, w @ h))
        if abs(trace[-2] - trace[-1]) < tol:
            break
    p, dmat, qt = normalize_factors(w, h)
    return NmfResult(p, dmat, qt, k, trace[-1], it, tuple(trace))


def cluster_factor(a: np.ndarray, k: int, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    """Exact ``A = P D Q^T`` from proportional rows or columns, if at most ``k`` groups are needed.

    Columns (or rows) that are nonnegative multiples of each other share one
    factor direction. Returns ``None`` when more than ``k`` groups exist.
    """
    best = None
    for side in ("cols", "rows"):
        mat = a if side == "cols" else a.T
        groups = _proportional_groups(mat, k, tol)
        if groups is None:
            continue
        if best is None or len(groups[0]) < len(best[1][0]):
            best = (side, groups)
    if best is None:
        return None
    side, (reps, label, sums) = best
    mat = a if side == "cols" else a.T
    g = max(len(reps), 1)
    dirs = np.zeros((mat.shape[0], g))
    weights = np.zeros((g, mat.shape[1]))
    for c, j in enumerate(reps):
        dirs[:, c] = mat[:, j] / sums[j]
    if not reps:
        dirs[:, 0] = 1.0 / mat.shape[0]
    weights[label[label >= 0], np.flatnonzero(label >= 0)] = sums[label >= 0]
    # mat = dirs @ weights, dirs column stochastic
    dh = weights.sum(1)
    qt = np.where(dh[:, None] > 0, weights / np.where(dh > 0, dh, 1)[:, None], 1.0 / mat.shape[1])
    if side == "cols":
        return dirs, np.diag(dh), qt
    # a = weights^T dirs^T: turn weights^T into the stochastic factor
    wt = weights.T  # (rows of a, g)
    cw = wt.sum(0)
    p = np.where(cw > 0, wt / np.where(cw > 0, cw, 1), 1.0 / wt.shape[0])
    h = dirs.T * cw[:, None]
    dh = h.sum(1)
    qt = np.where(dh[:, None] > 0, h / np.where(dh > 0, dh, 1)[:, None], 1.0 / h.shape[1])
    return p, np.diag(dh), qt


def _proportional_groups(mat: np.ndarray, k: int, tol: float):
    sums = mat.sum(0)
    live = sums > tol * max(1.0, sums.max(initial=0.0))
    dirs = np.where(live, mat / np.where(live, sums, 1), 0.0)
    label = np.full(mat.shape[1], -1)
    reps: list[int] = []
    todo = live.copy()
    while todo.any():
        j = int(np.argmax(todo))
        if len(reps) == k:
            return None
        close = todo & (np.max(np.abs(dirs - dirs[:, [j]]), axis=0) <= tol)
        label[close] = len(reps)
        reps.append(j)
        todo &= ~close
    return reps, label, sums


# ----------------------------------------------------------------------------
# Stochastic MPS
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class StochasticMps:
    tensors: tuple[np.ndarray, ...]  # each (d, chi_{n-1}, chi_n)
    left: np.ndarray
    right: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __init__(self, tensors, left=None, right=None, meta: dict | None = None):
        ts = tuple(np.array(t, dtype=float) for t in tensors)
        if not ts:
            raise ShapeError("an sMPS needs at least one site")
        d = ts[0].shape[0]
        for n, t in enumerate(ts):
            if t.ndim != 3 or t.shape[0] != d:
                raise ShapeError(f"site {n + 1} has shape {t.shape}")
            if n and t.shape[1] != ts[n - 1].shape[2]:
                raise ShapeError(f"bond mismatch between sites {n} and {n + 1}")
            if t.min(initial=0.0) < 0:
                raise InvalidInput(f"site {n + 1} has negative entries")
        left = np.ones(ts[0].shape[1]) if left is None else np.asarray(left, dtype=float).reshape(-1)
        right = np.ones(ts[-1].shape[2]) if right is None else np.asarray(right, dtype=float).reshape(-1)
        if left.size != ts[0].shape[1] or right.size != ts[-1].shape[2]:
            raise ShapeError("boundary vectors do not match the end bonds")
        object.__setattr__(self, "tensors", ts)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "meta", dict(meta or {}))

    @property
    def d(self) -> int:
        return self.tensors[0].shape[0]

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bonds(self) -> list[int]:
        return [self.tensors[0].shape[1]] + [t.shape[2] for t in self.tensors]

    def site_sum(self, n: int) -> np.ndarray:
        """``S[n] = sum_i B_n[i]`` for 1-based site ``n``."""
        return self.tensors[n - 1].sum(0)

    def stochastic_deviation(self) -> float:
        return max(float(np.max(np.abs(t.sum((0, 1)) - 1))) for t in self.tensors)


def prob_to_smps(p, d: int, n_sites: int | None = None, chi_max: int | None = None,
                 k: int | None = None, method: str = "auto", max_iter: int = 2000,
                 tol: float = 1e-12, seed: int = 0) -> StochasticMps:
    """Sequential factorization of a distribution into a stochastic MPS.

    Sweeps from site 1. At each cut the remainder, with rows ``(bond, symbol)``,
    is factored as ``P D Q^T``; ``P`` becomes the site tensor and ``D Q^T``
    the next remainder. The inner rank is ``k`` if given, else
    ``min(chi_max, cut dimension)``. With ``method="auto"`` an exact
    proportional-group factorization is used whenever it needs at most that
    many groups, otherwise KL-NMF.
    """
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.min(initial=0.0) < 0:
        raise InvalidInput("probabilities must be nonnegative")
    if n_sites is None:
        n_sites = int(round(np.log(p.size) / np.log(d)))
    if d**n_sites != p.size:
        raise ShapeError(f"{p.size} entries are not {d}^{n_sites}")
    _caps.check_cap(p.size, _caps.STATEVECTOR_CAP)
    if method not in ("auto", "nmf"):
        raise InvalidInput(f"unknown method {method!r}")
    tensors = []
    rem = p.reshape(1, -1)
    errors, ranks, methods = [], [], []
    for n in range(n_sites - 1):
        chi = rem.shape[0]
        a = rem.reshape(chi * d, -1)
        full = min(a.shape)
        kk = min(full, chi_max or full) if k is None else min(k, full)
        fac = cluster_factor(a, kk) if method == "auto" else None
        if fac is None:
            r = nmf_kl(a, kk, max_iter, tol, seed + n)
            fac = (r.P, r.D, r.Qt)
            methods.append("nmf")
        else:
            methods.append("exact")
        pm, dm, qt = fac
        errors.append(float(np.abs(pm @ dm @ qt - a).sum()))
        ranks.append(pm.shape[1])
        tensors.append(pm.reshape(chi, d, -1).transpose(1, 0, 2))
        rem = dm @ qt
    last = rem.reshape(-1)
    mass = last.sum()
    col = last / mass if mass > 0 else np.full(last.size, 1.0 / last.size)
    tensors.append(col.reshape(-1, d, 1).transpose(1, 0, 2))
    return StochasticMps(tensors, np.ones(1), np.array([mass]),
                         meta={"cut_l1": errors, "ranks": ranks, "methods": methods})


def smps_to_prob(s: StochasticMps, cap: int | None = None) -> np.ndarray:
    _caps.check_cap(s.d**s.n_sites, _caps.STATEVECTOR_CAP if cap is None else cap)
    v = s.left.reshape(1, -1)  # (outcomes so far, bond)
    for t in s.tensors:
        v = np.einsum("xa,iab->xib", v, t).reshape(-1, t.shape[2])
    return v @ s.right


def pad_smps(s: StochasticMps, chi: int | None = None) -> StochasticMps:
    """Constant bond ``chi`` everywhere: zero rows for new left states, uniform columns for new right states."""
    chi = max(s.bonds) if chi is None else chi
    if chi < max(s.bonds):
        raise InvalidInput(f"cannot pad bonds {s.bonds} down to {chi}")
    d = s.d
    out = []
    for t in s.tensors:
        _, cl, cr = t.shape
        b = np.zeros((d, chi, chi))
        b[:, :cl, :cr] = t
        b[:, :, cr:] = 1.0 / (d * chi)
        out.append(b)
    left = np.zeros(chi)
    left[:s.left.size] = s.left
    right = np.zeros(chi)
    right[:s.right.size] = s.right
    return StochasticMps(out, left, right, meta=s.meta)


@dataclass(frozen=True)
class StochasticSeqProgram:
    """Square column-stochastic maps ``Q[n]`` on ``pbit (x) correlator``, pbit outermost.

    ``Q[n]`` (stored 0-based at ``qmats[n-1]``) is applied with pbit ``n`` in
    state 0; runs go from site N to site 1 starting from ``r_prime``.
    """

    qmats: tuple[np.ndarray, ...]
    r_prime: np.ndarray
    d: int
    chi: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_sites(self) -> int:
        return len(self.qmats)

    def block(self, n: int) -> np.ndarray:
        """First block-column of ``Q[n]`` (1-based): the emitting map ``(d*chi, chi)``."""
        return self.qmats[n - 1][:, : self.chi]


def _embed_square(s: np.ndarray, d: int, chi: int) -> np.ndarray:
    q = np.eye(d * chi)
    q[:, :chi] = s
    return q


def decouple_stochastic(s: StochasticMps) -> StochasticSeqProgram:
    """Sequential generator whose correlator ends in a point mass.

    The left boundary is absorbed into site 1 and the column sums ``T`` of
    each site are pushed rightwards: ``(T_{n-1} (x) 1) S_n = S'_n T_n`` with
    ``S'_n`` column stochastic. The initial correlator is ``r' = T_N r``.
    Site 1 then has a one-dimensional left bond, so after emitting it the
    correlator sits in state 0 with certainty.
    """
    s = pad_smps(s)
    d, chi = s.d, max(s.bonds)
    carry = s.left.reshape(1, -1)  # T_0 = l^T
    qmats, sums = [], []
    for n, t in enumerate(s.tensors, start=1):
        x = np.einsum("ca,iab->icb", carry, t)  # (d, rows of carry, chi)
        if x.min() < -STOCH_TOL:
            raise FactorizationError(f"negative intermediate at site {n}", site=n)
        x = np.clip(x, 0, None)
        c = x.sum((0, 1))
        rows = x.shape[1]
        sp = np.where(c > 0, x / np.where(c > 0, c, 1), 0.0)
        zero = c <= 0
        if zero.any():
            sp[:, :, zero] = 1.0 / (d * rows)
        full = np.zeros((d, chi, chi))
        full[:, :rows, :] = sp
        qmats.append(_embed_square(full.reshape(d * chi, chi), d, chi))
        sums.append(c)
        carry = np.diag(c)
    r_prime = carry @ s.right
    mass = float(r_prime.sum())
    if mass <= 0:
        raise FactorizationError("distribution has zero mass", site=s.n_sites)
    return StochasticSeqProgram(tuple(qmats), r_prime / mass, d, chi, meta={"mass": mass})


class Generated(NamedTuple):
    distribution: np.ndarray
    correlator: np.ndarray


def generate_distribution(prog: StochasticSeqProgram) -> Generated:
    """Forward propagation of the joint (emitted pbits, correlator) distribution."""
    d, chi, n = prog.d, prog.chi, prog.n_sites
    _caps.check_cap(d**n * chi, _caps.CIRCUIT_CAP)
    joint = prog.r_prime.reshape(1, chi)  # (pbits emitted so far: i_N first, correlator)
    for k in range(n, 0, -1):
        out = joint @ prog.block(k).T  # (.., d*chi)
        joint = out.reshape(-1, chi)
    # rows are ordered i_N, i_{N-1}, ..., i_1 with i_1 fastest; reverse to site order
    tape = joint.reshape([d] * n + [chi])
    tape = np.transpose(tape, list(range(n - 1, -1, -1)) + [n])
    return Generated(tape.reshape(-1, chi).sum(1), tape.reshape(-1, chi).sum(0))


class SampleReport(NamedTuple):
    counts: np.ndarray
    frequencies: np.ndarray
    tv: float
    bound: float


def sample_sequential(prog: StochasticSeqProgram, shots: int, seed: int = 0) -> SampleReport:
    """Ancestral sampling through ``Q[N] ... Q[1]``; TV against the exact output with a 3-sigma bound."""
    if shots < 1:
        raise InvalidInput("shots must be positive")
    d, chi, n = prog.d, prog.chi, prog.n_sites
    rng = np.random.default_rng(seed)
    corr = rng.choice(chi, size=shots, p=prog.r_prime)
    digits = np.zeros((shots, n), dtype=np.int64)
    for k in range(n, 0, -1):
        blk = prog.block(k)  # (d*chi, chi)
        cdf = np.cumsum(blk, axis=0)
        u = rng.random(shots)
        pick = np.minimum((u[:, None] > cdf[:, corr].T).sum(1), d * chi - 1)
        digits[:, k - 1], corr = np.divmod(pick, chi)
    idx = np.ravel_multi_index(tuple(digits.T), (d,) * n)
    counts = np.bincount(idx, minlength=d**n)
    freq = counts / shots
    exact = generate_distribution(prog).distribution
    tv = 0.5 * float(np.abs(freq - exact).sum())
    bound = 1.5 * float(np.sqrt(exact * (1 - exact) / shots).sum())
    return SampleReport(counts, freq, tv, bound)
