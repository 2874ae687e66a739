"""JSON file formats.

Complex numbers are written as ``[re, im]`` pairs, arrays row-major as nested
lists. Floats use Python's shortest round-trip repr, so reading a file back
gives bit-identical numbers. Keys are sorted and writes go through a
temporary file plus rename.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .circuits import SeqCircuit
from .errors import InvalidInput
from .mps import PERIODIC, PROJECTED, VECTOR, Mps
from .smps import NmfResult, StochasticMps

_BOUNDARY_TO_JSON = {VECTOR: "vector", PROJECTED: "projected", PERIODIC: "pbc"}
_BOUNDARY_FROM_JSON = {v: k for k, v in _BOUNDARY_TO_JSON.items()} | {"periodic": PERIODIC}


def _clean(x: float) -> float:
    x = float(x)
    return 0.0 if x == 0 else x  # no "-0.0" in files


def encode_complex(a) -> Any:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 0:
        return [_clean(a.real), _clean(a.imag)]
    return [encode_complex(x) for x in a]


def decode_complex(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0 or a.shape[-1] != 2:
        raise InvalidInput("complex entries must be [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def encode_real(a) -> Any:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return _clean(a)
    return [encode_real(x) for x in a]


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path: str | os.PathLike, obj: Any) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    path = Path(path)
    text = dumps(obj)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path: str | os.PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise InvalidInput(f"{path}: {exc.strerror}") from exc


def _need(obj: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        raise InvalidInput(f"missing field(s) {missing}")


# -- MPX ----------------------------------------------------------------------

def mps_to_json(m: Mps) -> dict:
    b: dict = {"type": _BOUNDARY_TO_JSON[m.boundary]}
    if m.boundary == PROJECTED:
        b["L"] = encode_complex(m.left)
        b["R"] = encode_complex(m.right)
    return {"d": m.d, "N": m.n_sites, "boundary": b, "tensors": [encode_complex(t) for t in m.tensors]}


def mps_from_json(obj: dict) -> Mps:
    _need(obj, "d", "N", "tensors")
    b = obj.get("boundary", {"type": "vector"})
    kind = _BOUNDARY_FROM_JSON.get(b.get("type"))
    if kind is None:
        raise InvalidInput(f"unknown boundary type {b.get('type')!r}")
    tensors = [decode_complex(t) for t in obj["tensors"]]
    if len(tensors) != obj["N"] or any(t.ndim != 3 or t.shape[0] != obj["d"] for t in tensors):
        raise InvalidInput("tensors do not match d and N")
    left = decode_complex(b["L"]) if "L" in b else None
    right = decode_complex(b["R"]) if "R" in b else None
    return Mps(tensors, kind, left, right)


# -- Circuit --------------------------------------------------------------------

def _jsonable_meta(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        try:
            json.dumps(v, allow_nan=False)
        except (TypeError, ValueError):
            continue
        out[k] = v
    return out


def circuit_to_json(c: SeqCircuit) -> dict:
    return {
        "chi": c.chi,
        "d": c.d,
        "init_correlator": encode_complex(c.init_correlator),
        "gates": [{"site": n + 1, "matrix": encode_complex(g)} for n, g in enumerate(c.gates)],
        "measurements": [{"site": s, "basis": b} for s, b in c.measurements],
        "decoupled": bool(c.decoupled),
        "meta": _jsonable_meta(c.meta),
    }


def circuit_from_json(obj: dict) -> SeqCircuit:
    _need(obj, "chi", "d", "gates")
    gates = sorted(obj["gates"], key=lambda g: g["site"])
    if [g["site"] for g in gates] != list(range(1, len(gates) + 1)):
        raise InvalidInput("gate sites must be 1..N, one gate per site")
    init = obj.get("init_correlator")
    init = decode_complex(init) if init is not None else np.eye(obj["chi"])[0]
    return SeqCircuit(obj["chi"], obj["d"], tuple(decode_complex(g["matrix"]) for g in gates), init,
                      measurements=tuple((m["site"], m["basis"]) for m in obj.get("measurements", [])),
                      decoupled=bool(obj.get("decoupled", False)), meta=dict(obj.get("meta", {})))


# -- Distributions, sMPS, NMF ---------------------------------------------------

def distribution_to_json(p, d: int, n_sites: int) -> dict:
    return {"d": d, "N": n_sites, "weights": encode_real(p)}


def distribution_from_json(obj: dict) -> tuple[np.ndarray, int, int]:
    _need(obj, "d", "N", "weights")
    p = np.asarray(obj["weights"], dtype=float).reshape(-1)
    if p.size != obj["d"] ** obj["N"]:
        raise InvalidInput(f"{p.size} weights do not match d^N = {obj['d'] ** obj['N']}")
    return p, obj["d"], obj["N"]


def smps_to_json(s: StochasticMps) -> dict:
    return {"d": s.d, "N": s.n_sites, "left": encode_real(s.left), "right": encode_real(s.right),
            "tensors": [encode_real(t) for t in s.tensors]}


def smps_from_json(obj: dict) -> StochasticMps:
    _need(obj, "tensors")
    return StochasticMps([np.asarray(t, dtype=float) for t in obj["tensors"]], obj.get("left"), obj.get("right"))


def nmf_to_json(r: NmfResult) -> dict:
    return {"k": r.k, "P": encode_real(r.P), "D": encode_real(np.diag(r.D)), "Qt": encode_real(r.Qt),
            "divergence": _clean(r.divergence), "iterations": r.iterations, "trace": encode_real(r.trace)}


def matrix_from_json(obj) -> np.ndarray:
    if isinstance(obj, dict):
        _need(obj, "matrix")
        obj = obj["matrix"]
    a = np.asarray(obj, dtype=float)
    if a.ndim != 2:
        raise InvalidInput("expected a 2-d matrix")
    return a
