"""JSON encodings of operators, superoperators and kernels; CSV traces; atomic writes."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from memkernel import algebra
from memkernel.algebra import GkslSpec, SuperOp
from memkernel.errors import InvalidInputError
from memkernel.kernels import (
    ExponentialMemory,
    KernelSpec,
    NoMemory,
    SampledMemory,
    ScalarCPMemory,
    SplitMemory,
)
from memkernel.memory import ScalarKernel, kappa_from_f, memory_function_from_json

CSV_HEADER = "t,cp_defect,unitality_defect,choi_herm_residual"


def matrix_to_json(m: np.ndarray, dim: int) -> dict:
    m = np.asarray(m)
    return {"dim": dim, "re": m.real.tolist(), "im": m.imag.tolist()}


def operator_to_json(a: np.ndarray) -> dict:
    return matrix_to_json(a, np.asarray(a).shape[0])


def superop_to_json(s) -> dict:
    m = s.matrix if isinstance(s, SuperOp) else np.asarray(s)
    return matrix_to_json(m, algebra._sqrt_dim(m.shape[0]))


def _raw_matrix(obj: dict) -> np.ndarray:
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj["im"], dtype=float) if "im" in obj else np.zeros_like(re)
    if re.shape != im.shape or re.ndim != 2:
        raise InvalidInputError(f"re/im arrays have shapes {re.shape} and {im.shape}")
    return re + 1j * im


def operator_from_json(obj: dict) -> np.ndarray:
    m = _raw_matrix(obj)
    return algebra.as_operator(m, int(obj["dim"]) if "dim" in obj else None)


def superop_from_json(obj: dict) -> SuperOp:
    """Decode a superoperator.

    Accepted forms: the raw ``{"dim", "re", "im"}`` matrix (d^2 x d^2), or one
    of the shortcuts ``{"map": "identity"|"transpose"|"trace"|"zero", "dim": d}``,
    ``{"kraus": [op, ...]}``, ``{"unitary": op}`` and ``{"gksl": {...}}``.
    """
    if "map" in obj:
        d = int(obj["dim"])
        name = obj["map"]
        makers = {
            "identity": SuperOp.identity,
            "transpose": SuperOp.transpose_map,
            "trace": SuperOp.trace_map,
            "zero": SuperOp.zero,
        }
        if name not in makers:
            raise InvalidInputError(f"unknown named map {name!r}")
        return makers[name](d)
    if "kraus" in obj:
        return SuperOp.kraus([operator_from_json(o) for o in obj["kraus"]])
    if "unitary" in obj:
        return SuperOp.conjugation(operator_from_json(obj["unitary"]))
    if "gksl" in obj:
        return algebra.gksl_generator(gksl_from_json(obj["gksl"]), obj.get("picture", "heisenberg"))
    m = _raw_matrix(obj)
    s = SuperOp(m)
    if "dim" in obj and s.dim != int(obj["dim"]):
        raise InvalidInputError(f"superoperator matrix {m.shape} does not match dim {obj['dim']}")
    return s


def gksl_from_json(obj: dict) -> GkslSpec:
    H = operator_from_json(obj["hamiltonian"])
    jumps = tuple((operator_from_json(j["op"]), float(j["rate"])) for j in obj.get("jumps", []))
    return GkslSpec(H, jumps)


def gksl_to_json(spec: GkslSpec) -> dict:
    return {
        "hamiltonian": operator_to_json(spec.hamiltonian),
        "jumps": [{"op": operator_to_json(v), "rate": r} for v, r in spec.jumps],
    }


def _stack_from_json(items) -> np.ndarray:
    return np.stack([superop_from_json(o).matrix for o in items])


def kernel_spec_from_json(obj: dict, times: np.ndarray | None = None) -> KernelSpec:
    """Decode a KernelSpec.

    ``scalar_cp`` memory takes either ``"kappa": {"local_weight", "h", "values"}``
    or a memory function ``"f"``, in which case kappa is synthesised on
    ``times``.  No CP gate is applied here; certification is a separate step.
    """
    dim = int(obj["dim"])
    local = obj.get("local")
    local = None if local is None else superop_from_json(local).matrix
    mem = obj.get("memory") or {"type": "none"}
    kind = mem.get("type", "none")
    if kind == "none":
        memory = NoMemory()
    elif kind == "scalar_cp":
        B = superop_from_json(mem["B"])
        if "kappa" in mem:
            k = mem["kappa"]
            kappa = ScalarKernel(float(k.get("local_weight", 0.0)), float(k["h"]), np.asarray(k["values"], dtype=float))
        elif "f" in mem:
            if times is None:
                raise InvalidInputError("scalar_cp with a memory function needs a time grid")
            kappa = kappa_from_f(memory_function_from_json(mem["f"]), times)
        else:
            raise InvalidInputError("scalar_cp memory needs 'kappa' or 'f'")
        memory = ScalarCPMemory(kappa, B)
    elif kind == "split":
        memory = SplitMemory(
            float(mem["h"]),
            _stack_from_json(mem["B"]),
            _stack_from_json(mem["Z"]),
            None if mem.get("B_local") is None else superop_from_json(mem["B_local"]).matrix,
            None if mem.get("Z_local") is None else superop_from_json(mem["Z_local"]).matrix,
        )
    elif kind == "sampled":
        memory = SampledMemory(float(mem["h"]), _stack_from_json(mem["values"]))
    elif kind == "exponential":
        memory = ExponentialMemory(superop_from_json(mem["coeff"]).matrix, superop_from_json(mem["rate"]).matrix)
    else:
        raise InvalidInputError(f"unknown memory type {kind!r}")
    return KernelSpec(dim, local, memory)


def kernel_spec_to_json(spec: KernelSpec) -> dict:
    m = spec.memory
    if isinstance(m, NoMemory):
        mem = {"type": "none"}
    elif isinstance(m, ScalarCPMemory):
        mem = {"type": "scalar_cp", "kappa": m.kappa.to_json(), "B": superop_to_json(m.B)}
    elif isinstance(m, SplitMemory):
        mem = {
            "type": "split",
            "h": m.h,
            "B": [superop_to_json(b) for b in m.B],
            "Z": [superop_to_json(z) for z in m.Z],
            "B_local": None if m.B_local is None else superop_to_json(m.B_local),
            "Z_local": None if m.Z_local is None else superop_to_json(m.Z_local),
        }
    elif isinstance(m, SampledMemory):
        mem = {"type": "sampled", "h": m.h, "values": [superop_to_json(v) for v in m.values]}
    elif isinstance(m, ExponentialMemory):
        mem = {"type": "exponential", "coeff": superop_to_json(m.coeff), "rate": superop_to_json(m.rate)}
    else:
        raise InvalidInputError(f"cannot serialise memory of type {type(m).__name__}")
    return {"dim": spec.dim, "local": None if spec.local is None else superop_to_json(spec.local), "memory": mem}


def _fmt(x: float) -> str:
    return format(float(x), ".16e")


def trace_csv(trace) -> str:
    lines = [CSV_HEADER]
    for row in zip(trace.grid.times, trace.cp_defect, trace.unitality_defect, trace.choi_herm_residual):
        lines.append(",".join(_fmt(v) for v in row))
    return "\r\n".join(lines) + "\r\n"


def atomic_write(path, data: str | bytes):
    """Write via a temporary file in the same directory, then rename."""
    if not str(path):
        raise InvalidInputError("empty output path")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_csv(trace, path):
    atomic_write(path, trace_csv(trace))
