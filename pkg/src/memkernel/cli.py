"""Batch front-end: ``memkernel <scenario> -c config.json -o outdir``.

Exit codes: 0 when every verdict passes, 2 when the run completed but a
verdict failed, 1 on input or numerical errors.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from memkernel import algebra, families, io, kernels, memory, volterra
from memkernel.errors import MemkernelError

log = logging.getLogger("memkernel")

SCENARIOS = ("evolve", "certify", "kernel-from-f", "mixture", "time-mixture", "dilate", "laplace-check")

DEFAULT_P = [1.0, 2.0, 5.0]

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["grid", "payload"],
    "properties": {
        "kind": {"enum": list(SCENARIOS)},
        "grid": {
            "type": "object",
            "required": ["h", "T"],
            "properties": {
                "h": {"type": "number", "exclusiveMinimum": 0},
                "T": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "payload": {"type": "object"},
        "output": {"type": "string"},
        "tolerances": {
            "type": "object",
            "additionalProperties": {"type": "number", "minimum": 0},
        },
        "dump_superops": {"type": "boolean"},
        "dump_every": {"type": "integer", "minimum": 1},
    },
}

_SUPEROP = {"type": "object"}
PAYLOAD_SCHEMAS = {
    "evolve": {"type": "object", "required": ["dim"], "properties": {"dim": {"type": "integer", "minimum": 1}}},
    "certify": {"type": "object", "required": ["dim", "memory"], "properties": {"dim": {"type": "integer", "minimum": 1}}},
    "kernel-from-f": {"type": "object", "required": ["f"], "properties": {"f": {"type": "object", "required": ["kind"]}}},
    "mixture": {
        "type": "object",
        "required": ["weights", "generators"],
        "properties": {
            "weights": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            "generators": {"type": "array", "items": _SUPEROP, "minItems": 1},
            "p_samples": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        },
    },
    "time-mixture": {
        "type": "object",
        "required": ["weights", "generators"],
        "properties": {
            "weights": {"type": "array", "items": {"type": "object", "required": ["kind"]}, "minItems": 1},
            "generators": {"type": "array", "items": _SUPEROP, "minItems": 1},
        },
    },
    "dilate": {
        "type": "object",
        "required": ["system_dim", "env_dim", "total"],
        "properties": {
            "system_dim": {"type": "integer", "minimum": 1},
            "env_dim": {"type": "integer", "minimum": 1},
            "total": {"type": "object", "required": ["hamiltonian"]},
            "omega": {"type": "object"},
            "p_samples": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        },
    },
    "laplace-check": {
        "type": "object",
        "required": ["source"],
        "properties": {
            "source": {
                "type": "object",
                "required": ["kind", "payload"],
                "properties": {"kind": {"enum": ["evolve", "mixture", "dilate", "time-mixture"]}},
            },
            "p_samples": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        },
    },
}


class ConfigError(MemkernelError):
    pass


def _validate(instance, schema, prefix="$"):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = prefix + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        raise ConfigError(f"config error at {path}: {err.message}")


def validate_config(config: dict, kind: str):
    _validate(config, CONFIG_SCHEMA)
    if config.get("kind", kind) != kind:
        raise ConfigError(f"config error at $.kind: config is for {config['kind']!r}, command is {kind!r}")
    if config["grid"]["T"] < config["grid"]["h"]:
        raise ConfigError("config error at $.grid.T: horizon must be at least one step")
    _validate(config["payload"], PAYLOAD_SCHEMAS[kind], "$.payload")
    if kind == "laplace-check":
        src = config["payload"]["source"]
        _validate(src["payload"], PAYLOAD_SCHEMAS[src["kind"]], "$.payload.source.payload")


def _tolerances(config: dict, dim: int) -> dict:
    tol = {
        "cp": algebra.default_tol(dim),
        "unitality": algebra.default_tol(dim),
        "g_unit": 1e-6,
        "resolvent": 1e-3,
        "laplace": 1e-4,
        "tail": 1e-6,
    }
    tol.update(config.get("tolerances", {}))
    return tol


def _trace_verdicts(trace, tol) -> dict:
    return {
        "evolution_cp": bool(trace.cp_defect.min() >= -tol["cp"]),
        "unital": bool(trace.unitality_defect.max() <= tol["unitality"]),
    }


def _laplace_block(trace, p_samples, tol, closed_form=None):
    G = volterra.extract_G(trace)
    samples = volterra.kernel_from_G(G, p_samples, trace=trace)
    block = {
        "max_G_unit_residual": G.max_unit_residual,
        "G_reconstruction_error": G.reconstruction_error,
        "samples": [],
    }
    verdicts = {
        "G_annihilates_identity": G.max_unit_residual <= tol["g_unit"],
        "resolvent": all(s.resolvent_residual <= tol["resolvent"] for s in samples),
        "tail_bound": all(s.tail_bound <= tol["tail"] for s in samples),
    }
    for s in samples:
        row = {"p": s.p, "resolvent_residual": s.resolvent_residual, "tail_bound": s.tail_bound}
        if closed_form is not None:
            row["closed_form_error"] = float(np.abs(s.L_hat - closed_form(s.p)).max())
        block["samples"].append(row)
    if closed_form is not None:
        verdicts["closed_form_match"] = all(r["closed_form_error"] <= tol["laplace"] for r in block["samples"])
    return block, {k: bool(v) for k, v in verdicts.items()}


def _mixture_closed_form(spec: families.MixtureSpec):
    n = len(spec.weights)
    try:
        if n == 2:
            families.mixture_kernel_n2_hat(*spec.weights, *spec.generators, 1.0)
            return lambda p: families.mixture_kernel_n2_hat(*spec.weights, *spec.generators, p)
        if n == 3:
            families._commuting(spec.generators, "closed form")
            return lambda p: families.mixture_kernel_n3_hat(spec.weights, *spec.generators, p)
    except MemkernelError:
        return None
    return None


def _build_mixture(payload):
    return families.MixtureSpec(payload["weights"], [io.superop_from_json(g) for g in payload["generators"]])


def _build_dilation(payload):
    omega = payload.get("omega")
    return families.DilationSpec(
        int(payload["system_dim"]),
        int(payload["env_dim"]),
        io.gksl_from_json(payload["total"]),
        None if omega is None else io.operator_from_json(omega),
    )


def _build_time_mixture(payload):
    return families.TimeMixtureSpec(
        [memory.memory_function_from_json(w) for w in payload["weights"]],
        [io.superop_from_json(g) for g in payload["generators"]],
    )


def _source_trace(kind, payload, grid):
    if kind == "evolve":
        spec = io.kernel_spec_from_json(payload, grid.times)
        return volterra.evolve(spec, grid), spec.dim, None
    if kind == "mixture":
        spec = _build_mixture(payload)
        return families.mixture_evolution(spec, grid), spec.dim, _mixture_closed_form(spec)
    if kind == "time-mixture":
        spec = _build_time_mixture(payload)
        res = families.time_mixture_evolution(spec, grid)
        return res.trace, spec.dim, res
    if kind == "dilate":
        spec = _build_dilation(payload)
        return families.dilation_reduced(spec, grid), spec.system_dim, None
    raise ConfigError(f"unsupported source kind {kind!r}")


def run_scenario(kind: str, config: dict) -> dict:
    """Run one scenario; returns the artifacts to write (no I/O here)."""
    validate_config(config, kind)
    grid = volterra.TimeGrid.from_horizon(float(config["grid"]["h"]), float(config["grid"]["T"]))
    payload = config["payload"]
    trace = None
    extra = {}
    report = {}

    if kind in ("evolve", "certify"):
        spec = io.kernel_spec_from_json(payload, grid.times)
        tol = _tolerances(config, spec.dim)
        trace = volterra.evolve(spec, grid)
        verdicts = _trace_verdicts(trace, tol)
        if kind == "certify":
            reports = kernels.certify(spec, grid, tol["cp"])
            t1, bv = reports["theorem1"], reports["breuer_vacchini"]
            report["checks"] = {
                "theorem1": "pass" if t1.passed else "fail",
                "breuer_vacchini": "pass" if bv.passed else "fail",
            }
            report["theorem1"] = t1.to_json()
            report["breuer_vacchini"] = bv.to_json()
            verdicts = {"cp_sufficient_condition": t1.passed or bv.passed, "evolution_cp": verdicts["evolution_cp"]}
    elif kind == "kernel-from-f":
        f = memory.memory_function_from_json(payload["f"])
        tol = _tolerances(config, 1)
        adm = memory.check_admissible(f, grid.horizon, grid.step)
        kappa = memory.kappa_from_f(f, grid.times)
        report["admissibility"] = {
            "min_value": adm.min_value,
            "integral": adm.integral,
            "tail": adm.tail,
            "message": adm.message,
        }
        report["kappa"] = {"local_weight": kappa.local_weight, "first_kind_residual": kappa.residual}
        rows = ["t,kappa"] + [f"{io._fmt(t)},{io._fmt(k)}" for t, k in zip(grid.times, kappa.regular)]
        extra["kappa.csv"] = "\r\n".join(rows) + "\r\n"
        verdicts = {"admissible": adm.passed}
    elif kind in ("mixture", "time-mixture", "dilate"):
        trace, dim, closed = _source_trace(kind, payload, grid)
        tol = _tolerances(config, dim)
        verdicts = _trace_verdicts(trace, tol)
        if kind == "time-mixture":
            res, closed = closed, None
            if grid.count >= 3:
                G = volterra.extract_G(trace)
                report["G_consistency"] = float(np.linalg.norm(G.G - res.G, axis=(1, 2)).max())
                report["G_reconstruction_error"] = G.reconstruction_error
            report["weight_integral"] = res.weight_integral
        p = payload.get("p_samples")
        if p is None and kind == "dilate":
            p = DEFAULT_P
        if p:
            block, lv = _laplace_block(trace, p, tol, closed)
            report["laplace"] = block
            verdicts.update(lv)
    elif kind == "laplace-check":
        src = payload["source"]
        trace, dim, closed = _source_trace(src["kind"], src["payload"], grid)
        if not callable(closed):
            closed = None
        tol = _tolerances(config, dim)
        block, verdicts = _laplace_block(trace, payload.get("p_samples", DEFAULT_P), tol, closed)
        report["laplace"] = block
    else:
        raise ConfigError(f"unknown scenario {kind!r}")

    if trace is not None:
        report["trace"] = trace.summary()
        if config.get("dump_superops"):
            every = int(config.get("dump_every", 1))
            for k in range(0, grid.count, every):
                extra[f"superops/step_{k:06d}.json"] = json.dumps(
                    {"t": float(grid.times[k]), **io.superop_to_json(trace.maps[k])}, sort_keys=True
                )
    verdicts = {k: bool(v) for k, v in verdicts.items()}
    report.update(
        {
            "scenario": kind,
            "config": config,
            "grid": {"h": grid.step, "T": grid.horizon, "count": grid.count},
            "tolerances": tol,
            "verdicts": verdicts,
            "passed": all(verdicts.values()),
        }
    )
    return {"report": report, "trace": trace, "extra": extra}


def write_artifacts(outdir, result: dict):
    if not str(outdir):
        raise ConfigError("empty output directory")
    outdir = Path(outdir)
    if result["trace"] is not None:
        io.emit_csv(result["trace"], outdir / "trace.csv")
    for name, content in sorted(result["extra"].items()):
        io.atomic_write(outdir / name, content)
    io.atomic_write(outdir / "report.json", json.dumps(result["report"], sort_keys=True, indent=2) + "\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="memkernel", description=__doc__.splitlines()[0])
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("-c", "--config", required=True, help="scenario config (JSON)")
    ap.add_argument("-o", "--outdir", default=None, help="output directory (overrides config 'output')")
    ap.add_argument("--h", type=float, default=None, help="override grid step")
    ap.add_argument("--T", type=float, default=None, help="override grid horizon")
    ap.add_argument("--tol", type=float, default=None, help="override the CP and unitality tolerances")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MEMKERNEL_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigError("config error at $: expected a JSON object")
        config = copy.deepcopy(config)
        grid = config.setdefault("grid", {})
        if isinstance(grid, dict):
            if args.h is not None:
                grid["h"] = args.h
            if args.T is not None:
                grid["T"] = args.T
        if args.tol is not None:
            config.setdefault("tolerances", {}).update({"cp": args.tol, "unitality": args.tol})
        outdir = args.outdir if args.outdir is not None else config.get("output")
        if not outdir:
            raise ConfigError("no output directory: pass -o or set 'output' in the config")
        result = run_scenario(args.scenario, config)
        write_artifacts(outdir, result)
    except (MemkernelError, KeyError, TypeError, ValueError) as exc:
        msg = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
        print(f"memkernel: error: {msg}", file=sys.stderr)
        return 1
    verdicts = result["report"]["verdicts"]
    for name, ok in sorted(verdicts.items()):
        print(f"{name}: {'pass' if ok else 'fail'}")
    return 0 if all(verdicts.values()) else 2


if __name__ == "__main__":
    raise SystemExit(main())
