"""Batch front-end: `thermolanczos <command> --config <file.json> [--out <path>]`.

Every run is driven by a single JSON config (no environment configuration),
outputs are written atomically with a provenance header, and identical configs
produce byte-identical files. Exit codes: 0 success, 2 usage/schema error,
3 numerical failure (error JSON on stderr).
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import models, series, spectral, tl_solver
from .errors import ThermolanczosError

COMMANDS = (
    "curve",
    "series",
    "table",
    "gse",
    "weight",
    "overlap",
    "density",
    "crosscheck",
    "classify",
)

_NUMBER = {"type": ["number", "string"]}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["gaussian", "xy_isotropic", "itf", "polynomial"]},
        "params": {
            "type": "object",
            "properties": {
                "c1": _NUMBER,
                "c2": _NUMBER,
                "x": {"type": "number"},
                "c": {"type": "array", "items": _NUMBER, "minItems": 2},
                "radius": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_GRID = {
    "oneOf": [
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
        {
            "type": "object",
            "properties": {
                "start": {"type": "number"},
                "stop": {"type": "number"},
                "num": {"type": "integer", "minimum": 2},
                "spacing": {"enum": ["linear", "geometric"]},
            },
            "required": ["start", "stop", "num"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "model": MODEL_SCHEMA,
        "command": {"enum": list(COMMANDS)},
        "params": {
            "type": "object",
            "properties": {
                "s_grid": _GRID,
                "s_values": {"type": "array", "items": {"type": "number"}},
                "eps_grid": _GRID,
                "n_max": {"type": "integer", "minimum": 0},
                "n": {"type": "integer", "minimum": 0},
                "which": {"enum": ["A", "B"]},
                "orders_a": {"type": "array", "items": {"type": "integer"}},
                "orders_b": {"type": "array", "items": {"type": "integer"}},
                "N": {"type": "number", "exclusiveMinimum": 0},
                "s": {"type": "number", "exclusiveMinimum": 0},
                "depth": {"type": "integer", "minimum": 1},
                "node_count": {"type": "integer", "minimum": 8},
                "ds": {"type": "number", "exclusiveMinimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "tol_series": {"type": "number", "exclusiveMinimum": 0},
                "tol_march": {"type": "number", "exclusiveMinimum": 0},
                "xi_samples": {"type": "array", "items": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "path": {"type": "string"},
                "format": {"enum": ["csv", "json"]},
            },
            "additionalProperties": False,
        },
    },
    "required": ["command"],
    "additionalProperties": False,
}

CLASSIFY_OUTPUT_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"type": "string"},
        "gamma": {"type": ["number", "null"]},
        "delta": {"type": ["number", "null"]},
        "amplitude": {"type": ["number", "null"]},
        "residual": {"type": "number"},
        "_provenance": {"type": "object"},
    },
    "required": ["kind", "gamma", "delta", "amplitude", "residual"],
}


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _expand_grid(spec):
    if isinstance(spec, list):
        return [float(v) for v in spec]
    num = int(spec["num"])
    if spec.get("spacing", "linear") == "geometric":
        return list(np.geomspace(spec["start"], spec["stop"], num))
    return list(np.linspace(spec["start"], spec["stop"], num))


def _config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()
    ).hexdigest()[:16]


def _atomic_write(path: str, data: str):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tl-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _provenance(config: dict) -> dict:
    return {
        "config_sha256": _config_hash(config),
        "package": "thermolanczos",
        "command": config["command"],
    }


def _csv_document(config, header_cols, rows, extra_meta=()):
    buf = io.StringIO()
    prov = _provenance(config)
    for k in sorted(prov):
        buf.write(f"# {k}: {prov[k]}\n")
    for k, v in extra_meta:
        buf.write(f"# {k}: {v}\n")
    buf.write(",".join(header_cols) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _json_document(config, payload: dict) -> str:
    payload = dict(payload)
    payload["_provenance"] = _provenance(config)
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


# -- command implementations ---------------------------------------------------

def _cmd_curve(model, params, config):
    s_grid = _expand_grid(params["s_grid"])
    tol = params.get("tol", tl_solver.RESIDUAL_TOL)
    curve = tl_solver.solve_curve(model, s_grid, tol=tol)
    rows = [
        (p.s, p.alpha, p.beta2, em, ep, p.residuals[0], p.residuals[1])
        for p, em, ep in zip(curve.points, curve.eps_minus, curve.eps_plus)
    ]
    meta = [("model", json.dumps(model.to_spec(), sort_keys=True)),
            ("residual_tol", _fmt(tol))]
    if curve.diagnostics:
        meta.append(("diagnostics", "; ".join(curve.diagnostics)))
    doc = _csv_document(
        config,
        ["s", "alpha", "beta2", "eps_minus", "eps_plus", "res_supp", "res_norm"],
        rows,
        meta,
    )
    return doc, "csv"


def _cmd_series(model, params, config):
    n_max = params.get("n_max", 6)
    c = model.exact_cumulants(2 * n_max + 2)
    if c is None:
        c = model.cumulants(2 * n_max + 2)
    coeffs = series.lanczos_taylor(c, n_max)
    payload = {
        "n_max": n_max,
        "exact": coeffs.exact,
        "c1": str(coeffs.c1) if coeffs.exact else float(coeffs.c1),
        "a": [str(v) if coeffs.exact else float(v) for v in coeffs.a],
        "b": [str(v) if coeffs.exact else float(v) for v in coeffs.b],
    }
    return _json_document(config, payload), "json"


def _cmd_table(model, params, config):
    if "n" in params and "which" in params:
        terms = series.partition_coefficients(params["n"], params["which"])
        payload = {"table": [t.to_json() for t in terms]}
    else:
        orders_a = params.get("orders_a", [0, 1, 2, 3])
        orders_b = params.get("orders_b", [1, 2, 3, 4])
        payload = {"table": series.table_export(orders_a, orders_b)}
    return _json_document(config, payload), "json"


def _cmd_gse(model, params, config):
    s_grid = _expand_grid(params["s_grid"])
    curve = tl_solver.solve_curve(model, s_grid, tol=params.get("tol", 1e-10))
    g = tl_solver.gse_bounds(curve)
    payload = {
        "eps0": g.eps0,
        "eps0_sampled": g.eps0_sampled,
        "eps_inf": g.eps_inf,
        "eps_inf_sampled": g.eps_inf_sampled,
        "eps0_converged": g.eps0_converged,
        "eps_inf_converged": g.eps_inf_converged,
    }
    return _json_document(config, payload), "json"


def _cmd_weight(model, params, config):
    eps_grid = _expand_grid(params["eps_grid"])
    n_sites = params.get("N", 64)
    rows = []
    for e in eps_grid:
        ws = spectral.weight_leading(model, e, n_sites)
        rows.append((e, ws.w_leading, ws.u))
    return (
        _csv_document(config, ["eps", "w", "u"], rows, [("N", _fmt(n_sites))]),
        "csv",
    )


def _cmd_overlap(model, params, config):
    val = spectral.overlap_integral(model)
    print(_fmt(val))
    return _json_document(config, {"log_overlap_per_site": val}), "json"


def _cmd_density(model, params, config):
    s = params["s"]
    pt = tl_solver.solve_point(model, s, tol=params.get("tol", 1e-10))
    dens = tl_solver.equilibrium_density(
        model, pt, node_count=params.get("node_count", 256)
    )
    rows = list(zip(dens.eps, dens.values))
    meta = [
        ("s", _fmt(s)),
        ("mass", _fmt(dens.mass)),
        ("force_balance_residual", _fmt(dens.force_balance_residual)),
    ]
    return _csv_document(config, ["eps", "sigma"], rows, meta), "csv"


def _cmd_classify(model, params, config):
    xi = params.get("xi_samples")
    cls = spectral.gap_classify(model, xi)
    payload = {
        "kind": cls.kind,
        "gamma": cls.gamma,
        "delta": cls.delta,
        "amplitude": cls.amplitude,
        "residual": cls.fit_residual,
        "eps0": cls.eps0,
    }
    return _json_document(config, payload), "json"


def _cmd_crosscheck(model, params, config):
    s_values = params.get("s_values", [0.1, 0.25, 0.5])
    tol_series = params.get("tol_series", 1e-3)
    tol_march = params.get("tol_march", 1e-4)
    n_max = params.get("n_max", 6)
    report = {"model": model.to_spec(), "points": [], "pass": True}
    c = model.exact_cumulants(2 * n_max + 2)
    if c is None:
        c = model.cumulants(2 * n_max + 2)
    coeffs = series.lanczos_taylor(c, n_max)
    march = None
    try:
        march = tl_solver.toda_march(
            model, max(s_values), ds=params.get("ds", 1e-3)
        )
    except ThermolanczosError as exc:
        report["march_error"] = exc.payload()
        report["pass"] = False
    seed = None
    for s in sorted(s_values):
        entry = {"s": s}
        try:
            pt = tl_solver.solve_point(model, s, seed=seed)
            seed = (pt.alpha, pt.beta2)
            entry["alpha_solver"] = pt.alpha
            entry["beta2_solver"] = pt.beta2
            entry["alpha_series"] = coeffs.alpha(s)
            entry["d_alpha_series"] = abs(pt.alpha - entry["alpha_series"])
            entry["pass_series"] = entry["d_alpha_series"] <= tol_series
            if march is not None:
                idx = int(round(s / (march.s[1] - march.s[0])))
                entry["beta2_march"] = float(march.beta2[idx])
                entry["d_beta2_march"] = abs(pt.beta2 - entry["beta2_march"])
                entry["pass_march"] = entry["d_beta2_march"] <= tol_march
            ok = entry["pass_series"] and entry.get("pass_march", True)
            report["pass"] = report["pass"] and ok
        except ThermolanczosError as exc:
            entry["error"] = exc.payload()
            report["pass"] = False
        report["points"].append(entry)
    return _json_document(config, report), "json"


_DISPATCH = {
    "curve": _cmd_curve,
    "series": _cmd_series,
    "table": _cmd_table,
    "gse": _cmd_gse,
    "weight": _cmd_weight,
    "overlap": _cmd_overlap,
    "density": _cmd_density,
    "classify": _cmd_classify,
    "crosscheck": _cmd_crosscheck,
}

_DEFAULT_EXT = {"csv": ".csv", "json": ".json"}


def run(config: dict, out_path: str | None = None) -> int:
    """Validate, dispatch and write; returns the process exit code."""
    import jsonschema

    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        sys.stderr.write(
            json.dumps({"error": "schema", "field": path, "message": exc.message})
            + "\n"
        )
        return 2
    command = config["command"]
    try:
        model = models.from_spec(config.get("model", {"kind": "gaussian"}))
        doc, fmt = _DISPATCH[command](model, config.get("params", {}), config)
    except ThermolanczosError as exc:
        sys.stderr.write(json.dumps(exc.payload(), default=str) + "\n")
        return 3
    out = out_path or config.get("output", {}).get("path")
    if out:
        _atomic_write(out, doc)
    else:
        sys.stdout.write(doc)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="thermolanczos",
        description="Thermodynamic-limit Lanczos functions from cumulant "
        "generating functions",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=None, help="output path override")
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(
            json.dumps({"error": "usage", "message": str(exc)}) + "\n"
        )
        return 2
    if config.get("command") not in (None, args.command):
        sys.stderr.write(
            json.dumps(
                {
                    "error": "usage",
                    "message": f"config command {config.get('command')!r} "
                    f"conflicts with CLI command {args.command!r}",
                }
            )
            + "\n"
        )
        return 2
    config["command"] = args.command
    code = run(config, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
