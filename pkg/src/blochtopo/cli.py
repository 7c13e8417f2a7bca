"""Command-line front end for band geometry and topology computations.

Subcommands: bands, audit, gap, chern, z2, z2-3d, wannier, sweep. Structured
results are JSON (schema versioned, deterministic up to the timestamp field);
bulk numeric tables (band structures, curvature fields, Wannier sets, center
flows) are CSV. Exit codes: 0 success, 1 usage or configuration error,
2 physics error (gapless family, topological obstruction).
"""

import argparse
import csv
import json
import sys
from datetime import datetime, timezone

import numpy as np

from .core import make_grid
from .errors import BlochtopoError, GaplessError, PhysicsError
from .frames import smooth_periodic_frame, z2_3d, z2_boundary_winding, z2_wilson_flow
from .geometry import (
    berry_curvature,
    chern_number_curvature,
    chern_number_plaquette,
    export_curvature_csv,
)
from .models import (
    BUILTIN_DEFAULTS,
    bloch_hamiltonian_batch,
    build_builtin,
    load_model,
    verify_model_symmetries,
)
from .projectors import (
    BandSelection,
    ProjectorFamily,
    gap_check,
    verify_projector_symmetries,
)
from .wannier import (
    decay_fit,
    export_wannier_csv,
    localization_moments,
    wannier_from_frame,
)

__all__ = ["main"]


class UsageError(Exception):
    """Bad flags or config file; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract reserves 2 for
    # physics errors, so usage problems are rerouted through exit code 1
    def error(self, message):
        raise UsageError(message)


def _utc_stamp():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _parse_params(text):
    out = {}
    for piece in filter(None, (text or "").split(",")):
        if "=" not in piece:
            raise UsageError(f"params: expected name=value, got {piece!r}")
        name, _, value = piece.partition("=")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"params: value for {name.strip()!r} is not a number")
    return out


def _parse_grid(text):
    if not text:
        raise UsageError("grid: at least one size is required")
    try:
        sizes = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise UsageError(f"grid: sizes must be integers, got {text!r}")
    if any(n <= 0 for n in sizes):
        raise UsageError(f"grid: sizes must be positive, got {sizes}")
    return sizes


def _parse_selection(text, model):
    if not text:
        return BandSelection.lowest(model.n_occ)
    kind, _, rest = text.partition(":")
    try:
        if kind == "lowest":
            return BandSelection.lowest(int(rest))
        if kind == "window":
            start, count = rest.split(",")
            return BandSelection.index_window(int(start), int(count))
        if kind == "energy":
            low, high = rest.split(",")
            return BandSelection.energy_window(float(low), float(high))
    except (ValueError, TypeError):
        raise UsageError(f"bands: malformed selection {text!r}")
    raise UsageError(
        f"bands: unknown selection kind {kind!r} (use lowest:/window:/energy:)"
    )


def _parse_path(text, dim):
    if not text:
        defaults = {
            1: "-0.5;0.0;0.5",
            2: "0,0;0.5,0;0.5,0.5;0,0",
            3: "0,0,0;0.5,0,0;0.5,0.5,0;0.5,0.5,0.5;0,0,0",
        }
        text = defaults[dim]
    points = []
    for piece in text.split(";"):
        coords = piece.split(",")
        if len(coords) != dim:
            raise UsageError(
                f"path: point {piece!r} has {len(coords)} coordinates, expected {dim}"
            )
        try:
            points.append([float(c) for c in coords])
        except ValueError:
            raise UsageError(f"path: point {piece!r} is not numeric")
    if len(points) < 2:
        raise UsageError("path: need at least two points")
    return np.array(points)


_CONFIG_KEYS = {
    "model",
    "params",
    "model_file",
    "grid",
    "bands",
    "output",
    "report",
    "path",
    "path_steps",
    "flow_csv",
    "curvature_csv",
    "vary",
    "start",
    "stop",
    "steps",
    "invariant",
    "tolerance",
    "threads",
}


def _merge_config(args):
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as fh:
            stored = json.load(fh)
    except OSError as exc:
        raise UsageError(f"config: cannot read {args.config}: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config: {args.config} is not valid JSON: {exc}")
    if not isinstance(stored, dict):
        raise UsageError("config: top level must be an object")
    for key, value in stored.items():
        if key not in _CONFIG_KEYS:
            raise UsageError(f"config: unknown field {key!r}")
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _build_model(args):
    if getattr(args, "model_file", None):
        if getattr(args, "model", None):
            raise UsageError("model: give either --model or --model-file, not both")
        try:
            return load_model(args.model_file)
        except OSError as exc:
            raise UsageError(f"model_file: cannot read {args.model_file}: {exc}")
    if not getattr(args, "model", None):
        raise UsageError("model: --model or --model-file is required")
    params = args.params if isinstance(getattr(args, "params", None), dict) else _parse_params(getattr(args, "params", None))
    return build_builtin(args.model, params)


def _family_and_grid(args, need_grid=True):
    model = _build_model(args)
    selection = _parse_selection(getattr(args, "bands", None), model)
    family = ProjectorFamily.from_model(model, selection)
    if not need_grid:
        return model, family, None
    if getattr(args, "grid", None) is None:
        raise UsageError("grid: --grid is required for this command")
    sizes = args.grid if isinstance(args.grid, tuple) else _parse_grid(args.grid)
    if len(sizes) == 1 and model.lattice.dim > 1:
        sizes = sizes * model.lattice.dim
    if len(sizes) != model.lattice.dim:
        raise UsageError(
            f"grid: {len(sizes)} sizes for a {model.lattice.dim}-dimensional model"
        )
    return model, family, make_grid(model.lattice, sizes)


def _model_summary(model):
    return {"name": model.name, "params": _jsonable(model.params)}


def _require_gapped(family, grid):
    report = gap_check(family, grid)
    if report.gapless:
        raise GaplessError(
            f"family is gapless on this grid (min separation {report.min_gap:.3e} "
            f"at k={report.argmin})"
        )


def cmd_bands(args):
    model, family, _ = _family_and_grid(args, need_grid=False)
    if not getattr(args, "output", None):
        raise UsageError("output: bands writes CSV and needs --output")
    vertices = _parse_path(getattr(args, "path", None), model.lattice.dim)
    steps = int(getattr(args, "path_steps", None) or 50)
    if steps < 1:
        raise UsageError("path_steps: must be at least 1")
    points = []
    for a, b in zip(vertices[:-1], vertices[1:]):
        for t in range(steps):
            points.append(a + (b - a) * (t / steps))
    points.append(vertices[-1])
    points = np.array(points)
    energies = np.linalg.eigvalsh(bloch_hamiltonian_batch(model, points))
    kcart = model.lattice.kcart(points)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(kcart, axis=0), axis=1))])
    with open(args.output, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = model.lattice.dim
        writer.writerow(
            ["s"] + [f"k{i + 1}" for i in range(dim)]
            + [f"e{n + 1}" for n in range(energies.shape[1])]
        )
        for s, k, row in zip(arc, points, energies):
            writer.writerow(
                [f"{s:.9f}"] + [f"{c:.9f}" for c in k] + [f"{e:.12e}" for e in row]
            )
    return {"model": _model_summary(model), "rows": len(points), "output": args.output}


def cmd_audit(args):
    model, family, grid = _family_and_grid(args)
    tol = float(getattr(args, "tolerance", None) or 1e-9)
    fam_audit = verify_projector_symmetries(family, grid, tol=tol)
    model_audit = verify_model_symmetries(model, grid, tol=tol)
    return {
        "model": _model_summary(model),
        "grid": list(grid.sizes),
        "projector_audit": {
            "residuals": _jsonable(fam_audit.residuals),
            "argmax": _jsonable(fam_audit.argmax),
            "verdicts": _jsonable(fam_audit.verdicts),
            "even_rank_violation": bool(fam_audit.even_rank_violation),
            "tolerance": tol,
        },
        "model_audit": {
            "tr_residual": _jsonable(model_audit.tr_residual),
            "sr_residual": _jsonable(model_audit.sr_residual),
            "tau_residual": _jsonable(model_audit.tau_residual),
            "spectrum_parity": _jsonable(model_audit.spectrum_parity),
            "verdicts": _jsonable(model_audit.verdicts),
        },
    }


def cmd_gap(args):
    model, family, grid = _family_and_grid(args)
    threshold = getattr(args, "tolerance", None)
    report = gap_check(family, grid, threshold=float(threshold) if threshold else None)
    return {
        "model": _model_summary(model),
        "grid": list(grid.sizes),
        "min_gap": report.min_gap,
        "argmin": _jsonable(report.argmin),
        "gapless": bool(report.gapless),
        "threshold": report.threshold,
        "rank_constant": bool(report.rank_constant),
    }


def cmd_chern(args):
    model, family, grid = _family_and_grid(args)
    _require_gapped(family, grid)
    field = berry_curvature(family, grid)
    curvature = chern_number_curvature(field)
    plaquette = chern_number_plaquette(family, grid)
    if getattr(args, "curvature_csv", None):
        export_curvature_csv(field, args.curvature_csv)
    return {
        "model": _model_summary(model),
        "grid": list(grid.sizes),
        "curvature_method": _jsonable(curvature.to_json()),
        "plaquette_method": _jsonable(plaquette.to_json()),
        "agree": int(curvature.value) == int(plaquette.value),
    }


def cmd_z2(args):
    model, family, grid = _family_and_grid(args)
    winding = z2_boundary_winding(family, grid)
    flow = z2_wilson_flow(family, grid)
    if getattr(args, "flow_csv", None):
        with open(args.flow_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            m = flow.flow["phases"].shape[1]
            writer.writerow(["k2"] + [f"phase{j + 1}" for j in range(m)])
            for k2, row in zip(flow.flow["k2"], flow.flow["phases"]):
                writer.writerow([f"{k2:.9f}"] + [f"{p:.12e}" for p in row])
    return {
        "model": _model_summary(model),
        "grid": list(grid.sizes),
        "boundary_winding": _jsonable(winding.to_json()),
        "wilson_flow": _jsonable(flow.to_json()),
        "agree": winding.delta == flow.delta,
        "delta": int(winding.delta),
    }


def cmd_z2_3d(args):
    model, family, grid = _family_and_grid(args)
    result = z2_3d(family, grid)
    return {
        "model": _model_summary(model),
        "grid": list(grid.sizes),
        **_jsonable(result.to_json()),
    }


def cmd_wannier(args):
    model, family, grid = _family_and_grid(args)
    if not getattr(args, "output", None):
        raise UsageError("output: wannier writes the set as CSV and needs --output")
    _require_gapped(family, grid)
    frame = smooth_periodic_frame(family, grid)
    wset = wannier_from_frame(grid, frame.columns)
    export_wannier_csv(wset, args.output)
    report = localization_moments(wset)
    fit = decay_fit(wset)
    return {
        "model": _model_summary(model),
        "grid": list(grid.sizes),
        "output": args.output,
        "norm_defect": wset.diagnostics["norm_defect"],
        "orthonormality_defect": wset.orthonormality_defect(),
        "localization": _jsonable(report.to_json()),
        "decay": _jsonable(fit.to_json()),
    }


def _sweep_invariant(kind, family, grid):
    if kind == "z2":
        return int(z2_wilson_flow(family, grid).delta)
    if kind == "chern":
        return int(chern_number_plaquette(family, grid).value)
    return None


def cmd_sweep(args):
    if not getattr(args, "vary", None):
        raise UsageError("vary: --vary names the parameter to sweep")
    for field in ("start", "stop", "steps"):
        if getattr(args, field, None) is None:
            raise UsageError(f"{field}: required for sweep")
    steps = int(args.steps)
    if steps < 2:
        raise UsageError("steps: need at least 2 sweep points")
    values = np.linspace(float(args.start), float(args.stop), steps)

    base = _build_model(args)
    invariant_kind = getattr(args, "invariant", None)
    if invariant_kind is None:
        if base.lattice.dim == 2 and base.time_reversal is not None and base.time_reversal.sign == -1:
            invariant_kind = "z2"
        elif base.lattice.dim == 2:
            invariant_kind = "chern"
        else:
            invariant_kind = "none"
    if invariant_kind not in ("z2", "chern", "none"):
        raise UsageError(f"invariant: unknown kind {invariant_kind!r}")

    if getattr(args, "model_file", None):
        raise UsageError("sweep: only builtin models can be swept (--model)")
    base_params = args.params if isinstance(getattr(args, "params", None), dict) else _parse_params(getattr(args, "params", None))
    if args.vary not in BUILTIN_DEFAULTS.get(args.model, {}):
        raise UsageError(
            f"vary: {args.vary!r} is not a parameter of {args.model!r}"
        )

    points = []
    for value in values:
        params = dict(base_params)
        params[args.vary] = float(value)
        model = build_builtin(args.model, params)
        selection = _parse_selection(getattr(args, "bands", None), model)
        family = ProjectorFamily.from_model(model, selection)
        sizes = args.grid if isinstance(args.grid, tuple) else _parse_grid(args.grid)
        if len(sizes) == 1 and model.lattice.dim > 1:
            sizes = sizes * model.lattice.dim
        grid = make_grid(model.lattice, sizes)
        report = gap_check(family, grid)
        record = {
            "value": float(value),
            "min_gap": report.min_gap,
            "gapless": bool(report.gapless),
            "invariant": None,
        }
        if not report.gapless and invariant_kind != "none":
            try:
                record["invariant"] = _sweep_invariant(invariant_kind, family, grid)
            except PhysicsError as exc:
                record["invariant_error"] = str(exc)
        points.append(record)

    transitions = []
    last = None
    for rec in points:
        if rec["invariant"] is None:
            continue
        if last is not None and rec["invariant"] != last["invariant"]:
            transitions.append([last["value"], rec["value"]])
        last = rec
    return {
        "model": {"name": args.model, "params": _jsonable(base_params)},
        "vary": args.vary,
        "invariant_kind": invariant_kind,
        "points": points,
        "transitions": transitions,
    }


_COMMANDS = {
    "bands": cmd_bands,
    "audit": cmd_audit,
    "gap": cmd_gap,
    "chern": cmd_chern,
    "z2": cmd_z2,
    "z2-3d": cmd_z2_3d,
    "wannier": cmd_wannier,
    "sweep": cmd_sweep,
}


def _add_common(sub):
    sub.add_argument("--model", help="builtin model name")
    sub.add_argument("--params", help="comma-separated name=value overrides")
    sub.add_argument("--model-file", dest="model_file", help="JSON model file")
    sub.add_argument("--grid", help="comma-separated grid sizes (even)")
    sub.add_argument("--bands", help="selection: lowest:M | window:N0,M | energy:LO,HI")
    sub.add_argument("--output", help="output path (CSV commands)")
    sub.add_argument("--config", help="JSON file mirroring the flags")
    sub.add_argument("--tolerance", type=float, help="tolerance override")
    sub.add_argument("--threads", type=int, help="cap BLAS worker threads")


def build_parser():
    parser = _Parser(prog="blochtopo", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sub = subs.add_parser(name, prog=f"blochtopo {name}")
        _add_common(sub)
        if name == "bands":
            sub.add_argument("--path", help="semicolon-separated reduced k-points")
            sub.add_argument("--path-steps", dest="path_steps", type=int,
                             help="samples per path segment (default 50)")
        if name == "chern":
            sub.add_argument("--curvature-csv", dest="curvature_csv",
                             help="also write the curvature field as CSV")
        if name == "z2":
            sub.add_argument("--flow-csv", dest="flow_csv",
                             help="also write the Wannier-center flow as CSV")
        if name == "wannier":
            sub.add_argument("--report", help="write the JSON report here instead of stdout")
        if name == "sweep":
            sub.add_argument("--vary", help="parameter to sweep")
            sub.add_argument("--from", dest="start", type=float, help="sweep start")
            sub.add_argument("--to", dest="stop", type=float, help="sweep end")
            sub.add_argument("--steps", type=int, help="number of sweep points")
            sub.add_argument("--invariant", choices=["z2", "chern", "none"],
                             help="per-point invariant (default by symmetry)")
    return parser


def _limit_threads(n):
    if n is None:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return None
    return threadpool_limits(limits=int(n))


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _merge_config(args)
        limiter = _limit_threads(getattr(args, "threads", None))
        try:
            payload = _COMMANDS[args.command](args)
        finally:
            if limiter is not None:
                limiter.__exit__(None, None, None)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PhysicsError as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return 2
    except BlochtopoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    document = {
        "schema": 1,
        "command": args.command,
        "generated_at": _utc_stamp(),
        **payload,
    }
    text = json.dumps(document, indent=2, sort_keys=True)
    report_path = getattr(args, "report", None)
    if args.command == "wannier" and report_path:
        with open(report_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
