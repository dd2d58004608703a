"""Command-line front end.

    glsurface <subcommand> [--config run.cfg] [flags]

Config files are flat ``key = value`` lines ('#' comments); keys are the
long flag names with dashes or underscores.  Command-line flags win.
Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fieldcore import (SQRT2, NumericalError, ValidationError, admissible_epsilons, make_params,
                        nondimensionalize, read_snapshot, write_snapshot)
from .optimize import (BoundaryKind, BoundarySpec, MinimizeOptions, cell_minimize, epsilon_sweep, fmt, minimize,
                       snap_sweep_epsilons, table_csv)
from .polygeom import read_polygons
from .profile1d import build_block, lift_consistency, minimize_profile1d, strip_violations

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


# ------------------------------------------------------------------ output


def _json_text(obj, indent: int = 0) -> str:
    """JSON with every float at 17 significant digits (non-finite as strings)."""
    pad, inner = " " * indent, " " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_json_text(v, indent + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_json_text(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return format(value, ".17g") if math.isfinite(value) else json.dumps(str(value))
    return json.dumps(str(obj))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _resolved_cfg(args: argparse.Namespace) -> str:
    lines = [f"# glsurface {__version__} resolved configuration", f"command = {args.command}"]
    for key, value in sorted(vars(args).items()):
        if key in ("command", "handler", "config") or value is None:
            continue
        if isinstance(value, float):
            value = fmt(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "resolved.cfg", _resolved_cfg(args))
    return out


# ---------------------------------------------------------------- parsing


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _eps_arg(text: str):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from exc


def _common(p: argparse.ArgumentParser, out_default: str | None = "glsurface_out"):
    p.add_argument("--config", help="key = value file; flags override it")
    if out_default is not None:
        p.add_argument("--out", default=out_default, help="output directory")
    p.add_argument("--deterministic", action="store_true", help="fixed-order reductions (always on)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glsurface", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile1d", help="kappa sweep of the 1D transition energy")
    _common(p)
    p.add_argument("--kappa-list", type=_float_list, default=[0.25])
    p.add_argument("--T", type=float, default=20.0)
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--form", choices=["reduced", "literal"], default="reduced")
    p.set_defaults(handler=cmd_profile1d)

    p = sub.add_parser("block", help="build and audit a building block")
    _common(p)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--eps0", type=float, default=1.0 / 16.0)
    p.add_argument("--delta0", type=float, default=0.25)
    p.add_argument("--cell-n", type=int, default=512)
    p.set_defaults(handler=cmd_block)

    p = sub.add_parser("cell", help="cell-problem minimization")
    _common(p)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--eps0", type=float, default=1.0 / 16.0)
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--variant", choices=["dirichlet", "periodic"], default="dirichlet")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--height", type=float, default=1.0)
    p.add_argument("--max-iter", type=int, default=50_000)
    p.set_defaults(handler=cmd_cell)

    p = sub.add_parser("recovery", help="recovery configuration around a polygon file")
    _common(p)
    p.add_argument("--set", dest="polyset", required=True, help="polygon file (blank-line separated loops)")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--eps", type=_eps_arg, default="auto", help="epsilon, or 'auto' (32 sites per square)")
    p.add_argument("--no-snap", action="store_true", help="use --eps as given (quantization is then checked)")
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--eps0", type=float, default=1.0 / 16.0)
    p.add_argument("--delta0", type=float, default=0.25)
    p.add_argument("--save-fields", action="store_true")
    p.set_defaults(handler=cmd_recovery)

    p = sub.add_parser("minimize", help="flux-torus descent from a snapshot or a recovery init")
    _common(p)
    p.add_argument("--snapshot", help="fields.gl2d to start from")
    p.add_argument("--set", dest="polyset", help="polygon file: start from its recovery configuration")
    p.add_argument("--kappa", type=float)
    p.add_argument("--eps", type=_eps_arg, default="auto")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--eps0", type=float, default=1.0 / 16.0)
    p.add_argument("--max-iter", type=int, default=2000)
    p.set_defaults(handler=cmd_minimize)

    p = sub.add_parser("sweep", help="epsilon sweep (flat interface or recovery)")
    _common(p)
    p.add_argument("--scenario", choices=["flat_interface_torus", "recovery"], default="flat_interface_torus")
    p.add_argument("--set", dest="polyset", help="polygon file for the recovery scenario")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--eps-list", type=_float_list, required=True, help="epsilon hints, snapped to admissible")
    p.add_argument("--n-list", type=_int_list)
    p.add_argument("--eps0", type=float, default=1.0 / 16.0)
    p.add_argument("--max-iter", type=int, default=2000)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("snap-eps", help="nearest admissible epsilon")
    _common(p, out_default=None)
    p.add_argument("--out")
    p.add_argument("--kappa", type=float, required=True)
    flux = p.add_mutually_exclusive_group(required=True)
    flux.add_argument("--b-ext", type=float)
    flux.add_argument("--b-ext-over-kappa", type=float)
    p.add_argument("--hint", type=float, required=True)
    p.set_defaults(handler=cmd_snap_eps)

    p = sub.add_parser("nondim", help="physical (kappa, L, b_ext) -> lattice parameters")
    _common(p, out_default=None)
    p.add_argument("--out")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--b-ext", type=float, default=0.0)
    p.set_defaults(handler=cmd_nondim)
    return parser


def read_config(path: str) -> dict[str, str]:
    entries = {}
    for number, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{number}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key.replace("_", "-")] = value
    return entries


def _config_argv(parser: argparse.ArgumentParser, command: str, entries: dict[str, str]) -> list[str]:
    """Turn config entries into flags placed before the real ones (so the latter win)."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    flags = {}
    for action in sub._actions:
        for opt in action.option_strings:
            flags[opt.lstrip("-").lower()] = (opt, action)
    argv = []
    for key, value in entries.items():
        if key == "command":
            continue
        if key.lower() not in flags:
            raise ValidationError(f"unknown config key {key!r} for {command}")
        opt, action = flags[key.lower()]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(opt)
            elif value.lower() not in ("0", "false", "no", "off"):
                raise ValidationError(f"config key {key!r} expects a boolean, got {value!r}")
        else:
            argv += [opt, value]
    return argv


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    # config entries may supply required flags, so read the file before the real parse
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv[1:])
    commands = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices
    if known.config and argv and argv[0] in commands:
        argv = [argv[0]] + _config_argv(parser, argv[0], read_config(known.config)) + argv[1:]
    return parser.parse_args(argv)


# --------------------------------------------------------------- commands


def _snapped_params(kappa: float, E, eps, eps0: float, n: int, snap: bool):
    b_ext = kappa * E.area / SQRT2
    if eps == "auto":
        eps = eps0 * 32.0 / n
        snap = True
    if snap:
        eps, _ = admissible_epsilons(kappa, b_ext, eps)
    return make_params(eps, kappa, b_ext)


def cmd_profile1d(args) -> int:
    out = _out_dir(args)
    rows = []
    for kappa in args.kappa_list:
        p = minimize_profile1d(kappa, args.T, args.n, form=args.form)
        rows.append((kappa, p.energy_1d, p.iterations, p.grad_norm))
    text = f"# T = {fmt(args.T)}\n# n = {args.n}\n# form = {args.form}\nkappa,sigma_1d,iterations,grad_norm\n"
    text += "".join(",".join(fmt(v) for v in row) + "\n" for row in rows)
    _write(out / "sweep.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_block(args) -> int:
    out = _out_dir(args)
    p = minimize_profile1d(args.kappa)
    block = build_block(p, args.eps0, args.delta0, args.cell_n)
    report = {"kappa": args.kappa, "eps0": args.eps0, "delta0": args.delta0, "cell_n": args.cell_n,
              "sigma_cell": block.sigma_cell, "flux0": block.flux0, "sigma_1d": p.energy_1d,
              "strip_violations": strip_violations(block.cfg, args.delta0),
              "lift_consistency": lift_consistency(p, args.cell_n)}
    _write(out / "report.json", _json_text(report) + "\n")
    write_snapshot(block.cfg, out / "fields.gl2d")
    print(_json_text(report))
    return EXIT_OK


def cmd_cell(args) -> int:
    out = _out_dir(args)
    res = cell_minimize(args.kappa, args.eps0, args.delta, args.variant, args.n, height=args.height,
                        opts=MinimizeOptions(max_iter=args.max_iter))
    report = {"sigma": res.energy.total, "per_height": res.energy.total / args.height,
              "iterations": res.iterations, "final_grad_norm": res.final_grad_norm, "converged": res.converged}
    _write(out / "report.json", _json_text(report) + "\n")
    write_snapshot(res.cfg, out / "fields.gl2d")
    print(_json_text(report))
    return EXIT_OK if res.converged else EXIT_NUMERICAL


def _recovery(args):
    from .recovery import build_recovery
    E = read_polygons(Path(args.polyset).read_text())
    params = _snapped_params(args.kappa, E, args.eps, args.eps0, args.n, not getattr(args, "no_snap", False))
    s = params.epsilon / args.eps0
    block = build_block(minimize_profile1d(args.kappa), args.eps0, getattr(args, "delta0", 0.25),
                        max(8, round(s * args.n)))
    return build_recovery(E, params, block, args.n)


def cmd_recovery(args) -> int:
    out = _out_dir(args)
    report = _recovery(args)
    text = _json_text(report.summary())
    _write(out / "report.json", text + "\n")
    if args.save_fields:
        write_snapshot(report.cfg, out / "fields.gl2d")
    print(text)
    return EXIT_OK


def cmd_minimize(args) -> int:
    if bool(args.snapshot) == bool(args.polyset):
        raise ValidationError("give exactly one of --snapshot or --set")
    out = _out_dir(args)
    if args.snapshot:
        cfg0 = read_snapshot(args.snapshot)
    else:
        if args.kappa is None:
            raise ValidationError("--kappa is required with --set")
        cfg0 = _recovery(args).cfg
    res = minimize(cfg0, BoundarySpec(BoundaryKind.TORUS_FLUX), MinimizeOptions(max_iter=args.max_iter))
    report = {"initial_energy": res.history[0], "energy": res.energy.total, "iterations": res.iterations,
              "final_grad_norm": res.final_grad_norm, "converged": res.converged}
    _write(out / "report.json", _json_text(report) + "\n")
    write_snapshot(res.cfg, out / "fields.gl2d")
    print(_json_text(report))
    return EXIT_OK if res.converged else EXIT_NUMERICAL


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    E = read_polygons(Path(args.polyset).read_text()) if args.polyset else None
    if args.scenario == "recovery" and E is None:
        raise ValidationError("--set is required for the recovery scenario")
    flux = 0.5 / SQRT2 if E is None else E.area / SQRT2
    eps_list = snap_sweep_epsilons(args.kappa, flux, args.eps_list)
    n_list = args.n_list or [256] * len(eps_list)
    if len(n_list) != len(eps_list):
        raise ValidationError("--n-list must have one entry per epsilon")
    rows = epsilon_sweep(args.scenario, args.kappa, eps_list, n_list=n_list, E=E, eps0=args.eps0,
                         opts=MinimizeOptions(max_iter=args.max_iter))
    text = table_csv(rows, {"kappa": fmt(args.kappa), "scenario": args.scenario, "eps0": fmt(args.eps0),
                            "max_iter": args.max_iter, "tol": "1e-8 * sites"})
    _write(out / "sweep.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_snap_eps(args) -> int:
    b_ext = args.b_ext if args.b_ext is not None else args.kappa * args.b_ext_over_kappa
    eps, m = admissible_epsilons(args.kappa, b_ext, args.hint)
    if args.out:
        _out_dir(args)
    print(f"epsilon = {fmt(eps)}\nm = {m}")
    return EXIT_OK


def cmd_nondim(args) -> int:
    params = nondimensionalize(args.kappa, args.L, args.b_ext)
    if args.out:
        _out_dir(args)
    print(_json_text({"epsilon": params.epsilon, "kappa": params.kappa, "b_ext": params.b_ext,
                      "alpha": params.alpha}))
    return EXIT_OK


def _fail(code: int, exc: Exception) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        return args.handler(args)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except (OSError, ValueError) as exc:
        return _fail(EXIT_VALIDATION, exc)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
