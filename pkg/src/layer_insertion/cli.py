"""Command line interface: ``layer-insertion <subcommand>``.

Exit status is 0 on success. On failure a JSON summary is printed to
stdout and the status is 1 (failed runs) or 2 (bad input).
"""

import argparse
import json
import logging
import sys

from .experiments import (
    OUT_DIR_ENV,
    aggregate,
    emit_plot_data,
    load_config,
    resolve_out_dir,
    run_experiment,
    write_dataset,
)


def _load(args):
    spec = load_config(args.config)
    if args.seed is not None:
        spec = spec.with_seeds([args.seed])
    return spec, resolve_out_dir(args.out_dir, spec.name)


def cmd_generate_data(args):
    spec, out = _load(args)
    if args.seed is not None:
        spec.data["seed"] = args.seed
    path = write_dataset(spec, out)
    return {"ok": True, "dataset": str(path)}


def cmd_run(args):
    spec, out = _load(args)
    summary = run_experiment(spec, out, jobs=args.jobs)
    summary["out_dir"] = str(out)
    if args.plot:
        emit_plot_data(out)
    return summary


def cmd_aggregate(args):
    out = resolve_out_dir(args.out_dir, "")
    result = aggregate(out)
    return {"ok": True, "arms": {k: int(v["n_runs"]) for k, v in result.items()}}


def cmd_plot_data(args):
    out = resolve_out_dir(args.out_dir, "")
    manifest = emit_plot_data(out)
    return {"ok": True, "curves": len(manifest["curves"]), "markers": len(manifest["markers"])}


def build_parser():
    p = argparse.ArgumentParser(prog="layer-insertion", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    out_help = f"output directory (default: ${OUT_DIR_ENV}/<name> or results/<name>)"

    g = sub.add_parser("generate-data", help="write the shared spiral dataset")
    g.add_argument("--config", required=True, help="config file or built-in name (exp6, exp8, ...)")
    g.add_argument("--seed", type=int, help="override the data seed")
    g.add_argument("--out-dir", help=out_help)
    g.set_defaults(func=cmd_generate_data)

    r = sub.add_parser("run", help="run every arm and seed, then aggregate")
    r.add_argument("--config", required=True, help="config file or built-in name (exp6, exp8, ...)")
    r.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
    r.add_argument("--out-dir", help=out_help)
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.add_argument("--plot", action="store_true", help="also emit plot data")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("aggregate", help="recompute per-arm mean curves")
    a.add_argument("--out-dir", required=True)
    a.set_defaults(func=cmd_aggregate)

    pl = sub.add_parser("plot-data", help="write plot-ready series and manifest")
    pl.add_argument("--out-dir", required=True)
    pl.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(json.dumps({"ok": False, "error": f"{type(exc).__name__}: {exc}"}))
        return 2
    print(json.dumps(result, indent=1, sort_keys=True))
    return 0 if result.get("ok", True) else 1


if __name__ == "__main__":
    sys.exit(main())
