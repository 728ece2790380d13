"""Command-line driver.

Subcommands
-----------
verify   run a suite configuration and write reports
map      dump a Knothe or recentering map as text
example  write a generated density (text or binary)
moments  dump conditional-moment tables as CSV

Exit statuses: 0 pass, 1 check failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import build_potential, default_config_path, load_config, measure_shape, scaled_shape
from .density import build_grid_density, save_density
from .errors import ConfigInvalid
from .knothe import build_knothe
from .recentering import build_recentering, conditional_moments
from .report import fmt_num
from .suite import run_suite
from .transport1d import MonotoneMap1D

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="logconcave-lab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="suite YAML (default: the bundled suite)")
    common.add_argument("--out", help="output directory or file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--grid-scale", type=float, default=1.0, help="multiplier on every grid shape")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for independent checks")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("verify", parents=[common], help="run the configured checks")

    m = sub.add_parser("map", parents=[common], help="dump a Knothe or recentering map")
    m.add_argument("kind", choices=["knothe", "recentering"])
    m.add_argument("name", help="pair name (knothe) or measure name (recentering)")

    e = sub.add_parser("example", parents=[common], help="write a generated density")
    e.add_argument("measure")
    e.add_argument("--format", choices=["text", "binary"], default="text")

    mo = sub.add_parser("moments", parents=[common], help="dump conditional-moment tables")
    mo.add_argument("measure")
    return p


def _config(args):
    return load_config(args.config or default_config_path())


def _density(cfg, name, scale):
    if name not in cfg.measures:
        raise ConfigInvalid(f"undefined measure {name!r} (known: {sorted(cfg.measures)})")
    shape = scaled_shape(measure_shape(cfg, name), scale)
    return build_grid_density(build_potential(cfg, name), shape)


def _populated_rows(mu, comps):
    """Lines ``x_1 .. x_n  y_1 .. y_n`` at the nodes carrying mass."""
    live = mu.masses > 0
    for c in comps:
        live &= np.isfinite(c)
    xs = [mu.coordinate(i) for i in range(mu.dim)]
    cols = [np.broadcast_to(a, mu.shape)[live] for a in xs] + [np.broadcast_to(c, mu.shape)[live] for c in comps]
    return "".join(" ".join(fmt_num(v) for v in row) + "\n" for row in zip(*cols))


def _write(text, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_verify(args):
    cfg = _config(args)
    res = run_suite(cfg, out_dir=args.out, seed=args.seed, grid_scale=args.grid_scale, jobs=args.jobs)
    fails = [r for r in res.reports if r.status == "FAIL"]
    print(f"{len(res.reports)} reports, {len(fails)} failing; written: {', '.join(map(str, res.files))}")
    for r in fails:
        print(f"  FAIL {r.inequality_id}[{r.label}] margin={fmt_num(r.margin)} kind={r.kind}")
    return res.exit_status


def cmd_map(args):
    cfg = _config(args)
    if args.kind == "knothe":
        if args.name not in cfg.pairs:
            raise ConfigInvalid(f"undefined pair {args.name!r} (known: {sorted(cfg.pairs)})")
        mu_name, nu_name = cfg.pairs[args.name]
        mu, nu = _density(cfg, mu_name, args.grid_scale), _density(cfg, nu_name, args.grid_scale)
        T = build_knothe(mu, nu)
        if mu.dim == 1:
            text = MonotoneMap1D(mu.grids[0], T.table(0)).to_text()
        else:
            text = _populated_rows(mu, [T._broadcast(T.table(i)) for i in range(mu.dim)])
    else:
        mu = _density(cfg, args.name, args.grid_scale)
        comps = build_recentering(mu).R.on_grid()
        if mu.dim == 1:
            text = MonotoneMap1D(mu.grids[0], comps[0]).to_text()
        else:
            text = _populated_rows(mu, comps)
    _write(text, args.out)
    return EXIT_PASS


def cmd_example(args):
    cfg = _config(args)
    mu = _density(cfg, args.measure, args.grid_scale)
    out = args.out or f"{args.measure}.{'txt' if args.format == 'text' else 'bin'}"
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_density(mu, out, args.format)
    print(out)
    return EXIT_PASS


def cmd_moments(args):
    cfg = _config(args)
    mu = _density(cfg, args.measure, args.grid_scale)
    out = args.out or f"{args.measure}_moments.csv"
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    conditional_moments(mu).to_csv(out)
    print(out)
    return EXIT_PASS


COMMANDS = {"verify": cmd_verify, "map": cmd_map, "example": cmd_example, "moments": cmd_moments}


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
