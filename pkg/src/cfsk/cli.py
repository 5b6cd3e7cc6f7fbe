"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
Precedence: command-line flags > ``--config`` JSON file > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from cfsk.alphabet import TWO_PI, Constellation, Kind
from cfsk.bounds import InvalidGramError, helstrom, psk_helstrom_circulant, sql_error_mc
from cfsk.receiver import RANDOM, ReceiverModel, default_threads, estimate_ser
from cfsk.results import CSV_COLUMNS, ResultDocument, map_payload, map_rows, write_csv
from cfsk.sweep import (
    GridSpec, find_minima, hb_ratio_map, optimize_cfsk, scan_alphabet, scan_energy,
    sweep_hb_map, sweep_ser_map,
)

DEFAULT_SEED = 20190417
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


def _kind_list(values):
    try:
        return [Kind(v.lower()) for v in values]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _receiver(args) -> ReceiverModel:
    h0 = args.init_hypothesis
    if h0 != RANDOM:
        try:
            h0 = int(h0)
        except ValueError:
            raise ConfigError(f"--init-hypothesis must be an index or 'random', got {h0!r}") from None
    return ReceiverModel(args.visibility, args.efficiency, args.transmittance, h0, args.max_events)


def _cfsk_point(args, M, n_bar):
    """(dwt, dtheta, optimized?) for a CFSK run: explicit flags or the HB optimum."""
    if args.dwt is not None and args.dtheta is not None:
        return args.dwt, args.dtheta, False
    if args.dwt is not None or args.dtheta is not None:
        raise ConfigError("give both --dwt and --dtheta, or neither to optimize")
    dwt, dth, _ = optimize_cfsk(M, n_bar)
    return dwt, dth, True


def _check_trials(n, flag="--trials"):
    if n is None or n <= 0:
        raise ConfigError(f"{flag} must be positive")


def _db(value, ref):
    if value <= 0 or ref <= 0:
        return None
    return 10.0 * math.log10(value / ref)


def cmd_bounds(args):
    kinds = _kind_list(args.kind)
    _check_trials(args.sql_trials, "--sql-trials")
    rows = []
    for kind in kinds:
        for n_bar in args.nbar:
            if kind is Kind.CFSK:
                dwt, dth, _ = _cfsk_point(args, args.M, n_bar)
                c = Constellation.cfsk(args.M, n_bar, dwt, dth)
            else:
                c = Constellation.build(kind, args.M, n_bar)
            hb = helstrom(c)
            sql = sql_error_mc(c, args.sql_trials, args.seed)
            rows.append(dict(kind=kind.value, M=args.M, nbar=float(n_bar),
                             dwt=c.params.delta_omega_T, dtheta=c.params.delta_theta,
                             hb=hb.p_error, hb_method=hb.method.value,
                             sql=sql.p_error, sql_ci=sql.ci95_halfwidth))
    return {"table": rows}, CSV_COLUMNS["bounds"]


def cmd_ser(args):
    _check_trials(args.trials)
    kind = _kind_list([args.kind])[0]
    if kind not in (Kind.CFSK, Kind.PSK):
        raise ConfigError("the displacement receiver simulates cfsk or psk alphabets")
    r = _receiver(args)
    rows = []
    for n_bar in args.nbar:
        if kind is Kind.CFSK:
            dwt, dth, _ = _cfsk_point(args, args.M, n_bar)
            c = Constellation.cfsk(args.M, n_bar, dwt, dth)
        else:
            c = Constellation.psk(args.M, n_bar)
        est = estimate_ser(c.params, r, args.trials, args.seed, args.threads)
        row = dict(kind=kind.value, M=args.M, nbar=float(n_bar),
                   dwt=c.params.delta_omega_T, dtheta=c.params.delta_theta,
                   visibility=r.visibility, efficiency=r.efficiency, transmittance=r.transmittance,
                   errors=est.errors, trials=est.trials, ser=est.p_hat,
                   ser_lo=est.ci95[0], ser_hi=est.ci95[1], hb=helstrom(c).p_error)
        if args.ref:
            row.update(_ref_columns(args.ref, row, args.M, n_bar))
        rows.append(row)
    columns = list(CSV_COLUMNS["ser"]) + [k for k in rows[0] if k not in CSV_COLUMNS["ser"]]
    return {"table": rows}, columns


def _ref_columns(ref, row, M, n_bar):
    if ref == "psk_hb":
        value = psk_helstrom_circulant(M, n_bar).p_error
    elif ref in row:
        value = row[ref]
    else:
        raise ConfigError(f"unknown --ref column {ref!r}")
    return {ref if ref not in row else f"ref_{ref}": value, f"ser_db_vs_{ref}": _db(row["ser"], value)}


def _grid(args) -> GridSpec:
    w0, w1, wn = args.dwt_range
    t0, t1, tn = args.dtheta_range
    try:
        grid = GridSpec.params(w0, w1, int(wn), t0, t1, int(tn))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cells = int(wn) * int(tn)
    if cells > args.max_cells:
        raise ConfigError(f"grid has {cells} cells > --max-cells {args.max_cells}; "
                          "coarsen the grid or raise --max-cells")
    return grid


def _minima_payload(rep):
    def one(m):
        return None if m is None else {**m.coords, "value": m.value}
    return {"global": one(rep.global_min), "secondary": one(rep.secondary_min),
            "local": [one(m) for m in rep.local_minima]}


def cmd_sweep(args):
    grid = _grid(args)
    n_bar = args.nbar[0]
    if args.map == "hb":
        smap = sweep_hb_map(args.M, n_bar, grid)
    else:
        _check_trials(args.trials)
        smap = sweep_ser_map(args.M, n_bar, grid, _receiver(args), args.trials, args.seed, args.threads)
    rep = find_minima(smap, smooth=args.smooth)
    payload = {"map": map_payload(smap), "minima": _minima_payload(rep), "table": map_rows(smap)}
    return payload, None


def _table_payload(table):
    return {"table": table.rows(), "metadata": table.metadata}, table.columns


def cmd_scan_energy(args):
    _check_trials(args.trials)
    kinds = [k.value for k in _kind_list(args.kinds)]
    table = scan_energy(args.M, kinds, args.nbar, _receiver(args), args.trials, args.seed,
                        args.sql_trials, threads=args.threads)
    return _table_payload(table)


def cmd_scan_alphabet(args):
    _check_trials(args.trials)
    try:
        table = scan_alphabet(args.photons_per_bit, args.Ms, _receiver(args), args.trials, args.seed,
                              args.sql_trials, threads=args.threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return _table_payload(table)


def cmd_ratio_map(args):
    smap = hb_ratio_map(args.nbar, args.Ms, per_bit=args.per_bit)
    return {"map": map_payload(smap), "table": map_rows(smap)}, None


COMMANDS = {
    "bounds": cmd_bounds,
    "ser": cmd_ser,
    "sweep": cmd_sweep,
    "scan-energy": cmd_scan_energy,
    "scan-alphabet": cmd_scan_alphabet,
    "ratio-map": cmd_ratio_map,
}


def _common(p: argparse.ArgumentParser, *, receiver=True, protocol=True):
    p.add_argument("--config", type=Path, help="JSON file with option values (flags win)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $CFSK_THREADS or CPU count)")
    p.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")
    p.add_argument("--format", choices=["csv", "doc"], default="csv")
    if protocol:
        p.add_argument("--M", type=int, default=16)
        p.add_argument("--nbar", type=float, nargs="+", default=[12.0])
        p.add_argument("--dwt", type=float, default=None, help="frequency step x pulse length (rad)")
        p.add_argument("--dtheta", type=float, default=None, help="phase step (rad)")
    if receiver:
        p.add_argument("--trials", type=int, default=100_000)
        p.add_argument("--visibility", type=float, default=1.0)
        p.add_argument("--efficiency", type=float, default=1.0)
        p.add_argument("--transmittance", type=float, default=0.99)
        p.add_argument("--init-hypothesis", default="0", help="symbol index or 'random'")
        p.add_argument("--max-events", type=int, default=10_000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfsk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="Helstrom bound and SQL per alphabet kind and energy")
    _common(p, receiver=False)
    p.add_argument("--kind", nargs="+", default=["cfsk"], help="cfsk psk qam16 ppm")
    p.add_argument("--sql-trials", type=int, default=100_000)

    p = sub.add_parser("ser", help="Monte-Carlo SER of the adaptive receiver")
    _common(p)
    p.add_argument("--kind", default="cfsk")
    p.add_argument("--ref", default=None, help="reference column for dB output, e.g. psk_hb or hb")

    p = sub.add_parser("sweep", help="SER or HB map over (dwt, dtheta)")
    _common(p)
    p.add_argument("--map", choices=["ser", "hb"], default="hb")
    p.add_argument("--dwt-range", type=float, nargs=3, default=[0.0, 2 * TWO_PI, 81],
                   metavar=("START", "STOP", "POINTS"))
    p.add_argument("--dtheta-range", type=float, nargs=3, default=[0.0, TWO_PI * 63 / 64, 64],
                   metavar=("START", "STOP", "POINTS"))
    p.add_argument("--max-cells", type=int, default=10_000)
    p.add_argument("--smooth", action="store_true", help="3x3 median filter before minima search")

    p = sub.add_parser("scan-energy", help="SER and bounds versus mean photon number")
    _common(p)
    p.add_argument("--kinds", nargs="+", default=["cfsk", "psk", "qam16", "ppm"])
    p.add_argument("--sql-trials", type=int, default=None)

    p = sub.add_parser("scan-alphabet", help="CFSK vs PSK versus alphabet size at fixed photons per bit")
    _common(p, protocol=False)
    p.add_argument("--photons-per-bit", type=float, default=2.0)
    p.add_argument("--M", dest="Ms", type=int, nargs="+", default=[4, 8, 16, 32, 64])
    p.add_argument("--sql-trials", type=int, default=None)

    p = sub.add_parser("ratio-map", help="optimized CFSK HB / PSK HB over energy and alphabet size")
    _common(p, receiver=False, protocol=False)
    p.add_argument("--nbar", type=float, nargs="+", default=[1.0, 2.0, 4.0, 8.0, 12.0])
    p.add_argument("--M", dest="Ms", type=int, nargs="+", default=[2, 4, 8, 16, 32, 64])
    p.add_argument("--per-bit", action="store_true", help="energy axis is photons per bit")
    return parser


def _apply_config(parser, argv):
    """Re-parse with values from --config installed as subcommand defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in subparser._actions}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    # the config block of a result document names its command
    if cfg.pop("command", args.command) != args.command:
        raise ConfigError(f"config file is for a different command than {args.command!r}")
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


def _resolved_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("out", "config")}
    cfg["threads"] = args.threads
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        args.threads = args.threads or default_threads()
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        start = time.perf_counter()
        payload, columns = COMMANDS[args.command](args)
        doc = ResultDocument(args.command, _resolved_config(args), payload, time.perf_counter() - start)
    except InvalidGramError as exc:
        print(f"cfsk: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"cfsk: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, NotImplementedError) as exc:
        print(f"cfsk: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    text = doc.to_json() + "\n" if args.format == "doc" else write_csv(payload["table"], columns)
    if args.out:
        try:
            args.out.write_text(text)
        except OSError as exc:
            print(f"cfsk: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
