"""Command line front end: ``qekf {simulate,filter,compare,bench,sweep}``.

Exit codes: 0 on success, 2 for configuration errors, 3 when a simulation
or filter diverges (``compare`` and ``sweep`` record divergences instead).
"""

import argparse
import logging
import sys
from pathlib import Path

from . import harness as hn
from . import io as qio
from . import scenarios as sc
from .ekf import FilterDivergence, SingularCovarianceError, run_filter
from .sme import SimConfig, SimulationError, replay, simulate

log = logging.getLogger("qekf")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


def _load(args):
    cfg = hn.RunConfig.load(args.config) if args.config else hn.RunConfig()
    return cfg.with_overrides(master_seed=args.seed, output_dir=args.out, trials=args.trials)


def _outdir(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    cfg = _load(args)
    scen = sc.build(cfg.scenario, cfg.scenario_params())
    sim = SimConfig(cfg.dt, cfg.T, cfg.master_seed, scen.observables)
    out = _outdir(cfg)
    for k in range(cfg.trials):
        rec = simulate(scen.slh, scen.channels, sim, scen.rho0, trial=k)
        path = qio.write_record_csv(out / f"record_{k:04d}.csv", rec)
        log.info("wrote %s", path)
    hn.write_manifest(cfg, out)
    return EXIT_OK


def cmd_filter(args):
    cfg = _load(args)
    scen = sc.build(cfg.scenario, cfg.scenario_params())
    out = _outdir(cfg)
    if args.record:
        record = qio.read_record_csv(args.record, scen.channels)
    else:
        sim = SimConfig(cfg.dt, cfg.T, cfg.master_seed, scen.observables)
        record = simulate(scen.slh, scen.channels, sim, scen.rho0)
        qio.write_record_csv(out / "record.csv", record)
    for spec in cfg.filters:
        path = out / f"{hn._safe(spec.name)}.csv"
        if spec.kind == "sme":
            s = scen.rebuild(spec.basis)
            qio.write_record_csv(path, replay(s.slh, record, s.rho0, s.observables))
        else:
            traj = run_filter(
                scen.filter_model(spec.kind), record.increments(), record.dt,
                scen.initial_estimate(spec.zeta), scen.initial_filter_covariance(spec.p0),
                robust=spec.robust,
            )
            qio.write_filter_csv(path, traj)
        log.info("wrote %s", path)
    return EXIT_OK


def _print_metrics(report, stream):
    print(f"{'filter':<20} {'mise':>12} {'divergences':>12} {'trials':>7}", file=stream)
    for n in report.filter_names:
        print(f"{n:<20} {report.mise(n):>12.6g} {report.divergences(n):>12d} "
              f"{len(report.trials):>7d}", file=stream)


def cmd_compare(args):
    cfg = _load(args)
    report = hn.run_compare(cfg)
    hn.emit_outputs(report, cfg.output_dir)
    _print_metrics(report, sys.stdout)
    return EXIT_OK


def cmd_bench(args):
    cfg = _load(args)
    table = hn.bench_from_config(cfg)
    out = _outdir(cfg)
    hn.write_timing(table, out / "timing.csv")
    print(f"{'N_s':>5} {'modes':>5} {'t_sme [s]':>12} {'t_qekf [s]':>12} {'ratio':>9}")
    for r in table.rows:
        print(f"{r.basis:>5} {r.modes:>5} {r.t_sme:>12.4g} {r.t_qekf:>12.4g} {r.ratio:>9.3g}")
    single = [r for r in table.rows if r.modes == 1]
    if len(single) >= 2:
        print(f"single-mode log-log slope: {table.slope(1):.3f}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load(args)
    out = _outdir(cfg)
    rows = []
    for value, report in hn.run_sweep(cfg):
        sub = out / hn._safe(f"{cfg.sweep['param']}={value}")
        hn.emit_outputs(report, sub)
        for n in report.filter_names:
            rows.append((cfg.sweep["param"], str(value), n, report.mise(n),
                         report.divergences(n), len(report.trials)))
    qio.write_table(out / "sweep.csv",
                    ["param", "value", "filter_name", "mise", "divergences", "trials"], rows)
    hn.write_manifest(cfg, out)
    for r in rows:
        print(",".join(str(v) for v in r))
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "simulate SME trajectories and write record CSVs"),
    "filter": (cmd_filter, "run the configured filters on one record"),
    "compare": (cmd_compare, "Monte Carlo comparison against the reference SME"),
    "bench": (cmd_bench, "one-step cost benchmark of the SME and the qEKF"),
    "sweep": (cmd_sweep, "repeat compare over a list of parameter values"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="qekf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON run configuration (or a manifest.json)")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--trials", type=int, help="override the number of trials")
        if name == "filter":
            p.add_argument("--record", help="record CSV to filter (default: simulate one)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except hn.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, FilterDivergence, SingularCovarianceError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
