"""``polybeam`` command-line interface.

Subcommands: ``gen-steering``, ``design``, ``eval``, ``process``.
Exit codes: 0 success, 2 configuration error, 3 infeasible or failed
design, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from . import config as cfgmod
from .core import DesignGrid, Direction, DomainError
from .design import DesignError, desired_response, design_rlsfi, design_rlsfip
from .engine import EngineState, SampleRateError, check_sample_rate, read_schedule, read_wav, write_wav
from .evaluation import evaluate, fir_weights, to_db
from .firsynth import config_hash, load_bank, save_bank, synthesize
from .solver import InfeasibleError, NonConvergenceError
from .steer import (SteeringLoadError, SteeringSet, build_steering_set, read_steering_file,
                    steering_set_to_measured, write_steering_file)

log = logging.getLogger("polybeam")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4


def _overrides(pairs) -> dict:
    """``section.key=value`` pairs (value parsed as JSON when possible) as a nested dict."""
    out: dict = {}
    for item in pairs or []:
        if "=" not in item:
            raise cfgmod.ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return out


def _load(args) -> dict:
    return cfgmod.load_config(args.config, _overrides(args.set))


def _steering_from_config(cfg) -> SteeringSet:
    return build_steering_set(cfgmod.steering_model(cfg), cfgmod.build_geometry(cfg),
                              cfgmod.build_grid(cfg), float(cfg["speed_of_sound"]))


def _steering_from_file(path) -> SteeringSet:
    data = read_steering_file(path)
    grid = DesignGrid(data.freqs_hz, data.sample_rate_hz, tuple(data.directions))
    return build_steering_set(data, None, grid)


def cmd_gen_steering(args) -> int:
    cfg = _load(args)
    sset = _steering_from_config(cfg)
    write_steering_file(args.out, steering_set_to_measured(sset))
    log.info("wrote %s (%d freqs x %d directions x %d mics)", args.out, sset.grid.Q, sset.grid.M, sset.num_mics)
    return EXIT_OK


def _write_design_report(path, designs) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["f_hz", "pld_phi_deg", "wng_db", "distortionless_err", "kkt_residual"])
        for fd in designs:
            for d, g, r in zip(fd.plds, fd.wng, fd.response):
                wr.writerow([repr(float(fd.freq_hz)), repr(float(d.phi)), repr(float(to_db(g, power=True))),
                             repr(float(abs(r - 1.0))), repr(float(fd.kkt_residual))])


def cmd_design(args) -> int:
    cfg = _load(args)
    if args.workers is not None:
        cfg["design"]["workers"] = args.workers
    sset = _steering_from_config(cfg)
    grid, d = sset.grid, cfg["design"]
    opts = cfgmod.solver_options(cfg)
    width = float(d["mainlobe_width_deg"])
    if d["method"] == "rlsfip":
        spec = cfgmod.build_order_spec(cfg)
        bhats = [desired_response(grid, p, width) for p in spec.plds]
        designs = design_rlsfip(sset, spec, bhats, float(d["gamma_db"]), opts, int(d["workers"]))
    else:
        look = Direction(float(d["look_deg"]), float(cfg["grid"]["theta_deg"]))
        designs = design_rlsfi(sset, look, desired_response(grid, look, width), float(d["gamma_db"]),
                               opts, int(d["workers"]))
    # worker count does not change the result, so it stays out of the hash
    hashed = {**cfg, "design": {k: v for k, v in d.items() if k != "workers"}}
    meta = {"config_hash": config_hash(hashed), "method": d["method"], "mainlobe_width_deg": width,
            "theta_deg": float(cfg["grid"]["theta_deg"]), "source_kind": sset.source_kind}
    bank = synthesize(designs, int(cfg["fir"]["length"]), grid.sample_rate_hz,
                      float(cfg["fir"]["transition_hz"]), meta)
    save_bank(args.out, bank)
    report = args.report or (str(args.out).rsplit(".", 1)[0] + "_design.csv")
    _write_design_report(report, designs)
    log.info("wrote %s and %s", args.out, report)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load(args)
    bank = load_bank(args.bank)
    sset = _steering_from_file(args.steering) if args.steering else _steering_from_config(cfg)
    if abs(sset.grid.sample_rate_hz - bank.sample_rate_hz) > 1e-9:
        raise SampleRateError("steering set and filter bank sample rates differ")
    width = float(bank.metadata.get("mainlobe_width_deg", cfg["design"]["mainlobe_width_deg"]))
    look = float(args.look if args.look is not None else cfg["eval"]["look_deg"])
    weights = fir_weights(bank, sset.grid.freqs_hz)
    grid = sset.grid

    def bhat(direction):
        return desired_response(grid, direction, width).values

    step = float(cfg["eval"]["phi_step_deg"])
    report = evaluate(weights, sset, look, bhat if not args.no_mse else None, step, stage="post-fir")
    paths = report.write_csvs(args.out_prefix)
    log.info("wrote %s", ", ".join(paths.values()))
    return EXIT_OK


def cmd_process(args) -> int:
    bank = load_bank(args.bank)
    fs, x = read_wav(args.input)
    check_sample_rate(bank, fs)
    if x.shape[0] != bank.N:
        raise ValueError(f"input has {x.shape[0]} channels, filter bank expects {bank.N}")
    if args.schedule:
        schedule = read_schedule(args.schedule)
    else:
        schedule = [(0.0, float(args.phi))]
    eng = EngineState(bank, block_size=args.block_size)
    y = eng.process(x, schedule)
    write_wav(args.output, fs, y, args.format)
    log.info("wrote %s (%d samples)", args.output, y.size)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polybeam", description="Polynomial beamformer design toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="JSON configuration file (defaults are used when omitted)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. design.gamma_db=-10")
        return p

    p = with_config(sub.add_parser("gen-steering", help="write a steering file from a model"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_steering)

    p = with_config(sub.add_parser("design", help="design weights and synthesize the filter bank"))
    p.add_argument("--out", required=True, help="filter bank file")
    p.add_argument("--report", help="per-frequency design CSV (default: <out>_design.csv)")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_design)

    p = with_config(sub.add_parser("eval", help="beampattern, WNG and MSE CSVs of a filter bank"))
    p.add_argument("--bank", required=True)
    p.add_argument("--steering", help="steering file (default: model from the config)")
    p.add_argument("--look", type=float, help="look azimuth in degrees")
    p.add_argument("--out-prefix", default="", help="prefix for the CSV file names")
    p.add_argument("--no-mse", action="store_true", help="skip the MSE-vs-steering table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("process", help="beamform a multichannel WAV file")
    p.add_argument("--bank", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--phi", type=float, help="constant look azimuth in degrees")
    g.add_argument("--schedule", help="file of 'time_sec phi_deg' lines")
    p.add_argument("--block-size", type=int, default=1024)
    p.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    p.set_defaults(func=cmd_process)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (cfgmod.ConfigError, DomainError) as exc:
        print(f"polybeam: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DesignError, InfeasibleError, NonConvergenceError) as exc:
        print(f"polybeam: design failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, SteeringLoadError, SampleRateError, ValueError) as exc:
        print(f"polybeam: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
