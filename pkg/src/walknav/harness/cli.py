"""Command-line entry point: ``walknav train|eval|robustness|plot-data|export``.

Exit codes: 0 success, 2 training divergence, 3 invalid input.
"""

import argparse
import csv
import json
import logging
import sys

from walknav.envs.biped import ModelError
from walknav.envs.layout import LayoutError
from walknav.harness.checkpoint import CheckpointError, export_text, read_records
from walknav.harness.config import ConfigError, load_config
from walknav.harness.evaluate import evaluate, parse_grid, robustness_sweep, write_sweep
from walknav.harness.plots import plot_data
from walknav.harness.train import EXIT_INVALID, EXIT_OK, train

# bad numbers deep inside the libraries surface as plain ValueError
INPUT_ERRORS = (ConfigError, LayoutError, CheckpointError, ModelError, OSError, ValueError)


def _cmd_train(args):
    config = load_config(args.config, **({"output_dir": args.out} if args.out else {}))
    result = train(config, resume=args.resume)
    print(json.dumps({"metrics": result.metrics_path, "checkpoint": result.checkpoint_path,
                      "updates": result.state.update_index, "env_steps": result.state.env_steps}))
    return result.exit_code


def _cmd_eval(args):
    writer, fh = None, None
    on_step = None
    if args.trajectory:
        fh = open(args.trajectory, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        header_done = []

        def on_step(ep, t, env, res):
            if not header_done:
                writer.writerow(("episode", *env.trajectory_columns))
                header_done.append(True)
            writer.writerow([ep, *(repr(v) if isinstance(v, float) else v for v in env.trajectory_row(res))])
    try:
        report = evaluate(args.checkpoint, args.layout, args.episodes,
                          deterministic=not args.stochastic, seed=args.seed, on_step=on_step)
    finally:
        if fh is not None:
            fh.close()
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK


def _cmd_robustness(args):
    with open(args.grid) as fh:
        grid = parse_grid(fh.read())
    rows = robustness_sweep(args.checkpoint, args.layout, grid, args.out)
    if args.out is None:
        write_sweep(rows, sys.stdout)
    return EXIT_OK


def _cmd_plot_data(args):
    paths = plot_data(args.metrics, args.out, args.factor)
    print(json.dumps(paths))
    return EXIT_OK


def _cmd_export(args):
    sys.stdout.write(export_text(read_records(args.checkpoint)))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="walknav", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log every update")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--out", help="override the config's output_dir")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--layout", help="layout file or shipped name (default: training layout)")
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--stochastic", action="store_true", help="sample actions instead of the mean")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--trajectory", help="write a per-step trajectory CSV here")
    e.set_defaults(func=_cmd_eval)

    r = sub.add_parser("robustness", help="obstacle/destination displacement sweep")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--layout", help="base layout (default: training layout)")
    r.add_argument("--grid", required=True, help="key=value grid file")
    r.add_argument("--out", help="CSV path (default: stdout)")
    r.set_defaults(func=_cmd_robustness)

    d = sub.add_parser("plot-data", help="downsampled return/length series from a metrics CSV")
    d.add_argument("--metrics", required=True)
    d.add_argument("--out", help="output directory (default: next to the metrics)")
    d.add_argument("--factor", type=int, default=10, help="points averaged per output point")
    d.set_defaults(func=_cmd_plot_data)

    x = sub.add_parser("export", help="text dump of a checkpoint, for diffing")
    x.add_argument("--checkpoint", required=True)
    x.set_defaults(func=_cmd_export)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage, which would read as divergence
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
