"""Command line front end.

Subcommands: sweep (run the SNR sweep and write CSVs), report (rate and
compute reports as JSON), plot (render sweep CSVs to SVG), gen-data (write a
synthetic PPM/PGM dataset). The SPLITSEG_OUT_DIR environment variable
overrides --out for sweep and gen-data.

Exit codes: 0 ok, 1 runtime failure, 2 usage error, 3 missing file,
4 invalid config.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import dataio, experiments, metrics, plotting
from .experiments import ConfigError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_CONFIG = 4


def _out_dir(args) -> Path:
    out = os.environ.get("SPLITSEG_OUT_DIR") or args.out
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_spec(args) -> experiments.ExperimentSpec:
    spec = experiments.load_spec(args.config)
    if getattr(args, "seed", None) is not None:
        spec = experiments.ExperimentSpec(
            model=spec.model, modulations=spec.modulations, snr_db=spec.snr_db,
            pipelines=spec.pipelines, num_images=spec.num_images, master_seed=args.seed,
            dataset=spec.dataset, reference_mode=spec.reference_mode,
            quant_bits=spec.quant_bits, frames_per_second=spec.frames_per_second,
        )
    return spec


def _cmd_sweep(args) -> int:
    spec = _load_spec(args)
    out = _out_dir(args)
    results = experiments.sweep(spec, workers=args.workers)
    for result in results:
        csv_path = out / f"sweep_{result.modulation}.csv"
        experiments.write_csv(result, csv_path)
        meta_path = out / f"sweep_{result.modulation}.meta.json"
        meta_path.write_text(json.dumps(result.metadata, indent=2) + "\n")
        print(csv_path)
        print(meta_path)
    return EXIT_OK


def _cmd_report(args) -> int:
    spec = _load_spec(args)
    rate = metrics.rate_report(spec.model, spec.quant_bits, spec.frames_per_second)
    compute = metrics.compute_report(spec.model)
    payload = {"rate": rate.to_dict(), "compute": compute.to_dict()}
    text = json.dumps(payload, indent=2)
    print(text)
    if args.out is not None:
        out = _out_dir(args)
        (out / "rate_report.json").write_text(rate.to_json() + "\n")
        (out / "compute_report.json").write_text(compute.to_json() + "\n")
        plotting.render_bars(
            [(p, rate.bits_per_image[p]) for p in metrics.PIPELINES],
            out / "bits_per_image.svg", ylabel="bits per image",
        )
        plotting.render_bars(
            [(p, compute.tx_macs[p]) for p in metrics.PIPELINES],
            out / "tx_macs.svg", ylabel="transmitter MACs",
        )
    return EXIT_OK


def _cmd_plot(args) -> int:
    results = []
    for csv_path in args.csv:
        result = experiments.read_csv(csv_path)
        result.modulation = Path(csv_path).stem
        results.append(result)
    plotting.render_plot(results, args.output)
    print(args.output)
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    out = _out_dir(args)
    pairs = dataio.generate_synthetic(args.num, args.classes, args.size, args.size, args.seed)
    written = dataio.write_dataset(out, pairs)
    print(f"wrote {len(written)} files to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splitseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run the SNR sweep and write CSV results")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--seed", type=int, default=None, help="override the config master seed")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="emit rate and compute reports as JSON")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", default=None, help="also write report files and bar charts here")
    p.add_argument("--seed", type=int, default=None, help="override the config master seed")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("plot", help="render sweep CSVs to an SVG line chart")
    p.add_argument("csv", nargs="+", help="sweep CSV files")
    p.add_argument("-o", "--output", required=True, help="output SVG path")
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("gen-data", help="write a synthetic PPM/PGM dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--num", type=int, default=50, help="number of images")
    p.add_argument("--classes", type=int, default=8, help="number of classes")
    p.add_argument("--size", type=int, default=256, help="square image size")
    p.add_argument("--seed", type=int, default=20240917, help="generator seed")
    p.set_defaults(func=_cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
