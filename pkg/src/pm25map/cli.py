"""Command-line entry point.

Verbs: prepare, train, evaluate, predict-map, annual-map, synth.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from pm25map import pipeline
from pm25map.data import DataError, Dataset
from pm25map.kriging import KrigingError
from pm25map.metrics import EvalError
from pm25map.pipeline import ConfigError, PipelineConfig
from pm25map.preprocess import PreprocessError
from pm25map.raster import RasterError, RasterGrid
from pm25map.trees import ModelError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def build_parser():
    p = _Parser(prog="pm25map")
    sub = p.add_subparsers(dest="verb", required=True)

    def add(name, **kw):
        sp = sub.add_parser(name, **kw)
        return sp

    sp = add("prepare", help="run the preprocessing chain")
    sp.add_argument("--config", required=True)

    sp = add("train", help="grid search, fit, and serialize a model")
    sp.add_argument("--config", required=True)
    sp.add_argument("--dataset", help="dataset CSV (default: prepare output)")
    sp.add_argument("--seed", type=int, required=True)

    sp = add("evaluate", help="metrics for a model on a dataset")
    sp.add_argument("--model", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--output", default=".")

    sp = add("predict-map", help="predict a daily PM2.5 raster")
    sp.add_argument("--config", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--date", required=True)

    sp = add("annual-map", help="average daily rasters into an annual map")
    sp.add_argument("--output", required=True)
    sp.add_argument("rasters", nargs="+")

    sp = add("synth", help="generate the synthetic station/raster world")
    sp.add_argument("--output", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--days", type=int, default=8)
    sp.add_argument("--stations", type=int, default=8)
    sp.add_argument("--size", type=int, default=24)
    return p


def run(args):
    if args.verb == "prepare":
        cfg = PipelineConfig.load(args.config)
        ds = pipeline.prepare(cfg)
        print(f"prepared {len(ds)} rows -> "
              f"{os.path.join(cfg.output_dir, 'dataset.csv')}")
        return EXIT_OK

    if args.verb == "train":
        cfg = PipelineConfig.load(args.config, overrides={"seed": args.seed})
        ds_path = args.dataset or os.path.join(cfg.output_dir, "dataset.csv")
        ds = Dataset.from_csv(ds_path).require_finite()
        model_path, best, _ = pipeline.train(cfg, ds)
        print(f"best config: {best}")
        print(f"model -> {model_path}")
        return EXIT_OK

    if args.verb == "evaluate":
        ds = Dataset.from_csv(args.dataset).require_finite()
        rep = pipeline.evaluate(args.model, ds, args.output)
        print(rep)
        return EXIT_OK

    if args.verb == "predict-map":
        cfg = PipelineConfig.load(args.config)
        grid = pipeline.predict_map(args.model, cfg, args.date)
        print(f"map -> {os.path.join(cfg.output_dir, f'PM25_{args.date}.asc')}"
              f" ({np.sum(~grid.mask)} cells)")
        return EXIT_OK

    if args.verb == "annual-map":
        grids = [RasterGrid.read_ascii(p) for p in args.rasters]
        annual = pipeline.annual_map(grids)
        annual.write_ascii(args.output)
        pipeline.render_aqi_image(annual,
                                  os.path.splitext(args.output)[0] + ".ppm")
        print(f"annual map -> {args.output}")
        return EXIT_OK

    if args.verb == "synth":
        info = pipeline.synth(args.output, seed=args.seed,
                              n_days=args.days, n_stations=args.stations,
                              n_rows=args.size, n_cols=args.size)
        print(f"synthetic world -> {args.output} "
              f"({len(info['dates'])} days)")
        return EXIT_OK

    return EXIT_USAGE


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PreprocessError, RasterError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ModelError, KrigingError, EvalError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
