"""Command line: data synthesis, training, drift checks, power grids.

Every data-touching command is a thin client over the HTTP service.
Without --url the service runs in-process so single-machine use needs
no daemon; with --url the same commands drive a remote instance.

Exit codes: 0 success (detect: no shift), 2 shift detected, 1 error.
"""

from __future__ import annotations

import argparse
import sys
import warnings

from .actgraph import NORM_KINDS
from .client import ServiceClient
from .errors import MagdiffError
from .experiments import expand_grid, write_grid_outputs
from .io import read_experiment_config
from .schemas import (
    DetectRequest,
    FeatureSpec,
    PowerCellRequest,
    SummariesRequest,
    TrainRequest,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SHIFT = 2

FEATURE_CHOICES = ("magdiff", "confidence_vector", "cv")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for "shift
    # detected" here, so route usage problems to the error code instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _make_client(url: str | None) -> ServiceClient:
    if url:
        return ServiceClient(base_url=url)
    with warnings.catch_warnings():
        # the in-process transport lives in a module with a noisy shim warning
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

        from .service import app

        http = TestClient(app, raise_server_exceptions=False)
    return ServiceClient(http=http)


def _feature_spec(args) -> FeatureSpec:
    return FeatureSpec(kind=args.feature, layer=args.layer, norm=args.norm)


def cmd_synth_data(args) -> int:
    from . import datagen

    datagen.make_corpus(
        args.out, train_count=args.train_count, test_count=args.test_count, seed=args.seed
    )
    print(
        f"wrote {args.train_count} train and {args.test_count} test digits to {args.out}"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    client = _make_client(args.url)
    try:
        response = client.train(
            TrainRequest(
                data_dir=args.data,
                out_dir=args.out,
                arch=args.arch,
                epochs=args.epochs,
                learning_rate=args.lr,
                batch_size=args.batch_size,
                seed=args.seed,
                train_limit=args.train_limit,
            )
        )
    finally:
        client.close()
    print(f"saved model manifest to {response.manifest_path}")
    print(f"final test accuracy {response.test_accuracy:.4f}")
    return EXIT_OK


def cmd_summaries(args) -> int:
    client = _make_client(args.url)
    try:
        response = client.summaries(
            SummariesRequest(
                manifest_path=args.model,
                data_dir=args.data,
                out_path=args.out,
                layer=args.layer,
                subset_size=args.subset_size,
                seed=args.seed,
                train_limit=args.train_limit,
            )
        )
    finally:
        client.close()
    print(
        f"wrote {response.class_count} class summaries for layer "
        f"{response.layer_index} to {response.out_path}"
    )
    return EXIT_OK


def cmd_detect(args) -> int:
    client = _make_client(args.url)
    try:
        response = client.detect(
            DetectRequest(
                manifest_path=args.model,
                summaries_path=args.summaries,
                clean_path=args.clean,
                candidate_path=args.candidate,
                feature=_feature_spec(args),
                alpha=args.alpha,
            )
        )
    finally:
        client.close()
    for i, (stat, p) in enumerate(zip(response.statistics, response.p_values)):
        print(f"coordinate {i}: T={stat:.6f} p={p:.6g}")
    threshold = response.alpha / len(response.p_values)
    print(f"min p-value {response.min_p_value:.6g}, threshold {threshold:.6g}")
    if response.reject:
        print("verdict: shift detected")
        return EXIT_SHIFT
    print("verdict: no shift detected")
    return EXIT_OK


def cmd_power_grid(args) -> int:
    config = read_experiment_config(args.config)
    cells = expand_grid(config)
    ladders = {
        kind: {param: list(values) for param, values in params.items()}
        for kind, params in config.ladders.items()
    }
    rows = []
    client = _make_client(args.url)
    try:
        for i, cell in enumerate(cells):
            response = client.power_cell(
                PowerCellRequest(
                    manifest_path=config.model_manifest,
                    summaries_path=config.summaries_path,
                    data_dir=config.data_dir,
                    feature=FeatureSpec(
                        kind=cell.feature.kind,
                        layer=cell.feature.layer if cell.feature.layer is not None else -1,
                        norm=cell.feature.norm or "frobenius",
                    ),
                    shift=cell.shift_kind,
                    level=cell.level,
                    delta=cell.delta,
                    sample_size=cell.sample_size,
                    mode=cell.mode,
                    alpha=config.alpha,
                    repetitions=config.repetitions,
                    seed=config.seed,
                    ladders=ladders,
                )
            )
            rows.append(response.to_row())
            print(
                f"cell {i + 1}/{len(cells)}: {cell.feature.label()} "
                f"{cell.shift_kind} {cell.level} delta={cell.delta} "
                f"m={cell.sample_size} {cell.mode} -> {response.estimate:.3f}"
                f" (+/- {response.ci_half_width:.3f})"
            )
    finally:
        client.close()
    csv_path, plot_paths = write_grid_outputs(config, rows)
    print(f"wrote {csv_path} and {len(plot_paths)} plot(s) to {config.plots_dir}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("magdiff.service:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="magdiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    synth = sub.add_parser("synth-data", help="generate a digit corpus")
    synth.add_argument("--out", required=True, help="output dataset directory")
    synth.add_argument("--train-count", type=int, default=60_000)
    synth.add_argument("--test-count", type=int, default=10_000)
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=cmd_synth_data)

    train = sub.add_parser("train", help="train an MLP on a dataset directory")
    train.add_argument("--data", required=True, help="dataset directory")
    train.add_argument("--out", required=True, help="model output directory")
    train.add_argument("--arch", default="784-128-64-32-10")
    train.add_argument("--epochs", type=int, default=10)
    train.add_argument("--lr", type=float, default=0.1)
    train.add_argument("--batch-size", type=int, default=64)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--train-limit", type=int, default=0)
    train.add_argument("--url", default=None, help="remote service URL")
    train.set_defaults(func=cmd_train)

    summaries = sub.add_parser("summaries", help="build per-class mean summaries")
    summaries.add_argument("--model", required=True, help="model manifest path")
    summaries.add_argument("--data", required=True, help="dataset directory")
    summaries.add_argument("--out", required=True, help="summary file to write")
    summaries.add_argument("--layer", type=int, default=-1)
    summaries.add_argument("--subset-size", type=int, default=1000)
    summaries.add_argument("--seed", type=int, default=0)
    summaries.add_argument("--train-limit", type=int, default=0)
    summaries.add_argument("--url", default=None, help="remote service URL")
    summaries.set_defaults(func=cmd_summaries)

    detect = sub.add_parser("detect", help="compare two image pools for drift")
    detect.add_argument("--model", required=True)
    detect.add_argument("--summaries", required=True)
    detect.add_argument("--clean", required=True, help="IDX file of reference images")
    detect.add_argument("--candidate", required=True, help="IDX file to check")
    detect.add_argument("--feature", default="magdiff", choices=FEATURE_CHOICES)
    detect.add_argument("--layer", type=int, default=-1)
    detect.add_argument("--norm", default="frobenius", choices=NORM_KINDS)
    detect.add_argument("--alpha", type=float, default=0.05)
    detect.add_argument("--url", default=None, help="remote service URL")
    detect.set_defaults(func=cmd_detect)

    grid = sub.add_parser("power-grid", help="run a power/type-I grid from a config")
    grid.add_argument("--config", required=True, help="INI experiment config")
    grid.add_argument("--url", default=None, help="remote service URL")
    grid.set_defaults(func=cmd_power_grid)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except MagdiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
