"""HTTP facade over the training, summary, detection and power engines.

Handlers are thin: they map wire schemas onto the experiment runners
and let domain errors surface as 400s with the original message.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .errors import MagdiffError
from .experiments import detect_shift, run_grid, run_summaries, run_training
from .io import ExperimentConfig, load_network, load_summaries, read_idx
from .schemas import (
    DetectRequest,
    DetectResponse,
    HealthResponse,
    PowerCellRequest,
    PowerCellResponse,
    SummariesRequest,
    SummariesResponse,
    TrainRequest,
    TrainResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="magdiff", version=__version__)

    @app.exception_handler(MagdiffError)
    async def _domain_error(request: Request, exc: MagdiffError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(OSError)
    async def _file_error(request: Request, exc: OSError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/v1/train", response_model=TrainResponse)
    def train(req: TrainRequest) -> TrainResponse:
        result = run_training(
            req.data_dir,
            req.out_dir,
            arch=req.arch,
            epochs=req.epochs,
            learning_rate=req.learning_rate,
            batch_size=req.batch_size,
            seed=req.seed,
            train_limit=req.train_limit,
            hidden_activation=req.hidden_activation,
        )
        return TrainResponse(
            manifest_path=str(result.manifest_path),
            test_accuracy=result.test_accuracy,
        )

    @app.post("/v1/summaries", response_model=SummariesResponse)
    def summaries(req: SummariesRequest) -> SummariesResponse:
        written = run_summaries(
            req.manifest_path,
            req.data_dir,
            req.out_path,
            layer=req.layer,
            subset_size=req.subset_size,
            seed=req.seed,
            train_limit=req.train_limit,
        )
        return SummariesResponse(
            out_path=req.out_path,
            layer_index=written[0].layer_index,
            class_count=len(written),
            sample_counts=[s.sample_count for s in written],
        )

    @app.post("/v1/detect", response_model=DetectResponse)
    def detect(req: DetectRequest) -> DetectResponse:
        net, _ = load_network(req.manifest_path)
        summaries, _ = load_summaries(req.summaries_path)
        clean = read_idx(req.clean_path)
        candidate = read_idx(req.candidate_path)
        outcome = detect_shift(
            net, summaries, clean, candidate, req.feature.to_kind(), req.alpha
        )
        return DetectResponse(
            reject=outcome.reject,
            alpha=outcome.alpha,
            statistics=[r.statistic for r in outcome.results],
            p_values=[r.p_value for r in outcome.results],
            min_p_value=outcome.min_p_value(),
        )

    @app.post("/v1/power-cell", response_model=PowerCellResponse)
    def power_cell(req: PowerCellRequest) -> PowerCellResponse:
        config = ExperimentConfig(
            data_dir=req.data_dir,
            model_manifest=req.manifest_path,
            summaries_path=req.summaries_path,
            features=[req.feature.to_kind()],
            shift_kinds=[req.shift],
            levels=[req.level],
            deltas=[req.delta],
            sample_sizes=[req.sample_size],
            modes=[req.mode],
            alpha=req.alpha,
            repetitions=req.repetitions,
            seed=req.seed,
            ladders={
                kind: {param: tuple(vals) for param, vals in params.items()}
                for kind, params in req.ladders.items()
            },
        )
        rows = run_grid(config)
        return PowerCellResponse.from_row(rows[0])

    return app


app = create_app()
