"""Thin HTTP client for the service; the command line sits on top of it.

Pass any httpx-compatible client via http to route calls in-process
(starlette's TestClient works); otherwise a real connection is opened
to base_url.
"""

from __future__ import annotations

import httpx

from .errors import MagdiffError
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

# Training a desk-scale model inside one request takes minutes.
DEFAULT_TIMEOUT = 3600.0


class ServiceClient:
    def __init__(
        self,
        base_url: str = "http://127.0.0.1:8765",
        http: httpx.Client | None = None,
    ):
        self._http = http or httpx.Client(base_url=base_url, timeout=DEFAULT_TIMEOUT)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    @staticmethod
    def _detail(response: httpx.Response) -> str:
        try:
            detail = response.json().get("detail")
        except ValueError:
            detail = None
        if detail is None:
            detail = response.text or "no detail"
        return f"service returned {response.status_code}: {detail}"

    def _post(self, path: str, payload, response_model):
        response = self._http.post(path, json=payload.model_dump())
        if response.status_code != 200:
            raise MagdiffError(self._detail(response))
        return response_model.model_validate(response.json())

    def health(self) -> HealthResponse:
        response = self._http.get("/health")
        if response.status_code != 200:
            raise MagdiffError(self._detail(response))
        return HealthResponse.model_validate(response.json())

    def train(self, request: TrainRequest) -> TrainResponse:
        return self._post("/v1/train", request, TrainResponse)

    def summaries(self, request: SummariesRequest) -> SummariesResponse:
        return self._post("/v1/summaries", request, SummariesResponse)

    def detect(self, request: DetectRequest) -> DetectResponse:
        return self._post("/v1/detect", request, DetectResponse)

    def power_cell(self, request: PowerCellRequest) -> PowerCellResponse:
        return self._post("/v1/power-cell", request, PowerCellResponse)
