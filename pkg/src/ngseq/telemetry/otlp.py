"""Training-run spans over OTLP/HTTP using the OpenTelemetry SDK."""

from __future__ import annotations

import logging
from typing import Any

from opentelemetry.exporter.otlp.proto.http.trace_exporter import OTLPSpanExporter
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor

from ngseq.optim.config import UpdateRecord

logger = logging.getLogger(__name__)

SERVICE_NAME = "ngseq"


class RunTracer:
    """One span per optimizer update and per evaluated epoch."""

    def __init__(self, endpoint: str, headers: dict[str, str] | None = None, *, run_name: str = "") -> None:
        resource = Resource.create({"service.name": SERVICE_NAME})
        exporter = OTLPSpanExporter(endpoint=endpoint, headers=headers or {})
        provider = TracerProvider(resource=resource)
        provider.add_span_processor(BatchSpanProcessor(exporter))
        self._provider = provider
        self._tracer = provider.get_tracer(SERVICE_NAME)
        self._run_name = run_name

    def emit_update(self, record: UpdateRecord, method: str) -> None:
        attrs: dict[str, str | int | float | bool] = {
            "update.index": record.index,
            "update.method": method,
            "update.loss_before": record.loss_before,
            "update.loss_after": record.loss_after,
            "update.step_norm": record.step_norm,
            "update.damping": record.damping,
            "update.cg_iterations": record.cg_iterations,
            "update.accepted": record.accepted,
            "update.skipped": record.skipped,
            "update.wall_clock_seconds": record.wall_clock,
        }
        if record.rho is not None:
            attrs["update.rho"] = record.rho
        if self._run_name:
            attrs["run.name"] = self._run_name
        with self._tracer.start_as_current_span(f"{method} - Update {record.index}", attributes=attrs):
            pass

    def emit_epoch(self, row: dict[str, Any]) -> None:
        attrs: dict[str, str | int | float | bool] = {
            f"epoch.{k}": v for k, v in row.items() if isinstance(v, (str, int, float, bool))
        }
        if self._run_name:
            attrs["run.name"] = self._run_name
        with self._tracer.start_as_current_span(f"Epoch {row.get('epoch', '?')}", attributes=attrs):
            pass

    def flush(self) -> None:
        try:
            self._provider.force_flush()
        except Exception:
            logger.warning("Failed to flush telemetry", exc_info=True)

    def shutdown(self) -> None:
        try:
            self._provider.shutdown()
        except Exception:
            logger.warning("Failed to shut down telemetry", exc_info=True)
