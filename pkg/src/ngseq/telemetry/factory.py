"""Tracer factory."""

from __future__ import annotations

import logging
from typing import Any

logger = logging.getLogger(__name__)


def parse_headers(raw: str) -> dict[str, str]:
    """``k=v,k=v`` as used by OTEL_EXPORTER_OTLP_HEADERS."""
    headers: dict[str, str] = {}
    if raw:
        for pair in raw.split(","):
            if "=" in pair:
                k, v = pair.split("=", 1)
                headers[k.strip()] = v.strip()
    return headers


def create_tracer(endpoint: str, headers: str = "", *, run_name: str = "") -> Any:
    """Create a run tracer when an endpoint is configured. Returns None on failure."""
    if not endpoint:
        return None
    try:
        from ngseq.telemetry.otlp import RunTracer
    except ImportError:
        logger.warning(
            "opentelemetry packages not installed; install with: "
            "pip install opentelemetry-sdk opentelemetry-exporter-otlp-proto-http"
        )
        return None
    try:
        return RunTracer(endpoint=endpoint, headers=parse_headers(headers), run_name=run_name)
    except Exception:
        logger.warning("Failed to create RunTracer", exc_info=True)
        return None
