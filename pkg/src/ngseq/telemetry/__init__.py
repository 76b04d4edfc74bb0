"""Optional OpenTelemetry export of training progress."""

from __future__ import annotations

from ngseq.telemetry.factory import create_tracer, parse_headers

__all__ = ["create_tracer", "parse_headers"]
