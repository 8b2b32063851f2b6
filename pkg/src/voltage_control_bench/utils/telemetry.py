# mypy: disable-error-code="attr-defined"
import os
from typing import Dict, Union

from opentelemetry import trace
from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter
from opentelemetry.sdk.resources import SERVICE_NAME, Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor

DEFAULT_SERVICE_NAME = "vcb"


def telemetry_enabled() -> bool:
    return os.getenv("OTEL_ENABLED", "false").lower() == "true"


def setup_telemetry() -> None:
    """
    Set up OpenTelemetry tracing with an OTLP exporter when OTEL_ENABLED=true.
    The service name is taken from OTEL_SERVICE_NAME, falling back to DEFAULT_SERVICE_NAME.
    """
    if not telemetry_enabled():
        return

    service_name = os.getenv("OTEL_SERVICE_NAME", DEFAULT_SERVICE_NAME)
    provider = TracerProvider(resource=Resource.create({SERVICE_NAME: service_name}))
    provider.add_span_processor(BatchSpanProcessor(OTLPSpanExporter(), max_queue_size=10000))
    trace.set_tracer_provider(provider)


def create_span_attributes(
    run_id: str, algorithm: str, seed: int, train_episodes: int, final_cr: float
) -> Dict[str, Union[int, float, str]]:
    """Span attributes for one training run, prefixed with 'vcb.'."""
    return {
        "vcb.run.id": run_id,
        "vcb.run.algorithm": algorithm,
        "vcb.run.seed": seed,
        "vcb.run.train_episodes": train_episodes,
        "vcb.metrics.final_cr": final_cr,
    }
