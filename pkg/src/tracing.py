"""
Tracing setup with OpenTelemetry.
"""
import logging
import sys

from opentelemetry import trace
from opentelemetry.sdk.resources import SERVICE_NAME, Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor, ConsoleSpanExporter

from src.config import TRACING_ENABLED

logger = logging.getLogger(__name__)

_initialized = False


def init_tracing(service_name: str = "rfmr", enabled: bool = TRACING_ENABLED):
    """
    Initialize OpenTelemetry tracing with a console exporter on stderr.

    Args:
        service_name: Service name for tracing
        enabled: Install the SDK provider; otherwise the API stays a no-op
    """
    global _initialized

    if not enabled:
        logger.debug("Tracing disabled")
        return
    if _initialized:
        return

    try:
        resource = Resource(attributes={SERVICE_NAME: service_name})
        trace_provider = TracerProvider(resource=resource)
        trace_provider.add_span_processor(
            BatchSpanProcessor(ConsoleSpanExporter(out=sys.stderr))
        )
        trace.set_tracer_provider(trace_provider)
        _initialized = True
        logger.info(f"Tracing initialized for {service_name}")
    except Exception as e:
        logger.error(f"Failed to initialize tracing: {e}")
        raise


def get_tracer(name: str = "rfmr"):
    """Get tracer instance."""
    return trace.get_tracer(name)
