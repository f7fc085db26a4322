"""
Metrics collection and export.
"""
import logging

from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

logger = logging.getLogger(__name__)

# Create registry
registry = CollectorRegistry()

# Define metrics
integrations = Counter(
    'rfmr_integrations_total',
    'Completed integration segments',
    ['method'],
    registry=registry,
)

integration_failures = Counter(
    'rfmr_integration_failures_total',
    'Integration runs that failed',
    ['reason'],
    registry=registry,
)

rhs_evaluations = Counter(
    'rfmr_rhs_evaluations_total',
    'Vector field evaluations performed by the integrators',
    registry=registry,
)

newton_iterations = Histogram(
    'rfmr_newton_iterations',
    'Newton iterations per equilibrium solve',
    buckets=(1, 2, 3, 5, 8, 13, 21, 34, 50),
    registry=registry,
)

asep_events = Counter(
    'rfmr_asep_events_total',
    'Exclusion-process hops simulated',
    registry=registry,
)

command_duration = Histogram(
    'rfmr_command_duration_seconds',
    'Wall time of CLI commands',
    ['command'],
    buckets=(0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 15.0, 60.0, 300.0),
    registry=registry,
)


def record_integration(method: str, evaluations: int):
    """Record a finished integration segment."""
    integrations.labels(method=method).inc()
    rhs_evaluations.inc(evaluations)


def record_integration_failure(reason: str):
    """Record a failed integration."""
    integration_failures.labels(reason=reason).inc()


def record_newton(iterations: int):
    """Record the iteration count of one Newton solve."""
    newton_iterations.observe(iterations)


def record_asep_events(count: int):
    """Record simulated exclusion-process hops."""
    asep_events.inc(count)


def get_registry():
    """Get Prometheus registry."""
    return registry


def write_metrics(path: str):
    """Dump the registry in the node-exporter textfile format."""
    write_to_textfile(path, registry)
    logger.info(f"Metrics written to {path}")
