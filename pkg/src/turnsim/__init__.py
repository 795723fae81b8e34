"""Virtual-clock simulator for modular speech-to-speech RAG pipelines."""

from .config import ConfigError, ScenarioConfig, load_config
from .events import EventLoop, LivelockError
from .harness import (
    Report,
    TraceError,
    TraceEvent,
    TurnMetrics,
    compare_tiers,
    load_scenario,
    load_trace,
    parse_trace,
    render_table,
    run_scenario,
    summarize,
)
from .orchestrator import build_tiers, run_turn
from .timebase import to_ms, to_ticks

__all__ = [
    "ConfigError",
    "EventLoop",
    "LivelockError",
    "Report",
    "ScenarioConfig",
    "TraceError",
    "TraceEvent",
    "TurnMetrics",
    "build_tiers",
    "compare_tiers",
    "load_config",
    "load_scenario",
    "load_trace",
    "parse_trace",
    "render_table",
    "run_scenario",
    "run_turn",
    "summarize",
    "to_ms",
    "to_ticks",
]
