"""Integer virtual time.

All simulated time is an ``int`` count of ticks, one tick being 0.1 ms, so
latencies like 417.1 ms add up exactly.  Configuration and reports speak
milliseconds; convert at the boundary with :func:`to_ticks` / :func:`to_ms`.
"""

from __future__ import annotations

from decimal import ROUND_HALF_EVEN, Decimal

TICKS_PER_MS = 10


def to_ticks(ms: float | int | str | Decimal) -> int:
    """Milliseconds (at most one decimal of precision) to ticks."""
    value = Decimal(str(ms)) * TICKS_PER_MS
    return int(value.to_integral_value(rounding=ROUND_HALF_EVEN))


def to_ms(ticks: int) -> float:
    """Ticks to milliseconds.  ``to_ms(26387) == 2638.7`` holds exactly."""
    return ticks / TICKS_PER_MS
