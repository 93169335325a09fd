"""Integer micro-USD money helpers.

All billing math runs on integer micro-USD (1 USD = 1,000,000 micro-USD) so
charges stay exact; rounding to cents happens only when rendering output.
"""

from __future__ import annotations

MUSD_PER_USD = 1_000_000
MUSD_PER_CENT = 10_000


def usd(amount: float) -> int:
    """Convert a dollar amount to integer micro-USD."""
    return round(amount * MUSD_PER_USD)


def to_usd(musd: int) -> float:
    """Exact dollar value of a micro-USD amount (no rounding)."""
    return musd / MUSD_PER_USD


def to_cents(musd: int) -> int:
    """Round micro-USD to whole cents."""
    return round(musd / MUSD_PER_CENT)


def render_usd(musd: int) -> float:
    """Dollar value rounded to cents, for report rendering."""
    return to_cents(musd) / 100.0
