"""Decision-time projection over an append-only event log, with a summarize-as-you-go baseline and the tooling to compare them."""

from __future__ import annotations

__version__ = "0.1.0"
