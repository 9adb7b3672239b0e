"""Survivorship-bias measurement toolkit for rules-based small-cap indices.

Pipeline: ingest raw end-of-day exchange files into a canonical store,
reconstruct quarterly index membership from a market-cap proxy ranking,
backtest survivor-only vs complete-universe portfolios, quantify the bias
with bootstrap significance tests, and sweep robustness scenarios.
"""

__version__ = "0.1.0"
