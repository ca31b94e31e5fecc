"""Bundled deterministic scenario path.

A single 253-point quarter-day price trajectory whose increments live on
the trinomial lattice of the tree solver (spacing sigma*sqrt(2)*sqrt(dt)
with the reference sigma = 0.6), so tree policies can be evaluated along
it without interpolation. The path starts at 45, dips below the strike,
rises above it and finishes near 47.12, which makes it exercise at
maturity. Used by the trajectory demos and the qualitative strategy
tests; regenerating it would change frozen expectations downstream.
"""

from importlib import resources

import numpy as np

__all__ = ["reference_path"]


def reference_path():
    """Return (t, S) arrays of the bundled path; t in days, 253 points."""
    text = resources.files("liqhedge").joinpath(
        "data/reference_path.csv").read_text()
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    arr = np.asarray(rows, dtype=float)
    return arr[:, 0].copy(), arr[:, 1].copy()
