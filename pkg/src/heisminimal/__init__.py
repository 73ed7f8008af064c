"""Minimal graphs in the first Heisenberg group.

Construction and diagnostics for ruled H-minimal surfaces, piecewise
gluings, persistent (harmonic) families, and spanning-surface feasibility
for closed boundary curves, with a CLI for reports and SVG figures.
"""

__version__ = "0.1.0"
