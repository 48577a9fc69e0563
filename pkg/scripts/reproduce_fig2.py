#!/usr/bin/env python3
"""Concurrence vs cross-correlation: analytic curve + Monte Carlo points.

Runs six three-lane campaigns (characterize, separate readout, interfering
readout) along a g12 grid and overlays them on the analytic model, marking
the entanglement threshold and the large-g12 plateau.

Equivalent to:  dlcz-lab reproduce fig2 [options]

Defaults take about a minute; pass --trials 1000000 for a fast draft.
"""

import sys

from dlcz_lab.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", "fig2", *sys.argv[1:]]))
