#!/usr/bin/env python3
"""Concurrence vs storage time at the g12 = 30 operating point.

Sweeps the memory storage time over the sampled grid, runs the full
three-lane pipeline at each point, and overlays the analytic decay model
with its separability time (where the concurrence reaches zero).

Equivalent to:  dlcz-lab reproduce fig3 [options]
"""

import sys

from dlcz_lab.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", "fig3", *sys.argv[1:]]))
