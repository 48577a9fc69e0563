#!/usr/bin/env python3
"""Inference chain: detected -> beamsplitter output -> atomic state.

Runs the reference-point pipeline once, reconstructs the detected-mode
density matrix, then inverts the bundled efficiency chain to report the
concurrence at each stage with Monte Carlo uncertainties.

Equivalent to:  dlcz-lab reproduce table1 [options]
"""

import sys

from dlcz_lab.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", "table1", *sys.argv[1:]]))
