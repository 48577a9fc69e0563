"""Simulator and analysis toolkit for heralded entanglement of two atomic ensembles.

The package models the write/read ("DLCZ") protocol at the counting level:
weak two-mode squeezing between a collective atomic excitation and a
scattered write-out field, interference of the write-out fields from two
ensembles on a beamsplitter, threshold-detector heralding, and delayed
readout of both ensembles either into separate detectors (populations) or
through a second beamsplitter (coherence fringe).  A closed-form counting
model, an exact truncated-Fock oracle, a Monte Carlo trial engine, the
tomography estimators, and detection-chain loss inversion live in separate
modules so each layer can be checked against the others.
"""

__version__ = "0.1.0"

from . import config, engine, errors, fock, inference, model, records, tomography  # noqa: F401
