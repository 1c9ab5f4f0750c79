"""Cross-layer spectrum sensing and traffic scheduling for cognitive radio.

A secondary-user network opportunistically reuses licensed spectrum bands.
This package models the primary-user occupancy dynamics, compressed
distributed spectrum measurements, sparse MAP recovery of the occupancy
state, belief compression onto a two-level manifold, myopic convex traffic
allocation, and average-reward dynamic programming over the compressed
belief space, plus a closed-loop slot simulator and experiment CLI.
"""

from .params import ModelParams

__all__ = ["ModelParams"]
__version__ = "0.1.0"
