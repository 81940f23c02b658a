"""Distributed detection of a stochastic source by an energy-measuring sensor network.

The package simulates the sensing model at the waveform level, implements the
constrained GLRT and its locally most powerful per-node approximation together
with the classical baseline detectors, evaluates the asymptotic detection
theory (null and alternative laws of the test statistics), and simulates the
message cost of the cooperation strategies used to fuse the local statistics.
"""

__version__ = "0.1.0"
