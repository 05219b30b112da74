"""Simulation toolkit for RIS-aided mmWave MIMO links.

Covers RIS phase control and path loss, separate estimation of the BS-RIS and
RIS-UE channels (hierarchical beam training plus iterative reweighted gain
recovery), EKF tracking of a mobile user, and a Monte Carlo harness.
"""

from risframe.arrays import AnglePair, UpaGeometry, array_factor, power_pattern, steering_vector

__version__ = "0.1.0"

__all__ = [
    "AnglePair",
    "UpaGeometry",
    "array_factor",
    "power_pattern",
    "steering_vector",
]
