"""Simulator and analysis toolkit for grant-free multi-user underwater
photon-counting optical communication.

Subpackages follow the receiver chain: physical model (`model`), frame
construction (`framing`), asynchronous Poisson channel (`channel`),
pilot-based synchronization (`sync`), Bayesian delay tracking (`bayes`),
iterative multi-user detection (`mud`), bounds and convergence analysis
(`analysis`), benchmark detectors (`baselines`), and the Monte-Carlo
harness (`harness`, `cli`).
"""

from .model import PhysicalParams, UserProfile
from .framing import FrameLayout

__all__ = ["PhysicalParams", "UserProfile", "FrameLayout"]

__version__ = "0.1.0"
