"""Post-selection continuous-variable QKD over lossy channels with excess Gaussian noise."""

from .errors import ConvergenceError, ModelDomainError
from .info_theory import AnnouncedPair, Channel, Modulation

__all__ = ["AnnouncedPair", "Channel", "ConvergenceError", "ModelDomainError", "Modulation"]
