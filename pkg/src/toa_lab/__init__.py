"""toa_lab: time-of-arrival probability distributions for 1D systems.

Numerical schemes for the distribution of the first-crossing time of
x = 0: classical first-passage for stochastic generators, sequential
projective-reduction chains and their Zeno limit, no-reduction detector
regularizations, decoherence-functional (histories) bi-densities, and the
smeared-time POVM with its Kijowski limit.
"""

from .core import (
    GaussianSpec,
    Grid1D,
    GridAliasingWarning,
    MomentumGrid,
    TimeGrid,
    WavePacket,
    evolve_free,
    evolve_potential_split_step,
    gaussian_packet,
    integrate,
    to_momentum,
    to_position,
)

__version__ = "0.1.0"
