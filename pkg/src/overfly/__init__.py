"""overfly: fly an emulated multirotor inside pre-recorded nadir aerial video.

A deterministic fixed-timestep simulator renders what a downward virtual
camera would see at the emulated pose, so vision-based navigation and
landing algorithms (and human pilots) can be exercised safely under
identical, seedable conditions.
"""

__version__ = "0.1.0"
