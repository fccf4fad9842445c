"""Far-range rendezvous design and guidance under angles-only navigation.

Stage 1 designs a fuel-efficient, observable, passively safe nominal
multi-impulse trajectory with particle swarm optimization; Stage 2 wraps
it in a contraction-based guidance environment driven by a PPO-trained
controller or benchmark schedules, validated by a bearings-only EKF and
Monte-Carlo campaigns.
"""

__version__ = "0.1.0"
