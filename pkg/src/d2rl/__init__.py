"""Dense input-reinjection (D2RL) networks for off-policy actor-critic RL."""

__version__ = "0.1.0"
