"""Threat-aware reactive obstacle avoidance on a planar simulator.

LiDAR tracking and RGB-D refinement feed a scalar threat score, which schedules
a blend between a retreat navigator and a scored reflex maneuver.
"""

__version__ = "0.1.0"
