"""Screw-theory kinematics, DLS inverse kinematics, RRT* planning and
RGB-D planar pose estimation for visual servoing of a 7-DoF arm."""

__version__ = "0.1.0"
