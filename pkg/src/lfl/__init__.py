"""Simulated two-wheel line follower with PID control, obstacle supervisor and
experiment harness."""

__version__ = "0.1.0"
