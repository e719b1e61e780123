"""Benchmark harness that drives vision-language models through staged
prompts on driving scenes and scores the resulting trajectories."""

__version__ = "0.1.0"

from .records import ActionState, Frame, FrameResult, Trajectory  # noqa: F401
