"""Difficulty window over expert epochs with a floating, ramped upper bound.

The sampled start epoch t is uniform on {t_lower..t_float}; t_float starts at
t_init and ramps linearly (integer floor) up to t_upper over ramp_iters
iterations, after which it stays there.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..numkit.errors import ShapeError
from ..numkit.rng import Rng


@dataclass(frozen=True)
class MatchWindow:
    t_lower: int       # hard lower bound on sampled start epochs
    t_upper: int       # hard upper bound
    t_init: int        # ramp start value of the floating bound
    ramp_iters: int    # iterations over which the floating bound reaches t_upper
    span: int          # expert epochs between start and target parameters
    steps: int         # synthetic SGD steps per unroll
    t_float: int = -1  # current floating bound (defaults to t_init)

    def __post_init__(self):
        if self.t_float < 0:
            object.__setattr__(self, "t_float", self.t_init)
        if not (0 <= self.t_lower <= self.t_init <= self.t_float <= self.t_upper):
            raise ShapeError(
                f"window bounds must satisfy 0 <= lower <= init <= float <= upper, "
                f"got ({self.t_lower}, {self.t_init}, {self.t_float}, {self.t_upper})"
            )
        if self.span < 0 or self.steps < 0:
            raise ShapeError("span and steps must be nonnegative")
        if self.ramp_iters < 0:
            raise ShapeError("ramp_iters must be nonnegative")

    def validate_horizon(self, horizon: int) -> None:
        if self.t_upper + self.span > horizon:
            raise ShapeError(
                f"window needs t_upper + span <= horizon: "
                f"{self.t_upper} + {self.span} > {horizon}"
            )

    @classmethod
    def fixed(cls, t_lower: int, t_upper: int, span: int, steps: int) -> "MatchWindow":
        """Window with no ramp: the floating bound sits at t_upper throughout."""
        return cls(
            t_lower=t_lower,
            t_upper=t_upper,
            t_init=t_upper,
            ramp_iters=0,
            span=span,
            steps=steps,
        )


def advance_window(window: MatchWindow, iteration: int) -> MatchWindow:
    """Floating bound after `iteration` iterations of the linear integer ramp."""
    if iteration < 0:
        raise ShapeError("iteration must be nonnegative")
    if window.ramp_iters == 0 or iteration >= window.ramp_iters:
        t = window.t_upper
    else:
        t = window.t_init + (window.t_upper - window.t_init) * iteration // window.ramp_iters
    return replace(window, t_float=min(window.t_upper, t))


def sample_start_epoch(window: MatchWindow, rng: Rng) -> int:
    """Start epoch uniform on the inclusive set {t_lower, ..., t_float}."""
    return rng.integer(window.t_lower, window.t_float)
