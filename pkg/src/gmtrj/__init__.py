"""Generalized multiple-try reversible jump samplers, two model-selection
case studies, chain diagnostics and an exact detailed-balance checker."""

__version__ = "0.1.0"

from .core import ChainState, NestedEmbedding, Outcome, RngStream, SwapJump
from .samplers import (
    MoveSpec,
    gmtm_step,
    gmtrj_step,
    make_weights,
    mh_step,
    multiple_try_step,
    rj_step,
    select_trial,
)

__all__ = [
    "ChainState",
    "MoveSpec",
    "NestedEmbedding",
    "Outcome",
    "RngStream",
    "SwapJump",
    "gmtm_step",
    "gmtrj_step",
    "make_weights",
    "mh_step",
    "multiple_try_step",
    "rj_step",
    "select_trial",
]
