"""A-CAPELLA player state machines."""

from .base import TAGS, Context, Knowledge, Segment
from .codec import decode_arms, decode_gamma, encode_arms, encode_gamma
from .graph import ConnectivityGraph
from .players import POLICIES, make_player, ucb_choice
from .recursion import RecursionState, recursion_step

__all__ = [
    "TAGS", "Context", "Knowledge", "Segment", "decode_arms", "decode_gamma", "encode_arms",
    "encode_gamma", "ConnectivityGraph", "POLICIES", "make_player", "ucb_choice",
    "RecursionState", "recursion_step",
]
