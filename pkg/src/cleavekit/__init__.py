"""Cleaving stochastic reaction networks into cycles and checking balance properties."""

from .network import Complex, Reaction, ReactionNetwork, Species, essential, split_reaction, translate_add_species
from .parser import ParseError, parse, print_network

__version__ = "0.1.0"

__all__ = [
    "Complex",
    "ParseError",
    "Reaction",
    "ReactionNetwork",
    "Species",
    "essential",
    "parse",
    "print_network",
    "split_reaction",
    "translate_add_species",
    "__version__",
]
