"""Junction-level CAV platoon coordination on a freeway corridor."""

__version__ = "0.1.0"
