"""Ball walk, stochastic localization and Stieltjes-barrier numerics for logconcave measures."""

__version__ = "0.1.0"
