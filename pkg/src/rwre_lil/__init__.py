"""Random walks in i.i.d. random environments: regeneration structure and the
law of the iterated logarithm, checked by simulation."""

__version__ = "0.1.0"
