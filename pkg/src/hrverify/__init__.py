"""Parameterized verification of process networks generated by HR grammars."""

__version__ = "0.1.0"
