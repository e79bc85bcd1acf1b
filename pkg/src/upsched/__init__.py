"""Packet scheduling simulator with schedule recording and LSTF replay."""

__version__ = "0.1.0"
