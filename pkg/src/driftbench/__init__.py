"""Toolkit for studying temporal drift in Wi-Fi RSSI fingerprint databases."""

__version__ = "0.1.0"
