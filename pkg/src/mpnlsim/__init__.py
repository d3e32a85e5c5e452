"""Uplink MU-MIMO evaluation pipeline: linear vs. parallel non-linear
detection over fading channels with LDPC coding, plus antenna-search and
vehicular-connectivity analyses."""

__version__ = "0.1.0"
