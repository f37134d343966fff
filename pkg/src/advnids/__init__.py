"""Adversarial packet-level evasion of anomaly-based network intrusion detectors."""

__version__ = "0.1.0"
