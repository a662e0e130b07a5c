"""driftlearn: self-evolving stream classifier with drift detection and replay."""

__version__ = "0.1.0"
