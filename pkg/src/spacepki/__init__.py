"""Space-ground PKI simulation: orbital geometry, certificate machinery, trust
path validation, PKI actors and a discrete-event latency simulator."""

__version__ = "0.1.0"
