"""Privacy-preserving two-stage recruitment for mobile crowdsensing."""

__version__ = "0.1.0"
