"""Domain-adaptive random forests for body-part labelling."""
__version__ = "0.1.0"
