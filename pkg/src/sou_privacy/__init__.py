"""Speaker-attribute privacy toolkit built around Scenario of Use threat models."""

__version__ = "0.1.0"
