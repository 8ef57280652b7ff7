"""Dissipativity-based controller and topology co-design for platoons."""

__version__ = "0.1.0"
