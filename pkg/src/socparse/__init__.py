"""Incremental social-relation parsing of dialogues with an attributed And-Or graph."""

__version__ = "0.1.0"
