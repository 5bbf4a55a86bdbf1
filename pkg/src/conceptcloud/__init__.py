"""Participant-weighted thematic word clouds from interview transcripts."""

__version__ = "0.1.0"
