"""Synthesis of verified Dafny programs from problem statements, and the
fine-tuning data that falls out of it."""

__version__ = "0.1.0"
