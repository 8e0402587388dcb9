"""Verification harness for spec-driven games via runtime state injection."""

__version__ = "0.1.0"
