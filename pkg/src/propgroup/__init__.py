"""Proposal-grouping video object segmentation with policy-gradient fine-tuning."""

__version__ = "0.1.0"
