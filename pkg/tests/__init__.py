"""Unit test package for the guilt-graph detection pipeline."""
