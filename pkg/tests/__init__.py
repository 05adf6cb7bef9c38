"""Tests for gait-rdf."""
