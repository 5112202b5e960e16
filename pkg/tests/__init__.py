"""Tests for the desk-scale LaSRO package."""
