"""Scenario presets shipped with the package."""
