"""Testing package."""
