"""Test factorsel with pytest."""
