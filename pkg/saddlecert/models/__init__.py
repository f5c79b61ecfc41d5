"""Record types."""
