"""The helpers module holds the numerical operations and run plumbing."""
