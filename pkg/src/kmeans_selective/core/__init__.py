"""Core infrastructure: settings, logging and the error hierarchy."""
