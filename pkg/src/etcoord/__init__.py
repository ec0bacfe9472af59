"""Event-triggered time coordination of path-following vehicles."""
__version__ = "0.1.0"
