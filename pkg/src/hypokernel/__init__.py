"""Small-time heat kernel asymptotics for hypoelliptic operators with drift."""

__version__ = "0.1.0"
