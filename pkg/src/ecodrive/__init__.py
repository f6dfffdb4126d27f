"""Energy-optimal stop-to-stop speed profiles for electric vehicles."""

__version__ = "0.1.0"
