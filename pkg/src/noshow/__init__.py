"""No-show prediction, hour-block heatmaps, and overbooking decision support."""

__version__ = "0.1.0"
