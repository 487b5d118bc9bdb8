"""Two-axis telescope mount simulation with PD, fuzzy and GA-tuned controllers."""

__version__ = "0.1.0"
