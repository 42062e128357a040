"""Gradient-free class-incremental learning for time series with a recursive ridge classifier."""
