"""Quadratic drifts and their recovery for a scalar-input nonlinear heat system."""
