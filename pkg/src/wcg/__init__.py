"""Weakly coupled gangs: LP relaxation, FAB policy, Monte Carlo simulation."""
