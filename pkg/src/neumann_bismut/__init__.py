"""Monte Carlo laboratory for second-order Bismut formulas of Neumann semigroups."""

__version__ = "0.1.0"
