"""Numerical laboratory for the semiclassical logarithmic Schrodinger equation,
its isothermal Euler limit and the associated monokinetic Vlasov measures."""

__version__ = "0.1.0"
