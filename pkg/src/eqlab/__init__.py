"""Equidistribution lab: Bergman kernels, Fubini-Study currents and zeros of
random sections for singular metrics on the sphere and P^1 x P^1."""

__version__ = "0.1.0"
