"""Inner conic approximations of copositive kernels and the bounds they give."""

__version__ = "0.1.0"
