"""Shape optimization of cavity eigenvalues on spline patches."""

__version__ = "0.1.0"
