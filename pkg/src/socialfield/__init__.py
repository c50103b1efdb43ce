"""Co-evolving opinion and position dynamics: agent simulation, mean-field PDE, diagnostics."""

__version__ = "0.1.0"
