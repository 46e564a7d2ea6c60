"""Prime orbit counting and transfer-operator thermodynamics for rational Thurston maps."""

__version__ = "0.1.0"
