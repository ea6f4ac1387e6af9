"""Facial landmark digitization and geometric morphometrics toolkit.

Subpackages cover the 72-point facial landmark schema, TpsDig2-compatible
file I/O, Procrustes superimposition with sliding semilandmarks, a two-stage
landmark digitizer (linear mesh projection + convolutional patch refiner),
shape statistics (distinctiveness, asymmetry, repeatability), and a
deterministic synthetic face generator used for training and evaluation.
"""

from morphodig import metrics, pipeline, procrustes, schema, synth, tpsio

__all__ = ["metrics", "pipeline", "procrustes", "schema", "synth", "tpsio"]
__version__ = "0.1.0"
