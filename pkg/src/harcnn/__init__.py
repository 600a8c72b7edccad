"""Human activity recognition from raw inertial windows.

Spectral features (FFT magnitudes + Welch PSD) feed a from-scratch
two-channel 1-D CNN; training, evaluation, and the CLI live in the
submodules.
"""

__version__ = "0.1.0"
