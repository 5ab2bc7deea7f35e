"""Biphoton spectral engineering in hybrid nonlinear-waveguide/coupler devices.

Modules, in pipeline order: ``dispersion`` (indices and phase mismatch),
``coupler`` (tapered evanescent coupler), ``jsa`` (joint spectral
amplitude), ``hom`` (Hong-Ou-Mandel analysis), ``metrology`` (Fisher
information) and ``counts`` (pair statistics). ``pipeline`` and ``cli``
tie them together around the bundled ``presets``.
"""

__version__ = "0.1.0"

from .errors import BiphotonError, ConfigError, NumericalError  # noqa: E402

__all__ = ["BiphotonError", "ConfigError", "NumericalError", "__version__"]
