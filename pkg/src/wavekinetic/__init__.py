"""Linearised and nonlinear four-wave kinetic equation near the singular Rayleigh-Jeans state.

Modules: ``kernel`` (closed-form kernel K and its norms), ``spectral``
(Mellin/Fourier multiplier W and Omega), ``linear`` (semigroup, oracle
time stepping, moments and long-time diagnostics), ``condensation``
(atomic-measure solver and condensation functionals), ``cli``.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DomainError, NumericError, PreconditionError,  # noqa: E402
                     StabilityError, WaveKineticError)

__all__ = ["ConfigError", "DomainError", "NumericError", "PreconditionError", "StabilityError",
           "WaveKineticError", "__version__"]
