"""Complex log-gamma via the Lanczos approximation (g = 7, n = 9)."""

from __future__ import annotations

import cmath
import math

_G = 7.0
_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)
_MAX_SHIFT = 64


class GammaPoleError(ValueError):
    """Raised when log-gamma is requested at a non-positive integer."""


def _is_pole(z: complex) -> bool:
    return z.imag == 0.0 and z.real <= 0.0 and z.real == math.floor(z.real)


def _log_sin_pi(z: complex) -> complex:
    # log(sin(pi z)) without overflow for large |Im z|; branch is irrelevant to callers
    if abs(z.imag) < 20.0:
        return cmath.log(cmath.sin(math.pi * z))
    if z.imag > 0:
        return -1j * math.pi * z + cmath.log(0.5j) + cmath.log(1.0 - cmath.exp(2j * math.pi * z))
    return (_log_sin_pi(z.conjugate())).conjugate()


def log_gamma_complex(z: complex) -> complex:
    """Logarithm of the gamma function for complex `z`.

    Principal branch (cut along the negative real axis).  For ``Re z < 0.5``
    the value is shifted up with ``logΓ(z) = logΓ(z+m) - Σ log(z+k)``, which
    preserves the branch; beyond `_MAX_SHIFT` steps the reflection formula is
    used instead and only ``exp`` of the result is branch-independent.

    Raises
    ------
    GammaPoleError
        If `z` is a non-positive integer.
    """
    z = complex(z)
    if _is_pole(z):
        raise GammaPoleError(f"log-gamma pole at z = {z.real:g}")
    if z.real < 0.5:
        m = math.ceil(0.5 - z.real)
        if m > _MAX_SHIFT:
            return _LOG_PI - _log_sin_pi(z) - log_gamma_complex(1.0 - z)
        return log_gamma_complex(z + m) - sum(cmath.log(z + k) for k in range(m))
    z -= 1.0
    x = _COEF[0]
    for i in range(1, len(_COEF)):
        x += _COEF[i] / (z + i)
    t = z + _G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * cmath.log(t) - t + cmath.log(x)
