"""Pure-numpy implementations of the hot kernels.

Selected automatically when the compiled extension is unavailable or when
GEOFNO_PURE_PYTHON=1.  Every function here must match the compiled kernel
signatures exactly; tests assert both backends agree.
"""

import numpy as np
from scipy.special import erf

_SQRT1_2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

IS_COMPILED = False


def phase_build(xi, kfreq):
    """Trig tables cos/sin of 2*pi*<xi, k> for every point/mode pair.

    xi:    (B, N, d) float64, computational coordinates
    kfreq: (K, d) int64, integer frequency vectors
    returns (cos, sin) each (B, N, K) float64
    """
    theta = 2.0 * np.pi * (xi @ kfreq.T.astype(np.float64))
    return np.cos(theta), np.sin(theta)


def dtheta_combine(cos_m, sin_m, a, b, ca, cb):
    """Fused elementwise ca*a*sin + cb*b*cos over (B, N, K) arrays."""
    return ca * (a * sin_m) + cb * (b * cos_m)


def gelu_fwd(x):
    """Exact GeLU x*Phi(x). Returns (y, Phi, phi) with caches for backward."""
    big_phi = 0.5 * (1.0 + erf(x * _SQRT1_2))
    small_phi = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return x * big_phi, big_phi, small_phi


def gelu_bwd(g, x, big_phi, small_phi):
    return g * (big_phi + x * small_phi)


def adam_update(p, g, m, v, step, lr, beta1, beta2, eps):
    """One bias-corrected Adam step on flat float64 arrays (pure: new arrays out)."""
    m_new = beta1 * m + (1.0 - beta1) * g
    v_new = beta2 * v + (1.0 - beta2) * (g * g)
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    m_hat = m_new / bc1
    v_hat = v_new / bc2
    p_new = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p_new, m_new, v_new
