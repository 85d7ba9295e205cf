"""Directional derivatives at the origin by Richardson-extrapolated central differences."""

import numpy as np

from .popa_core import DomainError, as_vector

T0 = 1e-3
TOL_HOMOGENEITY = 1e-6


class DerivativeError(ValueError):
    pass


def _central(f, u, h):
    try:
        fp = np.asarray(f(h * u), dtype=float)
        fm = np.asarray(f(-h * u), dtype=float)
    except DomainError as exc:
        raise DerivativeError(f"domain too small for step {h:g}: {exc}") from exc
    if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
        raise DerivativeError("non-finite evaluation")
    return (fp - fm) / (2.0 * h)


def richardson_derivative(f, u, t0=T0):
    """Central differences at steps t0, t0/2, t0/4 combined by a two-level
    Richardson tableau (error O(t0^6) for smooth f)."""
    d = [_central(f, u, t0 / 2**k) for k in range(3)]
    r1 = [(4.0 * d[k + 1] - d[k]) / 3.0 for k in range(2)]
    return (16.0 * r1[1] - r1[0]) / 15.0


def gateaux_at_zero(f, u, t0=T0, check_homogeneity=True, probes=(2.0, -1.0, 0.5),
                    tol=TOL_HOMOGENEITY):
    """``f'_u(0) = lim (f(t u) - f(0)) / t``.

    With ``check_homogeneity`` the contract ``f'_{su}(0) = s f'_u(0)`` is
    verified on the probe scalars and a DerivativeError raised if it fails.
    """
    u = as_vector(u, name="u")
    d = richardson_derivative(f, u, t0)
    if check_homogeneity:
        for s in probes:
            ds = richardson_derivative(f, s * u, t0)
            if np.max(np.abs(ds - s * d) / (1.0 + np.abs(s * d))) > tol:
                raise DerivativeError(f"derivative not homogeneous at probe s={s}")
    return float(d) if np.ndim(d) == 0 else d
