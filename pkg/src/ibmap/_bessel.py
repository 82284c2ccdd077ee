"""Log-space cylinder functions for integer order.

Products such as J_m(a)·Y_m(b) with a < b stay O(1) even when each factor
under- or overflows (large m, small argument).  Every routine here returns
the complex logarithm of the function value so that such products can be
formed as exp(log u1 + log u2).  Direct scipy evaluation is used whenever
the value is representable; otherwise the leading small-argument series is
summed in log form.
"""

from __future__ import annotations

import numpy as np
from scipy import special as sp

_TINY = 1e-280
_HUGE = 1e280
_SERIES_TERMS = 40


def _broadcast(m, z):
    m = np.asarray(m)
    z = np.asarray(z)
    m, z = np.broadcast_arrays(m, z)
    return m.astype(np.int64), z.astype(np.complex128)


def _clog(v):
    return np.log(np.asarray(v, dtype=np.complex128))


def _finite_sum_log(m, w):
    """log of sum_{k<m, k<=K} Γ(m-k)/(Γ(m) k!) w^k for m >= 1."""
    total = np.ones_like(w)
    term = np.ones_like(w)
    for k in range(_SERIES_TERMS):
        active = (m - 1 - k) > 0
        denom = np.where(active, (m - 1 - k) * (k + 1.0), 1.0)
        term = np.where(active, term * w / denom, 0.0)
        total = total + term
        if not np.any(active):
            break
    return _clog(total)


def _hyp0f1(b, w):
    """0F1(;b;w) by direct summation; used only where |w| is small against b."""
    total = np.ones_like(w)
    term = np.ones_like(w)
    for k in range(80):
        term = term * w / ((k + 1.0) * (b + k))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def log_jv(m, z):
    m, z = _broadcast(m, z)
    zr = z.real if np.all(z.imag == 0) else z
    with np.errstate(all="ignore"):
        v = sp.jv(m, zr)
        ok = np.isfinite(v) & (np.abs(v) > _TINY)
        out = np.empty(m.shape, dtype=np.complex128)
        out[ok] = _clog(v[ok])
        bad = ~ok
        if np.any(bad):
            mb, zb = m[bad], z[bad]
            out[bad] = (mb * _clog(zb / 2.0) - sp.gammaln(mb + 1.0)
                        + _clog(_hyp0f1(mb + 1.0, -zb * zb / 4.0)))
    return out


def _log_y_series(m, z):
    # leading part of Y_m for |z| << m; sign from the -(1/π) prefactor
    return (np.log(-1.0 + 0j) + sp.gammaln(m.astype(float)) - np.log(np.pi)
            + m * _clog(2.0 / z) + _finite_sum_log(m, z * z / 4.0))


def log_yv(m, z):
    m, z = _broadcast(m, z)
    zr = z.real if np.all(z.imag == 0) else z
    with np.errstate(all="ignore"):
        v = sp.yv(m, zr)
        ok = np.isfinite(v) & (np.abs(v) < _HUGE) & (np.abs(v) > 0)
        out = np.empty(m.shape, dtype=np.complex128)
        out[ok] = _clog(v[ok])
        bad = ~ok
        if np.any(bad):
            out[bad] = _log_y_series(m[bad], z[bad])
    return out


def log_h1(m, z):
    m, z = _broadcast(m, z)
    zr = z.real if np.all(z.imag == 0) else z
    with np.errstate(all="ignore"):
        v = sp.hankel1(m, zr)
        ok = np.isfinite(v) & (np.abs(v) < _HUGE) & (np.abs(v) > 0)
        out = np.empty(m.shape, dtype=np.complex128)
        out[ok] = _clog(v[ok])
        bad = ~ok
        if np.any(bad):
            # J_m is negligible against Y_m here, H = J + iY ~ iY
            out[bad] = _log_y_series(m[bad], z[bad]) + 0.5j * np.pi
    return out


def log_iv(m, x):
    m, z = _broadcast(m, x)
    x = z.real
    with np.errstate(all="ignore"):
        v = sp.ive(m, x)
        ok = np.isfinite(v) & (v > _TINY)
        out = np.empty(m.shape, dtype=np.complex128)
        out[ok] = np.log(v[ok]) + x[ok]
        bad = ~ok
        if np.any(bad):
            mb, xb = m[bad], x[bad]
            out[bad] = (mb * np.log(xb / 2.0) - sp.gammaln(mb + 1.0)
                        + np.log(_hyp0f1(mb + 1.0, xb * xb / 4.0)))
    return out


def log_kv(m, x):
    m, z = _broadcast(m, x)
    x = z.real
    with np.errstate(all="ignore"):
        v = sp.kve(m, x)
        ok = np.isfinite(v) & (v < _HUGE) & (v > 0)
        out = np.empty(m.shape, dtype=np.complex128)
        out[ok] = np.log(v[ok]) - x[ok]
        bad = ~ok
        if np.any(bad):
            mb, xb = m[bad], x[bad].astype(np.complex128)
            out[bad] = (sp.gammaln(mb.astype(float)) - np.log(2.0)
                        + mb * np.log(2.0 / xb) + _finite_sum_log(mb, -xb * xb / 4.0))
    return out
