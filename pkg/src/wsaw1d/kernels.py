"""Stable evaluation of the integral-operator kernels.

The base kernel is

    k0(t,s) = sqrt(p(t)) sqrt(p(s)) e^{-t-s} I0(2 sqrt(ts)),

with I0 the modified Bessel function.  Since e^{-t-s} I0(2 sqrt(ts)) =
e^{-(sqrt t - sqrt s)^2} * [e^{-x} I0(x)] at x = 2 sqrt(ts), everything is
computed from exponentially scaled Bessel functions and a single combined
exponent, so no intermediate overflows or underflows for t, s up to the
truncation scale.

K1Weighted is k1(t,s) * sqrt(t/s), the affine operator's kernel with the
removable s=0 singularity handled by its power series

    e^{-t-s} sum_m s^m t^{m+1} / (m! (m+1)!).

Derivative kinds multiply k0 by polynomial factors in (t, s, phi(t), phi(s)).
"""

from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.special import i0e, i1e

from .model import ModelParams, log_p, phi_eval

# below this s the sqrt(t/s) form is replaced by the power series
_SERIES_THRESHOLD = 1e-8
_SERIES_RELTOL = 1e-18


class KernelKind(Enum):
    K0 = "k0"
    K1_WEIGHTED = "k1_weighted"
    DNU_K0 = "dnu_k0"
    DG_K0 = "dg_k0"
    D2NU_K0 = "d2nu_k0"
    DNU_DG_K0 = "dnu_dg_k0"
    D2G_K0 = "d2g_k0"


SYMMETRIC_KINDS = frozenset(
    {
        KernelKind.K0,
        KernelKind.DNU_K0,
        KernelKind.DG_K0,
        KernelKind.D2NU_K0,
        KernelKind.DNU_DG_K0,
        KernelKind.D2G_K0,
    }
)


def bessel_i0_scaled(x):
    """e^{-x} I0(x) for x >= 0; lies in (0, 1]."""
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise ValueError("bessel_i0_scaled requires x >= 0")
    out = i0e(x)
    return out if out.ndim else float(out)


def bessel_i1_scaled(x):
    """e^{-x} I1(x) for x >= 0; zero at x=0 and < bessel_i0_scaled(x)."""
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise ValueError("bessel_i1_scaled requires x >= 0")
    out = i1e(x)
    return out if out.ndim else float(out)


def _k0_core(params: ModelParams, t, s):
    """k0 on already-validated arrays, via the scaled-Bessel identity."""
    rt, rs = np.sqrt(t), np.sqrt(s)
    ex = 0.5 * (log_p(params, t) + log_p(params, s)) - (rt - rs) ** 2
    return np.exp(ex) * i0e(2.0 * rt * rs)


def _k1_weighted_core(params: ModelParams, t, s):
    shape = np.broadcast_shapes(np.shape(t), np.shape(s))
    tb = np.broadcast_to(np.asarray(t, dtype=float), shape).reshape(-1)
    sb = np.broadcast_to(np.asarray(s, dtype=float), shape).reshape(-1)
    rt, rs = np.sqrt(tb), np.sqrt(sb)
    lp_half = 0.5 * (log_p(params, tb) + log_p(params, sb))
    near0 = sb < _SERIES_THRESHOLD

    # main branch: i1e with the combined exponent, s kept away from 0
    s_safe = np.where(near0, 1.0, sb)
    out = np.exp(lp_half - (rt - rs) ** 2) * i1e(2.0 * rt * rs) * np.sqrt(tb / s_safe)

    if np.any(near0):
        # series branch: exp(...) * sum_m s^m t^{m+1}/(m!(m+1)!), truncated
        # when terms drop below _SERIES_RELTOL relative; converges in a few
        # terms since t*s < s_max * 1e-8 here
        ts, ss = tb[near0], sb[near0]
        term = ts.copy()
        acc = term.copy()
        prod = ts * ss
        m = 0
        while True:
            term = term * (prod / ((m + 1.0) * (m + 2.0)))
            acc = acc + term
            m += 1
            if m > 60 or not np.any(term > _SERIES_RELTOL * np.maximum(acc, 1e-300)):
                break
        out[near0] = np.exp(lp_half[near0] - ts - ss) * acc
    return out.reshape(shape)


def kernel_eval(kind: KernelKind, params: ModelParams, t, s):
    """Evaluate the kernel of the given kind at (t, s), scalars or arrays.

    Symmetric kinds are computed after sorting the two arguments so that
    kernel_eval(k, t, s) == kernel_eval(k, s, t) bit-exactly.
    """
    t_arr = np.asarray(t, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    scalar = t_arr.ndim == 0 and s_arr.ndim == 0
    for name, a in (("t", t_arr), ("s", s_arr)):
        if np.any(np.isnan(a)):
            raise ValueError(f"{name} must not be NaN")
        if np.any(a < 0):
            raise ValueError(f"{name} must be >= 0")

    if kind is KernelKind.K1_WEIGHTED:
        out = _k1_weighted_core(params, t_arr, s_arr)
        return float(out) if scalar else out

    lo = np.minimum(t_arr, s_arr)
    hi = np.maximum(t_arr, s_arr)
    k0 = _k0_core(params, hi, lo)
    if kind is KernelKind.K0:
        out = k0
    else:
        tot = hi + lo
        if kind is KernelKind.DNU_K0:
            out = -0.5 * tot * k0
        elif kind is KernelKind.D2NU_K0:
            out = 0.25 * tot**2 * k0
        else:
            ptot = phi_eval(params.phi, hi) + phi_eval(params.phi, lo)
            if kind is KernelKind.DG_K0:
                out = -0.5 * ptot * k0
            elif kind is KernelKind.DNU_DG_K0:
                out = 0.25 * tot * ptot * k0
            elif kind is KernelKind.D2G_K0:
                out = 0.25 * ptot**2 * k0
            else:
                raise ValueError(f"unknown kernel kind {kind!r}")
    return float(out) if scalar else out
