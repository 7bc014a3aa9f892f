"""Hot numeric kernels, each in a numba and a pure-numpy variant.

The public names dispatch on the backend resolved in `_backend`.  All
kernels are pure functions of ndarray/scalar inputs so both variants
consume identical random streams and return matching values to within
floating-point reordering.
"""

import math

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtr

from ._backend import HAVE_NUMBA, USE_NUMBA

_SQRT2 = math.sqrt(2.0)


def exp_kernel_overlap_np(w: np.ndarray, dt: float, decay: float) -> float:
    """Double integral of w(t1) w(t2) exp(-decay |t1 - t2|) over the grid.

    Split at the diagonal and evaluated as 2 * trapz(w * A) where
    A(t) = int_0^t w(s) exp(-decay (t - s)) ds accumulates through a
    damped one-pole recurrence, so the cost is O(n) and no intermediate
    ever exceeds the magnitude of the result.
    """
    n = w.shape[0]
    damp = math.exp(-decay * dt)
    inc = np.empty(n)
    inc[0] = 0.0
    inc[1:] = 0.5 * dt * (w[:-1] * damp + w[1:])
    acc = lfilter([1.0], [1.0, -damp], inc)
    return 2.0 * float(np.trapezoid(w * acc, dx=dt))


def pair_overlap_np(wc: np.ndarray, eps1: np.ndarray, eps2: np.ndarray) -> np.ndarray:
    """Squared weighted overlap |sum_i wc_i exp(i(phi2_i - phi1_i))|^2 per pair.

    wc holds quadrature-weighted intensity samples; eps1/eps2 are the
    per-step phase increments of the two trajectories, shape (pairs, n-1).
    """
    dphi = np.cumsum(eps2 - eps1, axis=1)
    z = np.exp(1j * dphi) @ wc[1:].astype(complex)
    z += wc[0]
    return np.abs(z) ** 2


def jitter_bin_weights_np(
    rho_c: np.ndarray, t: np.ndarray, edges: np.ndarray, sigma: float
) -> np.ndarray:
    """Expected bin contents of a density convolved with a Gaussian.

    rho_c holds quadrature-weighted density samples on times t.  Each bin
    [edges[b], edges[b+1]) receives sum_k rho_c[k] * (Phi((edges[b+1]-t_k)/sigma)
    - Phi((edges[b]-t_k)/sigma)), the exact Gaussian mass landing in the bin.
    """
    out = np.empty(edges.shape[0] - 1)
    prev = ndtr((edges[0] - t) / sigma)
    for b in range(out.shape[0]):
        cur = ndtr((edges[b + 1] - t) / sigma)
        out[b] = float(np.dot(rho_c, cur - prev))
        prev = cur
    return out


if HAVE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def exp_kernel_overlap_nb(w, dt, decay):  # pragma: no cover - numba
        n = w.shape[0]
        damp = math.exp(-decay * dt)
        acc = 0.0
        total = 0.0
        for k in range(1, n):
            acc = acc * damp + 0.5 * dt * (w[k - 1] * damp + w[k])
            weight = 0.5 * dt if k == n - 1 else dt
            total += weight * w[k] * acc
        return 2.0 * total

    @njit(cache=True)
    def pair_overlap_nb(wc, eps1, eps2):  # pragma: no cover - numba
        pairs = eps1.shape[0]
        n = wc.shape[0]
        out = np.empty(pairs)
        for p in range(pairs):
            dphi = 0.0
            re = wc[0]
            im = 0.0
            for i in range(1, n):
                dphi += eps2[p, i - 1] - eps1[p, i - 1]
                re += wc[i] * math.cos(dphi)
                im += wc[i] * math.sin(dphi)
            out[p] = re * re + im * im
        return out

    @njit(cache=True)
    def jitter_bin_weights_nb(rho_c, t, edges, sigma):  # pragma: no cover - numba
        n = t.shape[0]
        nbins = edges.shape[0] - 1
        out = np.zeros(nbins)
        prev = np.empty(n)
        cur = np.empty(n)
        for k in range(n):
            prev[k] = 0.5 * (1.0 + math.erf((edges[0] - t[k]) / (sigma * _SQRT2)))
        for b in range(nbins):
            s = 0.0
            for k in range(n):
                cur[k] = 0.5 * (1.0 + math.erf((edges[b + 1] - t[k]) / (sigma * _SQRT2)))
                s += rho_c[k] * (cur[k] - prev[k])
            out[b] = s
            tmp = prev
            prev = cur
            cur = tmp
        return out

else:  # pragma: no cover - exercised only without numba installed
    exp_kernel_overlap_nb = None
    pair_overlap_nb = None
    jitter_bin_weights_nb = None


if USE_NUMBA:
    exp_kernel_overlap = exp_kernel_overlap_nb
    pair_overlap = pair_overlap_nb
    jitter_bin_weights = jitter_bin_weights_nb
else:
    exp_kernel_overlap = exp_kernel_overlap_np
    pair_overlap = pair_overlap_np
    jitter_bin_weights = jitter_bin_weights_np
