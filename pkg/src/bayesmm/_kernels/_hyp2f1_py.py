"""Log-scale Gauss hypergeometric kernel, pure-NumPy backend.

Evaluates ln 2F1(a, b; c; z) through the Euler integral

    2F1(a, b; c; z) = (1/B(a, c-a)) * int_0^1 t^(a-1) (1-t)^(c-a-1) (1-z t)^(-b) dt

under the logistic substitution t = 1/(1+e^(-v)), which removes the endpoint
singularities and maps the integrand to exp(h(v)) with

    h(v) = a ln t + (c-a) ln(1-t) - b ln(1-z t).

h is unimodal (its stationarity condition is a quadratic in t with exactly one
root in (0,1)), so the integral is localized around the mode, windowed where h
drops 65 nats below the peak, and evaluated by adaptive 7/15 Gauss-Kronrod
panels whose contributions are combined by max-shifted log-sum-exp.

The compiled extension in ``_hyp2f1.pyx`` implements the same algorithm on C
scalars; this module is the importable fallback and the reference for tests.
"""

import math

import numpy as np

from ..errors import ConvergenceError

BACKEND = "python"

# 15-point Kronrod abscissae on [-1, 1], Kronrod weights, and the embedded
# 7-point Gauss weights (which sit on the odd-indexed abscissae).
_XK = np.array([
    -0.99145537112081264, -0.94910791234275852, -0.86486442335976907,
    -0.74153118559939444, -0.58608723546769113, -0.40584515137739717,
    -0.20778495500789847, 0.0, 0.20778495500789847, 0.40584515137739717,
    0.58608723546769113, 0.74153118559939444, 0.86486442335976907,
    0.94910791234275852, 0.99145537112081264,
])
_WK = np.array([
    0.022935322010529225, 0.063092092629978553, 0.10479001032225018,
    0.14065325971552592, 0.16900472663926790, 0.19035057806478541,
    0.20443294007529889, 0.20948214108472783, 0.20443294007529889,
    0.19035057806478541, 0.16900472663926790, 0.14065325971552592,
    0.10479001032225018, 0.063092092629978553, 0.022935322010529225,
])
_WG = np.array([
    0.12948496616886969, 0.27970539148927667, 0.38183005050511894,
    0.41795918367346939, 0.38183005050511894, 0.27970539148927667,
    0.12948496616886969,
])

_DROP = 65.0          # window the integrand where h falls this far below the peak
_MAX_EXPAND = 1e9     # bail-out span for bracket/window expansion
_EPS = float(np.finfo(float).eps)


def _h(v, a, ca, b, z):
    """Transformed log-integrand at v (array or scalar).

    ln t and ln(1-t) are each computed directly (1-t under the logistic map
    is t reflected), never as a difference with v; differencing would carry
    ulp(v)-sized noise into whichever log is tiny, amplified by a huge a or
    c-a into visible integrand noise.
    """
    v = np.asarray(v, dtype=float)
    soft = np.log1p(np.exp(-np.abs(v)))
    lt = np.where(v < 0.0, v, 0.0) - soft
    l1t = np.where(v > 0.0, -v, 0.0) - soft
    # ln(1 - z t) = ln((1-z) + z (1-t)), both addends nonnegative
    om = np.log((1.0 - z) + z * np.exp(l1t))
    return a * lt + ca * l1t - b * om


def _hprime(v, a, ca, b, z):
    """d/dv of the transformed log-integrand, scalar."""
    if v >= 0.0:
        emv = math.exp(-v)
        t = 1.0 / (1.0 + emv)
        omt = emv / (1.0 + emv)
    else:
        ev = math.exp(v)
        t = ev / (1.0 + ev)
        omt = 1.0 / (1.0 + ev)
    return a * omt - ca * t + b * z * t * omt / ((1.0 - z) + z * omt)


def _mode(a, ca, b, z):
    """Location of the integrand peak in v.

    The stationarity condition reduces to z(c-b) t^2 - (c + z(a-b)) t + a = 0,
    which has exactly one root in (0,1); the closed form seeds a bisection on
    h'(v), which is robust when the root sits within roundoff of 0 or 1.
    """
    c = a + ca
    qa = z * (c - b)
    qb = -(c + z * (a - b))
    qc = a
    v0 = 0.0
    disc = qb * qb - 4.0 * qa * qc
    if disc > 0.0:
        q = -0.5 * (qb + math.copysign(math.sqrt(disc), qb))
        for t in ((q / qa if qa != 0.0 else math.inf), (qc / q if q != 0.0 else math.inf)):
            if 1e-12 < t < 1.0 - 1e-12:
                v0 = math.log(t) - math.log1p(-t)
                break
    lo, hi = v0 - 2.0, v0 + 2.0
    span = 2.0
    while _hprime(lo, a, ca, b, z) <= 0.0:
        span *= 2.0
        lo = v0 - span
        if span > _MAX_EXPAND:
            return v0
    span = 2.0
    while _hprime(hi, a, ca, b, z) >= 0.0:
        span *= 2.0
        hi = v0 + span
        if span > _MAX_EXPAND:
            return v0
    while hi - lo > 1e-8 * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if _hprime(mid, a, ca, b, z) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _expand(vstar, hstar, direction, a, ca, b, z):
    """Locate where h crosses hstar - _DROP along one direction.

    Doubling steps bracket the crossing; bisection then tightens the window
    edge so that very narrow peaks (large a, c) are not buried inside panels
    orders of magnitude wider than the mass.
    """
    target = hstar - _DROP
    step = 1.0
    inner = vstar
    v = vstar + direction * step
    while float(_h(v, a, ca, b, z)) > target:
        inner = v
        step *= 2.0
        v = vstar + direction * step
        if step > _MAX_EXPAND:
            raise ConvergenceError("integrand window expansion failed")
    outer = v
    for _ in range(60):
        if abs(outer - inner) <= 0.05 * (abs(outer - vstar) + 1e-12):
            break
        mid = 0.5 * (inner + outer)
        if mid == inner or mid == outer:
            break
        if float(_h(mid, a, ca, b, z)) > target:
            inner = mid
        else:
            outer = mid
    return outer


def _panel(lo, hi, a, ca, b, z):
    """One 7/15 Gauss-Kronrod panel of exp(h): (log value, log error)."""
    hw = 0.5 * (hi - lo)
    hv = _h(0.5 * (lo + hi) + hw * _XK, a, ca, b, z)
    m = float(hv.max())
    if m == -math.inf:
        return -math.inf, -math.inf
    e = np.exp(hv - m)
    k = float(e @ _WK)
    g = float(e[1::2] @ _WG)
    err = max(abs(k - g), 1e-15 * k)
    return m + math.log(k * hw), m + math.log(err * hw)


def _logsumexp(arr):
    m = max(arr)
    if m == -math.inf:
        return m
    return m + math.log(sum(math.exp(x - m) for x in arr))


def log_2f1_core(a, b, c, z, rel_tol=1e-11, max_panels=1024):
    """ln 2F1(a, b; c; z) for 0 < a < c, 0 <= z < 1, any real b."""
    if z == 0.0 or b == 0.0:
        return 0.0
    ca = c - a
    vstar = _mode(a, ca, b, z)
    hstar = float(_h(vstar, a, ca, b, z))
    vlo = _expand(vstar, hstar, -1.0, a, ca, b, z)
    vhi = _expand(vstar, hstar, +1.0, a, ca, b, z)

    # uniform seed knots, the peak and its unit neighborhood, and (when a
    # window side spans many nats) a geometric ladder out from the peak so
    # initial panel widths track their distance from the mass
    extra = [vstar - 1.0, vstar, vstar + 1.0]
    for direction, width in ((-1.0, vstar - vlo), (1.0, vhi - vstar)):
        if width > 8.0:
            step = 2.0
            while step < width:
                extra.append(vstar + direction * step)
                step *= 2.0
    knots = np.unique(np.concatenate([
        np.linspace(vlo, vhi, 9),
        np.clip(extra, vlo, vhi),
    ]))
    los, his, lvals, lerrs = [], [], [], []
    for seg_lo, seg_hi in zip(knots[:-1], knots[1:]):
        if seg_hi - seg_lo <= 0.0:
            continue
        lv, le = _panel(seg_lo, seg_hi, a, ca, b, z)
        los.append(seg_lo)
        his.append(seg_hi)
        lvals.append(lv)
        lerrs.append(le)

    # Double precision cannot evaluate h to better absolute accuracy than
    # roughly eps times the raw magnitude of its terms (each log factor is
    # an O(1 + |v|) computation scaled by a possibly huge coefficient), so
    # the Kronrod error estimates bottom out there; demanding a tighter
    # relative tolerance would split panels forever without gaining digits.
    soft = math.log1p(math.exp(-abs(vstar)))
    lt_s = (vstar if vstar < 0.0 else 0.0) - soft
    l1t_s = (-vstar if vstar > 0.0 else 0.0) - soft
    om_s = math.log((1.0 - z) + z * math.exp(l1t_s))
    scale = (
        abs(a * lt_s) + abs(ca * l1t_s) + abs(b * om_s)
        + (abs(a) + abs(ca) + abs(b)) * (1.0 + abs(vstar))
    )
    log_rel = math.log(max(rel_tol, 8.0 * _EPS * (1.0 + scale)))
    while True:
        total = _logsumexp(lvals)
        if _logsumexp(lerrs) <= total + log_rel:
            break
        if len(lvals) >= max_panels:
            raise ConvergenceError(
                f"2F1 quadrature did not reach rel_tol={rel_tol:g} "
                f"within {max_panels} panels"
            )
        worst = max(range(len(lerrs)), key=lerrs.__getitem__)
        seg_lo, seg_hi = los[worst], his[worst]
        mid = 0.5 * (seg_lo + seg_hi)
        lv1, le1 = _panel(seg_lo, mid, a, ca, b, z)
        lv2, le2 = _panel(mid, seg_hi, a, ca, b, z)
        los[worst], his[worst], lvals[worst], lerrs[worst] = seg_lo, mid, lv1, le1
        los.append(mid)
        his.append(seg_hi)
        lvals.append(lv2)
        lerrs.append(le2)

    log_beta = math.lgamma(a) + math.lgamma(ca) - math.lgamma(c)
    return total - log_beta
