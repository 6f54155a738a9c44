# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled log-scale Gauss hypergeometric kernel.

Same algorithm as ``_hyp2f1_py``: Euler integral under a logistic
substitution, mode-located window, adaptive 7/15 Gauss-Kronrod panels
combined by max-shifted log-sum-exp. C scalars throughout; one Python
call per evaluation.
"""

from libc.math cimport INFINITY, NAN, copysign, exp, fabs, isnan, lgamma, log, log1p, sqrt

from ..errors import ConvergenceError

BACKEND = "compiled"

cdef double[15] XK = [
    -0.99145537112081264, -0.94910791234275852, -0.86486442335976907,
    -0.74153118559939444, -0.58608723546769113, -0.40584515137739717,
    -0.20778495500789847, 0.0, 0.20778495500789847, 0.40584515137739717,
    0.58608723546769113, 0.74153118559939444, 0.86486442335976907,
    0.94910791234275852, 0.99145537112081264,
]
cdef double[15] WK = [
    0.022935322010529225, 0.063092092629978553, 0.10479001032225018,
    0.14065325971552592, 0.16900472663926790, 0.19035057806478541,
    0.20443294007529889, 0.20948214108472783, 0.20443294007529889,
    0.19035057806478541, 0.16900472663926790, 0.14065325971552592,
    0.10479001032225018, 0.063092092629978553, 0.022935322010529225,
]
cdef double[7] WG = [
    0.12948496616886969, 0.27970539148927667, 0.38183005050511894,
    0.41795918367346939, 0.38183005050511894, 0.27970539148927667,
    0.12948496616886969,
]

cdef double DROP = 65.0
cdef double MAX_EXPAND = 1e9

cdef enum:
    MAXP = 2048
    MAXK = 96


cdef inline double _h(double v, double a, double ca, double b, double z) noexcept nogil:
    # ln t and ln(1-t) each computed directly from the softplus, never as a
    # difference with v; differencing would put ulp(v)-sized noise on the
    # tiny log, amplified by a huge a or c-a into visible integrand noise
    cdef double soft, lt, l1t, om
    if v >= 0.0:
        soft = log1p(exp(-v))
        lt = -soft
        l1t = -v - soft
    else:
        soft = log1p(exp(v))
        lt = v - soft
        l1t = -soft
    om = log((1.0 - z) + z * exp(l1t))
    return a * lt + ca * l1t - b * om


cdef inline double _hprime(double v, double a, double ca, double b, double z) noexcept nogil:
    cdef double t, omt, ev
    if v >= 0.0:
        ev = exp(-v)
        t = 1.0 / (1.0 + ev)
        omt = ev / (1.0 + ev)
    else:
        ev = exp(v)
        t = ev / (1.0 + ev)
        omt = 1.0 / (1.0 + ev)
    return a * omt - ca * t + b * z * t * omt / ((1.0 - z) + z * omt)


cdef double _mode(double a, double ca, double b, double z) noexcept nogil:
    # stationarity condition is z(c-b) t^2 - (c + z(a-b)) t + a = 0 with one
    # root in (0,1); closed form seeds a bisection on h'
    cdef double c = a + ca
    cdef double qa = z * (c - b)
    cdef double qb = -(c + z * (a - b))
    cdef double qc = a
    cdef double v0 = 0.0
    cdef double disc = qb * qb - 4.0 * qa * qc
    cdef double q, t1, t2
    if disc > 0.0:
        q = -0.5 * (qb + copysign(sqrt(disc), qb))
        t1 = q / qa if qa != 0.0 else INFINITY
        t2 = qc / q if q != 0.0 else INFINITY
        if 1e-12 < t1 < 1.0 - 1e-12:
            v0 = log(t1) - log1p(-t1)
        elif 1e-12 < t2 < 1.0 - 1e-12:
            v0 = log(t2) - log1p(-t2)
    cdef double lo = v0 - 2.0
    cdef double hi = v0 + 2.0
    cdef double span = 2.0
    cdef double mid
    while _hprime(lo, a, ca, b, z) <= 0.0:
        span *= 2.0
        lo = v0 - span
        if span > MAX_EXPAND:
            return v0
    span = 2.0
    while _hprime(hi, a, ca, b, z) >= 0.0:
        span *= 2.0
        hi = v0 + span
        if span > MAX_EXPAND:
            return v0
    cdef double scale
    while True:
        scale = 1.0
        if fabs(lo) > scale:
            scale = fabs(lo)
        if fabs(hi) > scale:
            scale = fabs(hi)
        if hi - lo <= 1e-8 * scale:
            break
        mid = 0.5 * (lo + hi)
        if _hprime(mid, a, ca, b, z) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


cdef double _expand(double vstar, double hstar, double direction,
                    double a, double ca, double b, double z) noexcept nogil:
    # doubling steps bracket the drop crossing; bisection then tightens the
    # window edge so narrow peaks are not buried inside huge panels
    cdef double target = hstar - DROP
    cdef double step = 1.0
    cdef double inner = vstar
    cdef double v = vstar + direction * step
    cdef double outer, mid
    cdef int i
    while _h(v, a, ca, b, z) > target:
        inner = v
        step *= 2.0
        v = vstar + direction * step
        if step > MAX_EXPAND:
            return NAN
    outer = v
    for i in range(60):
        if fabs(outer - inner) <= 0.05 * (fabs(outer - vstar) + 1e-12):
            break
        mid = 0.5 * (inner + outer)
        if mid == inner or mid == outer:
            break
        if _h(mid, a, ca, b, z) > target:
            inner = mid
        else:
            outer = mid
    return outer


cdef inline void _panel(double lo, double hi, double a, double ca, double b, double z,
                        double* lval, double* lerr) noexcept nogil:
    cdef double hw = 0.5 * (hi - lo)
    cdef double mid = 0.5 * (lo + hi)
    cdef double hv[15]
    cdef double m = -INFINITY
    cdef double k = 0.0
    cdef double g = 0.0
    cdef double e, err
    cdef int i
    for i in range(15):
        hv[i] = _h(mid + hw * XK[i], a, ca, b, z)
        if hv[i] > m:
            m = hv[i]
    if m == -INFINITY:
        lval[0] = -INFINITY
        lerr[0] = -INFINITY
        return
    for i in range(15):
        e = exp(hv[i] - m)
        k += WK[i] * e
        if i & 1:
            g += WG[i >> 1] * e
    err = fabs(k - g)
    if err < 1e-15 * k:
        err = 1e-15 * k
    lval[0] = m + log(k * hw)
    lerr[0] = m + log(err * hw)


def log_2f1_core(double a, double b, double c, double z,
                 double rel_tol=1e-11, int max_panels=1024):
    """ln 2F1(a, b; c; z) for 0 < a < c, 0 <= z < 1, any real b."""
    if z == 0.0 or b == 0.0:
        return 0.0
    cdef double ca = c - a
    cdef double vstar = _mode(a, ca, b, z)
    cdef double hstar = _h(vstar, a, ca, b, z)
    cdef double vlo = _expand(vstar, hstar, -1.0, a, ca, b, z)
    cdef double vhi = _expand(vstar, hstar, 1.0, a, ca, b, z)
    if isnan(vlo) or isnan(vhi):
        raise ConvergenceError("integrand window expansion failed")

    # uniform seed knots, the peak and its unit neighborhood, and (when a
    # window side spans many nats) a geometric ladder out from the peak so
    # initial panel widths track their distance from the mass
    cdef double[MAXK] knots
    cdef int nk = 0
    cdef int i, j
    cdef double v, key, direction, width, step
    for i in range(9):
        knots[nk] = vlo + (vhi - vlo) * i / 8.0
        nk += 1
    for i in range(3):
        v = vstar + (i - 1)
        if v < vlo:
            v = vlo
        if v > vhi:
            v = vhi
        knots[nk] = v
        nk += 1
    for i in range(2):
        direction = -1.0 if i == 0 else 1.0
        width = vstar - vlo if i == 0 else vhi - vstar
        if width > 8.0:
            step = 2.0
            while step < width and nk < MAXK:
                knots[nk] = vstar + direction * step
                nk += 1
                step *= 2.0
    for i in range(1, nk):
        key = knots[i]
        j = i - 1
        while j >= 0 and knots[j] > key:
            knots[j + 1] = knots[j]
            j -= 1
        knots[j + 1] = key

    cdef double[MAXP] los
    cdef double[MAXP] his
    cdef double[MAXP] lvals
    cdef double[MAXP] lerrs
    cdef int n = 0
    cdef double lv, le
    for i in range(nk - 1):
        if knots[i + 1] > knots[i]:
            _panel(knots[i], knots[i + 1], a, ca, b, z, &lv, &le)
            los[n] = knots[i]
            his[n] = knots[i + 1]
            lvals[n] = lv
            lerrs[n] = le
            n += 1

    cdef int cap = max_panels
    if cap > MAXP:
        cap = MAXP
    if cap < 16:
        cap = 16
    # Double precision cannot evaluate h to better absolute accuracy than
    # roughly eps times the raw magnitude of its terms (each log factor is
    # an O(1 + |v|) computation scaled by a possibly huge coefficient), so
    # the Kronrod error estimates bottom out there; demanding a tighter
    # relative tolerance would split panels forever without gaining digits.
    cdef double soft_s, lt_s, l1t_s, om_s, scale_s, eff_tol
    if vstar >= 0.0:
        soft_s = log1p(exp(-vstar))
        lt_s = -soft_s
        l1t_s = -vstar - soft_s
    else:
        soft_s = log1p(exp(vstar))
        lt_s = vstar - soft_s
        l1t_s = -soft_s
    om_s = log((1.0 - z) + z * exp(l1t_s))
    scale_s = (fabs(a * lt_s) + fabs(ca * l1t_s) + fabs(b * om_s)
               + (fabs(a) + fabs(ca) + fabs(b)) * (1.0 + fabs(vstar)))
    eff_tol = 8.0 * 2.220446049250313e-16 * (1.0 + scale_s)
    if eff_tol < rel_tol:
        eff_tol = rel_tol
    cdef double log_rel = log(eff_tol)
    cdef double m1, m2, s1, s2, total, seg_lo, seg_hi, mid
    cdef int worst
    while True:
        m1 = -INFINITY
        m2 = -INFINITY
        for i in range(n):
            if lvals[i] > m1:
                m1 = lvals[i]
            if lerrs[i] > m2:
                m2 = lerrs[i]
        if m1 == -INFINITY:
            raise ConvergenceError("2F1 integrand vanished on its window")
        s1 = 0.0
        for i in range(n):
            s1 += exp(lvals[i] - m1)
        total = m1 + log(s1)
        if m2 == -INFINITY:
            break
        s2 = 0.0
        for i in range(n):
            s2 += exp(lerrs[i] - m2)
        if m2 + log(s2) <= total + log_rel:
            break
        if n >= cap:
            raise ConvergenceError(
                f"2F1 quadrature did not reach rel_tol={rel_tol:g} "
                f"within {cap} panels"
            )
        worst = 0
        for i in range(1, n):
            if lerrs[i] > lerrs[worst]:
                worst = i
        seg_lo = los[worst]
        seg_hi = his[worst]
        mid = 0.5 * (seg_lo + seg_hi)
        _panel(seg_lo, mid, a, ca, b, z, &lv, &le)
        los[worst] = seg_lo
        his[worst] = mid
        lvals[worst] = lv
        lerrs[worst] = le
        _panel(mid, seg_hi, a, ca, b, z, &lv, &le)
        los[n] = mid
        his[n] = seg_hi
        lvals[n] = lv
        lerrs[n] = le
        n += 1

    return total - (lgamma(a) + lgamma(ca) - lgamma(c))
