# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loops.  Must stay arithmetically identical to _pykernels."""
from libc.math cimport log1p


cdef inline Py_ssize_t _pick(const double[:, ::1] cum, Py_ssize_t row, double w,
                             Py_ssize_t last) noexcept nogil:
    cdef Py_ssize_t o = 0
    while o < last and w >= cum[row, o]:
        o += 1
    return o


def run_inventory(const double[:, ::1] cum_a, const double[::1] rate_a,
                  const Py_ssize_t[::1] last_a,
                  const double[:, ::1] cum_s, const double[::1] rate_s,
                  const Py_ssize_t[::1] last_s,
                  const long long[::1] thresholds, long long[::1] state,
                  const double[::1] u, double[::1] acc, double[:, ::1] trace,
                  long long guard):
    """Advance the controlled chain by ``len(u) // 2`` events.

    Returns the number of events done, negated if the backlog guard tripped.
    """
    cdef Py_ssize_t ma = rate_a.shape[0]
    cdef Py_ssize_t ms = rate_s.shape[0]
    cdef Py_ssize_t n = u.shape[0] // 2
    cdef bint record = trace.shape[0] > 0
    cdef long long x = state[0]
    cdef Py_ssize_t ja = state[1], js = state[2], o, i
    cdef double ra, rs, tot, dt, v, ev
    cdef double t_sum = acc[0], pos = acc[1], neg = acc[2], out = acc[3], clock = acc[4]
    cdef Py_ssize_t done = n
    with nogil:
        for i in range(n):
            ra = rate_a[ja]
            if x < thresholds[ja * ms + js]:
                rs = rate_s[js]
            else:
                rs = 0.0
            tot = ra + rs
            dt = -log1p(-u[2 * i]) / tot
            t_sum += dt
            clock += dt
            if x > 0:
                pos += x * dt
            elif x < 0:
                neg += -x * dt
                out += dt
            v = u[2 * i + 1] * tot
            if v < ra:
                o = _pick(cum_a, ja, v / ra, last_a[ja])
                if o >= ma:
                    x -= 1
                    ja = o - ma
                    ev = 1.0
                else:
                    ja = o
                    ev = 0.0
            else:
                o = _pick(cum_s, js, (v - ra) / rs, last_s[js])
                if o >= ms:
                    x += 1
                    js = o - ms
                    ev = 3.0
                else:
                    js = o
                    ev = 2.0
            if record:
                trace[i, 0] = clock
                trace[i, 1] = ev
                trace[i, 2] = x
                trace[i, 3] = ja
                trace[i, 4] = js
            if x < -guard:
                done = -(i + 1)
                break
    state[0] = x
    state[1] = ja
    state[2] = js
    acc[0] = t_sum
    acc[1] = pos
    acc[2] = neg
    acc[3] = out
    acc[4] = clock
    return done


def map_path(const double[:, ::1] cum, const double[::1] rate, const Py_ssize_t[::1] last,
             long long[::1] state, double[::1] elapsed, const double[::1] u,
             double[::1] out, Py_ssize_t n_out):
    """Simulate phase transitions, writing inter-event times into ``out[n_out:]``.

    Returns ``(pairs_used, n_out)``; stops when ``u`` or ``out`` is exhausted.
    """
    cdef Py_ssize_t m = rate.shape[0]
    cdef Py_ssize_t n = u.shape[0] // 2
    cdef Py_ssize_t cap = out.shape[0]
    cdef Py_ssize_t p = state[0], o, i = 0
    cdef double el = elapsed[0]
    with nogil:
        while i < n and n_out < cap:
            el += -log1p(-u[2 * i]) / rate[p]
            o = _pick(cum, p, u[2 * i + 1], last[p])
            if o >= m:
                out[n_out] = el
                n_out += 1
                el = 0.0
                p = o - m
            else:
                p = o
            i += 1
    state[0] = p
    elapsed[0] = el
    return i, n_out
