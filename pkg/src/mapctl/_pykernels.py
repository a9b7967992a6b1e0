"""Pure-Python event loops, used when the compiled extension is unavailable.

Each function mirrors its counterpart in ``_ckernels.pyx`` operation for
operation, so both backends produce bit-identical output from the same
uniforms.
"""
from math import log1p


def _pick(row, w, last):
    o = 0
    while o < last and w >= row[o]:
        o += 1
    return o


def run_inventory(cum_a, rate_a, last_a, cum_s, rate_s, last_s, thresholds, state,
                  u, acc, trace, guard):
    ma, ms = len(rate_a), len(rate_s)
    cum_a, cum_s = cum_a.tolist(), cum_s.tolist()
    rate_a, rate_s = rate_a.tolist(), rate_s.tolist()
    last_a, last_s = last_a.tolist(), last_s.tolist()
    z = thresholds.tolist()
    uu = u.tolist()
    n = len(uu) // 2
    record = trace.shape[0] > 0
    x, ja, js = (int(v) for v in state)
    t_sum, pos, neg, out, clock = (float(v) for v in acc)
    done = n
    for i in range(n):
        ra = rate_a[ja]
        rs = rate_s[js] if x < z[ja * ms + js] else 0.0
        tot = ra + rs
        dt = -log1p(-uu[2 * i]) / tot
        t_sum += dt
        clock += dt
        if x > 0:
            pos += x * dt
        elif x < 0:
            neg += -x * dt
            out += dt
        v = uu[2 * i + 1] * tot
        if v < ra:
            o = _pick(cum_a[ja], v / ra, last_a[ja])
            if o >= ma:
                x -= 1
                ja = o - ma
                ev = 1.0
            else:
                ja = o
                ev = 0.0
        else:
            o = _pick(cum_s[js], (v - ra) / rs, last_s[js])
            if o >= ms:
                x += 1
                js = o - ms
                ev = 3.0
            else:
                js = o
                ev = 2.0
        if record:
            trace[i] = (clock, ev, x, ja, js)
        if x < -guard:
            done = -(i + 1)
            break
    state[:] = (x, ja, js)
    acc[:] = (t_sum, pos, neg, out, clock)
    return done


def map_path(cum, rate, last, state, elapsed, u, out, n_out):
    m = len(rate)
    cum, rate, last = cum.tolist(), rate.tolist(), last.tolist()
    uu = u.tolist()
    n = len(uu) // 2
    cap = len(out)
    p = int(state[0])
    el = float(elapsed[0])
    i = 0
    while i < n and n_out < cap:
        el += -log1p(-uu[2 * i]) / rate[p]
        o = _pick(cum[p], uu[2 * i + 1], last[p])
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
