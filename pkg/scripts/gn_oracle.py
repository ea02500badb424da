"""Independent reference values for single-span GN coefficients.

Plain 3-D composite Gauss-Legendre with no closed-form inner integral. The x
panels are geometrically graded toward the ridge x = z - di and clipped
per y to the rect limits; y panels graded toward y = z - dj and the rect
kinks; z panels graded toward the z kinks. Two refinement levels are
compared to estimate the oracle's own error.

Usage: python3 scripts/gn_oracle.py 0,0,0 0,1,0 4,7,0   (di,dj,q per case)
"""
import sys
import time

import numpy as np
from subsea_capacity.gn import FiberSpec, single_span_coefficient

fib = FiberSpec()
df = 50e9
alpha, l, b2, g = fib.alpha, fib.span_length, fib.beta2, fib.gamma
K = 4*np.pi**2*abs(b2)*df**2
ea = np.exp(-alpha*l)

def rho(p):
    return (1 - 2*ea*np.cos(K*l*p) + ea*ea)/(alpha**2 + K**2*p**2)

HMAX = [0.5]
def graded(a, b, pts, h0, grow):
    e = list(np.linspace(a, b, int(np.ceil((b - a)/HMAX[0])) + 1))
    for p in pts:
        if a <= p <= b:
            e.append(p)
            h = h0
            while h < (b - a):
                e += [p - h, p + h]
                h *= grow
    e = np.unique(np.clip(e, a, b))
    return e

def coef(di, dj, q, h0, grow, n):
    xg, wg = np.polynomial.legendre.leggauss(n)
    def nodes(edges):
        a, b = edges[..., :-1], edges[..., 1:]
        x = 0.5*(b-a)[..., None]*xg + 0.5*(a+b)[..., None]
        w = 0.5*(b-a)[..., None]*wg * np.ones_like(x)
        return x.reshape(*x.shape[:-2], -1), w.reshape(*w.shape[:-2], -1)
    zb = [dj - .5, dj + .5, di - .5, di + .5] + [q + k*.5 for k in range(-3, 4)]
    zs, zw = nodes(graded(-.5, .5, zb, h0*10, grow))
    tot = 0.0
    for z, wz in zip(zs, zw):
        yb = [z - dj, z - q, z - q - 1, z - q + 1, di - q - .5 + 0*z, di - q + .5]
        ys, yw = nodes(graded(-.5, .5, yb, h0, grow))
        ex = graded(-.5, .5, [z - di], h0, grow)
        xl = np.maximum(-0.5, z - ys - q - 0.5); xh = np.minimum(0.5, z - ys - q + 0.5)
        E = np.clip(ex[None, :], xl[:, None], np.maximum(xl, xh)[:, None])
        # rect limits as panel edges so the indicator is integrated exactly
        E = np.sort(np.concatenate([E, xl[:, None], np.maximum(xl, xh)[:, None]], axis=1), axis=1)
        xs, xw = nodes(E)
        c = (ys + dj - z)[:, None]
        f = rho((xs + di - z)*c)
        tot += wz*np.sum(yw*np.sum(xw*f, axis=1))
    return 16/27*g**2*tot

if __name__ == "__main__":
    cases = [tuple(map(int, a.split(','))) for a in sys.argv[1:]]
    for (di, dj, q) in cases:
        t = time.time()
        HMAX[0] = 0.02
        r1 = coef(di, dj, q, 1e-4, 1.5, 6)
        HMAX[0] = 0.01
        r2 = coef(di, dj, q, 3e-5, 1.4, 8)
        v = single_span_coefficient(fib, df, di, dj, q, 16)
        print(di, dj, q, repr(r2), f'self {(r1-r2)/r2:.1e}', 'pkg', repr(v), f'{(v-r2)/r2:.2e}', f'{time.time()-t:.0f}s', flush=True)
