"""Reference values for the analytic packet from direct momentum integrals.

Independent of the Faddeeva closed form: amplitudes and currents are obtained
by adaptive quadrature of the Fourier integral in extended precision.
Usage: python3 scripts/packet_oracle.py
"""
import mpmath as mp

mp.mp.dps = 30
ALPHA, DELTA, P0, X0, B = mp.mpf('1.4'), mp.mpf('0.007'), mp.mpf(1), mp.mpf('-0.22'), mp.mpf(300)
Q_HI = 1400


def amp_factor(q):
    return -mp.expm1(-ALPHA * q * q) * mp.exp(-DELTA**2 * (q - P0) ** 2)


def breaks():
    return [0, mp.mpf('0.25'), 1, 2, 4, 8, 16, 50, 100, 150, 200, 300, 400, 600, 900, Q_HI]


NORM = mp.quad(lambda q: amp_factor(q) ** 2, breaks())
C = 1 / mp.sqrt(NORM)


def psi(x, t, b=B, deriv=False):
    # <x|psi'(t)> = (2 pi)^-1/2 ∫ dp phi(p - b) exp(i p x - i p^2 t / 2)
    def f(q):
        p = q + b
        v = C * amp_factor(q) * mp.exp(-1j * q * X0 + 1j * p * x - 0.5j * p * p * t)
        return 1j * p * v if deriv else v
    return mp.quad(f, breaks()) / mp.sqrt(2 * mp.pi)


def flux(x, t, b=B):
    a = psi(x, t, b)
    d = psi(x, t, b, deriv=True)
    return mp.im(mp.conj(a) * d)


if __name__ == '__main__':
    print('C', mp.nstr(C, 20))
    for x, t in [(-0.22, 0.0), (-0.1, 3e-4), (0.0, 5e-4), (0.02, 7e-4), (-0.3, 1e-3)]:
        v = psi(mp.mpf(x), mp.mpf(t))
        print('psi', x, t, mp.nstr(v.real, 20), mp.nstr(v.imag, 20))
    for t in ['2e-4', '4e-4', '5.81e-4', '7.3e-4', '1e-3']:
        print('J0', t, mp.nstr(flux(0, mp.mpf(t)), 20))
    # flux zeros bracketing the backflow window
    for lo, hi in [('3.97e-4', '3.99e-4'), ('4.03e-4', '4.05e-4')]:
        r = mp.findroot(lambda t: flux(0, t), (mp.mpf(lo), mp.mpf(hi)), solver='anderson', tol=1e-18)
        print('zero', mp.nstr(r, 20))
