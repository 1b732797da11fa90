"""Reference values of the Faddeeva function w(z) = exp(-z^2) erfc(-iz).

Computed with mpmath at 50 significant digits. Output columns:
Re z, Im z, Re w, Im w (17 significant digits).
"""
import sys

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def w(z):
    z = mp.mpc(z)
    return mp.exp(-z * z) * mp.erfc(-1j * z)


def grid():
    pts = []
    # polar rings, upper and lower half-plane down to Im z = -26
    for r in [1e-6, 1e-3, 0.05, 0.3, 0.7, 1.0, 1.5, 2.0, 3.0, 4.0, 5.5, 7.0, 7.99, 8.01,
              10.0, 15.0, 25.0, 26.0, 60.0, 300.0, 2e3, 1e4]:
        for th in np.linspace(-np.pi, np.pi, 49)[:-1]:
            z = r * np.exp(1j * th)
            if z.imag >= -26.0:
                pts.append(z)
    # near and on the real axis
    for x in np.linspace(-12.0, 12.0, 97):
        for y in [0.0, 1e-10, 1e-4, 0.01, 0.5, -0.01, -0.5, -2.0, -5.0]:
            pts.append(complex(x, y))
    # the imaginary axis
    for y in [-26.0, -20.0, -10.0, -3.0, -1.0, 1.0, 3.0, 10.0, 100.0, 1e4]:
        pts.append(complex(0.0, y))
    # arguments hit by the wave-packet formulas
    for x in np.linspace(-40.0, 40.0, 81):
        for y in [-0.007, -0.05, -1.2]:
            pts.append(complex(x, y))
    rng = np.random.default_rng(20240917)
    while len(pts) < 2600:
        r = 10 ** rng.uniform(-3, 4)
        th = rng.uniform(-np.pi, np.pi)
        z = r * np.exp(1j * th)
        if z.imag >= -26.0:
            pts.append(z)
    return pts


def main(out):
    with open(out, "w") as fh:
        fh.write("# Faddeeva function reference grid, mpmath dps=50\n")
        fh.write("# re_z im_z re_w im_w\n")
        for z in grid():
            v = w(z)
            fh.write("%.17e %.17e %.17e %.17e\n" % (z.real, z.imag,
                                                   float(v.real), float(v.imag)))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "faddeeva_grid.txt")
