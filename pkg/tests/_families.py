"""Random test families shared by the unit and acceptance suites."""

import numpy as np

from lagrangian_euler.fields import get_grid


def gaussian_packet(rng: np.random.Generator):
    """Gaussian envelope with a mild plane-wave modulation, centred near the origin."""
    c = rng.uniform(-0.25, 0.25, 3)
    s = rng.uniform(0.9, 1.1)
    k = rng.uniform(-1.0, 1.0, 3)
    a = rng.uniform(-0.3, 0.3)

    def f(x, y, z):
        r2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
        return np.exp(-r2 / (2 * s * s)) * (1 + a * np.sin(k[0] * x + k[1] * y + k[2] * z))

    return f


def gaussian(width: float = 1.0):
    return lambda x, y, z: np.exp(-(x * x + y * y + z * z) / (2 * width * width))


def tilted_gaussian(x, y, z):
    """Anisotropic bump; an isotropic one is invisible to a shear."""
    return np.exp(-(x * x + y * y + z * z + 0.8 * x * y) / 2) * (1 + 0.2 * x)


def shear_family(rate: float = 0.3):
    """y(s)(p) = p + s * (rate * p2, 0, 0) and its generator."""

    def y_map(s, p):
        out = p.copy()
        out[0] = p[0] + s * rate * p[1]
        return out

    def velocity(x):
        return np.stack([rate * x[1], np.zeros_like(x[0]), np.zeros_like(x[0])])

    return y_map, velocity


def trig_product_pair(n: int, rng: np.random.Generator):
    """Two random low-mode trigonometric fields on the torus."""
    lam = get_grid(n).points
    out = []
    for _ in range(2):
        k = rng.integers(-2, 3, (2, 3))
        ph = rng.uniform(0, 2 * np.pi, 2)
        out.append(1.0 + 0.5 * np.cos(np.tensordot(k[0], lam, 1) + ph[0]) + 0.3 * np.sin(np.tensordot(k[1], lam, 1) + ph[1]))
    return out
