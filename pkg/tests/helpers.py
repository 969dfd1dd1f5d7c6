"""Shared test oracles: finite differences and complex multiset matching."""

import numpy as np


def fd_gradient(f, x, h=1e-6):
    """Central-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return out


def fd_hessian(f, x, h=1e-4):
    """Second central differences; step chosen for second-order accuracy."""
    x = np.asarray(x, dtype=float)
    n = x.size
    out = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        out[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / (h * h)
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            mixed = (f(x + ei + ej) - f(x + ei - ej)
                     - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h * h)
            out[i, j] = mixed
            out[j, i] = mixed
    return out


def assert_complex_multisets_close(actual, expected, tol):
    """Greedy nearest-neighbour matching of two complex multisets."""
    actual = [complex(z) for z in actual]
    expected = [complex(z) for z in expected]
    assert len(actual) == len(expected), (actual, expected)
    remaining = list(expected)
    for z in actual:
        gaps = [abs(w - z) for w in remaining]
        best = int(np.argmin(gaps))
        assert gaps[best] <= tol, (z, remaining, gaps[best], tol)
        remaining.pop(best)
