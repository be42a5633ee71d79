"""Small polynomial helpers shared by several modules."""

import numpy as np


def companion_roots(coeffs):
    """Roots of a polynomial (descending coefficients) via its companion matrix."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "f")
    if c.size <= 1:
        return np.empty(0, dtype=complex)
    c = c / c[0]
    n = c.size - 1
    comp = np.zeros((n, n))
    comp[0, :] = -c[1:]
    comp[1:, :-1] = np.eye(n - 1)
    return np.linalg.eigvals(comp).astype(complex)


def polish_real_root(coeffs, x, steps=3):
    """A few guarded Newton steps on a real root estimate."""
    p = np.asarray(coeffs, dtype=float)
    dp = np.polyder(p)
    best, fbest = x, abs(np.polyval(p, x))
    for _ in range(steps):
        d = np.polyval(dp, x)
        if d == 0.0:
            break
        x = x - np.polyval(p, x) / d
        fx = abs(np.polyval(p, x))
        if fx < fbest:
            best, fbest = x, fx
    return float(best)


def real_roots(coeffs, imag_tol=1e-9, polish=True):
    """Real roots, sorted ascending.

    A root is accepted as real when ``|Im z| <= imag_tol * (1 + |z|)``.
    """
    out = []
    for z in companion_roots(coeffs):
        if abs(z.imag) <= imag_tol * (1.0 + abs(z)):
            x = float(z.real)
            out.append(polish_real_root(coeffs, x) if polish else x)
    return sorted(out)


def cluster_roots(roots, tol=1e-6):
    """Group nearly equal real roots; returns ``[(value, multiplicity), ...]``."""
    groups = []
    for x in sorted(roots):
        if groups and abs(x - groups[-1][-1]) <= tol * (1.0 + abs(x)):
            groups[-1].append(x)
        else:
            groups.append([x])
    return [(float(np.mean(g)), len(g)) for g in groups]
