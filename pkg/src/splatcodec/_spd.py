"""Eigensystems and matrix roots for symmetric 3x3 matrices.

Everything here is specialized to the 3x3 case: eigenvalues come from the
characteristic polynomial in trigonometric form, eigenvectors from cross
products of the shifted rows, and a cyclic Jacobi sweep serves as the
fallback whenever the closed form loses accuracy (near-degenerate spectra).
"""

import numpy as np

# relative spectral-gap / residual tolerance for trusting the closed form
_TOL = 1e-10

_TWO_PI_3 = 2.0 * np.pi / 3.0


def eigvals3(a):
    """Eigenvalues of a symmetric 3x3 matrix, ascending."""
    a = np.asarray(a, dtype=np.float64)
    p1 = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    if p1 == 0.0:
        return np.sort(np.diagonal(a))
    q = (a[0, 0] + a[1, 1] + a[2, 2]) / 3.0
    p2 = (
        (a[0, 0] - q) ** 2
        + (a[1, 1] - q) ** 2
        + (a[2, 2] - q) ** 2
        + 2.0 * p1
    )
    p = np.sqrt(p2 / 6.0)
    b = (a - q * np.eye(3)) / p
    r = np.linalg.det(b) / 2.0
    r = min(1.0, max(-1.0, r))
    phi = np.arccos(r) / 3.0
    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + _TWO_PI_3)
    return np.array([lo, 3.0 * q - hi - lo, hi])


def _jacobi3(a):
    """Cyclic Jacobi diagonalization; returns (eigvals asc, column vectors)."""
    a = np.array(a, dtype=np.float64)
    v = np.eye(3)
    for _ in range(64):
        off = abs(a[0, 1]) + abs(a[0, 2]) + abs(a[1, 2])
        if off == 0.0:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if apq == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
            if theta == 0.0:
                t = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            v = v @ rot
    order = np.argsort(np.diagonal(a))
    return np.diagonal(a)[order].copy(), v[:, order]


def _cross_eigvec(a, lam):
    """Eigenvector of a for eigenvalue lam, or None when ill-determined."""
    m = a - lam * np.eye(3)
    cands = np.stack(
        [
            np.cross(m[0], m[1]),
            np.cross(m[0], m[2]),
            np.cross(m[1], m[2]),
        ]
    )
    norms = np.linalg.norm(cands, axis=1)
    best = int(np.argmax(norms))
    if norms[best] < 1e-20:
        return None
    return cands[best] / norms[best]


def sym_eig3(a):
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns).

    The closed form handles the well-separated bulk; a Jacobi fallback
    covers repeated or nearly repeated eigenvalues.
    """
    a = np.asarray(a, dtype=np.float64)
    scale = np.abs(a).max()
    if scale == 0.0:
        return np.zeros(3), np.eye(3)
    an = a / scale
    if an[0, 1] == 0.0 and an[0, 2] == 0.0 and an[1, 2] == 0.0:
        d = np.diagonal(an)
        order = np.argsort(d)
        return d[order] * scale, np.eye(3)[:, order]
    w = eigvals3(an)
    ref = max(1.0, abs(w[0]), abs(w[2]))
    if w[2] - w[0] <= _TOL * ref or w[1] - w[0] <= _TOL * ref \
            or w[2] - w[1] <= _TOL * ref:
        w, v = _jacobi3(an)
        return w * scale, v
    v0 = _cross_eigvec(an, w[0])
    v2 = _cross_eigvec(an, w[2])
    if v0 is None or v2 is None:
        w, v = _jacobi3(an)
        return w * scale, v
    v2 = v2 - v0 * (v0 @ v2)
    n2 = np.linalg.norm(v2)
    if n2 < 1e-8:
        w, v = _jacobi3(an)
        return w * scale, v
    v2 /= n2
    v1 = np.cross(v2, v0)
    v = np.column_stack([v0, v1, v2])
    if np.abs(an @ v - v * w).max() > _TOL * ref:
        w, v = _jacobi3(an)
    return w * scale, v


def check_psd(a, name="matrix"):
    """Validate symmetric PSD and return the clamped symmetric part."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (3, 3):
        raise ValueError("%s must be 3x3" % name)
    scale = max(1.0, np.abs(a).max())
    if np.abs(a - a.T).max() > 1e-9 * scale:
        raise ValueError("%s is not symmetric" % name)
    a = 0.5 * (a + a.T)
    if eigvals3(a)[0] < -1e-12 * scale:
        raise ValueError("%s is not positive semidefinite" % name)
    return a


def spd_sqrt(a):
    """Principal square root of a symmetric PSD 3x3 matrix."""
    w, v = sym_eig3(a)
    root = v * np.sqrt(np.maximum(w, 0.0))
    out = root @ v.T
    return 0.5 * (out + out.T)


def spd_inv_sqrt(a):
    """Inverse square root; requires a (numerically) positive definite."""
    w, v = sym_eig3(a)
    if w[0] <= 1e-14 * max(w[2], 1e-300):
        raise ValueError("matrix is singular; inverse square root undefined")
    root = v / np.sqrt(w)
    out = root @ v.T
    return 0.5 * (out + out.T)
