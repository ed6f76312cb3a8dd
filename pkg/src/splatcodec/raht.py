"""Region-adaptive hierarchical transform over octree leaf sets.

The transform runs bottom-up: at every level, sibling nodes are merged
along x, then y, then z with an orthonormal butterfly weighted by the
point counts underneath, so constant signals collapse into a single DC
coefficient. The pairing structure depends only on the geometry, so one
plan is reused across all attribute channels of a point set.

Variable-depth leaves participate as unit-weight points at their
center-representative coordinate on the full-resolution grid; they simply
stay unpaired until the traversal reaches their own depth.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._morton import morton3


@dataclass
class RahtCoefficients:
    """Transform output for one channel, in serialization order.

    Order: DC first, then AC coefficients level by level from the top of
    the tree down, within a level by merge step z, y, x, within a step by
    Morton code of the merged node. weights holds the accumulated point
    count behind each coefficient.
    """

    values: np.ndarray
    weights: np.ndarray


class RahtPlan:
    """Precomputed butterfly schedule for one leaf geometry."""

    def __init__(self, coords, max_depth):
        coords = np.asarray(coords, dtype=np.int64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError("coords must have shape (n, 3)")
        max_depth = int(max_depth)
        if coords.size and coords.max() >= (1 << max_depth):
            raise ValueError("coordinate exceeds the depth-%d grid"
                             % max_depth)
        n = coords.shape[0]
        self.count = n
        self.max_depth = max_depth
        codes = morton3(coords)
        if np.unique(codes).size != n:
            raise ValueError("duplicate coordinates")
        order = np.argsort(codes, kind="stable")
        cur = coords[order].copy()
        slots = order.copy()
        weights = np.ones(n, dtype=np.int64)
        # steps[i] = (idx1, idx2, r1, r2); ac_by_step collects the AC slot
        # list of each (level, axis) merge pass for serialization
        self._steps = []
        ac_by_step = []
        ac_weights = np.zeros(n, dtype=np.int64)
        for _level in range(max_depth, 0, -1):
            for axis in (0, 1, 2):
                if cur.shape[0] > 1:
                    reduced = cur.copy()
                    reduced[:, axis] >>= 1
                    key = morton3(reduced)
                    srt = np.lexsort((cur[:, axis] & 1, key))
                    ks = key[srt]
                    first = np.flatnonzero(ks[1:] == ks[:-1])
                    i1 = srt[first]
                    i2 = srt[first + 1]
                    w1 = weights[i1].astype(np.float64)
                    w2 = weights[i2].astype(np.float64)
                    tot = w1 + w2
                    self._steps.append(
                        (
                            slots[i1],
                            slots[i2],
                            np.sqrt(w1 / tot),
                            np.sqrt(w2 / tot),
                        )
                    )
                    ac_by_step.append(slots[i2])
                    ac_weights[slots[i2]] = weights[i1] + weights[i2]
                    weights[i1] += weights[i2]
                    keep = np.ones(cur.shape[0], dtype=bool)
                    keep[i2] = False
                    cur = cur[keep]
                    slots = slots[keep]
                    weights = weights[keep]
                else:
                    self._steps.append(None)
                    ac_by_step.append(np.zeros(0, dtype=np.int64))
                cur[:, axis] >>= 1
        # serialization order: DC slot, then levels top-down with the
        # z, y, x passes of each level coarse-to-fine
        emit = [slots[:1].astype(np.int64)] if n else \
            [np.zeros(0, dtype=np.int64)]
        for level_idx in range(max_depth - 1, -1, -1):
            for step_idx in (2, 1, 0):
                emit.append(ac_by_step[3 * level_idx + step_idx])
        self._emit = np.concatenate(emit)
        self.weights = np.zeros(n, dtype=np.int64)
        if n:
            ac_weights[slots[0]] = n
            self.weights = ac_weights[self._emit]

    def forward(self, values):
        """Transform one channel (n,) or a channel stack (n, c)."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != self.count:
            raise ValueError("value count does not match the plan")
        v = values.copy()
        for step in self._steps:
            if step is None:
                continue
            i1, i2, r1, r2 = step
            if v.ndim > 1:
                r1 = r1[:, None]
                r2 = r2[:, None]
            a1 = v[i1]
            a2 = v[i2]
            v[i1] = r1 * a1 + r2 * a2
            v[i2] = r1 * a2 - r2 * a1
        return v[self._emit]

    def inverse(self, coeffs):
        """Exact inverse of forward (same shape conventions)."""
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape[0] != self.count:
            raise ValueError("coefficient count does not match the plan")
        v = np.empty_like(coeffs)
        v[self._emit] = coeffs
        for step in reversed(self._steps):
            if step is None:
                continue
            i1, i2, r1, r2 = step
            if v.ndim > 1:
                r1 = r1[:, None]
                r2 = r2[:, None]
            dc = v[i1]
            ac = v[i2]
            v[i1] = r1 * dc - r2 * ac
            v[i2] = r2 * dc + r1 * ac
        return v


def raht_forward(coords, max_depth, values):
    """One-shot forward transform; returns RahtCoefficients."""
    plan = RahtPlan(coords, max_depth)
    return RahtCoefficients(values=plan.forward(values),
                            weights=plan.weights)


def raht_inverse(coeffs, coords, max_depth):
    """One-shot inverse transform from RahtCoefficients or an array."""
    plan = RahtPlan(coords, max_depth)
    values = coeffs.values if isinstance(coeffs, RahtCoefficients) \
        else coeffs
    return plan.inverse(values)


def quantize(coeffs, step):
    """Uniform scalar quantization, ties away from zero.

    An infinite step maps everything to zero (used to drop a band).
    """
    if not step > 0:
        raise ValueError("quantization step must be positive")
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if math.isinf(step):
        return np.zeros(coeffs.shape, dtype=np.int64)
    return (np.sign(coeffs) * np.floor(np.abs(coeffs) / step + 0.5)) \
        .astype(np.int64)


def dequantize(q, step):
    """Midpoint reconstruction q * step; zero for an infinite step."""
    if not step > 0:
        raise ValueError("quantization step must be positive")
    q = np.asarray(q)
    if math.isinf(step):
        return np.zeros(q.shape, dtype=np.float64)
    return q.astype(np.float64) * step
