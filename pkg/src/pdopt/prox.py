"""Proximal operators with diagonal metrics and their conjugate machinery.

Every function here knows three things: its value, its prox under a
diagonal metric diag(d) (the minimizer of phi(y) + 1/2 * sum d_i (y_i-v_i)^2),
and its convex conjugate's value.  Proxes of conjugates are derived through
the generalized Moreau identity (``conj_prox``) instead of being hand-coded,
except for the scalar fast paths used inside block-coordinate sweeps
(``conj_prox_scalar``).
"""

import numpy as np


class UnsupportedMetricError(ValueError):
    """Metric not constant within a coupled group of coordinates."""


class UnsupportedKindError(ValueError):
    """Requested closed form not available for this function kind."""


def _as_diag(d, n):
    d = np.asarray(d, dtype=float)
    if d.ndim == 0:
        d = np.full(n, float(d))
    if np.any(d <= 0):
        raise ValueError("diagonal metric must be strictly positive")
    return d


class ProxFunction:
    """Base class for a closed proper convex function with a known prox."""

    dim = 0

    def value(self, x):
        raise NotImplementedError

    def prox(self, v, d):
        """Minimizer of value(y) + 1/2 ||y - v||^2_diag(d)."""
        raise NotImplementedError

    def conjugate_value(self, y, feas_tol=1e-8):
        raise NotImplementedError

    def conj_prox_scalar(self, v, t, idx):
        """Closed-form prox of the conjugate, coordinatewise.

        Returns argmin_z  (this function's conjugate at z) restricted to
        coordinates ``idx``, plus 1/(2 t_i) (z_i - v_i)^2.  Only kinds whose
        conjugate prox decouples per scalar coordinate support this.
        """
        raise UnsupportedKindError(
            f"{type(self).__name__} has no scalar conjugate prox; "
            "use a gradient-based inner solver")

    def conj_residual(self, z, s):
        """Minimal-norm eps with -eps in  (subdifferential of conjugate at z) + s."""
        raise UnsupportedKindError(
            f"{type(self).__name__} has no closed-form conjugate subdifferential")


class Zero(ProxFunction):
    """The zero function."""

    def __init__(self, dim):
        self.dim = dim

    def value(self, x):
        return 0.0

    def prox(self, v, d):
        return np.asarray(v, dtype=float).copy()

    def conjugate_value(self, y, feas_tol=1e-8):
        y = np.asarray(y, dtype=float)
        return 0.0 if np.linalg.norm(y, np.inf) <= feas_tol else np.inf

    def conj_residual(self, z, s):
        # conjugate is the indicator of {0}; its subdifferential at 0 is all
        # of R^m, so the residual vanishes whenever z is (numerically) zero
        z = np.asarray(z, dtype=float)
        if np.linalg.norm(z, np.inf) > 1e-8:
            raise UnsupportedKindError("conjugate of Zero evaluated off its domain")
        return np.zeros_like(np.asarray(s, dtype=float))


class L1(ProxFunction):
    """lam * ||x - shift||_1."""

    def __init__(self, dim, lam=1.0, shift=None):
        if lam <= 0:
            raise ValueError("lam must be positive")
        self.dim = dim
        self.lam = float(lam)
        self.shift = np.zeros(dim) if shift is None else np.asarray(shift, dtype=float).ravel()

    def value(self, x):
        return self.lam * float(np.sum(np.abs(np.asarray(x) - self.shift)))

    def prox(self, v, d):
        v = np.asarray(v, dtype=float)
        d = _as_diag(d, self.dim)
        w = v - self.shift
        thr = self.lam / d
        return self.shift + np.sign(w) * np.maximum(np.abs(w) - thr, 0.0)

    def conjugate_value(self, y, feas_tol=1e-8):
        y = np.asarray(y, dtype=float)
        if np.max(np.abs(y)) > self.lam + feas_tol:
            return np.inf
        return float(y @ self.shift)

    def conj_prox_scalar(self, v, t, idx):
        # conjugate: <z, shift> + indicator(|z| <= lam)
        return np.clip(v - t * self.shift[idx], -self.lam, self.lam)

    def conj_residual(self, z, s):
        z = np.asarray(z, dtype=float)
        s = np.asarray(s, dtype=float)
        c = -s - self.shift
        tol = 1e-9 * (1.0 + self.lam)
        eps = c.copy()
        at_hi = z >= self.lam - tol
        at_lo = z <= -self.lam + tol
        eps[at_hi & (c > 0)] = 0.0
        eps[at_lo & (c < 0)] = 0.0
        return eps


class GroupL12(ProxFunction):
    """lam * sum of euclidean norms over fixed coordinate groups."""

    def __init__(self, dim, groups, lam=1.0):
        groups = np.asarray(groups, dtype=int)
        if groups.ndim != 2:
            raise ValueError("groups must be a (num_groups, group_size) index array")
        flat = np.sort(groups.ravel())
        if flat.size != dim or not np.array_equal(flat, np.arange(dim)):
            raise ValueError("groups must partition the coordinate set")
        self.dim = dim
        self.groups = groups
        self.lam = float(lam)

    def _group_norms(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float)[self.groups], axis=1)

    def value(self, x):
        return self.lam * float(np.sum(self._group_norms(x)))

    def prox(self, v, d):
        v = np.asarray(v, dtype=float)
        d = _as_diag(d, self.dim)
        dg = d[self.groups]
        if np.max(np.abs(dg - dg[:, :1])) > 1e-12 * (1.0 + np.max(dg)):
            raise UnsupportedMetricError(
                "group shrinkage needs a metric constant within each group")
        vg = v[self.groups]
        norms = np.linalg.norm(vg, axis=1)
        scale = np.zeros_like(norms)
        nz = norms > 0
        scale[nz] = np.maximum(0.0, 1.0 - self.lam / (dg[nz, 0] * norms[nz]))
        out = np.empty_like(v)
        out[self.groups] = vg * scale[:, None]
        return out

    def conjugate_value(self, y, feas_tol=1e-8):
        if np.max(self._group_norms(y), initial=0.0) > self.lam + feas_tol:
            return np.inf
        return 0.0


class BoxIndicator(ProxFunction):
    """Indicator of the box [lo, hi]^dim."""

    def __init__(self, dim, lo=0.0, hi=1.0):
        if not lo <= hi:
            raise ValueError("need lo <= hi")
        self.dim = dim
        self.lo = float(lo)
        self.hi = float(hi)

    def value(self, x, feas_tol=1e-8):
        x = np.asarray(x, dtype=float)
        ok = np.all(x >= self.lo - feas_tol) and np.all(x <= self.hi + feas_tol)
        return 0.0 if ok else np.inf

    def prox(self, v, d):
        return np.clip(np.asarray(v, dtype=float), self.lo, self.hi)

    def conjugate_value(self, y, feas_tol=1e-8):
        y = np.asarray(y, dtype=float)
        return float(np.sum(np.maximum(y * self.hi, y * self.lo)))

    def conj_residual(self, z, s):
        # conjugate is the box support function; its subdifferential is the
        # maximizing face of the box
        z = np.asarray(z, dtype=float)
        s = np.asarray(s, dtype=float)
        scale = max(abs(self.lo), abs(self.hi), 1.0)
        tol = 1e-9 * scale
        eps = np.where(z > tol, -(s + self.hi), np.where(z < -tol, -(s + self.lo), 0.0))
        zero = np.abs(z) <= tol
        lo_t, hi_t = -s[zero] - self.hi, -s[zero] - self.lo
        eps[zero] = np.where(hi_t < 0, hi_t, np.where(lo_t > 0, lo_t, 0.0))
        return eps


class LinearPlusBox(ProxFunction):
    """<c, x> plus the indicator of [lo, hi]^dim."""

    def __init__(self, dim, c, lo=0.0, hi=1.0):
        self.dim = dim
        self.c = np.asarray(c, dtype=float).ravel()
        self.lo = float(lo)
        self.hi = float(hi)

    def value(self, x, feas_tol=1e-8):
        x = np.asarray(x, dtype=float)
        ok = np.all(x >= self.lo - feas_tol) and np.all(x <= self.hi + feas_tol)
        return float(self.c @ x) if ok else np.inf

    def prox(self, v, d):
        v = np.asarray(v, dtype=float)
        d = _as_diag(d, self.dim)
        return np.clip(v - self.c / d, self.lo, self.hi)

    def conjugate_value(self, y, feas_tol=1e-8):
        w = np.asarray(y, dtype=float) - self.c
        return float(np.sum(np.maximum(w * self.hi, w * self.lo)))


class PointIndicator(ProxFunction):
    """Indicator of a single point; its conjugate is linear."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float).ravel()
        self.dim = self.target.size

    def value(self, x, feas_tol=1e-8):
        x = np.asarray(x, dtype=float)
        return 0.0 if np.linalg.norm(x - self.target, np.inf) <= feas_tol else np.inf

    def prox(self, v, d):
        return self.target.copy()

    def conjugate_value(self, y, feas_tol=1e-8):
        return float(np.asarray(y, dtype=float) @ self.target)

    def conj_prox_scalar(self, v, t, idx):
        return v - t * self.target[idx]

    def conj_residual(self, z, s):
        return -(np.asarray(s, dtype=float) + self.target)


class Quadratic(ProxFunction):
    """(weight / 2) * ||x - center||^2."""

    def __init__(self, dim, weight=1.0, center=None):
        if weight <= 0:
            raise ValueError("weight must be positive")
        self.dim = dim
        self.weight = float(weight)
        self.center = np.zeros(dim) if center is None else np.asarray(center, dtype=float).ravel()

    def value(self, x):
        r = np.asarray(x, dtype=float) - self.center
        return 0.5 * self.weight * float(r @ r)

    def prox(self, v, d):
        v = np.asarray(v, dtype=float)
        d = _as_diag(d, self.dim)
        return (d * v + self.weight * self.center) / (d + self.weight)

    def conjugate_value(self, y, feas_tol=1e-8):
        y = np.asarray(y, dtype=float)
        return float(y @ y) / (2.0 * self.weight) + float(y @ self.center)

    def conj_prox_scalar(self, v, t, idx):
        # conjugate: ||z||^2/(2w) + <z, center>
        return self.weight * (v - t * self.center[idx]) / (self.weight + t)

    def conj_residual(self, z, s):
        z = np.asarray(z, dtype=float)
        return -(z / self.weight + self.center + np.asarray(s, dtype=float))


class Concat(ProxFunction):
    """Sum of functions acting on consecutive coordinate slices."""

    def __init__(self, parts):
        self.parts = list(parts)
        self.offsets = np.cumsum([0] + [p.dim for p in self.parts])
        self.dim = int(self.offsets[-1])

    def _slices(self):
        return [(p, slice(lo, hi)) for p, lo, hi in
                zip(self.parts, self.offsets, self.offsets[1:])]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(sum(p.value(x[sl]) for p, sl in self._slices()))

    def prox(self, v, d):
        v = np.asarray(v, dtype=float)
        d = _as_diag(d, self.dim)
        out = np.empty(self.dim)
        for p, sl in self._slices():
            out[sl] = p.prox(v[sl], d[sl])
        return out

    def conjugate_value(self, y, feas_tol=1e-8):
        y = np.asarray(y, dtype=float)
        return float(sum(p.conjugate_value(y[sl], feas_tol) for p, sl in self._slices()))

    def conj_prox_scalar(self, v, t, idx):
        idx = np.asarray(idx, dtype=int)
        out = np.empty(idx.size)
        for p, sl in self._slices():
            mask = (idx >= sl.start) & (idx < sl.stop)
            if np.any(mask):
                out[mask] = p.conj_prox_scalar(v[mask], t[mask] if np.ndim(t) else t,
                                               idx[mask] - sl.start)
        return out

    def conj_residual(self, z, s):
        z = np.asarray(z, dtype=float)
        s = np.asarray(s, dtype=float)
        out = np.empty(self.dim)
        for p, sl in self._slices():
            out[sl] = p.conj_residual(z[sl], s[sl])
        return out


def conj_prox_via_moreau(phi, w, d):
    """prox of phi's conjugate under metric inverse(diag(d)), via Moreau.

    ``d`` is the diagonal of the metric M used on the primal side; the
    identity  x = prox^M_phi(x) + M^{-1} prox^{M^{-1}}_{phi*}(M x)  gives the
    conjugate prox without a second closed form.
    """
    w = np.asarray(w, dtype=float)
    d = _as_diag(d, phi.dim)
    return d * (w / d - phi.prox(w / d, d))


def conj_prox(phi, v, d):
    """prox of phi's conjugate under metric diag(d)."""
    d = _as_diag(d, phi.dim)
    return conj_prox_via_moreau(phi, v, 1.0 / d)


def scalar_conj_prox(kind, v, t, lam=1.0, c=0.0, center=0.0, weight=1.0):
    """Closed-form scalar conjugate proxes used inside block sweeps.

    kind "l1":       conjugate of lam*|x|          -> clamp to [-lam, lam]
    kind "linear":   conjugate contribution <z, c> -> v - t*c
    kind "quad":     conjugate of (w/2)(x-center)^2 -> w*(v - t*center)/(w + t)
    """
    v = np.asarray(v, dtype=float)
    if kind == "l1":
        return np.clip(v, -lam, lam)
    if kind == "linear":
        return v - t * c
    if kind == "quad":
        return weight * (v - t * center) / (weight + t)
    raise UnsupportedKindError(f"no scalar conjugate prox for kind {kind!r}")
