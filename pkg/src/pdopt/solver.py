"""Outer algorithms, inner iterators, theory constants, and diagnostics.

Three outer algorithms are provided: classic PDHG with scalar stepsizes,
preconditioned PDHG with the z-subproblem solved to tolerance, and the
inexact variant that replaces the z-subproblem by a fixed number p of
applications of an inner iterator S (proximal gradient, FISTA with adaptive
restart, or a cyclic block-coordinate sweep over color blocks).
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import prox as _prox
from .operators import StackedOp
from .precond import (BlockDiag, Diagonal, Gram, Preconditioner,
                      ScaledIdentity, gram_precond, ordering_for,
                      scaled_identity, validate_ordering)
from .operators import op_norm_sq_estimate


class ConfigError(ValueError):
    """Invalid solver configuration."""


class InfeasibleStepsizeError(ValueError):
    """No inner stepsize satisfies the theory conditions."""


class SingularMetricError(ValueError):
    """lambda_min(M2) <= 0: the inner-solver error constants are undefined.

    Gram metrics of grid operators are typically singular; add a ridge or
    supply the smallest positive eigenvalue explicitly if the theory
    diagnostics are wanted.
    """


@dataclass
class SaddleProblem:
    """The triple (f, g, A) of  minimize f(x) + g(Ax)."""

    f: _prox.ProxFunction
    g: _prox.ProxFunction
    A: object
    mu_f: float = 0.0
    objective: object = None     # optional callable x -> float
    feasibility: object = None   # optional callable x -> float

    def __post_init__(self):
        m, n = self.A.shape
        if self.f.dim != n or self.g.dim != m:
            raise ConfigError(
                f"dimension mismatch: f is {self.f.dim}-dim, g is {self.g.dim}-dim, "
                f"A is {m}x{n}")

    @property
    def dims(self):
        return self.A.shape

    def phi(self, x):
        if self.objective is not None:
            return float(self.objective(x))
        return float(self.f.value(x) + self.g.value(self.A.matvec(x)))


@dataclass
class SolverConfig:
    algorithm: str = "iprepdhg"      # pdhg | prepdhg_exact | iprepdhg
    tau: float = 0.01
    sigma: float = None              # pdhg only; default 1/(tau ||A||^2)
    m1: Preconditioner = None
    m2: Preconditioner = None
    inner: str = None                # proxgrad | fista_restart | bcd
    gamma: float = None
    ordering: object = None
    p: int = 1
    exact_tol: float = 1e-12
    phi_star: float = None
    tol_delta: float = None
    tol_residual: float = None
    max_outer: int = 10000
    max_seconds: float = None
    seed: int = 0
    log_every: int = 1
    monitor_err_ratio: bool = False
    monitor_lyapunov: bool = False
    x0: object = None
    z0: object = None


@dataclass
class IterateState:
    x: np.ndarray
    z: np.ndarray
    sum_x: np.ndarray
    sum_z: np.ndarray
    navg: int = 0
    y: np.ndarray = None
    u: np.ndarray = None
    k: int = 0
    inner_per_iter: list = field(default_factory=list)

    @property
    def x_avg(self):
        return self.sum_x / max(self.navg, 1)

    @property
    def z_avg(self):
        return self.sum_z / max(self.navg, 1)


TRACE_FIELDS = ("k", "obj", "delta", "feas", "dz_norm", "err_ratio",
                "lyapunov", "time_s")


@dataclass
class Trace:
    records: list = field(default_factory=list)

    def add(self, **kw):
        self.records.append({f: kw.get(f) for f in TRACE_FIELDS})

    def column(self, name):
        return [r[name] for r in self.records]

    def csv_text(self, omit_time=False):
        lines = [",".join(TRACE_FIELDS)]
        for r in self.records:
            vals = []
            for f in TRACE_FIELDS:
                v = r[f]
                if f == "time_s" and omit_time:
                    v = None
                if v is None:
                    vals.append("")
                elif f == "k":
                    vals.append(str(int(v)))
                else:
                    vals.append(format(float(v), ".17g"))
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def to_csv(self, path, omit_time=False):
        with open(path, "w") as fh:
            fh.write(self.csv_text(omit_time=omit_time))


@dataclass
class RunResult:
    state: IterateState
    trace: Trace
    status: str                    # converged | not-converged
    outer_iters: int
    time_s: float
    final_delta: float = None


# ---------------------------------------------------------------------------
# z-subproblem machinery

@dataclass
class ZSubproblem:
    """g*(z) - <z - z_ref, q> + 1/2 ||z - z_ref||^2_M2, with q = A(2x^{k+1}-x^k).

    The quadratic is kept in the inverse-free form, so only matvecs with M2
    are ever needed.
    """

    z_ref: np.ndarray
    q: np.ndarray
    m2: Preconditioner
    g: _prox.ProxFunction

    def grad_quad(self, z):
        return self.m2.apply(z - self.z_ref) - self.q

    def quad_value(self, z):
        dz = z - self.z_ref
        return 0.5 * float(dz @ self.m2.apply(dz)) - float(dz @ self.q)

    def objective(self, z):
        return self.g.conjugate_value(z) + self.quad_value(z)


def inner_proxgrad(sub, gamma, p):
    """p proximal-gradient steps on the z-subproblem, started at z_ref."""
    if p < 1:
        raise ConfigError("p must be >= 1")
    z = sub.z_ref
    d = np.full(sub.g.dim, 1.0 / gamma)
    for _ in range(p):
        z = _prox.conj_prox(sub.g, z - gamma * sub.grad_quad(z), d)
    return z, p


def inner_fista_restart(sub, gamma, p):
    """p FISTA steps with function-value adaptive restart; p counts gradient evals."""
    if p < 1:
        raise ConfigError("p must be >= 1")
    d = np.full(sub.g.dim, 1.0 / gamma)
    z = sub.z_ref
    y = z
    t = 1.0
    f_prev = sub.objective(z)
    for _ in range(p):
        z_new = _prox.conj_prox(sub.g, y - gamma * sub.grad_quad(y), d)
        f_new = sub.objective(z_new)
        if f_new > f_prev:
            # momentum restart: drop back to a plain proximal-gradient state
            t = 1.0
            y = z_new
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = z_new + ((t - 1.0) / t_new) * (z_new - z)
            t = t_new
        z = z_new
        f_prev = f_new
    return z, p


class BcdPlan:
    """Precomputed structure for cyclic block-coordinate sweeps.

    Splits the dual space into segments following M2's block structure:
    diagonal segments are minimized exactly in one shot, Gram segments sweep
    their color blocks in a fixed order using the diagonal block Grams.
    """

    def __init__(self, A, m2, ordering=None):
        self.segments = []
        if isinstance(m2, (Diagonal, ScaledIdentity)):
            self.segments.append(("diag", 0, m2.dim, m2.diagonal()))
            self.num_blocks = 1
        elif isinstance(m2, Gram):
            ordering = ordering if ordering is not None else ordering_for(m2.A)
            diags = validate_ordering(m2.A, ordering)
            self.segments.append(self._gram_segment(0, m2.dim, m2.A, m2.tau,
                                                    m2.ridge, ordering.blocks,
                                                    diags))
            self.num_blocks = ordering.num_blocks
        elif isinstance(m2, BlockDiag) and isinstance(A, StackedOp):
            if len(m2.parts) != len(A.ops):
                raise ConfigError("block preconditioner does not match stacked operator")
            nblocks = 0
            for part, op, lo, hi in zip(m2.parts, A.ops, A.row_offsets,
                                        A.row_offsets[1:]):
                lo, hi = int(lo), int(hi)
                if isinstance(part, (Diagonal, ScaledIdentity)):
                    self.segments.append(("diag", lo, hi, part.diagonal()))
                    nblocks += 1
                elif isinstance(part, Gram):
                    sub_ord = ordering_for(part.A)
                    diags = validate_ordering(part.A, sub_ord)
                    self.segments.append(self._gram_segment(
                        lo, hi, part.A, part.tau, part.ridge,
                        sub_ord.blocks, diags))
                    nblocks += sub_ord.num_blocks
                else:
                    raise ConfigError(
                        f"unsupported M2 block {type(part).__name__} for BCD")
            self.num_blocks = nblocks
        else:
            raise ConfigError(
                "BCD needs M2 in Gram form or a block-diagonal composite over "
                "a stacked operator")

    @staticmethod
    def _gram_segment(lo, hi, op, tau, ridge, blocks, diags):
        """Presplit the operator rows per color block so a sweep can keep the
        running gradient A^T(z - z_ref) up to date with cheap partial products."""
        mat = op.to_sparse().tocsr()
        mat_t = mat.T.tocsr()
        per_block = []
        for blk, d in zip(blocks, diags):
            rows = mat[blk, :]
            h = tau * d + ridge
            live = h > 0
            h_safe = np.where(live, h, 1.0)
            per_block.append((blk, d, rows, rows.T.tocsr(), h_safe,
                              1.0 / h_safe, None if live.all() else live,
                              blk + lo))
        return ("gram", lo, hi, tau, mat_t, per_block)


def inner_bcd(sub, plan, p):
    """p epochs of cyclic proximal BCD; each block update is an exact closed form."""
    if p < 1:
        raise ConfigError("p must be >= 1")
    z = sub.z_ref.copy()
    carry = {}
    for _ in range(p):
        _bcd_sweep(sub, plan, z, carry)
    return z, p


def solve_subproblem_exact(sub, tol=1e-12, max_iter=200000, gamma=None, plan=None):
    """Iterate an inner solver until the step norm falls below tol (an
    "exact" solve for equivalence oracles and the reference engine)."""
    if plan is None:
        if gamma is None:
            gamma = 1.0 / max(m2_norm_estimate(sub.m2), 1e-30)
        d = np.full(sub.g.dim, 1.0 / gamma)
    z = sub.z_ref
    y = z
    t = 1.0
    f_prev = sub.objective(z)
    for _ in range(max_iter):
        if plan is not None:
            z_new = _bcd_from(sub, plan, z)
        else:
            z_new = _prox.conj_prox(sub.g, y - gamma * sub.grad_quad(y), d)
            f_new = sub.objective(z_new)
            if f_new > f_prev:
                t = 1.0
                y = z_new
            else:
                t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
                y = z_new + ((t - 1.0) / t_new) * (z_new - z)
                t = t_new
            f_prev = f_new
        if np.linalg.norm(z_new - z) <= tol * (1.0 + np.linalg.norm(z_new)):
            return z_new
        z = z_new
    return z


def _bcd_from(sub, plan, z_start):
    """One BCD epoch starting from an arbitrary point (not z_ref)."""
    z = z_start.copy()
    _bcd_sweep(sub, plan, z, None)
    return z


def _bcd_sweep(sub, plan, z, carry):
    """One in-place BCD epoch over z; `carry` keeps each segment's running
    gradient A^T(z - z_ref) alive between consecutive epochs."""
    for i, seg in enumerate(plan.segments):
        if seg[0] == "diag":
            _, lo, hi, e = seg
            v = sub.z_ref[lo:hi] + sub.q[lo:hi] / e
            z[lo:hi] = sub.g.conj_prox_scalar(v, 1.0 / e, np.arange(lo, hi))
        else:
            _, lo, hi, tau, mat_t, per_block = seg
            z_ref_s = sub.z_ref[lo:hi]
            q_s = sub.q[lo:hi]
            zs = z[lo:hi]
            dzs = zs - z_ref_s
            if carry is not None and i in carry:
                w = carry[i]
            elif not dzs.any():
                w = np.zeros(mat_t.shape[0])
            else:
                w = mat_t @ dzs      # running gradient A^T (z - z_ref)
            for blk, d, rows, rows_t, h, inv_h, live, gidx in per_block:
                t_b = rows @ w - d * dzs[blk]
                v = z_ref_s[blk] + (q_s[blk] - tau * t_b) * inv_h
                if live is None:
                    znew = sub.g.conj_prox_scalar(v, inv_h, gidx)
                else:
                    znew = zs[blk].copy()
                    znew[live] = sub.g.conj_prox_scalar(
                        v[live], inv_h[live], gidx[live])
                delta = znew - zs[blk]
                zs[blk] = znew
                dzs[blk] += delta
                w += rows_t @ delta
            if zs.base is not z:
                z[lo:hi] = zs
            if carry is not None:
                carry[i] = w


def m2_norm_estimate(m2, iters=200, tol=1e-10):
    """Power-iteration estimate of lambda_max(M2), deterministic seeded start."""
    v = np.random.default_rng(12345).standard_normal(m2.dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = m2.apply(v)
        wn = np.linalg.norm(w)
        if wn == 0:
            return 0.0
        lam_new = float(v @ w)
        v = w / wn
        if lam > 0 and abs(lam_new - lam) <= tol * lam:
            return lam_new
        lam = lam_new
    return lam


# ---------------------------------------------------------------------------
# theory constants

def c_proxgrad(gamma, lam_min, lam_max, p):
    """Relative-error constant after p proximal-gradient inner steps."""
    if lam_min <= 0:
        raise SingularMetricError("c(p) needs lambda_min(M2) > 0")
    hi = 2.0 * lam_min / lam_max ** 2
    if not 0 < gamma < hi:
        raise InfeasibleStepsizeError(f"gamma must lie in (0, {hi})")
    if p < 1:
        raise ConfigError("p must be >= 1")
    t = math.sqrt(1.0 - gamma * (2.0 * lam_min - gamma * lam_max ** 2))
    return (1.0 / gamma + lam_max) / (1.0 - t ** p) * (t ** p + t ** (p - 1))


def _bcd_gamma_bounds(gamma, lam_min, lam_max, l):
    theta = math.sqrt(max(0.0, 1.0 - gamma * (2.0 * lam_min - gamma * lam_max ** 2)))
    b1 = 2.0 * lam_min / lam_max ** 2
    b2 = (1.0 - theta) / (4.0 * math.sqrt(2.0) * gamma * l * lam_max)
    b3 = 1.0 / (4.0 * l * lam_max)
    b4 = 2.0 * l * lam_max / (17.0 * l * lam_max + 2.0 * ((1.0 - theta) / gamma) ** 2)
    return min(b1, b2, b3, b4)


def bcd_gamma_feasible(gamma, lam_min, lam_max, l):
    if lam_min <= 0:
        raise SingularMetricError("gamma feasibility needs lambda_min(M2) > 0")
    if gamma <= 0 or gamma >= 2.0 * lam_min / lam_max ** 2:
        return False
    return gamma <= _bcd_gamma_bounds(gamma, lam_min, lam_max, l)


def find_bcd_gamma(lam_min, lam_max, l, grid_points=64):
    """Largest feasible BCD stepsize on a log grid over (0, 2 lam_min/lam_max^2).

    The error-constant inequalities are implicit in gamma, so feasibility is
    resolved numerically.
    """
    if lam_min <= 0:
        raise SingularMetricError("gamma search needs lambda_min(M2) > 0")
    hi = 2.0 * lam_min / lam_max ** 2
    grid = hi * np.logspace(-12, 0, grid_points, endpoint=False)
    feasible = [g for g in grid if bcd_gamma_feasible(g, lam_min, lam_max, l)]
    if not feasible:
        raise InfeasibleStepsizeError(
            f"no feasible gamma found in (0, {hi}) for l={l}, "
            f"lam_min={lam_min}, lam_max={lam_max}")
    return float(feasible[-1])


def c_bcd(gamma, lam_min, lam_max, l, p):
    """Relative-error constant after p cyclic-BCD epochs over l blocks."""
    if not bcd_gamma_feasible(gamma, lam_min, lam_max, l):
        raise InfeasibleStepsizeError("gamma violates the BCD stepsize condition")
    if p < 1:
        raise ConfigError("p must be >= 1")
    theta = math.sqrt(1.0 - gamma * (2.0 * lam_min - gamma * lam_max ** 2))
    rho = 1.0 - (1.0 - theta) ** 2 / (2.0 * gamma)
    return (l * lam_max + 1.0 / gamma) * (rho ** p + rho ** (p - 1)) / (1.0 - rho ** p)


# ---------------------------------------------------------------------------
# diagnostics

def relative_error_residual(z_prev, z_new, sub):
    """(||eps||, ||eps|| / ||z_new - z_prev||) for the subproblem optimality
    inclusion, with eps the minimal-norm admissible error term."""
    s = sub.m2.apply(z_new - sub.z_ref) - sub.q
    eps = sub.g.conj_residual(z_new, s)
    eps_norm = float(np.linalg.norm(eps))
    dz = float(np.linalg.norm(z_new - z_prev))
    if dz == 0.0:
        ratio = 0.0 if eps_norm <= 1e-14 else math.inf
    else:
        ratio = eps_norm / dz
    return eps_norm, ratio


def ergodic_gap_bound(x0, z0, x, z, m1, m2, A, N):
    """A-posteriori bound on the averaged iterates' saddle gap at (x, z)."""
    dx = np.asarray(x, dtype=float) - x0
    dz = np.asarray(z, dtype=float) - z0
    val = (float(dx @ m1.apply(dx)) + float(dz @ m2.apply(dz))
           - 2.0 * float(A.matvec(dx) @ dz))
    return val / (2.0 * N)


def saddle_value(problem, x, z, feas_tol=1e-8):
    """phi(x, z) = f(x) + <Ax, z> - g*(z)."""
    return (problem.f.value(x) + float(problem.A.matvec(x) @ z)
            - problem.g.conjugate_value(z, feas_tol))


def lyapunov(z, y, u, m1, problem, feas_tol=1e-6):
    """Generalized augmented Lagrangian L(z, y, u) of the dual-form algorithm."""
    d = m1.diagonal()
    r = problem.A.rmatvec(z) + y
    return (problem.g.conjugate_value(z, feas_tol)
            + problem.f.conjugate_value(y, feas_tol)
            + float(-r @ (u / d)) + 0.5 * float(r @ (r / d)))


def dual_transform(x_curr, x_prev, z_prev, m1, A):
    """Shadow dual variables (y, u) aligned with the dual-form algorithm."""
    d = m1.diagonal()
    u = d * np.asarray(x_curr, dtype=float)
    y = d * np.asarray(x_prev, dtype=float) - A.rmatvec(z_prev) - u
    return y, u


def admm_dual_step(z, y, v, tau, problem, tol=1e-13, max_iter=500000):
    """One ADMM step on the dual problem; the z-minimization is solved to
    high accuracy, so this serves as an equivalence oracle."""
    A = problem.A
    lam = op_norm_sq_estimate(A)
    gamma = 1.0 / max(tau * lam, 1e-30)
    d = np.full(problem.g.dim, 1.0 / gamma)
    zc = np.asarray(z, dtype=float)
    cur = zc
    yy = cur
    t = 1.0

    def grad(w):
        return A.matvec(tau * (A.rmatvec(w) + y) - v)

    def obj(w):
        r = A.rmatvec(w) + y
        return (problem.g.conjugate_value(w) + float(-r @ v)
                + 0.5 * tau * float(r @ r))

    f_prev = obj(cur)
    for _ in range(max_iter):
        z_new = _prox.conj_prox(problem.g, yy - gamma * grad(yy), d)
        f_new = obj(z_new)
        if f_new > f_prev:
            t = 1.0
            yy = z_new
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            yy = z_new + ((t - 1.0) / t_new) * (z_new - cur)
            t = t_new
        f_prev = f_new
        if np.linalg.norm(z_new - cur) <= tol * (1.0 + np.linalg.norm(z_new)):
            cur = z_new
            break
        cur = z_new
    z_new = cur
    w = v / tau - A.rmatvec(z_new)
    y_new = _prox.conj_prox_via_moreau(problem.f, w, np.full(problem.f.dim, 1.0 / tau))
    v_new = v - tau * (A.rmatvec(z_new) + y_new)
    return z_new, y_new, v_new


# ---------------------------------------------------------------------------
# elementary steps

def pdhg_step(x, z, problem, tau, sigma):
    """One classic PDHG iteration."""
    f, g, A = problem.f, problem.g, problem.A
    x_new = f.prox(x - tau * A.rmatvec(z), 1.0 / tau)
    q = A.matvec(2.0 * x_new - x)
    z_new = _prox.conj_prox(g, z + sigma * q, np.full(g.dim, 1.0 / sigma))
    return x_new, z_new


def prepdhg_x_step(x, z, problem, m1):
    """Exact x-subproblem: a diagonal-metric prox of f."""
    d = m1.diagonal()
    return problem.f.prox(x - problem.A.rmatvec(z) / d, d)


# ---------------------------------------------------------------------------
# main loop

def validate_config(problem, config):
    m, n = problem.dims
    cfg = config
    if cfg.algorithm not in ("pdhg", "prepdhg_exact", "iprepdhg"):
        raise ConfigError(f"unknown algorithm {cfg.algorithm!r}")
    if cfg.p < 1:
        raise ConfigError("inner iteration count p must be >= 1")
    if cfg.tau <= 0:
        raise ConfigError("tau must be positive")
    if cfg.algorithm == "pdhg":
        if cfg.inner is not None:
            raise ConfigError("pdhg takes no inner iterator")
        sigma = cfg.sigma
        norm_sq = op_norm_sq_estimate(problem.A)
        if sigma is None:
            sigma = 1.0 / (cfg.tau * norm_sq) if norm_sq > 0 else 1.0
        elif norm_sq > 0 and 1.0 / (cfg.tau * sigma) < norm_sq / 1.01 * (1 - 1e-9):
            raise ConfigError("pdhg stepsizes violate 1/(tau*sigma) >= ||A||^2")
        return {"sigma": sigma}
    m1 = cfg.m1 if cfg.m1 is not None else scaled_identity(cfg.tau, n)
    m2 = cfg.m2 if cfg.m2 is not None else gram_precond(problem.A, cfg.tau)
    if not isinstance(m1, (ScaledIdentity, Diagonal)):
        raise ConfigError("M1 must be a scaled-identity or diagonal form")
    inner = cfg.inner
    if cfg.algorithm == "iprepdhg" and inner is None:
        inner = "bcd"
    out = {"m1": m1, "m2": m2, "inner": inner}
    if inner == "bcd":
        out["plan"] = BcdPlan(problem.A, m2, cfg.ordering)
    elif inner in ("proxgrad", "fista_restart", None):
        gamma = cfg.gamma
        if gamma is None:
            gamma = 1.0 / max(m2_norm_estimate(m2), 1e-30)
        out["gamma"] = gamma
    else:
        raise ConfigError(f"unknown inner iterator {inner!r}")
    if cfg.algorithm == "prepdhg_exact" and inner == "bcd":
        out["plan"] = BcdPlan(problem.A, m2, cfg.ordering)
    return out


def run(problem, config):
    """Run the configured outer algorithm; returns a RunResult."""
    cfg = config
    resolved = validate_config(problem, cfg)
    m, n = problem.dims
    x = np.zeros(n) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float).copy()
    z = np.zeros(m) if cfg.z0 is None else np.asarray(cfg.z0, dtype=float).copy()
    state = IterateState(x=x, z=z, sum_x=np.zeros(n), sum_z=np.zeros(m))
    trace = Trace()
    m1 = resolved.get("m1")
    m2 = resolved.get("m2")
    status = "not-converged"
    final_delta = None
    elapsed = 0.0

    for k in range(1, cfg.max_outer + 1):
        tic = time.perf_counter()
        x_prev = state.x
        z_prev = state.z
        if cfg.algorithm == "pdhg":
            x_new, z_new = pdhg_step(x_prev, z_prev, problem, cfg.tau,
                                     resolved["sigma"])
            inner_count = 0
            sub = None
        else:
            x_new = prepdhg_x_step(x_prev, z_prev, problem, m1)
            q = problem.A.matvec(2.0 * x_new - x_prev)
            sub = ZSubproblem(z_prev, q, m2, problem.g)
            if cfg.algorithm == "prepdhg_exact" and isinstance(
                    m2, (Diagonal, ScaledIdentity)):
                # diagonal metric: the z-subproblem has a closed form
                d2 = m2.diagonal()
                z_new = _prox.conj_prox(problem.g, z_prev + q / d2, d2)
                inner_count = 0
            elif cfg.algorithm == "prepdhg_exact":
                z_new = solve_subproblem_exact(
                    sub, tol=cfg.exact_tol,
                    gamma=resolved.get("gamma"),
                    plan=resolved.get("plan"))
                inner_count = 0
            elif resolved["inner"] == "bcd":
                z_new, inner_count = inner_bcd(sub, resolved["plan"], cfg.p)
            elif resolved["inner"] == "proxgrad":
                z_new, inner_count = inner_proxgrad(sub, resolved["gamma"], cfg.p)
            else:
                z_new, inner_count = inner_fista_restart(sub, resolved["gamma"],
                                                         cfg.p)
        state.x = x_new
        state.z = z_new
        state.sum_x = state.sum_x + x_new
        state.sum_z = state.sum_z + z_new
        state.navg += 1
        state.k = k
        state.inner_per_iter.append(inner_count)

        err_ratio = None
        if cfg.monitor_err_ratio and sub is not None:
            try:
                _, err_ratio = relative_error_residual(z_prev, z_new, sub)
            except _prox.UnsupportedKindError:
                err_ratio = None
        lyap = None
        if cfg.monitor_lyapunov and m1 is not None:
            y, u = dual_transform(x_new, x_prev, z_prev, m1, problem.A)
            state.y, state.u = y, u
            lyap = lyapunov(z_prev, y, u, m1, problem)
        elapsed += time.perf_counter() - tic

        obj = problem.phi(x_new)
        feas = problem.feasibility(x_new) if problem.feasibility else None
        dz_norm = float(np.linalg.norm(z_new - z_prev))
        delta = None
        if cfg.phi_star is not None:
            num = abs(obj - cfg.phi_star)
            delta = 0.0 if num == 0.0 else num / max(abs(cfg.phi_star), 1e-300)
            final_delta = delta
        if k % cfg.log_every == 0 or k == cfg.max_outer:
            trace.add(k=k, obj=obj, delta=delta, feas=feas, dz_norm=dz_norm,
                      err_ratio=err_ratio, lyapunov=lyap, time_s=elapsed)

        if cfg.tol_delta is not None and delta is not None and delta < cfg.tol_delta:
            status = "converged"
            break
        if cfg.tol_residual is not None:
            res = (max(np.linalg.norm(x_new - x_prev), dz_norm)
                   / (1.0 + np.linalg.norm(x_new) + np.linalg.norm(z_new)))
            if res < cfg.tol_residual:
                status = "converged"
                break
        if cfg.max_seconds is not None and elapsed >= cfg.max_seconds:
            break

    return RunResult(state=state, trace=trace, status=status,
                     outer_iters=state.k, time_s=elapsed,
                     final_delta=final_delta)
