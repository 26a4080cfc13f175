"""Grid finite-difference operators, sparse operators, and block-structure tools.

Conventions: an M x N grid is stored row-major as a flat vector of length
M*N (node (i, j), 0-based, maps to i*N + j).  A two-channel field on the
grid is a flat vector of length 2*M*N with channel 1 (vertical differences)
occupying the first M*N entries and channel 2 the next M*N, so that
color-block slices are contiguous per channel.

The divergence is implemented as the exact negative adjoint of the
gradient, i.e. with the 1/h scaling.  This is forced by the adjoint
identity the block solvers rely on; see the project README.
"""

import numpy as np
import scipy.sparse as sp


class DimensionMismatchError(ValueError):
    """Operator applied to a vector of the wrong length."""


class InvalidWeightsError(ValueError):
    """Weighted gradient got nonpositive weights."""


class OrderingError(ValueError):
    """A block ordering is incompatible with the operator it was used on."""


def grad2d(u, h=1.0):
    """Forward-difference gradient of a 2D array.

    Returns (ch1, ch2) where ch1[i, j] = (u[i+1, j] - u[i, j]) / h with a
    zero last row, and ch2 analogously in j with a zero last column.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    u = np.asarray(u, dtype=float)
    ch1 = np.zeros_like(u)
    ch2 = np.zeros_like(u)
    ch1[:-1, :] = (u[1:, :] - u[:-1, :]) / h
    ch2[:, :-1] = (u[:, 1:] - u[:, :-1]) / h
    return ch1, ch2


def div2d(ch1, ch2, h=1.0):
    """Divergence of a two-channel field, the exact negative adjoint of grad2d."""
    if h <= 0:
        raise ValueError("h must be positive")
    ch1 = np.asarray(ch1, dtype=float)
    ch2 = np.asarray(ch2, dtype=float)
    out = np.zeros_like(ch1)
    # vertical channel: p1[i,j] - p1[i-1,j], with p1[-1,·] treated as 0 and
    # the stored last row of ch1 ignored (it is a structural zero of grad2d)
    out[:-1, :] += ch1[:-1, :]
    out[1:, :] -= ch1[:-1, :]
    out[:, :-1] += ch2[:, :-1]
    out[:, 1:] -= ch2[:, :-1]
    return out / h


class LinearOperator:
    """Base class: forward ``matvec`` on R^n -> R^m and adjoint ``rmatvec``."""

    shape = (0, 0)  # (m, n)

    def matvec(self, x):
        raise NotImplementedError

    def rmatvec(self, z):
        raise NotImplementedError

    def to_sparse(self):
        """CSR materialization, used by block-structure checks and oracles."""
        raise NotImplementedError

    def _check_forward(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.shape[1]:
            raise DimensionMismatchError(
                f"expected input of length {self.shape[1]}, got {x.size}")
        return x

    def _check_adjoint(self, z):
        z = np.asarray(z, dtype=float).ravel()
        if z.size != self.shape[0]:
            raise DimensionMismatchError(
                f"expected input of length {self.shape[0]}, got {z.size}")
        return z


class Grad2D(LinearOperator):
    """2D forward-difference gradient, R^{MN} -> R^{2MN}."""

    def __init__(self, rows, cols, h=1.0):
        if h <= 0:
            raise ValueError("h must be positive")
        self.rows = rows
        self.cols = cols
        self.h = float(h)
        self.shape = (2 * rows * cols, rows * cols)

    def matvec(self, x):
        x = self._check_forward(x)
        ch1, ch2 = grad2d(x.reshape(self.rows, self.cols), self.h)
        return np.concatenate([ch1.ravel(), ch2.ravel()])

    def rmatvec(self, z):
        z = self._check_adjoint(z)
        mn = self.rows * self.cols
        ch1 = z[:mn].reshape(self.rows, self.cols)
        ch2 = z[mn:].reshape(self.rows, self.cols)
        return -div2d(ch1, ch2, self.h).ravel()

    def to_sparse(self):
        m, n = self.rows, self.cols
        idx = np.arange(m * n).reshape(m, n)
        r1 = idx[:-1, :].ravel()
        d1 = sp.csr_matrix(
            (np.concatenate([np.full(r1.size, 1.0 / self.h),
                             np.full(r1.size, -1.0 / self.h)]),
             (np.concatenate([r1, r1]),
              np.concatenate([idx[1:, :].ravel(), idx[:-1, :].ravel()]))),
            shape=(m * n, m * n))
        r2 = idx[:, :-1].ravel()
        d2 = sp.csr_matrix(
            (np.concatenate([np.full(r2.size, 1.0 / self.h),
                             np.full(r2.size, -1.0 / self.h)]),
             (np.concatenate([r2, r2]),
              np.concatenate([idx[:, 1:].ravel(), idx[:, :-1].ravel()]))),
            shape=(m * n, m * n))
        return sp.vstack([d1, d2], format="csr")


class WeightedGrad2D(LinearOperator):
    """diag(w) times the 2D gradient, for strictly positive weights w."""

    def __init__(self, rows, cols, w, h=1.0):
        w = np.asarray(w, dtype=float).ravel()
        if w.size != 2 * rows * cols:
            raise DimensionMismatchError("weight vector must have length 2*M*N")
        if np.any(w <= 0):
            raise InvalidWeightsError("weights must be strictly positive")
        self.base = Grad2D(rows, cols, h)
        self.rows, self.cols, self.h = rows, cols, float(h)
        self.w = w
        self.shape = self.base.shape

    def matvec(self, x):
        return self.w * self.base.matvec(x)

    def rmatvec(self, z):
        return self.base.rmatvec(self.w * self._check_adjoint(z))

    def to_sparse(self):
        return sp.diags(self.w) @ self.base.to_sparse()


class Div2D(LinearOperator):
    """2D divergence, R^{2MN} -> R^{MN}; equals minus the gradient adjoint."""

    def __init__(self, rows, cols, h=1.0):
        self.grad = Grad2D(rows, cols, h)
        self.rows, self.cols, self.h = rows, cols, float(h)
        self.shape = (rows * cols, 2 * rows * cols)

    def matvec(self, p):
        p = self._check_forward(p)
        mn = self.rows * self.cols
        ch1 = p[:mn].reshape(self.rows, self.cols)
        ch2 = p[mn:].reshape(self.rows, self.cols)
        return div2d(ch1, ch2, self.h).ravel()

    def rmatvec(self, z):
        return -self.grad.matvec(self._check_adjoint(z))

    def to_sparse(self):
        return (-self.grad.to_sparse().T).tocsr()


class SparseOp(LinearOperator):
    """Wrapper around a scipy sparse matrix in CSR form."""

    def __init__(self, mat):
        self.mat = sp.csr_matrix(mat).astype(float)
        self.shape = self.mat.shape

    def matvec(self, x):
        return self.mat @ self._check_forward(x)

    def rmatvec(self, z):
        return self.mat.T @ self._check_adjoint(z)

    def to_sparse(self):
        return self.mat


class StackedOp(LinearOperator):
    """Vertical stack of operators sharing a common domain."""

    def __init__(self, ops):
        ncols = {op.shape[1] for op in ops}
        if len(ncols) != 1:
            raise DimensionMismatchError("stacked operators must share a domain")
        self.ops = list(ops)
        n = ncols.pop()
        self.row_offsets = np.cumsum([0] + [op.shape[0] for op in ops])
        self.shape = (int(self.row_offsets[-1]), n)

    def matvec(self, x):
        x = self._check_forward(x)
        return np.concatenate([op.matvec(x) for op in self.ops])

    def rmatvec(self, z):
        z = self._check_adjoint(z)
        out = np.zeros(self.shape[1])
        for op, lo, hi in zip(self.ops, self.row_offsets, self.row_offsets[1:]):
            out += op.rmatvec(z[lo:hi])
        return out

    def to_sparse(self):
        return sp.vstack([op.to_sparse() for op in self.ops], format="csr")


def op_norm_sq_estimate(A, iters=200, tol=1e-10):
    """Power-iteration estimate of lambda_max(A^T A), times a 1.01 safety factor.

    Deterministic: starts from a fixed-seed random vector (an all-ones start
    would sit in the null space of difference operators).  Returns 0 for the
    zero operator.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    n = A.shape[1]
    v = np.random.default_rng(12345).standard_normal(n)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return 0.0
    v /= nrm
    lam = 0.0
    for _ in range(iters):
        w = A.rmatvec(A.matvec(v))
        wn = np.linalg.norm(w)
        if wn == 0:
            return 0.0
        lam_new = float(v @ w)
        v = w / wn
        if lam > 0 and abs(lam_new - lam) <= tol * lam:
            lam = lam_new
            break
        lam = lam_new
    return 1.01 * lam


def block_gram(A, ordering):
    """Per-block diagonals of L_b^T L_b for the columns of A^T grouped by block.

    Raises OrderingError if any off-diagonal entry of a block Gram matrix is
    structurally nonzero, i.e. the ordering does not decouple the block.
    """
    mat = A.to_sparse()
    if sum(b.size for b in ordering.blocks) != A.shape[0]:
        raise OrderingError("ordering does not partition the operator's row space")
    diags = []
    for blk in ordering.blocks:
        sub = mat[blk, :]
        gram = (sub @ sub.T).tocoo()
        off = gram.row != gram.col
        if np.any(off):
            raise OrderingError(
                "within-block columns of A^T are not mutually orthogonal")
        d = np.zeros(blk.size)
        d[gram.row] += gram.data  # duplicates already summed by scipy
        diags.append(d)
    return diags
