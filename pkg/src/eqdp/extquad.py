"""Closed algebra of quadratic functions with embedded linear equality constraints.

An :class:`ExtendedQuadratic` represents

    f(x) = (1/2) [x; 1]^T [[P, q], [q^T, r]] [x; 1]   if  F x + g = 0,
    f(x) = +inf                                        otherwise.

The class is closed (barring flagged pathologies) under addition, scalar
multiplication, pre-composition with an affine map, and partial minimization
over a trailing block of variables.  Those four operations are exactly what a
Bellman backup needs, so dynamic programming over these objects reduces to
plain linear algebra on their coefficients.

All values are immutable after construction and every operation is a pure
function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Rank decision: a singular value counts as nonzero iff it exceeds
# RANK_TOL * max(sigma_1, 1).
RANK_TOL = 1e-10
# Feasibility: ||U2^T g||_inf <= FEAS_TOL * max(1, ||g||_inf); the same
# threshold decides membership in evaluate().
FEAS_TOL = 1e-8
# Positive semidefiniteness: lambda_min >= -PSD_TOL * max(1, |lambda|_max);
# strict definiteness requires lambda_min > +PSD_TOL * max(1, |lambda|_max).
PSD_TOL = 1e-9
# Range inclusion: ||(I - A A^+) B||_max <= RANGE_TOL * max(1, ||B||_max).
RANGE_TOL = 1e-8

# Statuses returned by partial_min (and surfaced per (t, s) by the solvers).
OK = "ok"
NONCONVEX = "nonconvex"
UNBOUNDED = "unbounded"
IMPROPER = "improper"


class ImproperInput(ValueError):
    """Raised when an operation requires a feasible constraint set but got none."""


def _maxabs(a):
    a = np.asarray(a, dtype=float)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _near_zero(a, ref=1.0):
    return _maxabs(a) <= FEAS_TOL * max(1.0, ref)


@dataclass(frozen=True)
class FreeParamRep:
    """Free-parameter form of {x | F x + g = 0} as {V2 z + x0 | z in R^l}.

    x0 is a particular solution (the minimum-norm one, -pinv(F) g) and V2 has
    orthonormal columns spanning the nullspace of F, so V2^T V2 = I_l with
    l = n - rank(F).
    """

    x0: np.ndarray
    V2: np.ndarray

    @property
    def l(self) -> int:
        return self.V2.shape[1]


def _constraint_svd(F, g):
    """Full SVD bookkeeping for a constraint set.

    Returns (feasible, rank, x0, V1, V2, g_red) where F = U S V^T, V1/V2 split
    the right singular vectors at the rank, x0 = -pinv(F) g, and g_red is the
    offset of the reduced (orthonormal-row) representation V1^T x + g_red = 0.
    Feasibility is decided by U2^T g being numerically zero.
    """
    F = np.asarray(F, dtype=float)
    g = np.asarray(g, dtype=float).reshape(-1)
    p, n = F.shape
    if p == 0:
        return True, 0, np.zeros(n), np.zeros((n, 0)), np.eye(n), np.zeros(0)
    U, s, Vt = np.linalg.svd(F, full_matrices=True)
    cutoff = RANK_TOL * max(s[0] if s.size else 0.0, 1.0)
    rank = int(np.sum(s > cutoff))
    U1, U2 = U[:, :rank], U[:, rank:]
    V1 = Vt[:rank].T
    V2 = Vt[rank:].T
    feasible = _near_zero(U2.T @ g, _maxabs(g))
    if not feasible:
        return False, rank, None, V1, V2, None
    g_red = (U1.T @ g) / s[:rank] if rank else np.zeros(0)
    x0 = -(V1 @ g_red) if rank else np.zeros(n)
    return True, rank, x0, V1, V2, g_red


def free_param(F, g):
    """Free-parameter representation of {x | Fx + g = 0}, or None if infeasible.

    Feasibility and rank are decided via the full SVD of F: the set is
    nonempty iff U2^T g = 0 to tolerance, in which case x0 = -pinv(F) g and
    V2 spans the nullspace of F with orthonormal columns.
    """
    feasible, _, x0, _, V2, _ = _constraint_svd(F, g)
    if not feasible:
        return None
    return FreeParamRep(x0=x0, V2=V2)


def range_contains(A, B, tol=RANGE_TOL):
    """True iff the column range of A contains the column range of B.

    Tested as ||(I - A pinv(A)) B||_max <= tol * max(1, ||B||_max).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] != B.shape[0]:
        raise ValueError("range_contains: row counts differ")
    if B.size == 0:
        return True
    resid = B - A @ (np.linalg.pinv(A) @ B)
    return _maxabs(resid) <= tol * max(1.0, _maxabs(B))


def _is_psd(M, strict=False):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] == 0:
        return True
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    scale = max(1.0, float(np.max(np.abs(w))))
    if strict:
        return float(w.min()) > PSD_TOL * scale
    return float(w.min()) >= -PSD_TOL * scale


class AffineMap:
    """The map x -> A x + b, with A of shape (m, n) and b of length m."""

    __slots__ = ("A", "b")

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise ValueError("AffineMap: A rows and b length differ")
        self.A = A
        self.b = b

    @property
    def output_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.A.shape[1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.input_dim:
            raise ValueError("AffineMap: input dimension mismatch")
        return self.A @ x + self.b

    def __repr__(self):
        return f"AffineMap(A={self.A!r}, b={self.b!r})"

    def to_dict(self):
        """JSON-ready dict {A (row-major flat), b}; round-trips losslessly."""
        return {"A": [float(v) for v in self.A.reshape(-1)],
                "b": [float(v) for v in self.b]}

    @classmethod
    def from_dict(cls, d):
        b = np.asarray(d["b"], dtype=float)
        m = b.shape[0]
        A = np.asarray(d["A"], dtype=float).reshape(m, -1)
        return cls(A, b)


class ExtendedQuadratic:
    """Quadratic function plus the indicator of an affine set.

    Parameters
    ----------
    P, q, r : quadratic coefficients; P is symmetrized on construction.
    F, g : equality constraints F x + g = 0; omit (or pass p = 0 arrays) for an
        unconstrained quadratic.
    improper : marks a function that is +inf everywhere because its
        constraints are infeasible.  Improper values are legal results of the
        algebra (e.g. the sum of functions with clashing constraints), not
        exceptions.
    """

    __slots__ = ("n", "P", "q", "r", "F", "g", "improper")

    def __init__(self, P, q, r, F=None, g=None, improper=False):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if P.shape[0] != P.shape[1]:
            raise ValueError("P must be square")
        n = P.shape[0]
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape[0] != n:
            raise ValueError("q length does not match P")
        if F is None:
            F = np.zeros((0, n))
        F = np.asarray(F, dtype=float)
        if F.ndim == 1:
            F = F.reshape(1, -1) if F.size else F.reshape(0, n)
        if F.shape[1] != n:
            raise ValueError("F column count does not match dimension")
        if g is None:
            g = np.zeros(F.shape[0])
        g = np.asarray(g, dtype=float).reshape(-1)
        if g.shape[0] != F.shape[0]:
            raise ValueError("g length does not match F rows")
        self.n = n
        self.P = 0.5 * (P + P.T)
        self.q = q
        self.r = float(r)
        self.F = F
        self.g = g
        self.improper = bool(improper)

    # -- basic structure ---------------------------------------------------

    @classmethod
    def zero(cls, n):
        """The identically-zero function on R^n."""
        return cls(np.zeros((n, n)), np.zeros(n), 0.0)

    @property
    def p(self) -> int:
        return self.F.shape[0]

    def coefficient_matrix(self):
        """The (n+1) x (n+1) symmetric matrix [[P, q], [q^T, r]]."""
        M = np.zeros((self.n + 1, self.n + 1))
        M[: self.n, : self.n] = self.P
        M[: self.n, self.n] = self.q
        M[self.n, : self.n] = self.q
        M[self.n, self.n] = self.r
        return M

    def __repr__(self):
        return (f"ExtendedQuadratic(n={self.n}, p={self.p}"
                + (", improper" if self.improper else "") + ")")

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, x):
        """f(x): the quadratic part on the constraint set, +inf off it."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.n:
            raise ValueError("evaluate: dimension mismatch")
        if self.improper:
            return float("inf")
        if self.p and not _near_zero(self.F @ x + self.g, _maxabs(self.g)):
            return float("inf")
        return float(0.5 * x @ self.P @ x + self.q @ x + 0.5 * self.r)

    __call__ = evaluate

    # -- predicates ----------------------------------------------------------

    def is_proper(self) -> bool:
        """True iff the constraint set is nonempty."""
        if self.improper:
            return False
        return free_param(self.F, self.g) is not None

    def _rep_or_raise(self):
        if self.improper:
            raise ImproperInput("constraint set is infeasible")
        rep = free_param(self.F, self.g)
        if rep is None:
            raise ImproperInput("constraint set is infeasible")
        return rep

    def is_convex(self) -> bool:
        """Convexity on the feasible set: V2^T P V2 >= 0."""
        rep = self._rep_or_raise()
        return _is_psd(rep.V2.T @ self.P @ rep.V2)

    def is_strictly_convex(self) -> bool:
        rep = self._rep_or_raise()
        return _is_psd(rep.V2.T @ self.P @ rep.V2, strict=True)

    def is_nonnegative(self) -> bool:
        """True iff f(x) >= 0 for all feasible x (PSD test on the restricted form)."""
        rep = self._rep_or_raise()
        n, l = self.n, rep.l
        W = np.zeros((n + 1, l + 1))
        W[:n, :l] = rep.V2
        W[:n, l] = rep.x0
        W[n, l] = 1.0
        return _is_psd(W.T @ self.coefficient_matrix() @ W)

    def constraints_equal(self, other) -> bool:
        """True iff the two constraint sets are the same affine set.

        Checks rank equality plus mutual containment through the reduced
        representations: F1 V2_2 = 0, F1 x0_2 + g1 = 0 and symmetrically.
        """
        if self.n != other.n:
            raise ValueError("constraints_equal: dimensions differ")
        fe1, r1, x01, V11, V21, g1 = _constraint_svd(self.F, self.g)
        fe2, r2, x02, V12, V22, g2 = _constraint_svd(other.F, other.g)
        if self.improper or other.improper or not fe1 or not fe2:
            raise ImproperInput("constraints_equal requires feasible inputs")
        if r1 != r2:
            return False
        F1r, F2r = V11.T, V12.T  # reduced (orthonormal-row) constraint matrices
        scale = max(_maxabs(x01), _maxabs(x02), _maxabs(g1), _maxabs(g2))
        return (_near_zero(F1r @ V22, scale)
                and _near_zero(F1r @ x02 + g1, scale)
                and _near_zero(F2r @ V21, scale)
                and _near_zero(F2r @ x01 + g2, scale))

    def equals(self, other, tol=1e-8) -> bool:
        """Pointwise equality of the two functions on all of R^n."""
        if self.n != other.n:
            raise ValueError("equals: dimensions differ")
        p1, p2 = self.is_proper(), other.is_proper()
        if not p1 and not p2:
            return True
        if p1 != p2:
            return False
        if not self.constraints_equal(other):
            return False
        rep = free_param(self.F, self.g)
        V2, x0 = rep.V2, rep.x0

        def pieces(f):
            return (V2.T @ f.P @ V2,
                    V2.T @ (f.P @ x0 + f.q),
                    float(x0 @ f.P @ x0 + 2.0 * f.q @ x0 + f.r))

        a, b = pieces(self), pieces(other)
        return all(np.allclose(u, v, rtol=tol, atol=tol) for u, v in zip(a, b))

    # -- algebra --------------------------------------------------------------

    def reduce(self):
        """Canonical form: orthonormal constraint rows (F F^T = I, p = rank F).

        The quadratic part is untouched and the function is pointwise
        unchanged.  Returns an improper-flagged copy when the constraints are
        infeasible (an infeasible set has no reduced representation).
        Already-reduced inputs are returned as-is, which makes reduce
        idempotent bit-for-bit.
        """
        if self.improper:
            return self
        if self.p == 0:
            return self
        FFt = self.F @ self.F.T
        if _maxabs(FFt - np.eye(self.p)) <= 1e-12:
            return self
        feasible, rank, _, V1, _, g_red = _constraint_svd(self.F, self.g)
        if not feasible:
            return ExtendedQuadratic(self.P, self.q, self.r, self.F, self.g,
                                     improper=True)
        return ExtendedQuadratic(self.P, self.q, self.r, V1.T, g_red)

    def __add__(self, other):
        """Pointwise sum: coefficients add, constraints stack, result reduced."""
        if not isinstance(other, ExtendedQuadratic):
            return NotImplemented
        if self.n != other.n:
            raise ValueError("add: dimensions differ")
        out = ExtendedQuadratic(
            self.P + other.P, self.q + other.q, self.r + other.r,
            np.vstack([self.F, other.F]), np.concatenate([self.g, other.g]),
            improper=self.improper or other.improper)
        return out.reduce()

    def scale(self, alpha):
        """alpha * quadratic part, constraints kept.

        Note the constraint indicator is kept at +inf even for alpha < 0 (and
        for alpha = 0 the result is the extended constant 0 on the set).
        """
        a = float(alpha)
        return ExtendedQuadratic(a * self.P, a * self.q, a * self.r,
                                 self.F, self.g, improper=self.improper)

    def __mul__(self, alpha):
        return self.scale(alpha)

    __rmul__ = __mul__

    def precompose(self, mapping: AffineMap):
        """g(z) = f(A z + b): conjugate the coefficients, push constraints to F A.

        The result is returned reduced.
        """
        if mapping.output_dim != self.n:
            raise ValueError("precompose: map output dimension mismatch")
        A, b = mapping.A, mapping.b
        Pb_q = self.P @ b + self.q
        P_new = A.T @ self.P @ A
        q_new = A.T @ Pb_q
        r_new = float(b @ self.P @ b + 2.0 * self.q @ b + self.r)
        F_new = self.F @ A
        g_new = self.F @ b + self.g
        out = ExtendedQuadratic(P_new, q_new, r_new, F_new, g_new,
                                improper=self.improper)
        return out.reduce()

    # -- partial minimization --------------------------------------------------

    def partial_min(self, nx, nu):
        """g(x) = inf_u f(x, u) over the trailing nu variables.

        Returns (g, minimizer, status).  On status "ok", minimizer is the
        AffineMap x -> A x + b with f(x, minimizer(x)) = g(x) for every x in
        g's (induced) constraint set, obtained from the pseudo-inverse solve of
        the full KKT system.  On any other status g and minimizer are None:

        - "improper": f itself, or the induced constraint set on x, is infeasible.
        - "nonconvex": f has negative curvature along a feasible u direction.
        - "unbounded": convex in u but the KKT range condition fails, so the
          infimum is -inf somewhere.
        """
        if nx < 0 or nu < 0 or nx + nu != self.n:
            raise ValueError("partial_min: nx + nu must equal the dimension")
        if self.improper or not self.is_proper():
            return None, None, IMPROPER
        Pxx = self.P[:nx, :nx]
        Pxu = self.P[:nx, nx:]
        Puu = self.P[nx:, nx:]
        qx, qu = self.q[:nx], self.q[nx:]
        Fx, Fu = self.F[:, :nx], self.F[:, nx:]
        p = self.p

        # Constraint induced on x: F_x x + g must lie in range(F_u).
        if p:
            proj = np.eye(p) - Fu @ np.linalg.pinv(Fu)
            Ft, gt = proj @ Fx, proj @ self.g
        else:
            Ft, gt = np.zeros((0, nx)), np.zeros(0)
        rep = free_param(Ft, gt)
        if rep is None:
            return None, None, IMPROPER

        # Convexity along feasible u directions.
        nullspace_u = free_param(Fu, np.zeros(p)).V2
        if not _is_psd(nullspace_u.T @ Puu @ nullspace_u):
            return None, None, NONCONVEX

        # Solvability of the KKT system for every feasible x.
        kkt = np.zeros((nu + p, nu + p))
        kkt[:nu, :nu] = Puu
        kkt[:nu, nu:] = Fu.T
        kkt[nu:, :nu] = Fu
        rhs = np.zeros((nu + p, rep.l + 1))
        rhs[:nu, : rep.l] = Pxu.T @ rep.V2
        rhs[:nu, rep.l] = Pxu.T @ rep.x0 + qu
        rhs[nu:, : rep.l] = Fx @ rep.V2
        rhs[nu:, rep.l] = Fx @ rep.x0 + self.g
        if not range_contains(kkt, rhs):
            return None, None, UNBOUNDED

        sol_rows = np.linalg.pinv(kkt)[:nu]
        A_min = -(sol_rows[:, :nu] @ Pxu.T + sol_rows[:, nu:] @ Fx)
        b_min = -(sol_rows[:, :nu] @ qu + sol_rows[:, nu:] @ self.g)
        minimizer = AffineMap(A_min, b_min)

        stacked = AffineMap(np.vstack([np.eye(nx), A_min]),
                            np.concatenate([np.zeros(nx), b_min]))
        g_out = self.precompose(stacked) + ExtendedQuadratic(
            np.zeros((nx, nx)), np.zeros(nx), 0.0, Ft, gt)
        return g_out, minimizer, OK

    # -- serialization -----------------------------------------------------------

    def to_dict(self):
        """JSON-ready dict {n, P, q, r, F, g} with row-major flat matrices.

        Numbers survive a JSON round trip bit-for-bit (shortest round-trip
        float formatting).  An "improper" key is added only when set.
        """
        d = {"n": self.n,
             "P": [float(v) for v in self.P.reshape(-1)],
             "q": [float(v) for v in self.q],
             "r": self.r,
             "F": [float(v) for v in self.F.reshape(-1)],
             "g": [float(v) for v in self.g]}
        if self.improper:
            d["improper"] = True
        return d

    @classmethod
    def from_dict(cls, d):
        n = int(d["n"])
        P = np.asarray(d["P"], dtype=float).reshape(n, n)
        q = np.asarray(d["q"], dtype=float)
        g = np.asarray(d["g"], dtype=float)
        F = np.asarray(d["F"], dtype=float).reshape(g.shape[0], n) if g.size \
            else np.zeros((0, n))
        return cls(P, q, d["r"], F, g, improper=bool(d.get("improper", False)))
