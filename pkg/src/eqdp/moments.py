"""Exact expectation of random quadratics from first/second moments.

When a value function carries no equality constraints, the expectation step of
a Bellman backup needs nothing beyond the first and second moments of the
(random) affine dynamics and the first moment of the cost matrix.  This module
provides that closed form, plus the lognormal mean/covariance formulas used by
the finance-flavored problem builders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConstraintsPresent(ValueError):
    """Exact expectation needs an unconstrained value function; fall back to Monte Carlo."""


@dataclass(frozen=True)
class MomentPair:
    """Mean vector and PSD covariance matrix of a random vector."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValueError("covariance shape does not match mean")
        cov = 0.5 * (cov + cov.T)
        w = np.linalg.eigvalsh(cov) if cov.size else np.zeros(0)
        if w.size and float(w.min()) < -1e-9 * max(1.0, float(np.max(np.abs(w)))):
            raise ValueError("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class SecondMomentTensor:
    """Joint second moments of an augmented affine map.

    For the random map z -> K z + k, let A = [[K, k], [0, 1]] of shape
    (n+1) x (m+1).  M[l, i, k, j] = E[A_li A_kj], a dense 4-index array with
    the symmetry M[l, i, k, j] = M[k, j, l, i].  The deterministic last row of
    A makes every entry involving it a plain product with the first moments.
    """

    M: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.ndim != 4 or M.shape[0] != M.shape[2] or M.shape[1] != M.shape[3]:
            raise ValueError("second-moment tensor must have shape (n+1, m+1, n+1, m+1)")
        if not np.allclose(M, M.transpose(2, 3, 0, 1), rtol=1e-9, atol=1e-9):
            raise ValueError("second-moment tensor lacks the pair symmetry")
        object.__setattr__(self, "M", M)

    @property
    def output_dim(self) -> int:
        return self.M.shape[0] - 1

    @property
    def input_dim(self) -> int:
        return self.M.shape[1] - 1

    @classmethod
    def from_deterministic(cls, K, k):
        """Tensor of a deterministic map: plain outer product of [[K, k], [0, 1]]."""
        A = _augment(K, k)
        return cls(np.einsum("li,kj->likj", A, A))

    @classmethod
    def from_mean_and_cov(cls, mean_K, mean_k, cov):
        """Tensor from the mean map and the covariance of its random entries.

        cov[l, i, k, j] = Cov(A_li, A_kj) over the augmented shape; entries in
        the deterministic last row must have zero covariance.
        """
        A = _augment(mean_K, mean_k)
        cov = np.asarray(cov, dtype=float)
        if cov.shape != A.shape + A.shape:
            raise ValueError("covariance tensor shape mismatch")
        return cls(np.einsum("li,kj->likj", A, A) + cov)


def _augment(K, k):
    K = np.atleast_2d(np.asarray(K, dtype=float))
    k = np.asarray(k, dtype=float).reshape(-1)
    n, m = K.shape
    if k.shape[0] != n:
        raise ValueError("offset length does not match map rows")
    A = np.zeros((n + 1, m + 1))
    A[:n, :m] = K
    A[:n, m] = k
    A[n, m] = 1.0
    return A


def expected_precompose(B, tensor: SecondMomentTensor):
    """Coefficients of h(z) = E g(K z + k) for an unconstrained quadratic g.

    B is the (n+1) x (n+1) symmetric coefficient matrix of g; the result is the
    (m+1) x (m+1) coefficient matrix of h, computed entrywise as
    sum_l sum_k B_lk E[A_li A_kj] and symmetrized.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    M = tensor.M
    if B.shape != (M.shape[0], M.shape[0]):
        raise ValueError("coefficient matrix does not match tensor dimensions")
    H = np.einsum("lk,likj->ij", B, M)
    return 0.5 * (H + H.T)


def expected_quadratic(mean_coeffs):
    """Expectation of a quadratic with random coefficients: just their mean."""
    B = np.atleast_2d(np.asarray(mean_coeffs, dtype=float))
    if B.shape[0] != B.shape[1]:
        raise ValueError("coefficient matrix must be square")
    return 0.5 * (B + B.T)


def lognormal_moments(mu, Sigma) -> MomentPair:
    """Mean and covariance of exp(z) with z ~ N(mu, Sigma).

    E[x]_i = exp(mu_i + Sigma_ii / 2) and
    Cov[x]_ij = E[x]_i E[x]_j (exp(Sigma_ij) - 1).
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if Sigma.shape != (mu.shape[0], mu.shape[0]):
        raise ValueError("Sigma shape does not match mu")
    Sigma = 0.5 * (Sigma + Sigma.T)
    w = np.linalg.eigvalsh(Sigma)
    if float(w.min()) < -1e-9 * max(1.0, float(np.max(np.abs(w)))):
        raise ValueError("Sigma is not positive semidefinite")
    mean = np.exp(mu + 0.5 * np.diag(Sigma))
    cov = np.outer(mean, mean) * (np.exp(Sigma) - 1.0)
    return MomentPair(mean=mean, covariance=cov)


@dataclass(frozen=True)
class ExactMoments:
    """Per-mode data for the exact expectation back end of a Bellman backup.

    tensors[s] holds the joint second moments of the augmented dynamics map
    [[A, B, c], [0, 0, 1]] acting on (x, u); mean_G[s] is the first moment of
    the stage cost coefficient matrix.  Constructed by problem builders that
    know their distributions in closed form.
    """

    tensors: tuple
    mean_G: tuple

    def __post_init__(self):
        tensors = tuple(self.tensors)
        mean_G = tuple(np.atleast_2d(np.asarray(G, dtype=float)) for G in self.mean_G)
        if len(tensors) != len(mean_G):
            raise ValueError("per-mode lists disagree in length")
        object.__setattr__(self, "tensors", tensors)
        object.__setattr__(self, "mean_G", mean_G)

    @property
    def modes(self) -> int:
        return len(self.tensors)
