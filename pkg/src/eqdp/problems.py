"""Builders for canonical control problems, with independent verification oracles.

Every builder returns a :class:`~eqdp.dp.ProblemSpec` whose sampler draws from
counter-based streams keyed by (seed, [t,] mode), with the sample index as the
stream position; results are therefore reproducible and independent of batch
size.  Quadratic-form costs use the function convention g(x, u) = x^T Q x +
u^T R u unless a builder documents otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dp import ProblemSpec, StageBatch, stream_rng
from .extquad import ExtendedQuadratic
from .moments import ExactMoments, SecondMomentTensor, lognormal_moments


def _psd_check(M, name, strict=False):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    tol = 1e-9 * max(1.0, float(np.max(np.abs(w))) if w.size else 0.0)
    if strict:
        if w.size == 0 or float(w.min()) <= tol:
            raise ValueError(f"{name} must be positive definite")
    elif w.size and float(w.min()) < -tol:
        raise ValueError(f"{name} must be positive semidefinite")
    return M


def _const_batch(count, A_modes, B_modes, c_modes, G_modes):
    """Batch of `count` identical per-mode realizations (deterministic data)."""
    A = np.broadcast_to(A_modes, (count,) + A_modes.shape).copy()
    B = np.broadcast_to(B_modes, (count,) + B_modes.shape).copy()
    c = np.broadcast_to(c_modes, (count,) + c_modes.shape).copy()
    G = np.broadcast_to(G_modes, (count,) + G_modes.shape).copy()
    return StageBatch(A=A, B=B, c=c, G=G)


def _cost_matrix(n, m, Pxx=None, Puu=None, Pxu=None, qx=None, qu=None, r=0.0):
    G = np.zeros((n + m + 1, n + m + 1))
    if Pxx is not None:
        G[:n, :n] = Pxx
    if Puu is not None:
        G[n:n + m, n:n + m] = Puu
    if Pxu is not None:
        G[:n, n:n + m] = Pxu
        G[n:n + m, :n] = np.asarray(Pxu).T
    if qx is not None:
        G[:n, n + m] = qx
        G[n + m, :n] = qx
    if qu is not None:
        G[n:n + m, n + m] = qu
        G[n + m, n:n + m] = qu
    G[n + m, n + m] = r
    return G


def _dynamics_tensor(A, B, c, cov=None):
    """Second-moment tensor of the augmented map [[A, B, c], [0, 0, 1]]."""
    K = np.hstack([A, B])
    if cov is None:
        return SecondMomentTensor.from_deterministic(K, c)
    return SecondMomentTensor.from_mean_and_cov(K, c, cov)


# ---------------------------------------------------------------------------
# LQR


@dataclass(frozen=True)
class LqrData:
    """Regulator data: dynamics (A, B), additive noise covariance W, and
    quadratic-form stage cost x^T Q x + u^T R u (Q PSD, R PD)."""

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise ValueError("A must be square and B row-compatible")
        W = _psd_check(self.W, "W")
        Q = _psd_check(self.Q, "Q")
        R = _psd_check(self.R, "R", strict=True)
        for name, M, dim in (("W", W, A.shape[0]), ("Q", Q, A.shape[0]),
                             ("R", R, B.shape[1])):
            if M.shape != (dim, dim):
                raise ValueError(f"{name} has the wrong shape")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


def lqr(data: LqrData, T=None) -> ProblemSpec:
    """Single-mode regulator problem.

    The sampler is deterministic in (A, B); additive noise, when W is nonzero,
    enters through the offset draw c ~ N(0, W) and affects only the constant
    term of the value function (certainty equivalence), not P or the gains.
    """
    n, m = data.A.shape[0], data.B.shape[1]
    G = _cost_matrix(n, m, Pxx=2 * data.Q, Puu=2 * data.R)
    A3, B3 = data.A[None], data.B[None]
    G3 = G[None]
    noisy = bool(np.any(data.W))
    if noisy:
        L = np.linalg.cholesky(data.W + 1e-15 * np.eye(n))

        def sampler(count, seed):
            c = np.zeros((count, 1, n))
            z = stream_rng(seed, 0).standard_normal((count, n))
            c[:, 0, :] = z @ L.T
            return StageBatch(A=np.broadcast_to(A3, (count, 1, n, n)).copy(),
                              B=np.broadcast_to(B3, (count, 1, n, m)).copy(),
                              c=c,
                              G=np.broadcast_to(G3, (count, 1, n + m + 1, n + m + 1)).copy())
    else:
        def sampler(count, seed):
            return _const_batch(count, A3, B3, np.zeros((1, n)), G3)

    cov = np.zeros((n + 1, n + m + 1, n + 1, n + m + 1))
    cov[:n, n + m, :n, n + m] = data.W
    em = ExactMoments(tensors=(_dynamics_tensor(data.A, data.B, np.zeros(n), cov),),
                      mean_G=(G,))
    return ProblemSpec(n=n, m=m, K=1, sampler=sampler, time_invariant=True,
                       Pi=np.eye(1), terminal_costs=(ExtendedQuadratic.zero(n),),
                       T=T, exact_moments=em)


def riccati_fixed_point(data: LqrData, iterations=10_000, tol=1e-12):
    """Iterate the discrete Riccati map from P = 0 until it settles.

    Returns (P, K) in the function convention V(x) = x^T P x with gain
    u = K x, K = -(R + B^T P B)^{-1} B^T P A.
    """
    A, B, Q, R = data.A, data.B, data.Q, data.R
    P = np.zeros_like(Q)
    for _ in range(iterations):
        S = R + B.T @ P @ B
        Pn = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(S, B.T @ P @ A)
        if float(np.max(np.abs(Pn - P))) < tol:
            P = Pn
            break
        P = Pn
    K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return P, K


# ---------------------------------------------------------------------------
# Scalar regulator with random gains (uncertainty threshold instance)


def random_lqr_scalar(a_mean, b_mean, var_a, var_b, T=None) -> ProblemSpec:
    """Scalar system x' = a x + b u with independent Gaussian a, b and cost
    x^2 + u^2.  Carries exact-moment data, so both expectation back ends apply."""
    if var_a < 0 or var_b < 0:
        raise ValueError("variances must be nonnegative")
    G = _cost_matrix(1, 1, Pxx=[[2.0]], Puu=[[2.0]])
    sa, sb = np.sqrt(var_a), np.sqrt(var_b)

    def sampler(t, count, seed):
        z = stream_rng(seed, t, 0).standard_normal((count, 2))
        A = (a_mean + sa * z[:, 0]).reshape(count, 1, 1, 1)
        B = (b_mean + sb * z[:, 1]).reshape(count, 1, 1, 1)
        return StageBatch(A=A, B=B, c=np.zeros((count, 1, 1)),
                          G=np.broadcast_to(G, (count, 1, 3, 3)).copy())

    cov = np.zeros((2, 3, 2, 3))
    cov[0, 0, 0, 0] = var_a
    cov[0, 1, 0, 1] = var_b
    em = ExactMoments(tensors=(_dynamics_tensor([[a_mean]], [[b_mean]], [0.0], cov),),
                      mean_G=(G,))
    return ProblemSpec(n=1, m=1, K=1, sampler=sampler, time_invariant=False,
                       Pi=np.eye(1), terminal_costs=(ExtendedQuadratic.zero(1),),
                       T=T, exact_moments=em)


def random_lqr_recursion(a_mean, b_mean, var_a, var_b, T):
    """Closed-form backward recursion for the scalar random regulator.

    With V_t(x) = k_t x^2 and k_T = 0, one-variable calculus over
    x^2 + u^2 + k E[(a x + b u)^2] gives

        k_t = 1 + k (abar^2 + var_a) - (k abar bbar)^2 / (1 + k (bbar^2 + var_b)).

    Returns the array [k_0, ..., k_T].
    """
    Ea2 = a_mean * a_mean + var_a
    Eb2 = b_mean * b_mean + var_b
    Eab = a_mean * b_mean
    k = np.zeros(T + 1)
    for t in range(T - 1, -1, -1):
        kn = k[t + 1]
        k[t] = 1.0 + kn * Ea2 - (kn * Eab) ** 2 / (1.0 + kn * Eb2)
    return k


# ---------------------------------------------------------------------------
# Mode-switching regulator


def jump_lqr(A_modes, B_modes, c_modes, Pi, Q, R, T=None) -> ProblemSpec:
    """Regulator whose (A, B, c) switch with a Markov mode; quadratic-form cost
    x^T Q x + u^T R u shared across modes."""
    A_modes = np.asarray(A_modes, dtype=float)
    B_modes = np.asarray(B_modes, dtype=float)
    K, n = A_modes.shape[0], A_modes.shape[1]
    m = B_modes.shape[2]
    if B_modes.shape != (K, n, m):
        raise ValueError("per-mode B shapes disagree with A")
    c_modes = (np.zeros((K, n)) if c_modes is None
               else np.asarray(c_modes, dtype=float).reshape(K, n))
    Qm = _psd_check(Q, "Q")
    Rm = _psd_check(R, "R", strict=True)
    G = _cost_matrix(n, m, Pxx=2 * Qm, Puu=2 * Rm)
    G_modes = np.broadcast_to(G, (K,) + G.shape).copy()

    def sampler(count, seed):
        return _const_batch(count, A_modes, B_modes, c_modes, G_modes)

    em = ExactMoments(
        tensors=tuple(_dynamics_tensor(A_modes[s], B_modes[s], c_modes[s])
                      for s in range(K)),
        mean_G=tuple(G_modes))
    return ProblemSpec(n=n, m=m, K=K, sampler=sampler, time_invariant=True,
                       Pi=Pi, terminal_costs=tuple(ExtendedQuadratic.zero(n)
                                                   for _ in range(K)),
                       T=T, exact_moments=em)


# ---------------------------------------------------------------------------
# Mission tracking with switching targets


def multi_mission(A, B, targets, effort_weight, Pi, T=None) -> ProblemSpec:
    """Point tracking with randomly switching target positions.

    Stage cost per mission s: (1/2) ||p - d_s||^2 + (lam/2) ||u||^2, where p is
    the leading len(d_s) state coordinates and lam = effort_weight.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, m = A.shape[0], B.shape[1]
    lam = float(effort_weight)
    if lam <= 0:
        raise ValueError("control effort weight must be positive")
    targets = [np.asarray(d, dtype=float).reshape(-1) for d in targets]
    K = len(targets)
    d_len = targets[0].shape[0]
    G_modes = np.zeros((K, n + m + 1, n + m + 1))
    for s, d in enumerate(targets):
        Pxx = np.zeros((n, n))
        Pxx[:d_len, :d_len] = np.eye(d_len)
        qx = np.zeros(n)
        qx[:d_len] = -d
        G_modes[s] = _cost_matrix(n, m, Pxx=Pxx, Puu=lam * np.eye(m),
                                  qx=qx, r=float(d @ d))
    A_modes = np.broadcast_to(A, (K, n, n)).copy()
    B_modes = np.broadcast_to(B, (K, n, m)).copy()
    c_modes = np.zeros((K, n))

    def sampler(count, seed):
        return _const_batch(count, A_modes, B_modes, c_modes, G_modes)

    return ProblemSpec(n=n, m=m, K=K, sampler=sampler, time_invariant=True,
                       Pi=Pi, terminal_costs=tuple(ExtendedQuadratic.zero(n)
                                                   for _ in range(K)),
                       T=T)


# ---------------------------------------------------------------------------
# Regulator with failing actuators


def fault_tolerant(A, B, configurations, Pi, Q, R, T=None) -> ProblemSpec:
    """Regulator whose actuators fail in Markov-switching configurations.

    Mode s zeroes the B columns listed in configurations[s] and pins the
    corresponding inputs to zero through equality rows, so failed-actuator
    policy rows vanish structurally.  Cost is x^T Q x + u^T R u.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, m = A.shape[0], B.shape[1]
    Qm = _psd_check(Q, "Q")
    Rm = _psd_check(R, "R", strict=True)
    configs = [sorted(set(int(j) for j in cfg)) for cfg in configurations]
    for cfg in configs:
        if cfg and (cfg[0] < 0 or cfg[-1] >= m):
            raise ValueError("failed-actuator indices out of range")
    K = len(configs)
    B_modes = np.zeros((K, n, m))
    constraints = []
    for s, cfg in enumerate(configs):
        Bs = B.copy()
        for j in cfg:
            Bs[:, j] = 0.0
        B_modes[s] = Bs
        if cfg:
            H = np.zeros((len(cfg), m))
            for row, j in enumerate(cfg):
                H[row, j] = 1.0
            constraints.append((np.zeros((len(cfg), n)), H, np.zeros(len(cfg))))
        else:
            constraints.append(None)
    G = _cost_matrix(n, m, Pxx=2 * Qm, Puu=2 * Rm)
    G_modes = np.broadcast_to(G, (K,) + G.shape).copy()
    A_modes = np.broadcast_to(A, (K, n, n)).copy()
    c_modes = np.zeros((K, n))

    def sampler(count, seed):
        return _const_batch(count, A_modes, B_modes, c_modes, G_modes)

    return ProblemSpec(n=n, m=m, K=K, sampler=sampler, time_invariant=True,
                       Pi=Pi, constraints=constraints,
                       terminal_costs=tuple(ExtendedQuadratic.zero(n)
                                            for _ in range(K)),
                       T=T)


# ---------------------------------------------------------------------------
# Portfolio allocation across market regimes


@dataclass(frozen=True)
class PortfolioData:
    """Per-regime lognormal gross-return parameters and trading frictions.

    Gross returns are 1 + r = exp(z), z ~ N(log_mean[s], log_cov[s]).  The
    stage cost trades expected net return against variance (weight
    risk_aversion >= 0) and a diagonal quadratic transaction cost trade_cost[s]
    >= 0, under the self-financing constraint 1^T u = 0.
    """

    log_mean: np.ndarray
    log_cov: np.ndarray
    trade_cost: np.ndarray
    risk_aversion: float
    Pi: np.ndarray

    def __post_init__(self):
        lm = np.atleast_2d(np.asarray(self.log_mean, dtype=float))
        K, n = lm.shape
        lc = np.asarray(self.log_cov, dtype=float).reshape(K, n, n)
        tc = np.atleast_2d(np.asarray(self.trade_cost, dtype=float)).reshape(K, n)
        if np.any(tc < 0):
            raise ValueError("transaction cost coefficients must be nonnegative")
        if self.risk_aversion < 0:
            raise ValueError("risk aversion must be nonnegative")
        for s in range(K):
            _psd_check(lc[s], f"log_cov[{s}]")
        object.__setattr__(self, "log_mean", lm)
        object.__setattr__(self, "log_cov", lc)
        object.__setattr__(self, "trade_cost", tc)

    @property
    def regimes(self):
        return self.log_mean.shape[0]

    @property
    def assets(self):
        return self.log_mean.shape[1]


def portfolio(data: PortfolioData, T) -> ProblemSpec:
    """Multi-regime portfolio problem over holdings h with trades u.

    Dynamics h' = diag(1 + r^s)(h + u); cost
    -mu_s^T (h + u) + u^T diag(b_s) u + gamma (h + u)^T Sigma_s (h + u)
    with the self-financing row 1^T u = 0.  mu_s, Sigma_s are the exact
    moments of the net return implied by the lognormal parameters.
    """
    K, n = data.regimes, data.assets
    gam = float(data.risk_aversion)
    G_modes = np.zeros((K, 2 * n + 1, 2 * n + 1))
    for s in range(K):
        mp = lognormal_moments(data.log_mean[s], data.log_cov[s])
        mu = mp.mean - 1.0
        Sig = mp.covariance
        G_modes[s] = _cost_matrix(
            n, n, Pxx=2 * gam * Sig, Puu=2 * gam * Sig + 2 * np.diag(data.trade_cost[s]),
            Pxu=2 * gam * Sig, qx=-mu, qu=-mu)
    cons = [(np.zeros((1, n)), np.ones((1, n)), np.zeros(1)) for _ in range(K)]
    chol = [np.linalg.cholesky(data.log_cov[s] + 1e-15 * np.eye(n)) for s in range(K)]

    def sampler(count, seed):
        A = np.zeros((count, K, n, n))
        for s in range(K):
            z = stream_rng(seed, s).standard_normal((count, n))
            gross = np.exp(data.log_mean[s] + z @ chol[s].T)
            A[:, s] = gross[:, :, None] * np.eye(n)
        return StageBatch(A=A, B=A.copy(), c=np.zeros((count, K, n)),
                          G=np.broadcast_to(G_modes, (count, K) + G_modes.shape[1:]).copy())

    return ProblemSpec(n=n, m=n, K=K, sampler=sampler, time_invariant=True,
                       Pi=data.Pi, constraints=cons,
                       terminal_costs=tuple(ExtendedQuadratic.zero(n)
                                            for _ in range(K)),
                       T=T)


# ---------------------------------------------------------------------------
# Optimal execution


@dataclass(frozen=True)
class ExecutionData:
    """Liquidation problem data for n assets.

    State is (q, p): share quantities and prices.  Selling u costs quadratic
    transaction fees diag(trade_cost) (> 0), moves the price by the linear
    impact matrix, and open positions pay diag(exposure_cost) (>= 0).  Prices
    evolve by the multiplicative lognormal factor exp(z), z ~ N(log_mean,
    diag(log_var)) per asset.  With terminal_liquidation, q_T = 0 is an
    equality constraint of the terminal cost.
    """

    trade_cost: np.ndarray
    impact: np.ndarray
    exposure_cost: np.ndarray
    log_mean: np.ndarray
    log_var: np.ndarray
    T: int
    terminal_liquidation: bool = True

    def __post_init__(self):
        tc = np.asarray(self.trade_cost, dtype=float).reshape(-1)
        if np.any(tc <= 0):
            raise ValueError("trade cost coefficients must be positive")
        n = tc.shape[0]
        imp = np.atleast_2d(np.asarray(self.impact, dtype=float))
        ec = np.asarray(self.exposure_cost, dtype=float).reshape(-1)
        if np.any(ec < 0):
            raise ValueError("exposure cost coefficients must be nonnegative")
        lm = np.asarray(self.log_mean, dtype=float).reshape(-1)
        lv = np.asarray(self.log_var, dtype=float).reshape(-1)
        if np.any(lv < 0):
            raise ValueError("log variances must be nonnegative")
        if not (imp.shape == (n, n) and ec.shape == (n,) and lm.shape == (n,)
                and lv.shape == (n,)):
            raise ValueError("execution data shapes disagree")
        if self.T < 1:
            raise ValueError("horizon must be at least 1")
        object.__setattr__(self, "trade_cost", tc)
        object.__setattr__(self, "impact", imp)
        object.__setattr__(self, "exposure_cost", ec)
        object.__setattr__(self, "log_mean", lm)
        object.__setattr__(self, "log_var", lv)

    @property
    def assets(self):
        return self.trade_cost.shape[0]


def _execution_cost_matrix(data: ExecutionData):
    n = data.assets
    # Over (q, p, u): revenue -u^T p, fees (1/2) u^T diag(tc) u, exposure
    # (1/2) q^T diag(ec) q.  Matrix entries chosen so V_0's q-q entry comes out
    # gamma_trade / T in the frictionless case.
    G = np.zeros((3 * n + 1, 3 * n + 1))
    G[:n, :n] = np.diag(data.exposure_cost)
    G[2 * n:3 * n, 2 * n:3 * n] = np.diag(data.trade_cost)
    G[n:2 * n, 2 * n:3 * n] = -np.eye(n)
    G[2 * n:3 * n, n:2 * n] = -np.eye(n)
    return G


def _execution_sampler(data: ExecutionData, K):
    n = data.assets
    sig = np.sqrt(data.log_var)
    G = _execution_cost_matrix(data)
    G_modes = np.broadcast_to(G, (K,) + G.shape).copy()
    deterministic = not np.any(data.log_var)

    def sampler(t, count, seed):
        A = np.zeros((count, K, 2 * n, 2 * n))
        B = np.zeros((count, K, 2 * n, n))
        for s in range(K):
            if deterministic:
                gross = np.broadcast_to(np.exp(data.log_mean), (count, n)).copy()
            else:
                z = stream_rng(seed, t, s).standard_normal((count, n))
                gross = np.exp(data.log_mean + sig * z)
            A[:, s, :n, :n] = np.eye(n)
            A[:, s, n:, n:] = gross[:, :, None] * np.eye(n)
            B[:, s, :n, :] = -np.eye(n)
            B[:, s, n:, :] = -gross[:, :, None] * data.impact
        return StageBatch(A=A, B=B, c=np.zeros((count, K, 2 * n)),
                          G=np.broadcast_to(G_modes, (count, K) + G.shape).copy())

    return sampler


def optimal_execution(data: ExecutionData) -> ProblemSpec:
    """Liquidate q over T periods against impact, fees, and exposure costs."""
    n = data.assets
    if data.terminal_liquidation:
        FT = np.hstack([np.eye(n), np.zeros((n, n))])
        terminal = ExtendedQuadratic(np.zeros((2 * n, 2 * n)), np.zeros(2 * n), 0.0,
                                     FT, np.zeros(n))
    else:
        terminal = ExtendedQuadratic.zero(2 * n)
    return ProblemSpec(n=2 * n, m=n, K=1, sampler=_execution_sampler(data, 1),
                       time_invariant=False, Pi=np.eye(1),
                       terminal_costs=(terminal,), T=data.T)


def execution_random_horizon(data: ExecutionData, stop_probs) -> ProblemSpec:
    """Execution variant where a forced-liquidation mode arrives randomly.

    Mode 0 trades normally; mode 1 (absorbing) adds the stage constraint
    q = 0.  stop_probs[t] is the probability of being forced at t + 1.
    """
    n = data.assets
    p_t = np.asarray(stop_probs, dtype=float).reshape(-1)
    if np.any(p_t < 0) or np.any(p_t > 1):
        raise ValueError("stop probabilities must lie in [0, 1]")
    if p_t.shape[0] < data.T:
        raise ValueError("need one stop probability per stage")

    def Pi(t):
        p = p_t[min(t, p_t.shape[0] - 1)]
        return np.array([[1.0 - p, 0.0], [p, 1.0]])

    held_rows = (np.hstack([np.eye(n), np.zeros((n, n))]),
                 np.zeros((n, n)), np.zeros(n))
    constraints = [None, held_rows]
    FT = np.hstack([np.eye(n), np.zeros((n, n))])
    terminal = tuple(ExtendedQuadratic(np.zeros((2 * n, 2 * n)), np.zeros(2 * n),
                                       0.0, FT, np.zeros(n)) for _ in range(2))
    return ProblemSpec(n=2 * n, m=n, K=2, sampler=_execution_sampler(data, 2),
                       time_invariant=False, Pi=Pi, constraints=constraints,
                       terminal_costs=terminal, T=data.T)


# ---------------------------------------------------------------------------
# Retirement planning


@dataclass(frozen=True)
class RetirementData:
    """Lifetime consumption/bequest planning data.

    death_probs[t] is the chance of dying during year t.  Asset total returns
    are lognormal exp(z), z ~ N(log_mean, log_cov).  Utilities are concave
    quadratics (a, b) meaning U(C) = (a/2) C^2 + b C with a <= 0; consume_utility
    applies while alive, bequest_utility at death.  risk_aversion >= 0 weights
    the one-year wealth variance penalty.
    """

    death_probs: np.ndarray
    log_mean: np.ndarray
    log_cov: np.ndarray
    consume_utility: tuple
    bequest_utility: tuple
    risk_aversion: float

    def __post_init__(self):
        p = np.asarray(self.death_probs, dtype=float).reshape(-1)
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("death probabilities must lie in [0, 1]")
        lm = np.asarray(self.log_mean, dtype=float).reshape(-1)
        lc = np.atleast_2d(np.asarray(self.log_cov, dtype=float))
        _psd_check(lc, "log_cov")
        for name, (a, _b) in (("consume_utility", self.consume_utility),
                              ("bequest_utility", self.bequest_utility)):
            if a > 0:
                raise ValueError(f"{name} must be concave (quadratic coefficient <= 0)")
        if self.risk_aversion < 0:
            raise ValueError("risk aversion must be nonnegative")
        object.__setattr__(self, "death_probs", p)
        object.__setattr__(self, "log_mean", lm)
        object.__setattr__(self, "log_cov", lc)

    @property
    def assets(self):
        return self.log_mean.shape[0]


def retirement(data: RetirementData, T) -> ProblemSpec:
    """Two-mode (alive / deceased) consumption-investment problem.

    State is wealth W; input u allocates across assets; C = W - 1^T u is
    consumed while alive and bequeathed at death.  The deceased mode is
    absorbing, carries the bequest utility once (wealth then drops to zero),
    and pins u = 0 through equality rows.
    """
    m = data.assets
    if T > data.death_probs.shape[0]:
        raise ValueError("need one death probability per year of the horizon")
    mp = lognormal_moments(data.log_mean, data.log_cov)
    Sigma = mp.covariance
    gam = float(data.risk_aversion)
    ones = np.ones(m)

    def negative_utility_cost(a, b, extra_uu):
        alpha, beta = -float(a), float(b)
        Puu = alpha * np.outer(ones, ones) + extra_uu
        return _cost_matrix(1, m, Pxx=[[alpha]], Puu=Puu,
                            Pxu=(-alpha * ones)[None, :], qx=[-beta], qu=beta * ones)

    G_alive = negative_utility_cost(*data.consume_utility, extra_uu=2 * gam * Sigma)
    G_dead = negative_utility_cost(*data.bequest_utility, extra_uu=np.zeros((m, m)))
    G_modes = np.stack([G_alive, G_dead])
    constraints = [None, (np.zeros((m, 1)), np.eye(m), np.zeros(m))]

    def Pi(t):
        p = data.death_probs[min(t, data.death_probs.shape[0] - 1)]
        return np.array([[1.0 - p, 0.0], [p, 1.0]])

    chol = np.linalg.cholesky(data.log_cov + 1e-15 * np.eye(m))

    def sampler(count, seed):
        B = np.zeros((count, 2, 1, m))
        z = stream_rng(seed, 0).standard_normal((count, m))
        B[:, 0, 0, :] = np.exp(data.log_mean + z @ chol.T)
        return StageBatch(A=np.zeros((count, 2, 1, 1)), B=B,
                          c=np.zeros((count, 2, 1)),
                          G=np.broadcast_to(G_modes, (count, 2) + G_modes.shape[1:]).copy())

    return ProblemSpec(n=1, m=m, K=2, sampler=sampler, time_invariant=True,
                       Pi=Pi, constraints=constraints,
                       terminal_costs=(ExtendedQuadratic.zero(1),
                                       ExtendedQuadratic.zero(1)),
                       T=T)


# ---------------------------------------------------------------------------
# Config-file entry points (consumed by the CLI)


def _arr(params, key):
    if key not in params:
        raise ValueError(f"missing config field '{key}'")
    return np.asarray(params[key], dtype=float)


def _build_lqr(params, T):
    A = _arr(params, "A")
    n = np.atleast_2d(A).shape[0]
    W = _arr(params, "W") if "W" in params else np.zeros((n, n))
    return lqr(LqrData(A=A, B=_arr(params, "B"), W=W, Q=_arr(params, "Q"),
                       R=_arr(params, "R")), T=T)


def _build_random_lqr_scalar(params, T):
    return random_lqr_scalar(float(params["a_mean"]), float(params["b_mean"]),
                             float(params["var_a"]), float(params["var_b"]), T=T)


def _build_jump_lqr(params, T):
    c = _arr(params, "c") if "c" in params else None
    return jump_lqr(_arr(params, "A"), _arr(params, "B"), c, _arr(params, "Pi"),
                    _arr(params, "Q"), _arr(params, "R"), T=T)


def _build_multi_mission(params, T):
    return multi_mission(_arr(params, "A"), _arr(params, "B"), _arr(params, "targets"),
                         float(params["effort_weight"]), _arr(params, "Pi"), T=T)


def _build_fault_tolerant(params, T):
    return fault_tolerant(_arr(params, "A"), _arr(params, "B"),
                          params["configurations"], _arr(params, "Pi"),
                          _arr(params, "Q"), _arr(params, "R"), T=T)


def _build_portfolio(params, T):
    data = PortfolioData(log_mean=_arr(params, "log_mean"),
                         log_cov=_arr(params, "log_cov"),
                         trade_cost=_arr(params, "trade_cost"),
                         risk_aversion=float(params["risk_aversion"]),
                         Pi=_arr(params, "Pi"))
    return portfolio(data, T=T)


def _execution_data(params):
    return ExecutionData(trade_cost=_arr(params, "trade_cost"),
                         impact=_arr(params, "impact"),
                         exposure_cost=_arr(params, "exposure_cost"),
                         log_mean=_arr(params, "log_mean"),
                         log_var=_arr(params, "log_var"),
                         T=int(params["T"]),
                         terminal_liquidation=bool(params.get("terminal_liquidation", True)))


def _build_optimal_execution(params, T):
    return optimal_execution(_execution_data(params))


def _build_execution_random_horizon(params, T):
    return execution_random_horizon(_execution_data(params), _arr(params, "stop_probs"))


def _build_retirement(params, T):
    data = RetirementData(death_probs=_arr(params, "death_probs"),
                          log_mean=_arr(params, "log_mean"),
                          log_cov=_arr(params, "log_cov"),
                          consume_utility=tuple(params["consume_utility"]),
                          bequest_utility=tuple(params["bequest_utility"]),
                          risk_aversion=float(params["risk_aversion"]))
    return retirement(data, T=T if T is not None else data.death_probs.shape[0])


REGISTRY = {
    "lqr": (_build_lqr,
            "params: A n*n, B n*m, Q n*n PSD, R m*m PD, optional W n*n"),
    "random_lqr_scalar": (_build_random_lqr_scalar,
                          "params: a_mean, b_mean, var_a, var_b (scalars)"),
    "jump_lqr": (_build_jump_lqr,
                 "params: A K*n*n, B K*n*m, Pi K*K column-stochastic, Q, R, optional c K*n"),
    "multi_mission": (_build_multi_mission,
                      "params: A n*n, B n*m, targets K*d, effort_weight, Pi K*K"),
    "fault_tolerant": (_build_fault_tolerant,
                       "params: A n*n, B n*m, configurations (list of failed-input index lists), Pi, Q, R"),
    "portfolio": (_build_portfolio,
                  "params: log_mean K*n, log_cov K*n*n, trade_cost K*n, risk_aversion, Pi K*K"),
    "optimal_execution": (_build_optimal_execution,
                          "params: trade_cost n, impact n*n, exposure_cost n, log_mean n, log_var n, T, optional terminal_liquidation"),
    "execution_random_horizon": (_build_execution_random_horizon,
                                 "params: execution params plus stop_probs (length >= T)"),
    "retirement": (_build_retirement,
                   "params: death_probs, log_mean m, log_cov m*m, consume_utility [a,b], bequest_utility [a,b], risk_aversion"),
}


def build_from_config(problem, params, T=None) -> ProblemSpec:
    """Instantiate a registered problem from plain-JSON parameters."""
    if problem not in REGISTRY:
        raise ValueError(f"unknown problem '{problem}'; see list-problems")
    builder, _ = REGISTRY[problem]
    return builder(dict(params), T)
