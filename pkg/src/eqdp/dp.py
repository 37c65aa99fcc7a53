"""Dynamic programming over the extended-quadratic algebra.

The Bellman backup for one stage and mode s is

    Q^s(x, u) = (1/N) sum_i sum_s' Pi[s', s] *
                ( stage_i^s(x, u) + gamma * V^{s'}(A_i x + B_i u + c_i) ),
    V^s, policy^s = partial minimization of Q^s over u,

with the disturbance expectation done by Monte Carlo over N sampled stage
realizations (or in closed form from moments when the value functions carry no
constraints).  Everything else here is bookkeeping: backward recursion,
fixed-point iteration, trajectory simulation, and seed-spread error auditing.

Determinism contract: per-sample terms are accumulated in index order within
fixed-size chunks and chunks are combined in chunk-index order, so results are
bit-reproducible for a given (seed, N, chunk size) no matter how many worker
threads evaluate the chunks.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .extquad import (IMPROPER, OK, AffineMap, ExtendedQuadratic)
from .moments import ConstraintsPresent, ExactMoments, expected_precompose, expected_quadratic

# A value function whose coefficients pass this bound (or go non-finite) marks
# the run as diverging; the backward recursion stops rather than overflowing.
DIVERGENCE_BOUND = 1e12

# Samples are accumulated within chunks of this many indices by default.
DEFAULT_CHUNK = 32

# Stream tag separating the simulation mode chain from dynamics draws.
_MODE_STREAM = 0x6D6F6465

# Status for stages that could not be computed because a needed successor
# value function was lost to an upstream pathology.
BLOCKED = "blocked"


def stream_rng(*key):
    """Counter-based generator keyed by a tuple of non-negative ints."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


@dataclass
class StageSample:
    """One realization of the per-mode stage data.

    A: (K, n, n), B: (K, n, m), c: (K, n) dynamics draw; G: (K, n+m+1, n+m+1)
    random quadratic cost coefficients, symmetrized on ingestion.
    """

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        G = np.asarray(self.G, dtype=float)
        self.G = 0.5 * (G + np.swapaxes(G, -1, -2))


@dataclass
class StageBatch:
    """N stage realizations with a leading sample axis (the batch form).

    Shapes: A (N, K, n, n), B (N, K, n, m), c (N, K, n), G (N, K, n+m+1, n+m+1).
    """

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        G = np.asarray(self.G, dtype=float)
        self.G = 0.5 * (G + np.swapaxes(G, -1, -2))

    def __len__(self):
        return self.A.shape[0]

    def sample(self, i) -> StageSample:
        return StageSample(A=self.A[i], B=self.B[i], c=self.c[i], G=self.G[i])


def _as_batch(samples, spec) -> StageBatch:
    if isinstance(samples, StageBatch):
        batch = samples
    else:
        batch = StageBatch(A=np.stack([s.A for s in samples]),
                           B=np.stack([s.B for s in samples]),
                           c=np.stack([s.c for s in samples]),
                           G=np.stack([s.G for s in samples]))
    n, m, K = spec.n, spec.m, spec.K
    if batch.A.shape[1:] != (K, n, n) or batch.B.shape[1:] != (K, n, m):
        raise ValueError("sampler output dimensions disagree with the problem spec")
    if batch.c.shape[1:] != (K, n) or batch.G.shape[1:] != (K, n + m + 1, n + m + 1):
        raise ValueError("sampler output dimensions disagree with the problem spec")
    return batch


@dataclass
class ProblemSpec:
    """A stochastic control problem over states x in R^n, inputs u in R^m and
    K Markov-switching modes.

    sampler: callable providing stage realizations; signature
        sampler(t, count, seed) when time_invariant is False,
        sampler(count, seed) when True.  It may return a list of StageSample
        or a StageBatch.  Reproducibility across batch sizes and worker counts
        is the sampler's responsibility; builders in eqdp.problems key a
        counter-based generator by (seed, t, mode) with the sample index as
        the stream position.
    Pi: K x K column-stochastic mode switching matrix (Pi[i][j] is the
        probability of moving to mode i from mode j), or a callable t -> matrix.
    constraints: stage equality constraints F x + H u + h = 0; either None, a
        per-mode sequence of (F, H, h) (or None) tuples, or a callable
        (t, s) -> (F, H, h) | None.
    terminal_costs: K extended quadratics over x (finite-horizon runs).
    T: horizon for finite-horizon runs.
    gamma: discount factor in (0, 1].
    exact_moments: per-mode moment data enabling the exact expectation back
        end; None restricts the problem to Monte Carlo.
    """

    n: int
    m: int
    K: int
    sampler: object
    time_invariant: bool = True
    Pi: object = None
    constraints: object = None
    terminal_costs: object = None
    T: object = None
    gamma: float = 1.0
    exact_moments: object = None

    def __post_init__(self):
        if self.Pi is None:
            self.Pi = np.eye(self.K)
        if not callable(self.Pi):
            Pi = np.atleast_2d(np.asarray(self.Pi, dtype=float))
            if Pi.shape != (self.K, self.K):
                raise ValueError("Pi must be K x K")
            if np.any(Pi < -1e-12) or np.any(Pi > 1.0 + 1e-12):
                raise ValueError("Pi entries must lie in [0, 1]")
            if np.max(np.abs(Pi.sum(axis=0) - 1.0)) > 1e-9:
                raise ValueError("Pi columns must sum to 1")
            self.Pi = Pi
        if self.terminal_costs is not None:
            tc = tuple(self.terminal_costs)
            if len(tc) != self.K:
                raise ValueError("need one terminal cost per mode")
            for f in tc:
                if f.n != self.n:
                    raise ValueError("terminal cost dimension mismatch")
            self.terminal_costs = tc
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must lie in (0, 1]")

    def pi_at(self, t):
        return self.Pi(t) if callable(self.Pi) else self.Pi

    def constraint_at(self, t, s):
        if self.constraints is None:
            return None
        cons = self.constraints(t, s) if callable(self.constraints) else self.constraints[s]
        if cons is None:
            return None
        F, H, h = cons
        F = np.atleast_2d(np.asarray(F, dtype=float)) if np.size(F) else np.zeros((0, self.n))
        H = np.atleast_2d(np.asarray(H, dtype=float)) if np.size(H) else np.zeros((F.shape[0], self.m))
        h = np.asarray(h, dtype=float).reshape(-1)
        return F, H, h

    def draw(self, t, count, seed) -> StageBatch:
        samples = self.sampler(count, seed) if self.time_invariant \
            else self.sampler(t, count, seed)
        return _as_batch(samples, self)


def stage_cost(sample: StageSample, constraints, s) -> ExtendedQuadratic:
    """The stage cost of mode s as an extended quadratic over (x, u).

    The quadratic part reads the blocks of G[s]; the deterministic constraints
    (F, H, h) become the rows [F H] (x, u) + h = 0.
    """
    G = sample.G[s]
    nm = G.shape[0] - 1
    if constraints is None:
        F, h = np.zeros((0, nm)), np.zeros(0)
    else:
        Fc, Hc, h = constraints
        if Fc.shape[1] + Hc.shape[1] != nm:
            raise ValueError("constraint widths disagree with the cost matrix")
        F = np.hstack([Fc, Hc])
    return ExtendedQuadratic(G[:nm, :nm], G[:nm, nm], G[nm, nm], F, h).reduce()


@dataclass
class BellmanResult:
    Q: list
    V: list
    policies: list
    statuses: list
    warnings: list = field(default_factory=list)


def _resolve_workers(workers):
    if workers is None:
        return max(1, os.cpu_count() or 1)
    return max(1, int(workers))


def _chunks(N, chunk_size):
    return [(a, min(a + chunk_size, N)) for a in range(0, N, chunk_size)]


def _map_ordered(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _fast_path_ok(V_next, weights):
    for s2, w in enumerate(weights):
        if w == 0.0:
            continue
        V = V_next[s2]
        if V is None or V.improper or V.p != 0:
            return False
    return True


def _mode_backup_mc(spec, batch, s, cons, V_next, weights, gamma, workers, chunk_size):
    """Monte Carlo average of the per-sample Bellman terms for one mode.

    Returns (Q, mixed_constraints_flag).
    """
    N = len(batch)
    n, m = spec.n, spec.m
    spans = _chunks(N, chunk_size)

    if _fast_path_ok(V_next, weights):
        # Unconstrained value functions: the whole average is coefficient
        # arithmetic.  Fold the mode mixture into one matrix first.
        Mtot = np.zeros((n + 1, n + 1))
        for s2, w in enumerate(weights):
            if w != 0.0:
                Mtot += (gamma * w) * V_next[s2].coefficient_matrix()
        aug = np.zeros((N, n + 1, n + m + 1))
        aug[:, :n, :n] = batch.A[:, s]
        aug[:, :n, n:n + m] = batch.B[:, s]
        aug[:, :n, n + m] = batch.c[:, s]
        aug[:, n, n + m] = 1.0

        def chunk_coeffs(span):
            a, b = span
            g_part = batch.G[a:b, s].sum(axis=0)
            e_part = np.einsum("ipq,pr,irs->qs", aug[a:b], Mtot, aug[a:b])
            return g_part + e_part

        parts = _map_ordered(chunk_coeffs, spans, workers)
        total = parts[0].copy()
        for part in parts[1:]:
            total += part
        coeffs = total / N
        if cons is None:
            F, h = None, None
        else:
            F = np.hstack([cons[0], cons[1]])
            h = cons[2]
        nm = n + m
        return ExtendedQuadratic(coeffs[:nm, :nm], coeffs[:nm, nm], coeffs[nm, nm],
                                 F, h).reduce(), False

    def term(i):
        out = stage_cost(batch.sample(i), cons, s)
        mapping = AffineMap(np.hstack([batch.A[i, s], batch.B[i, s]]), batch.c[i, s])
        for s2, w in enumerate(weights):
            if w == 0.0:
                continue
            out = out + V_next[s2].precompose(mapping) * (gamma * w)
        return out

    def chunk_sum(span):
        a, b = span
        acc = term(a)
        for i in range(a + 1, b):
            acc = acc + term(i)
        return acc

    parts = _map_ordered(chunk_sum, spans, workers)
    total = parts[0]
    for part in parts[1:]:
        total = total + part
    Q = total * (1.0 / N)
    # Distinct samples may induce distinct value-function constraint sets
    # (possible with random A of varying rank); the stacked-then-reduced
    # result is kept but the surprise is surfaced to the caller.
    mixed = Q.p > term(0).p
    return Q, mixed


def _mode_backup_exact(spec, s, cons, V_next, weights, gamma):
    em: ExactMoments = spec.exact_moments
    if em is None:
        raise ValueError("problem spec carries no moment data for the exact back end")
    n, m = spec.n, spec.m
    coeffs = expected_quadratic(em.mean_G[s])
    if coeffs.shape[0] != n + m + 1:
        raise ValueError("mean cost matrix dimension mismatch")
    for s2, w in enumerate(weights):
        if w == 0.0:
            continue
        V = V_next[s2]
        if V.improper or V.p != 0:
            raise ConstraintsPresent(
                "value function carries equality constraints; use the Monte Carlo back end")
        coeffs = coeffs + (gamma * w) * expected_precompose(
            V.coefficient_matrix(), em.tensors[s])
    if cons is None:
        F, h = None, None
    else:
        F = np.hstack([cons[0], cons[1]])
        h = cons[2]
    nm = n + m
    return ExtendedQuadratic(coeffs[:nm, :nm], coeffs[:nm, nm], coeffs[nm, nm],
                             F, h).reduce()


def bellman_apply(V_next, spec, t, N, gamma=1.0, seed=0, workers=None,
                  chunk_size=DEFAULT_CHUNK, backend="mc") -> BellmanResult:
    """One Bellman backup: from next-stage value functions to (Q, V, policy).

    V_next holds one extended quadratic per mode (entries may be None when an
    upstream pathology lost them; dependent modes then come back "blocked").
    Mode-mixture terms with transition probability exactly 0 are skipped, so
    unreachable successors contribute neither coefficients nor constraints.
    Per-mode pathologies surface in the statuses, never as exceptions.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    workers = _resolve_workers(workers)
    K = spec.K
    Pi = spec.pi_at(t)
    batch = spec.draw(t, N, seed) if backend == "mc" else None

    Q_out, V_out, pol_out, stat_out, warn = [], [], [], [], []
    for s in range(K):
        weights = [float(Pi[s2][s]) for s2 in range(K)]
        missing = any(w != 0.0 and V_next[s2] is None for s2, w in enumerate(weights))
        if missing:
            Q_out.append(None); V_out.append(None); pol_out.append(None)
            stat_out.append(BLOCKED)
            continue
        cons = spec.constraint_at(t, s)
        if backend == "exact":
            Q = _mode_backup_exact(spec, s, cons, V_next, weights, gamma)
            mixed = False
        else:
            Q, mixed = _mode_backup_mc(spec, batch, s, cons, V_next, weights,
                                       gamma, workers, chunk_size)
        if mixed:
            warn.append(f"t={t} s={s}: samples induced differing value-function "
                        "constraint sets; kept the stacked reduction")
        if Q.improper or not Q.is_proper():
            Q_out.append(Q); V_out.append(None); pol_out.append(None)
            stat_out.append(IMPROPER)
            continue
        V, policy, status = Q.partial_min(spec.n, spec.m)
        Q_out.append(Q); V_out.append(V); pol_out.append(policy)
        stat_out.append(status)
    return BellmanResult(Q=Q_out, V=V_out, policies=pol_out, statuses=stat_out,
                         warnings=warn)


def _coef_bounded(V: ExtendedQuadratic):
    vals = [V.P, V.q, np.array(V.r)]
    for v in vals:
        if not np.all(np.isfinite(v)):
            return False
        if v.size and np.max(np.abs(v)) > DIVERGENCE_BOUND:
            return False
    return True


@dataclass
class Solution:
    """Value functions, state-action functions, and affine policies.

    Finite-horizon: V has T+1 rows (row T is the terminal cost), Q, policies
    and statuses have T rows.  Infinite-horizon: one row each (the final
    iterate).  Entries are None where a pathology stopped the recursion.
    """

    kind: str
    V: list
    Q: list
    policies: list
    statuses: list
    meta: dict
    warnings: list = field(default_factory=list)
    convergence: object = None
    diverging: bool = False
    failed_at: object = None

    def policy_at(self, t, s) -> AffineMap:
        row = self.policies[0] if self.kind == "infinite" else self.policies[t]
        pol = row[s]
        if pol is None:
            raise ValueError(f"no policy available for t={t}, s={s}")
        return pol

    def ok(self) -> bool:
        if self.diverging:
            return False
        return all(st == OK for row in self.statuses for st in row)

    def pathology(self):
        """Name of the first pathology, or None."""
        if self.diverging:
            return "diverging"
        for row in self.statuses:
            for st in row:
                if st not in (OK, None):
                    return st
        return None

    def to_dict(self):
        def eq_row(row):
            return [f.to_dict() if f is not None else None for f in row]

        def pol_row(row):
            return [p.to_dict() if p is not None else None for p in row]

        meta = dict(self.meta)
        meta["kind"] = self.kind
        meta["diverging"] = self.diverging
        meta["convergence"] = self.convergence
        return {"meta": meta,
                "V": [eq_row(r) for r in self.V],
                "Q": [eq_row(r) for r in self.Q],
                "policies": [pol_row(r) for r in self.policies],
                "statuses": [list(r) for r in self.statuses],
                "warnings": list(self.warnings)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        meta = dict(d["meta"])
        kind = meta.pop("kind")
        diverging = meta.pop("diverging", False)
        convergence = meta.pop("convergence", None)

        def eq_row(row):
            return [ExtendedQuadratic.from_dict(e) if e is not None else None for e in row]

        def pol_row(row):
            return [AffineMap.from_dict(p) if p is not None else None for p in row]

        return cls(kind=kind,
                   V=[eq_row(r) for r in d["V"]],
                   Q=[eq_row(r) for r in d["Q"]],
                   policies=[pol_row(r) for r in d["policies"]],
                   statuses=[list(r) for r in d["statuses"]],
                   meta=meta,
                   warnings=list(d.get("warnings", [])),
                   convergence=convergence,
                   diverging=diverging)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def dp_finite(spec: ProblemSpec, N, seed=0, workers=None,
              chunk_size=DEFAULT_CHUNK, backend="mc") -> Solution:
    """Backward recursion over a finite horizon (undiscounted stage weighting).

    V_T is the terminal cost; each earlier stage is one bellman_apply with
    gamma = 1.  A pathology at (t, s) removes that value function; modes that
    need it at earlier stages report "blocked", and the recursion stops once
    every mode is lost (or a diverging coefficient appears).
    """
    if spec.T is None or spec.T < 1:
        raise ValueError("finite-horizon solve needs spec.T >= 1")
    if spec.terminal_costs is None:
        raise ValueError("finite-horizon solve needs terminal costs")
    T, K = spec.T, spec.K
    V = [[None] * K for _ in range(T + 1)]
    Q = [[None] * K for _ in range(T)]
    policies = [[None] * K for _ in range(T)]
    statuses = [[None] * K for _ in range(T)]
    warnings = []
    V[T] = [f.reduce() for f in spec.terminal_costs]
    diverging = False
    failed_at = None
    for t in range(T - 1, -1, -1):
        res = bellman_apply(V[t + 1], spec, t, N, gamma=1.0, seed=seed,
                            workers=workers, chunk_size=chunk_size, backend=backend)
        warnings.extend(res.warnings)
        Q[t], policies[t], statuses[t] = res.Q, res.policies, res.statuses
        V[t] = res.V
        for s in range(K):
            if statuses[t][s] not in (OK,) and failed_at is None:
                failed_at = (t, s, statuses[t][s])
            if res.V[s] is not None and not _coef_bounded(res.V[s]):
                diverging = True
                failed_at = failed_at or (t, s, "diverging")
        if diverging or all(v is None for v in V[t]):
            break
    meta = {"n": spec.n, "m": spec.m, "K": K, "T": T, "gamma": 1.0,
            "N": N, "seed": seed}
    return Solution(kind="finite", V=V, Q=Q, policies=policies, statuses=statuses,
                    meta=meta, warnings=warnings, diverging=diverging,
                    failed_at=failed_at)


def dp_infinite(spec: ProblemSpec, N, iterations, gamma=None, seed=0,
                workers=None, chunk_size=DEFAULT_CHUNK, backend="mc") -> Solution:
    """Value iteration: repeated Bellman backups from V = 0.

    Runs a fixed number of iterations (no early stopping) and reports the
    max-norm change of the value coefficients between the last two iterates as
    the convergence metric.  Coefficients crossing the divergence bound set
    the diverging flag and stop the iteration; partial-minimization
    pathologies stop it likewise.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    gamma = spec.gamma if gamma is None else float(gamma)
    if not (0.0 < gamma <= 1.0):
        raise ValueError("gamma must lie in (0, 1]")
    K = spec.K
    V = [ExtendedQuadratic.zero(spec.n) for _ in range(K)]
    res = None
    warnings = []
    convergence = None
    diverging = False
    failed_at = None
    for it in range(iterations):
        res = bellman_apply(V, spec, it, N, gamma=gamma, seed=seed,
                            workers=workers, chunk_size=chunk_size, backend=backend)
        warnings.extend(res.warnings)
        bad = [s for s in range(K) if res.statuses[s] != OK]
        if bad:
            failed_at = (it, bad[0], res.statuses[bad[0]])
            break
        convergence = max(
            max(_maxdiff(res.V[s].P, V[s].P), _maxdiff(res.V[s].q, V[s].q),
                abs(res.V[s].r - V[s].r))
            for s in range(K))
        V = res.V
        if any(not _coef_bounded(v) for v in V):
            diverging = True
            failed_at = (it, next(s for s in range(K) if not _coef_bounded(V[s])),
                         "diverging")
            break
    meta = {"n": spec.n, "m": spec.m, "K": K, "T": iterations, "gamma": gamma,
            "N": N, "seed": seed}
    return Solution(kind="infinite", V=[V], Q=[res.Q], policies=[res.policies],
                    statuses=[res.statuses], meta=meta, warnings=warnings,
                    convergence=convergence, diverging=diverging,
                    failed_at=failed_at)


def _maxdiff(a, b):
    if a.shape != b.shape:
        return math.inf
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))


@dataclass
class Trajectory:
    """A simulated path: per-step mode, state, input, and realized stage cost."""

    t: list
    s: list
    x: list
    u: list
    stage_costs: list
    total_cost: float

    def to_csv(self, path):
        n = len(self.x[0]) if self.x else 0
        m = len(self.u[0]) if self.u else 0
        header = (["t", "s"] + [f"x_{i}" for i in range(n)]
                  + [f"u_{j}" for j in range(m)] + ["stage_cost"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self.t)):
                w.writerow([self.t[k], self.s[k]]
                           + [repr(float(v)) for v in self.x[k]]
                           + [repr(float(v)) for v in self.u[k]]
                           + [repr(float(self.stage_costs[k]))])

    @staticmethod
    def csv_header(n, m):
        return (["t", "s"] + [f"x_{i}" for i in range(n)]
                + [f"u_{j}" for j in range(m)] + ["stage_cost"])


def _normalize_policies(policies):
    if isinstance(policies, Solution):
        return policies
    policies = list(policies)
    if policies and isinstance(policies[0], AffineMap):
        return Solution(kind="infinite", V=[[]], Q=[[]], policies=[policies],
                        statuses=[[OK] * len(policies)], meta={})
    return Solution(kind="finite", V=[[]], Q=[[]], policies=[list(r) for r in policies],
                    statuses=[[OK] * len(policies[0])] * len(policies), meta={})


def simulate(spec: ProblemSpec, policies, x0, s0, horizon, seed=0) -> Trajectory:
    """Roll out the closed loop u_t = K_t^{s_t} x_t + k_t^{s_t}.

    Disturbances and mode transitions come from the seeded streams, so two
    policy sets simulated with the same seed see identical mode paths and
    dynamics draws.  A stage constraint violated beyond tolerance makes that
    stage cost (and the total) +inf.
    """
    sol = _normalize_policies(policies)
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != spec.n:
        raise ValueError("x0 dimension mismatch")
    s = int(s0)
    if not (0 <= s < spec.K):
        raise ValueError("s0 out of range")
    mode_rng = stream_rng(seed, _MODE_STREAM)
    batch = spec.draw(None, horizon, seed) if (spec.time_invariant and horizon > 0) else None
    ts, ss, xs, us, costs = [], [], [], [], []
    total = 0.0
    for t in range(horizon):
        sample = batch.sample(t) if batch is not None else spec.draw(t, 1, seed).sample(0)
        pol = sol.policy_at(t, s)
        if pol.A.shape != (spec.m, spec.n):
            raise ValueError("policy shape disagrees with the problem spec")
        u = pol(x)
        g = stage_cost(sample, spec.constraint_at(t, s), s)
        c_t = g.evaluate(np.concatenate([x, u]))
        ts.append(t); ss.append(s); xs.append(x.copy()); us.append(u.copy())
        costs.append(c_t)
        total += c_t
        x = sample.A[s] @ x + sample.B[s] @ u + sample.c[s]
        Pi = spec.pi_at(t)
        s = int(mode_rng.choice(spec.K, p=np.asarray(Pi)[:, s]))
    return Trajectory(t=ts, s=ss, x=xs, u=us, stage_costs=costs, total_cost=total)


@dataclass
class SpreadReport:
    """Seed-to-seed spread of value and policy coefficients.

    Entries are indexed [t][s]; *_std is the per-entry standard deviation
    across seeds reduced to its max entry, *_range the max-minus-min analogue.
    """

    N: int
    seeds: list
    v_std: list
    v_range: list
    policy_std: list
    policy_range: list

    @property
    def max_v_std(self):
        return max((v for row in self.v_std for v in row), default=0.0)

    @property
    def max_policy_std(self):
        return max((v for row in self.policy_std for v in row), default=0.0)

    def to_dict(self):
        return {"N": self.N, "seeds": list(self.seeds),
                "V_std": self.v_std, "V_range": self.v_range,
                "policy_std": self.policy_std, "policy_range": self.policy_range,
                "max_V_std": self.max_v_std, "max_policy_std": self.max_policy_std}


def _coef_vector(f: ExtendedQuadratic):
    return np.concatenate([f.P.reshape(-1), f.q, [f.r]])


def mc_error(spec: ProblemSpec, N, seeds, workers=None,
             chunk_size=DEFAULT_CHUNK) -> SpreadReport:
    """Monte Carlo error audit: re-solve under each seed and measure spread.

    Runs the finite-horizon recursion once per seed and reports, per (t, s),
    the elementwise max/std deviation of the value-function and policy
    coefficients across the runs.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("mc_error needs at least two seeds")
    sols = [dp_finite(spec, N, seed=sd, workers=workers, chunk_size=chunk_size)
            for sd in seeds]
    for sol, sd in zip(sols, seeds):
        if not sol.ok():
            raise RuntimeError(f"seed {sd} run hit pathology {sol.pathology()}")
    T, K = spec.T, spec.K
    v_std = [[0.0] * K for _ in range(T + 1)]
    v_rng = [[0.0] * K for _ in range(T + 1)]
    p_std = [[0.0] * K for _ in range(T)]
    p_rng = [[0.0] * K for _ in range(T)]
    for t in range(T + 1):
        for s in range(K):
            stack = np.stack([_coef_vector(sol.V[t][s]) for sol in sols])
            v_std[t][s] = float(np.max(stack.std(axis=0)))
            v_rng[t][s] = float(np.max(stack.max(axis=0) - stack.min(axis=0)))
    for t in range(T):
        for s in range(K):
            stack = np.stack([
                np.concatenate([sol.policies[t][s].A.reshape(-1), sol.policies[t][s].b])
                for sol in sols])
            p_std[t][s] = float(np.max(stack.std(axis=0)))
            p_rng[t][s] = float(np.max(stack.max(axis=0) - stack.min(axis=0)))
    return SpreadReport(N=N, seeds=seeds, v_std=v_std, v_range=v_rng,
                        policy_std=p_std, policy_range=p_rng)
