"""Gibbs engine shared by the matrix and tensor completion front ends.

A chain samples, in order: every factor row (dimension by dimension, level by
level), the optional per-dimension intercepts plus the overall intercept, the
noise variance, and finally the column-variance state. Each factor row owns a
private random stream keyed by (dimension, level), so results are independent
of scan order and of how rows might be distributed over workers.

Global reductions (overall means, residual sums of squares, column norms) use
exact summation so that reordering the observations cannot perturb results;
row-permutation equivariance of the sampler is exact, not approximate.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import priors, rand
from .errors import InvalidParameter, NotPositiveDefinite, UncoveredLevels
from .store import ObservedTensor, coverage_check, slice_index


@dataclass
class ChainConfig:
    """MCMC schedule and model options shared by matrix and tensor chains.

    ``exact_reductions`` replaces the BLAS gram/matvec accumulations inside
    the factor-row updates with exactly rounded summation; results then do
    not depend on observation order at all (at a large constant-factor cost),
    which makes permutation equivariance bitwise instead of statistical.
    """

    k: int
    burn_in: int = 500
    thin: int = 5
    n_samples: int = 100
    seed: int = 0
    a_sigma: float = 1.0
    b_sigma: float = 1.0
    use_intercepts: bool = True
    exact_reductions: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise InvalidParameter(f"k must be >= 1, got {self.k}")
        if self.burn_in < 0 or self.thin < 1 or self.n_samples < 1:
            raise InvalidParameter(
                f"bad schedule: burn_in={self.burn_in}, thin={self.thin}, "
                f"n_samples={self.n_samples}"
            )
        if not (self.a_sigma > 0.0 and self.b_sigma > 0.0):
            raise InvalidParameter("a_sigma and b_sigma must be positive")


@dataclass
class PosteriorEstimate:
    """Posterior-mean completion plus per-sample chain diagnostics."""

    theta_hat: np.ndarray
    y_hat: np.ndarray
    sigma2_mean: float
    gamma_mean: np.ndarray
    n_samples_used: int
    sigma2_draws: np.ndarray
    gamma_draws: np.ndarray
    train_se_draws: np.ndarray
    floor_events: int
    config: ChainConfig


class ChainRng:
    """Family of independent streams for one chain.

    ``level_labels`` optionally remaps level -> stream label per dimension;
    it exists so tests can carry a row permutation through to the streams.
    """

    def __init__(self, seed: int, level_labels: dict[int, np.ndarray] | None = None):
        self.seed = int(seed)
        self.level_labels = level_labels or {}
        self._streams: dict[tuple[int, int, int], np.random.Generator] = {}

    def _stream(self, kind: int, a: int = 0, b: int = 0) -> np.random.Generator:
        key = (kind, a, b)
        gen = self._streams.get(key)
        if gen is None:
            gen = rand.RngStream(self.seed, rand.make_stream_id(kind, a, b)).gen
            self._streams[key] = gen
        return gen

    def row(self, d: int, level: int) -> np.random.Generator:
        labels = self.level_labels.get(d)
        lab = int(labels[level]) if labels is not None else level
        return self._stream(rand.KIND_ROW, d, lab)

    def mu(self) -> np.random.Generator:
        return self._stream(rand.KIND_MU)

    def sigma(self) -> np.random.Generator:
        return self._stream(rand.KIND_SIGMA)

    def prior(self) -> np.random.Generator:
        return self._stream(rand.KIND_PRIOR)


class _Workspace:
    """Per-store precomputation: slice positions and gather indices."""

    def __init__(self, obs: ObservedTensor):
        D = obs.order
        self.dims = obs.dims
        self.n_obs = obs.n_obs
        self.others = [[d2 for d2 in range(D) if d2 != d] for d in range(D)]
        # level_pos[d][l]: store positions; level_sub[d][l]: (len, D-1) indices
        # into the other factor matrices, aligned with level_pos rows
        self.level_pos: list[list[np.ndarray]] = []
        self.level_sub: list[list[np.ndarray]] = []
        for d in range(D):
            si = slice_index(obs, d)
            cols = obs.indices[:, self.others[d]]
            self.level_pos.append(si.levels)
            self.level_sub.append([np.ascontiguousarray(cols[p]) for p in si.levels])
        self.counts = [
            np.array([p.shape[0] for p in self.level_pos[d]], dtype=np.int64)
            for d in range(D)
        ]
        self.full_matrix = D == 2 and obs.n_obs == obs.dims[0] * obs.dims[1]


def _workspace(obs: ObservedTensor) -> _Workspace:
    ws = obs._cache.get("engine_ws")
    if ws is None:
        ws = _Workspace(obs)
        obs._cache["engine_ws"] = ws
    return ws


@dataclass
class ModelState:
    """Mutable sampler state: factors, intercepts, noise and prior state."""

    dims: tuple[int, ...]
    factors: list[np.ndarray]
    intercepts: list[np.ndarray] | None
    mu: float
    sigma2: float
    prior: priors.PriorState
    prior_spec: priors.PriorSpec
    config: ChainConfig
    rng: ChainRng
    last_rss: float = field(default=np.nan, repr=False)

    @property
    def order(self) -> int:
        return len(self.dims)

    def _matrix_only(self):
        if self.order != 2:
            raise InvalidParameter("matrix accessor on a state of order != 2")

    @property
    def M(self) -> np.ndarray:
        self._matrix_only()
        return self.factors[0]

    @property
    def N(self) -> np.ndarray:
        self._matrix_only()
        return self.factors[1]

    @property
    def rho(self) -> np.ndarray:
        self._matrix_only()
        return self.intercepts[0] if self.intercepts is not None else np.zeros(self.dims[0])

    @property
    def omega(self) -> np.ndarray:
        self._matrix_only()
        return self.intercepts[1] if self.intercepts is not None else np.zeros(self.dims[1])


def _fsum(arr) -> float:
    return math.fsum(np.asarray(arr, dtype=np.float64).tolist())


INIT_FACTOR_VARIANCE = 0.1
SIGMA2_INIT_FLOOR = 1e-8


def init_model(
    obs: ObservedTensor,
    config: ChainConfig,
    prior_spec: priors.PriorSpec,
    level_labels: dict[int, np.ndarray] | None = None,
) -> ModelState:
    """Initialize a chain; every level of every dimension must be observed."""
    uncovered = coverage_check(obs)
    if uncovered:
        raise UncoveredLevels(f"unobserved (dimension, level) pairs: {uncovered[:8]}")
    rng = ChainRng(config.seed, level_labels)
    scale = np.sqrt(INIT_FACTOR_VARIANCE)
    factors = []
    for d, m in enumerate(obs.dims):
        F = np.empty((m, config.k), dtype=np.float64)
        for l in range(m):
            F[l] = scale * rng.row(d, l).standard_normal(config.k)
        factors.append(F)
    mean = _fsum(obs.values) / obs.n_obs
    if config.use_intercepts:
        intercepts = [np.zeros(m, dtype=np.float64) for m in obs.dims]
        mu = mean
    else:
        intercepts = None
        mu = 0.0
    var = _fsum((obs.values - mean) ** 2) / obs.n_obs
    sigma2 = max(var, SIGMA2_INIT_FLOOR)
    prior = priors.init_state(
        prior_spec, config.k, rng.prior(), total_rows=int(sum(obs.dims))
    )
    return ModelState(
        dims=obs.dims,
        factors=factors,
        intercepts=intercepts,
        mu=mu,
        sigma2=sigma2,
        prior=prior,
        prior_spec=prior_spec,
        config=config,
        rng=rng,
    )


def intercept_offsets(state: ModelState, indices: np.ndarray) -> np.ndarray:
    """Total intercept contribution at each observation."""
    out = np.full(indices.shape[0], state.mu, dtype=np.float64)
    if state.intercepts is not None:
        for d, ic in enumerate(state.intercepts):
            out += ic[indices[:, d]]
    return out


def predict_obs(factors: list[np.ndarray], indices: np.ndarray) -> np.ndarray:
    """Evaluate the factorization at observation coordinates."""
    prod = factors[0][indices[:, 0]]  # fancy indexing copies
    for d in range(1, len(factors)):
        prod *= factors[d][indices[:, d]]
    return prod.sum(axis=1)


def reconstruct_dense(factors: list[np.ndarray]) -> np.ndarray:
    """Materialize the full mean array from the factor matrices."""
    D = len(factors)
    if D == 2:
        return factors[0] @ factors[1].T
    letters = string.ascii_lowercase[:D]
    spec = ",".join(f"{c}z" for c in letters) + "->" + letters
    return np.einsum(spec, *factors)


def _design_rows(state: ModelState, ws: _Workspace, d: int, level: int) -> np.ndarray:
    others = ws.others[d]
    sub = ws.level_sub[d][level]
    S = state.factors[others[0]][sub[:, 0]]  # fancy indexing copies
    for j, d2 in enumerate(others[1:], start=1):
        S *= state.factors[d2][sub[:, j]]
    return S


def _gram_exact(S: np.ndarray) -> np.ndarray:
    K = S.shape[1]
    A = np.empty((K, K))
    for k1 in range(K):
        for k2 in range(k1, K):
            v = math.fsum((S[:, k1] * S[:, k2]).tolist())
            A[k1, k2] = v
            A[k2, k1] = v
    return A


def _gemv_exact(S: np.ndarray, r: np.ndarray) -> np.ndarray:
    return np.array([math.fsum((S[:, k] * r).tolist()) for k in range(S.shape[1])])


def _update_factor_dim(
    state: ModelState,
    ws: _Workspace,
    d: int,
    base_resid: np.ndarray,
    level_order=None,
) -> None:
    K = state.config.k
    exact = state.config.exact_reductions
    inv_s2 = 1.0 / state.sigma2
    inv_gamma = 1.0 / state.prior.gamma_cols
    F = state.factors[d]
    levels = range(ws.dims[d]) if level_order is None else level_order

    if ws.full_matrix and not exact:
        # dense case: the design is the whole other factor for every level
        S = state.factors[1 - d]
        A = S.T @ S
        A.flat[:: K + 1] += inv_gamma
        A *= inv_s2
        L = _chol(A)
        for l in levels:
            r = base_resid[ws.level_pos[d][l]]
            h = (S.T @ r) * inv_s2
            w = solve_triangular(L, h, lower=True, check_finite=False)
            z = state.rng.row(d, l).standard_normal(K)
            F[l] = solve_triangular(L.T, w + z, lower=False, check_finite=False)
        return

    for l in levels:
        S = _design_rows(state, ws, d, l)
        r = base_resid[ws.level_pos[d][l]]
        A = _gram_exact(S) if exact else S.T @ S
        A.flat[:: K + 1] += inv_gamma
        A *= inv_s2
        h = (_gemv_exact(S, r) if exact else S.T @ r) * inv_s2
        L = _chol(A)
        w = solve_triangular(L, h, lower=True, check_finite=False)
        z = state.rng.row(d, l).standard_normal(K)
        F[l] = solve_triangular(L.T, w + z, lower=False, check_finite=False)


def _chol(P: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"factor-row precision not positive definite: {exc}")


def update_factor_rows(
    state: ModelState, obs: ObservedTensor, level_orders: dict | None = None
) -> ModelState:
    """Blocked draw of every factor row, one dimension at a time.

    ``level_orders`` optionally fixes the within-dimension scan order; rows
    of one dimension are conditionally independent, so any order yields the
    same draws.
    """
    ws = _workspace(obs)
    base_resid = obs.values - intercept_offsets(state, obs.indices)
    for d in range(state.order):
        order = None if level_orders is None else level_orders.get(d)
        _update_factor_dim(state, ws, d, base_resid, order)
    return state


def _update_intercepts(
    state: ModelState, ws: _Workspace, obs: ObservedTensor, recon: np.ndarray
) -> None:
    resid0 = obs.values - recon
    idx = obs.indices
    sigma2 = state.sigma2
    exact = state.config.exact_reductions
    for d in range(state.order):
        contrib = resid0 - state.mu
        for d2 in range(state.order):
            if d2 != d:
                contrib = contrib - state.intercepts[d2][idx[:, d2]]
        if exact:
            sums = np.array(
                [_fsum(contrib[pos]) for pos in ws.level_pos[d]], dtype=np.float64
            )
        else:
            sums = np.bincount(idx[:, d], weights=contrib, minlength=ws.dims[d])
        means = sums / ws.counts[d]
        sd = np.sqrt(sigma2 / ws.counts[d])
        new = np.empty(ws.dims[d])
        for l in range(ws.dims[d]):
            new[l] = means[l] + sd[l] * state.rng.row(d, l).standard_normal()
        new -= _fsum(new) / ws.dims[d]
        state.intercepts[d] = new
    total = resid0.copy()
    for d in range(state.order):
        total -= state.intercepts[d][idx[:, d]]
    mean = _fsum(total) / ws.n_obs
    state.mu = rand.normal(state.rng.mu(), mean, sigma2 / ws.n_obs)


def update_intercepts(state: ModelState, obs: ObservedTensor) -> ModelState:
    """Unconstrained intercept draws followed by recentering, then the mean."""
    if state.intercepts is None:
        raise InvalidParameter("intercepts are disabled for this chain")
    ws = _workspace(obs)
    recon = predict_obs(state.factors, obs.indices)
    _update_intercepts(state, ws, obs, recon)
    return state


def column_ss(factors: list[np.ndarray]) -> np.ndarray:
    """Per-column squared norms summed over every factor matrix."""
    K = factors[0].shape[1]
    out = np.empty(K)
    for k in range(K):
        out[k] = math.fsum(_fsum(F[:, k] ** 2) for F in factors)
    return out


def _update_sigma2(
    state: ModelState,
    ws: _Workspace,
    obs: ObservedTensor,
    recon: np.ndarray,
    ss: np.ndarray,
) -> None:
    resid = obs.values - recon - intercept_offsets(state, obs.indices)
    rss = _fsum(resid * resid)
    total_rows = int(sum(ws.dims))
    K = state.config.k
    # the factor prior scales with sigma2, so the factors contribute to the
    # conditional alongside the data residuals
    shape = state.config.a_sigma + ws.n_obs / 2.0 + total_rows * K / 2.0
    scale = (
        state.config.b_sigma + rss / 2.0 + _fsum(ss / state.prior.gamma_cols) / 2.0
    )
    state.sigma2 = rand.inverse_gamma(state.rng.sigma(), shape, scale)
    state.last_rss = rss


def update_sigma2(state: ModelState, obs: ObservedTensor) -> ModelState:
    """Conjugate inverse-gamma draw of the noise variance."""
    ws = _workspace(obs)
    recon = predict_obs(state.factors, obs.indices)
    _update_sigma2(state, ws, obs, recon, column_ss(state.factors))
    return state


def sweep(state: ModelState, obs: ObservedTensor) -> ModelState:
    """One systematic-scan pass over all parameter blocks."""
    ws = _workspace(obs)
    base_resid = obs.values - intercept_offsets(state, obs.indices)
    for d in range(state.order):
        _update_factor_dim(state, ws, d, base_resid)
    recon = predict_obs(state.factors, obs.indices)
    if state.intercepts is not None:
        _update_intercepts(state, ws, obs, recon)
    ss = column_ss(state.factors)
    _update_sigma2(state, ws, obs, recon, ss)
    stats = priors.ColumnStats(ss=ss, total_rows=int(sum(ws.dims)), sigma2=state.sigma2)
    priors.refresh(state.prior, state.prior_spec, stats, state.rng.prior())
    return state


def _intercept_field(state: ModelState) -> np.ndarray | float:
    if state.intercepts is None:
        return state.mu
    D = state.order
    out = np.full(state.dims, state.mu, dtype=np.float64)
    for d, ic in enumerate(state.intercepts):
        shape = [1] * D
        shape[d] = state.dims[d]
        out += ic.reshape(shape)
    return out


def run(
    obs: ObservedTensor,
    config: ChainConfig,
    prior_spec: priors.PriorSpec,
    level_labels: dict[int, np.ndarray] | None = None,
) -> PosteriorEstimate:
    """Run one chain and average the retained draws.

    Discards ``burn_in`` sweeps, then retains ``n_samples`` draws, one every
    ``thin`` sweeps. The completion estimates are arithmetic means of the
    retained mean arrays (theta) and of theta plus intercepts (y).
    """
    state = init_model(obs, config, prior_spec, level_labels)
    for _ in range(config.burn_in):
        sweep(state, obs)
    theta_sum = np.zeros(obs.dims, dtype=np.float64)
    y_sum = np.zeros(obs.dims, dtype=np.float64)
    n = config.n_samples
    sigma2_draws = np.empty(n)
    gamma_draws = np.empty((n, config.k))
    train_se = np.empty(n)
    for s in range(n):
        for _ in range(config.thin):
            sweep(state, obs)
        theta = reconstruct_dense(state.factors)
        theta_sum += theta
        y_sum += theta + _intercept_field(state)
        sigma2_draws[s] = state.sigma2
        gamma_draws[s] = state.prior.gamma_cols
        train_se[s] = np.sqrt(state.last_rss)
    return PosteriorEstimate(
        theta_hat=theta_sum / n,
        y_hat=y_sum / n,
        sigma2_mean=float(sigma2_draws.mean()),
        gamma_mean=gamma_draws.mean(axis=0),
        n_samples_used=n,
        sigma2_draws=sigma2_draws,
        gamma_draws=gamma_draws,
        train_se_draws=train_se,
        floor_events=state.prior.floor_events,
        config=config,
    )
