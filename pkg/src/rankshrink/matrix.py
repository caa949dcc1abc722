"""Gibbs sampler for low-rank completion of partially observed matrices.

The model is Y_ij = Theta_ij + rho_i + omega_j + mu + noise with
Theta = M N^T; rows of M and N are drawn as conjugate normal blocks, the
intercepts as unconstrained normals recentered after each pass, the noise
variance as a conjugate inverse gamma, and the per-column variances of M and N
according to the configured prior family.

This module is the order-2 front end of the shared engine; a tensor chain run
on the same two-dimensional data reproduces these results bit for bit.
"""

from __future__ import annotations

from . import engine
from .engine import ChainConfig, ModelState, PosteriorEstimate
from .errors import InvalidParameter
from .priors import PriorSpec
from .store import ObservedTensor

# Matrix states are engine states of order 2; the M/N/rho/omega accessors on
# ModelState give them their matrix-shaped surface.
MatrixModelState = ModelState


def _require_matrix(obs: ObservedTensor) -> None:
    if obs.order != 2:
        raise InvalidParameter(f"matrix sampler requires order 2, got {obs.order}")


def init_chain(
    obs: ObservedTensor, config: ChainConfig, prior_spec: PriorSpec, level_labels=None
) -> MatrixModelState:
    """Initialize factors, intercepts, noise and prior state for one chain."""
    _require_matrix(obs)
    return engine.init_model(obs, config, prior_spec, level_labels)


def update_factor_rows(state: MatrixModelState, obs: ObservedTensor) -> MatrixModelState:
    """Draw every row of M, then every row of N, from their conditionals."""
    _require_matrix(obs)
    return engine.update_factor_rows(state, obs)


def update_intercepts(state: MatrixModelState, obs: ObservedTensor) -> MatrixModelState:
    """Draw row, column and overall intercepts, recentering rho and omega."""
    _require_matrix(obs)
    return engine.update_intercepts(state, obs)


def update_sigma2(state: MatrixModelState, obs: ObservedTensor) -> MatrixModelState:
    """Draw the noise variance from its conjugate conditional."""
    _require_matrix(obs)
    return engine.update_sigma2(state, obs)


def sweep(state: MatrixModelState, obs: ObservedTensor) -> MatrixModelState:
    """Factor rows, intercepts (if enabled), noise variance, prior refresh."""
    _require_matrix(obs)
    return engine.sweep(state, obs)


def run(
    obs: ObservedTensor, config: ChainConfig, prior_spec: PriorSpec, level_labels=None
) -> PosteriorEstimate:
    """Run a full chain and return the posterior-mean completion."""
    _require_matrix(obs)
    return engine.run(obs, config, prior_spec, level_labels)
