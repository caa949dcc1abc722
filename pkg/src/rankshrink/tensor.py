"""Gibbs sampler for low-rank completion of order-D tensors.

The mean tensor is a sum of K rank-1 outer products of per-dimension factor
columns. Each factor row is updated against a slice design matrix whose rows
are entrywise products of the other factors' rows at the slice's observed
coordinates, aligned with the store's lexicographic observation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import ChainConfig, ModelState, PosteriorEstimate
from .errors import EmptySlice, InvalidParameter
from .priors import PriorSpec
from .store import ObservedTensor

TensorModelState = ModelState


@dataclass
class SliceDesign:
    """Design matrix and residual responses for one (dimension, level) slice."""

    design: np.ndarray  # (n_slice_obs, K)
    response: np.ndarray  # (n_slice_obs,)


def init_chain(
    obs: ObservedTensor, config: ChainConfig, prior_spec: PriorSpec, level_labels=None
) -> TensorModelState:
    """Initialize a tensor chain (any order >= 2)."""
    return engine.init_model(obs, config, prior_spec, level_labels)


def build_slice_design(
    state: TensorModelState, obs: ObservedTensor, d: int, level: int
) -> SliceDesign:
    """Hadamard design and intercept-adjusted responses for one slice."""
    if not 0 <= d < obs.order:
        raise InvalidParameter(f"dimension {d} out of range for order {obs.order}")
    if not 0 <= level < obs.dims[d]:
        raise InvalidParameter(f"level {level} out of range for dimension {d}")
    ws = engine._workspace(obs)
    pos = ws.level_pos[d][level]
    if pos.shape[0] == 0:
        raise EmptySlice(f"no observations with index {level} along dimension {d}")
    design = engine._design_rows(state, ws, d, level)
    response = obs.values[pos] - engine.intercept_offsets(state, obs.indices[pos])
    return SliceDesign(design=design, response=response)


def update_factor_rows(state: TensorModelState, obs: ObservedTensor) -> TensorModelState:
    """Draw every factor row, dimension by dimension, level by level."""
    return engine.update_factor_rows(state, obs)


def update_intercepts(state: TensorModelState, obs: ObservedTensor) -> TensorModelState:
    """Per-dimension intercept draws with recentering, then the overall mean."""
    return engine.update_intercepts(state, obs)


def update_sigma2(state: TensorModelState, obs: ObservedTensor) -> TensorModelState:
    """Draw the noise variance from its conjugate conditional."""
    return engine.update_sigma2(state, obs)


def sweep(state: TensorModelState, obs: ObservedTensor) -> TensorModelState:
    """One full pass over factors, intercepts, noise and prior state."""
    return engine.sweep(state, obs)


def run(
    obs: ObservedTensor, config: ChainConfig, prior_spec: PriorSpec, level_labels=None
) -> PosteriorEstimate:
    """Run a full tensor chain and return the posterior-mean completion."""
    return engine.run(obs, config, prior_spec, level_labels)


def reconstruct(factors: list[np.ndarray]) -> np.ndarray:
    """Materialize the dense mean tensor from factor matrices."""
    return engine.reconstruct_dense(factors)
