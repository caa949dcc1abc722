"""Synthetic data generation, evaluation metrics and scripted experiments.

The scripted protocols sweep true rank or missingness on random low-rank
matrices/tensors, run one chain per (prior, sweep value, trial) and aggregate
the reconstruction error over trials. Trials are embarrassingly parallel;
each trial owns seed = base_seed + trial_index and aggregation is sorted, so
results are identical for any worker count.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np

from . import engine
from .engine import ChainConfig
from .errors import InfeasibleMask, InvalidParameter, ShapeMismatch, ZeroVariance
from .priors import PriorSpec
from .rand import KIND_SIM, RngStream, make_stream_id
from .store import ObservedTensor

PROTOCOLS = ("matrix_rank_sweep", "tensor_rank_sweep", "missingness_sweep", "scree_recovery")

PRIOR_NAMES = ("gaussian", "gamma", "horseshoe", "horseshoe-plus", "igg")

# oracle-tuned gamma-prior rates per sweep point (other families are fixed)
GAMMA_BETA_BY_RANK_MATRIX = {2: 40.0, 4: 27.0, 8: 12.0, 16: 10.0}
GAMMA_BETA_BY_RANK_TENSOR = {2: 20.0, 4: 17.0, 8: 15.0, 16: 15.0}
GAMMA_BETA_BY_KEEP = {0.075: 15.0, 0.15: 30.0, 0.3: 40.0, 0.8: 50.0, 1.0: 60.0}

DEFAULT_V0 = 10.0
SCREE_TOP_N = 15


@dataclass
class SimConfig:
    """Ground-truth construction for one synthetic completion problem."""

    dims: tuple[int, ...]
    rank: int
    column_variances: tuple[float, ...]
    noise_sigma2: float
    keep_fraction: float
    seed: int

    def __post_init__(self):
        self.dims = tuple(int(m) for m in self.dims)
        self.column_variances = tuple(float(v) for v in self.column_variances)
        if not self.rank >= 1 or not self.rank < min(self.dims):
            raise InvalidParameter(f"rank must be in [1, min(dims)), got {self.rank}")
        if len(self.column_variances) != self.rank:
            raise InvalidParameter("need one column variance per rank-1 component")
        if not all(v > 0 for v in self.column_variances):
            raise InvalidParameter("column variances must be positive")
        if not (0.0 < self.keep_fraction <= 1.0):
            raise InvalidParameter(
                f"keep_fraction must be in (0, 1], got {self.keep_fraction}"
            )
        if not self.noise_sigma2 >= 0.0:
            raise InvalidParameter("noise_sigma2 must be >= 0")


@dataclass
class TrialResult:
    """One completed trial of one prior at one sweep point."""

    protocol: str
    prior: str
    sweep_param: str
    sweep_value: float
    trial: int
    seed: int
    se: float  # per-entry RMSE, the table scale
    se_total: float  # unnormalized root of the summed squared error
    wall_time_s: float
    singular_values: np.ndarray | None = None


def _mask_with_coverage(gen, dims, n_keep: int) -> np.ndarray:
    """Uniform mask of n_keep cells, repaired so every level stays covered.

    For each uncovered (dimension, level), one unkept cell of that level is
    re-added; a random kept cell that is safe to drop (all of its levels
    covered at least twice) is removed to hold the count, when possible.
    """
    total = int(np.prod(dims))
    D = len(dims)
    digits = np.stack(np.unravel_index(np.arange(total), dims))  # (D, total)
    kept = np.zeros(total, dtype=bool)
    kept[gen.choice(total, size=n_keep, replace=False)] = True
    counts = [np.bincount(digits[d][kept], minlength=dims[d]) for d in range(D)]
    for d in range(D):
        for l in range(dims[d]):
            if counts[d][l] > 0:
                continue
            candidates = np.nonzero((digits[d] == l) & ~kept)[0]
            add = int(gen.choice(candidates))
            kept[add] = True
            for d2 in range(D):
                counts[d2][digits[d2][add]] += 1
            safe_level = np.ones(total, dtype=bool)
            for d2 in range(D):
                safe_level &= counts[d2][digits[d2]] >= 2
            removable = np.nonzero(kept & safe_level)[0]
            if removable.shape[0]:
                drop = int(gen.choice(removable))
                kept[drop] = False
                for d2 in range(D):
                    counts[d2][digits[d2][drop]] -= 1
    return kept


def generate(sim: SimConfig, rng=None) -> tuple[np.ndarray, ObservedTensor]:
    """Draw a random low-rank truth and its noisy partial observation.

    Factor entries in component l are N(0, v_l); the mask keeps
    round(keep_fraction * n_cells) cells uniformly at random and is then
    repaired to cover every level of every dimension.
    """
    if rng is None:
        rng = RngStream(sim.seed, make_stream_id(KIND_SIM))
    gen = rng.gen if isinstance(rng, RngStream) else rng
    dims = sim.dims
    total = int(np.prod(dims))
    if sim.keep_fraction * total < sum(dims):
        raise InfeasibleMask(
            f"cannot cover all levels: keep_fraction*cells = "
            f"{sim.keep_fraction * total:.1f} < sum(dims) = {sum(dims)}"
        )
    sd = np.sqrt(np.array(sim.column_variances))
    factors = [gen.standard_normal((m, sim.rank)) * sd[None, :] for m in dims]
    theta = engine.reconstruct_dense(factors)
    noisy = theta + np.sqrt(sim.noise_sigma2) * gen.standard_normal(dims)
    n_keep = int(round(sim.keep_fraction * total))
    kept = _mask_with_coverage(gen, dims, n_keep)
    flat = np.nonzero(kept)[0]
    indices = np.stack(np.unravel_index(flat, dims), axis=1).astype(np.int64)
    obs = ObservedTensor(
        order=len(dims),
        dims=dims,
        indices=indices,
        values=noisy.reshape(-1)[flat].astype(np.float64),
    )
    return theta, obs


def generate_rating_matrix(
    dims,
    rank: int,
    column_variances,
    noise_sigma2: float,
    keep_fraction: float,
    intercept_sd: float,
    overall_mean: float,
    seed: int,
) -> ObservedTensor:
    """Low-rank matrix plus row/column/overall intercepts, partially observed."""
    sim = SimConfig(
        dims=tuple(dims),
        rank=rank,
        column_variances=tuple(column_variances),
        noise_sigma2=noise_sigma2,
        keep_fraction=keep_fraction,
        seed=seed,
    )
    rng = RngStream(seed, make_stream_id(KIND_SIM, 1))
    gen = rng.gen
    row_icpt = gen.standard_normal(sim.dims[0]) * intercept_sd
    col_icpt = gen.standard_normal(sim.dims[1]) * intercept_sd
    row_icpt -= row_icpt.mean()
    col_icpt -= col_icpt.mean()
    _, obs = generate(sim, rng)
    shifted = (
        obs.values
        + row_icpt[obs.indices[:, 0]]
        + col_icpt[obs.indices[:, 1]]
        + overall_mean
    )
    return ObservedTensor(
        order=2, dims=obs.dims, indices=obs.indices, values=shifted
    )


def standard_error(theta_hat: np.ndarray, truth: np.ndarray) -> float:
    """Root of the summed squared entrywise error over all cells."""
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if theta_hat.shape != truth.shape:
        raise ShapeMismatch(f"shapes differ: {theta_hat.shape} vs {truth.shape}")
    return float(np.sqrt(np.sum((theta_hat - truth) ** 2)))


def rmse(theta_hat: np.ndarray, truth: np.ndarray) -> float:
    """Per-entry root mean squared error over all cells.

    This is the scale reconstruction errors are reported on in the result
    tables; the unnormalized sum is kept alongside it in the per-trial rows.
    """
    return standard_error(theta_hat, truth) / float(np.sqrt(np.asarray(truth).size))


def percent_explained(y_hat: np.ndarray, test: ObservedTensor) -> float:
    """Fraction of test variance explained: 1 - SS_resid / SS_total."""
    if test.n_obs < 1:
        raise InvalidParameter("test set is empty")
    preds = y_hat[tuple(test.indices.T)]
    ybar = test.values.mean()
    denom = float(np.sum((test.values - ybar) ** 2))
    if denom == 0.0:
        raise ZeroVariance("all test values are equal")
    num = float(np.sum((test.values - preds) ** 2))
    return 1.0 - num / denom


def holdout_metrics(y_hat: np.ndarray, test: ObservedTensor) -> dict[str, float]:
    """Test-set prediction error, both as summed-square root and per entry."""
    preds = y_hat[tuple(test.indices.T)]
    sq = float(np.sum((test.values - preds) ** 2))
    return {
        "test_se": float(np.sqrt(sq)),
        "test_rmse": float(np.sqrt(sq / test.n_obs)),
        "percent_explained": percent_explained(y_hat, test),
    }


def scree(theta_hat: np.ndarray, top_n: int) -> np.ndarray:
    """Leading singular values of an estimated mean matrix, descending."""
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    if theta_hat.ndim != 2:
        raise InvalidParameter("scree requires a matrix input")
    return np.linalg.svd(theta_hat, compute_uv=False)[:top_n]


def prior_spec_for(name: str, protocol: str, sweep_value, overrides=None) -> PriorSpec:
    """Build the PriorSpec a protocol uses for one sweep point."""
    overrides = overrides or {}
    key = name.replace("-", "_")
    if key == "gaussian":
        return PriorSpec("gaussian", v0=float(overrides.get("v0", DEFAULT_V0)))
    if key == "gamma":
        beta = overrides.get("beta")
        if isinstance(beta, dict):
            beta = beta.get(sweep_value)
        if beta is None:
            table = {
                "matrix_rank_sweep": GAMMA_BETA_BY_RANK_MATRIX,
                "tensor_rank_sweep": GAMMA_BETA_BY_RANK_TENSOR,
                "missingness_sweep": GAMMA_BETA_BY_KEEP,
                "scree_recovery": {0.15: GAMMA_BETA_BY_KEEP[0.15]},
            }[protocol]
            beta = table[sweep_value]
        return PriorSpec(
            "gamma",
            beta=float(beta),
            gamma_paper_compat=bool(overrides.get("gamma_paper_compat", False)),
        )
    if key in ("horseshoe", "horseshoe_plus"):
        return PriorSpec(key)
    if key == "igg":
        return PriorSpec(
            "igg",
            igg_a=overrides.get("igg_a"),
            igg_b=overrides.get("igg_b"),
            igg_c=overrides.get("igg_c"),
        )
    raise InvalidParameter(f"unknown prior name {name!r}; valid: {PRIOR_NAMES}")


def _protocol_points(protocol: str, overrides: dict) -> tuple[str, list, dict]:
    """Sweep parameter name, sweep values, and fixed settings for a protocol."""
    if protocol == "matrix_rank_sweep":
        fixed = {
            "dims": (100, 100),
            "noise_sigma2": 0.5,
            "column_variance": 5.0,
            "keep_fraction": 0.2,
        }
        points = ("rank", [2, 4, 8, 16])
    elif protocol == "tensor_rank_sweep":
        fixed = {
            "dims": (20, 20, 25),
            "noise_sigma2": 0.5,
            "column_variance": 5.0,
            "keep_fraction": 0.1,
        }
        points = ("rank", [2, 4, 8, 16])
    elif protocol == "missingness_sweep":
        fixed = {
            "dims": (100, 100),
            "noise_sigma2": 0.5,
            "column_variance": 5.0,
            "rank": 4,
        }
        points = ("keep_fraction", [0.075, 0.15, 0.3, 0.8, 1.0])
    elif protocol == "scree_recovery":
        fixed = {
            "dims": (100, 100),
            "noise_sigma2": 0.5,
            "rank": 5,
            "column_variances": (6.0, 6.0, 3.0, 3.0, 1.0),
        }
        points = ("keep_fraction", [0.15])
    else:
        raise InvalidParameter(f"unknown protocol {protocol!r}; valid: {PROTOCOLS}")
    fixed.update({k: v for k, v in overrides.items() if k in fixed})
    name, values = points
    if overrides.get("sweep_values") is not None:
        values = list(overrides["sweep_values"])
    return name, values, fixed


def _sim_for(protocol, fixed, sweep_param, sweep_value, seed) -> SimConfig:
    rank = int(sweep_value) if sweep_param == "rank" else int(fixed["rank"])
    keep = float(sweep_value) if sweep_param == "keep_fraction" else float(fixed["keep_fraction"])
    if "column_variances" in fixed:
        variances = tuple(fixed["column_variances"])
    else:
        variances = (float(fixed["column_variance"]),) * rank
    return SimConfig(
        dims=tuple(fixed["dims"]),
        rank=rank,
        column_variances=variances,
        noise_sigma2=float(fixed["noise_sigma2"]),
        keep_fraction=keep,
        seed=seed,
    )


def _chain_config(overrides: dict, seed: int) -> ChainConfig:
    return ChainConfig(
        k=int(overrides.get("k", 20)),
        burn_in=int(overrides.get("burn_in", 500)),
        thin=int(overrides.get("thin", 5)),
        n_samples=int(overrides.get("n_samples", 100)),
        seed=seed,
        a_sigma=float(overrides.get("a_sigma", 1.0)),
        b_sigma=float(overrides.get("b_sigma", 1.0)),
        use_intercepts=bool(overrides.get("use_intercepts", False)),
    )


def _run_trial(task: dict) -> TrialResult:
    t0 = time.perf_counter()
    theta, obs = generate(task["sim"])
    est = engine.run(obs, task["config"], task["prior_spec"])
    se_total = standard_error(est.theta_hat, theta)
    svals = None
    if task["want_scree"]:
        svals = scree(est.theta_hat, SCREE_TOP_N)
    return TrialResult(
        protocol=task["protocol"],
        prior=task["prior"],
        sweep_param=task["sweep_param"],
        sweep_value=task["sweep_value"],
        trial=task["trial"],
        seed=task["sim"].seed,
        se=se_total / float(np.sqrt(np.prod(task["sim"].dims))),
        se_total=se_total,
        wall_time_s=time.perf_counter() - t0,
        singular_values=svals,
    )


def worker_count(threads: int | None = None) -> int:
    """Effective worker count, capped by the RANKSHRINK_THREADS env var."""
    if threads is None:
        env = os.environ.get("RANKSHRINK_THREADS", "")
        threads = int(env) if env.strip() else (os.cpu_count() or 1)
    return max(1, int(threads))


def _run_tasks(tasks: list[dict], threads: int | None) -> list[TrialResult]:
    n_workers = worker_count(threads)
    if n_workers == 1 or len(tasks) <= 1:
        results = [_run_trial(t) for t in tasks]
    else:
        with Pool(processes=min(n_workers, len(tasks))) as pool:
            results = pool.map(_run_trial, tasks)
    results.sort(key=lambda r: (r.prior, r.sweep_value, r.trial))
    return results


@dataclass
class TableResult:
    """Aggregated protocol output: summary rows, per-trial rows, scree rows."""

    protocol: str
    summary_rows: list[dict]
    trial_rows: list[dict]
    scree_rows: list[dict]
    trial_results: list[TrialResult]


def run_table(
    protocol_id: str,
    n_trials: int,
    priors,
    overrides: dict | None = None,
    base_seed: int = 0,
    threads: int | None = None,
) -> TableResult:
    """Run one scripted protocol for the given priors and trial count."""
    overrides = dict(overrides or {})
    sweep_param, sweep_values, fixed = _protocol_points(protocol_id, overrides)
    want_scree = protocol_id == "scree_recovery"
    tasks = []
    for prior_name in priors:
        for value in sweep_values:
            spec = prior_spec_for(prior_name, protocol_id, value, overrides)
            for trial in range(n_trials):
                seed = base_seed + trial
                tasks.append(
                    {
                        "protocol": protocol_id,
                        "prior": prior_name,
                        "sweep_param": sweep_param,
                        "sweep_value": value,
                        "trial": trial,
                        "sim": _sim_for(protocol_id, fixed, sweep_param, value, seed),
                        "config": _chain_config(overrides, seed),
                        "prior_spec": spec,
                        "want_scree": want_scree,
                    }
                )
    results = _run_tasks(tasks, threads)

    summary_rows, trial_rows, scree_rows = [], [], []
    for prior_name in priors:
        for value in sweep_values:
            cell = [
                r for r in results if r.prior == prior_name and r.sweep_value == value
            ]
            ses = np.array([r.se for r in cell])
            mc_se = float(ses.std(ddof=1) / np.sqrt(len(ses))) if len(ses) > 1 else 0.0
            summary_rows.append(
                {
                    "protocol": protocol_id,
                    "prior": prior_name,
                    "sweep_param": sweep_param,
                    "sweep_value": value,
                    "n_trials": len(cell),
                    "mean_se": float(ses.mean()),
                    "mc_se": mc_se,
                    "wall_time_s": float(sum(r.wall_time_s for r in cell)),
                }
            )
            if want_scree:
                svals = np.mean([r.singular_values for r in cell], axis=0)
                for i, sv in enumerate(svals):
                    scree_rows.append(
                        {
                            "protocol": protocol_id,
                            "prior": prior_name,
                            "sv_index": i + 1,
                            "mean_value": float(sv),
                        }
                    )
    for r in results:
        trial_rows.append(
            {
                "protocol": r.protocol,
                "prior": r.prior,
                "sweep_param": r.sweep_param,
                "sweep_value": r.sweep_value,
                "trial": r.trial,
                "seed": r.seed,
                "se": r.se,
                "se_total": r.se_total,
                "wall_time_s": r.wall_time_s,
            }
        )
    if want_scree:
        # reference scree of the noiseless truth, one trial-averaged row set
        truth_vals = []
        for trial in range(n_trials):
            sim = _sim_for(protocol_id, fixed, sweep_param, sweep_values[0], base_seed + trial)
            theta, _ = generate(sim)
            truth_vals.append(scree(theta, SCREE_TOP_N))
        svals = np.mean(truth_vals, axis=0)
        for i, sv in enumerate(svals):
            scree_rows.append(
                {
                    "protocol": protocol_id,
                    "prior": "truth",
                    "sv_index": i + 1,
                    "mean_value": float(sv),
                }
            )
    return TableResult(
        protocol=protocol_id,
        summary_rows=summary_rows,
        trial_rows=trial_rows,
        scree_rows=scree_rows,
        trial_results=results,
    )
