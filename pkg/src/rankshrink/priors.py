"""Column-variance state and full-conditional updates for the prior families.

Five families are supported for the per-column variance gamma_k of the factor
matrices: a constant-variance gaussian prior, a gamma prior, the horseshoe,
the horseshoe+ and an inverse-gamma/gamma (igg) product prior. The half-Cauchy
scales of the horseshoe families are handled through their inverse-gamma
mixture representation, so every update below is a conjugate draw.

``total_rows`` is the combined row count of all factor matrices; it is the
only quantity through which the matrix and tensor cases differ.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rand
from .errors import InvalidParameter, NumericalUnderflow

FAMILIES = ("gaussian", "gamma", "horseshoe", "horseshoe_plus", "igg")

# IGG defaults; b stays below 1/2 so the gamma factor keeps a sparsifying spike
IGG_DEFAULT_A = 1.0
IGG_DEFAULT_B = 0.4
IGG_DEFAULT_C = 1.0

GAMMA_FLOOR = 1e-12
GAMMA_CAP = 1e12

_SS_TINY = 1e-300  # keeps GIG/IG arguments valid if a column collapses to 0


@dataclass
class PriorSpec:
    """Immutable description of one prior family and its hyperparameters."""

    family: str
    v0: float | None = None
    beta: float | None = None
    igg_a: float | None = None
    igg_b: float | None = None
    igg_c: float | None = None
    gamma_paper_compat: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameter(
                f"unknown prior family {self.family!r}; choose from {FAMILIES}"
            )
        if self.family == "igg":
            if self.igg_a is None:
                self.igg_a = IGG_DEFAULT_A
            if self.igg_b is None:
                self.igg_b = IGG_DEFAULT_B
            if self.igg_c is None:
                self.igg_c = IGG_DEFAULT_C
        required = {
            "gaussian": ("v0",),
            "gamma": ("beta",),
            "horseshoe": (),
            "horseshoe_plus": (),
            "igg": ("igg_a", "igg_b", "igg_c"),
        }[self.family]
        for name in required:
            val = getattr(self, name)
            if val is None or not val > 0.0:
                raise InvalidParameter(
                    f"prior family {self.family!r} requires {name} > 0, got {val}"
                )
        for name in ("v0", "beta", "igg_a", "igg_b", "igg_c"):
            if name not in required and getattr(self, name) is not None:
                raise InvalidParameter(
                    f"parameter {name} does not apply to family {self.family!r}"
                )
        if self.gamma_paper_compat and self.family != "gamma":
            raise InvalidParameter("gamma_paper_compat applies only to the gamma family")


@dataclass
class PriorState:
    """Current column variances plus the family's latent augmentation terms.

    ``lambda2`` holds the squared local scales for horseshoe/horseshoe+ and
    the inverse-gamma factor for igg; ``tau_local`` is igg's gamma factor.
    """

    family: str
    gamma_cols: np.ndarray
    lambda2: np.ndarray | None = None
    nu: np.ndarray | None = None
    eta2: np.ndarray | None = None
    phi: np.ndarray | None = None
    tau2: float | None = None
    xi: float | None = None
    tau_local: np.ndarray | None = None
    floor_events: int = 0


@dataclass
class ColumnStats:
    """Sufficient statistics the variance updates need from the factors."""

    ss: np.ndarray  # ss[k] = sum over factor matrices of ||column k||^2
    total_rows: int
    sigma2: float


def _clamp(values: np.ndarray, state: PriorState) -> np.ndarray:
    clipped = np.clip(values, GAMMA_FLOOR, GAMMA_CAP)
    state.floor_events += int(np.count_nonzero(clipped != values))
    return clipped


def _clamp_scalar(value: float, state: PriorState) -> float:
    clipped = min(max(value, GAMMA_FLOOR), GAMMA_CAP)
    if clipped != value:
        state.floor_events += 1
    return clipped


def gamma_shape(total_rows: int) -> float:
    """Shape of the gamma family's variance prior; never user-set."""
    return (total_rows + 1) / 2.0


def init_state(spec: PriorSpec, K: int, rng, total_rows: int | None = None) -> PriorState:
    """Draw the latent variance state from its prior.

    The gamma family's prior shape depends on total_rows; when that is not
    known yet the columns start at 1.0 and the first refresh replaces them.
    """
    if K < 1:
        raise InvalidParameter(f"K must be >= 1, got {K}")
    if spec.family == "gaussian":
        return PriorState("gaussian", np.full(K, spec.v0, dtype=np.float64))
    if spec.family == "gamma":
        if total_rows is None:
            cols = np.ones(K, dtype=np.float64)
        else:
            cols = rand.gamma(rng, gamma_shape(total_rows), spec.beta, size=K)
        return PriorState("gamma", cols)
    if spec.family == "igg":
        lam = rand.inverse_gamma(rng, spec.igg_a, spec.igg_c, size=K)
        tau = rand.gamma(rng, spec.igg_b, spec.igg_c, size=K)
        st = PriorState("igg", np.empty(K), lambda2=lam, tau_local=tau)
        st.lambda2 = _clamp(st.lambda2, st)
        st.tau_local = _clamp(st.tau_local, st)
        st.gamma_cols = _band_product(st, st.lambda2, st.tau_local)
        return st
    # horseshoe / horseshoe+: half-Cauchy scales via inverse-gamma mixtures
    nu = rand.inverse_gamma(rng, 0.5, 1.0, size=K)
    lam2 = rand.inverse_gamma_many(rng, 0.5, 1.0 / nu)
    xi = rand.inverse_gamma(rng, 0.5, 1.0)
    tau2 = rand.inverse_gamma(rng, 0.5, 1.0 / xi)
    st = PriorState(spec.family, np.empty(K), lambda2=lam2, nu=nu, tau2=tau2, xi=xi)
    st.lambda2 = _clamp(st.lambda2, st)
    st.tau2 = _clamp_scalar(st.tau2, st)
    if spec.family == "horseshoe_plus":
        st.phi = rand.inverse_gamma(rng, 0.5, 1.0, size=K)
        st.eta2 = _clamp(rand.inverse_gamma_many(rng, 0.5, 1.0 / st.phi), st)
        st.gamma_cols = _band_product(st, st.lambda2, st.eta2 * st.tau2)
    else:
        st.gamma_cols = _band_product(st, st.lambda2, st.tau2)
    return st


# ---------------------------------------------------------------------------
# Conditional kernels. Each one draws a single block given everything else;
# refresh() composes them in a fixed local-then-global scan.
# ---------------------------------------------------------------------------


def draw_local_scale2(rng, nu, ss, denom_scale2, sigma2, total_rows):
    """Squared local scales given their aux terms and column sums of squares.

    ``denom_scale2`` is tau2 for the horseshoe and eta2*tau2 for horseshoe+.
    """
    scale = 1.0 / nu + ss / (2.0 * denom_scale2 * sigma2)
    return rand.inverse_gamma_many(rng, (1 + total_rows) / 2.0, scale)


def draw_local_aux(rng, lambda2):
    return rand.inverse_gamma_many(rng, 1.0, 1.0 + 1.0 / lambda2)


def draw_global_scale2(rng, xi, ss, lambda2, sigma2, total_rows, eta2=None):
    denom = lambda2 * sigma2 if eta2 is None else lambda2 * eta2 * sigma2
    scale = 1.0 / xi + float(np.sum(ss / (2.0 * denom)))
    K = ss.shape[0]
    return rand.inverse_gamma(rng, (1 + K * total_rows) / 2.0, scale)


def draw_global_aux(rng, tau2):
    return rand.inverse_gamma(rng, 1.0, 1.0 + 1.0 / tau2)


def draw_extra_scale2(rng, phi, ss, lambda2, tau2, sigma2, total_rows):
    scale = 1.0 / phi + ss / (2.0 * lambda2 * tau2 * sigma2)
    return rand.inverse_gamma_many(rng, (1 + total_rows) / 2.0, scale)


def draw_extra_aux(rng, eta2):
    return rand.inverse_gamma_many(rng, 1.0, 1.0 + 1.0 / eta2)


def draw_gamma_column(rng, beta, ss_k, sigma2, total_rows):
    """Exact conjugate draw of one column variance under the gamma prior.

    The gamma(shape, rate=beta) prior times the factor likelihood gives a
    GIG(2*beta, ss/sigma2, shape - total_rows/2) conditional; with the
    derived shape (total_rows+1)/2 the order parameter is exactly 1/2.
    """
    p = gamma_shape(total_rows) - total_rows / 2.0
    return rand.gig(rng, 2.0 * beta, ss_k / sigma2, p)


def draw_gamma_column_compat(rng, beta, ss_k):
    """Legacy inverse-Gaussian update kept for table reproduction only."""
    return rand.inverse_gaussian(rng, beta / max(ss_k, GAMMA_FLOOR), beta**2)


def draw_igg_gamma_scale(rng, b, c, ss_k, lam_k, sigma2, total_rows):
    return rand.gig(
        rng, 2.0 * c, max(ss_k, _SS_TINY) / (lam_k * sigma2), b - total_rows / 2.0
    )


def draw_igg_inv_scale(rng, a, c, ss_k, tau_k, sigma2, total_rows):
    return rand.inverse_gamma(
        rng, a + total_rows / 2.0, c + ss_k / (2.0 * tau_k * sigma2)
    )


def refresh(state: PriorState, spec: PriorSpec, stats: ColumnStats, rng) -> PriorState:
    """One full-conditional sweep of the variance state, in place."""
    if state.family != spec.family:
        raise InvalidParameter(
            f"state family {state.family!r} does not match spec {spec.family!r}"
        )
    K = state.gamma_cols.shape[0]
    ss = np.asarray(stats.ss, dtype=np.float64)
    if ss.shape != (K,):
        raise InvalidParameter(f"expected {K} column statistics, got shape {ss.shape}")
    T, s2 = stats.total_rows, stats.sigma2

    if spec.family == "gaussian":
        return state

    if spec.family == "gamma":
        if spec.gamma_paper_compat:
            cols = [draw_gamma_column_compat(rng, spec.beta, ss[k]) for k in range(K)]
        else:
            cols = [draw_gamma_column(rng, spec.beta, ss[k], s2, T) for k in range(K)]
        state.gamma_cols = _clamp(np.array(cols), state)
    elif spec.family == "horseshoe":
        state.lambda2 = _clamp(
            draw_local_scale2(rng, state.nu, ss, state.tau2, s2, T), state
        )
        state.nu = draw_local_aux(rng, state.lambda2)
        state.tau2 = _clamp_scalar(
            draw_global_scale2(rng, state.xi, ss, state.lambda2, s2, T), state
        )
        state.xi = draw_global_aux(rng, state.tau2)
        state.gamma_cols = _band_product(state, state.lambda2, state.tau2)
    elif spec.family == "horseshoe_plus":
        state.lambda2 = _clamp(
            draw_local_scale2(rng, state.nu, ss, state.eta2 * state.tau2, s2, T), state
        )
        state.nu = draw_local_aux(rng, state.lambda2)
        state.eta2 = _clamp(
            draw_extra_scale2(rng, state.phi, ss, state.lambda2, state.tau2, s2, T),
            state,
        )
        state.phi = draw_extra_aux(rng, state.eta2)
        state.tau2 = _clamp_scalar(
            draw_global_scale2(rng, state.xi, ss, state.lambda2, s2, T, state.eta2),
            state,
        )
        state.xi = draw_global_aux(rng, state.tau2)
        state.gamma_cols = _band_product(state, state.lambda2, state.eta2 * state.tau2)
    else:  # igg
        a, b, c = spec.igg_a, spec.igg_b, spec.igg_c
        tau = np.array(
            [
                draw_igg_gamma_scale(rng, b, c, ss[k], state.lambda2[k], s2, T)
                for k in range(K)
            ]
        )
        state.tau_local = _clamp(tau, state)
        lam = np.array(
            [
                draw_igg_inv_scale(rng, a, c, ss[k], state.tau_local[k], s2, T)
                for k in range(K)
            ]
        )
        state.lambda2 = _clamp(lam, state)
        state.gamma_cols = _band_product(state, state.lambda2, state.tau_local)

    if not np.all(np.isfinite(state.gamma_cols)):
        raise NumericalUnderflow("non-finite column variance after refresh")
    return state


def _band_product(state: PriorState, local: np.ndarray, rest) -> np.ndarray:
    """Product of clamped factors, nudging the local factor back into band.

    Individual factors are already in [GAMMA_FLOOR, GAMMA_CAP] but their
    product may not be; rescaling the local factor keeps the product
    identity (gamma = local * rest) exact.
    """
    gam = local * rest
    over = gam > GAMMA_CAP
    under = gam < GAMMA_FLOOR
    n_bad = int(np.count_nonzero(over) + np.count_nonzero(under))
    if n_bad:
        state.floor_events += n_bad
        local[over] *= GAMMA_CAP / gam[over]
        local[under] *= GAMMA_FLOOR / gam[under]
        gam = local * rest
    return gam
