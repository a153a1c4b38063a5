"""Moving-asymptotes design update plus an optimality-criteria oracle.

One MMA step builds the separable convex approximation of the objective
around the current design, adapts per-variable asymptotes from the last
two iterates, and resolves the single volume constraint by bisecting the
dual multiplier. The volume constraint is linear, so bisecting on its
linearized value enforces it exactly at the subproblem optimum.

The constraint is treated as an equality by default (signed multiplier),
which pins the mean density to the target at every step; an inequality
sense is available for generic subproblems where the constraint may stay
inactive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simp import DensityField

ASY_INIT = 0.5
ASY_SHRINK = 0.7
ASY_EXPAND = 1.2
ASY_MIN_OFFSET = 0.01
ASY_MAX_OFFSET = 10.0
ALBEFA = 0.1  # keeps iterates strictly inside the asymptotes
RAA0 = 1e-5
DEFAULT_MOVE_LIMIT = 0.2


class BisectionError(RuntimeError):
    """Dual bisection failed; message carries the bracketing diagnostics."""


@dataclass
class ConstraintSpec:
    """Volume target and per-step move limit for the box [0, 1]^N."""

    volume_target: float
    move_limit: float = DEFAULT_MOVE_LIMIT
    sense: str = "equality"

    def __post_init__(self):
        if not 0.0 < self.volume_target < 1.0:
            raise ValueError(f"volume_target must lie in (0, 1), got {self.volume_target}")
        if not 0.0 < self.move_limit <= 1.0:
            raise ValueError(f"move_limit must lie in (0, 1], got {self.move_limit}")
        if self.sense not in ("equality", "inequality"):
            raise ValueError(f"sense must be 'equality' or 'inequality', got {self.sense!r}")


@dataclass
class MmaState:
    """Asymptotes and two-step design history; one instance per run."""

    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    x_prev: np.ndarray | None = None
    x_prev2: np.ndarray | None = None
    iteration: int = 0


def _update_asymptotes(x: np.ndarray, state: MmaState) -> tuple[np.ndarray, np.ndarray]:
    span = 1.0  # width of the [0, 1] box
    if state.iteration < 2 or state.x_prev is None or state.x_prev2 is None:
        lower = x - ASY_INIT * span
        upper = x + ASY_INIT * span
    else:
        trend = (x - state.x_prev) * (state.x_prev - state.x_prev2)
        factor = np.where(trend < 0.0, ASY_SHRINK, np.where(trend > 0.0, ASY_EXPAND, 1.0))
        lower = x - factor * (state.x_prev - state.lower)
        upper = x + factor * (state.upper - state.x_prev)
    lower = np.clip(lower, x - ASY_MAX_OFFSET * span, x - ASY_MIN_OFFSET * span)
    upper = np.clip(upper, x + ASY_MIN_OFFSET * span, x + ASY_MAX_OFFSET * span)
    return lower, upper


def mma_update(
    x: DensityField,
    dfdx: np.ndarray,
    g: float,
    dgdx: np.ndarray,
    state: MmaState,
    spec: ConstraintSpec,
) -> DensityField:
    """One MMA iteration on the box [0, 1]^N with a single constraint.

    g and dgdx describe the constraint at x (g = 0 on its boundary).
    Advances ``state`` in place and returns the new design.
    """
    xv = x.values
    n = xv.size
    dfdx = np.asarray(dfdx, dtype=float)
    dgdx = np.asarray(dgdx, dtype=float)
    if dfdx.shape != (n,) or dgdx.shape != (n,):
        raise ValueError("gradient length must match the design")

    scale_f = np.abs(dfdx).max()
    if scale_f == 0.0:
        _advance(state, xv)
        return x.copy_with(xv)
    df = dfdx / scale_f
    scale_g = np.abs(dgdx).max()
    dg = dgdx / scale_g if scale_g > 0.0 else dgdx

    lower, upper = _update_asymptotes(xv, state)
    move = spec.move_limit
    alpha = np.maximum.reduce([np.zeros(n), xv - move, lower + ALBEFA * (xv - lower)])
    beta = np.minimum.reduce([np.ones(n), xv + move, upper - ALBEFA * (upper - xv)])

    ux2 = (upper - xv) ** 2
    xl2 = (xv - lower) ** 2
    reg = 0.001 * np.abs(df) + RAA0 / (upper - lower)
    p0 = (np.maximum(df, 0.0) + reg) * ux2
    q0 = (np.maximum(-df, 0.0) + reg) * xl2
    dg_pos = np.maximum(dg, 0.0)
    dg_neg = np.maximum(-dg, 0.0)

    def candidate(lam: float) -> np.ndarray:
        # The multiplier term lam*dg joins the p side where it is positive
        # and the q side where negative; a signed lam covers the equality
        # sense.
        lp, ln = max(lam, 0.0), max(-lam, 0.0)
        p = p0 + (lp * dg_pos + ln * dg_neg) * ux2
        q = q0 + (lp * dg_neg + ln * dg_pos) * xl2
        sp_ = np.sqrt(p)
        sq = np.sqrt(q)
        return np.clip((sp_ * lower + sq * upper) / (sp_ + sq), alpha, beta)

    def constraint(lam: float) -> float:
        # Linearized constraint at the trial point; exact when g is linear.
        return g + float(dgdx @ (candidate(lam) - xv))

    x_new = _bisect_multiplier(candidate, constraint, spec.sense)
    _advance(state, xv, lower, upper)
    return x.copy_with(x_new)


def _bisect_multiplier(candidate, constraint, sense: str, tol: float = 1e-9) -> np.ndarray:
    g0 = constraint(0.0)
    if abs(g0) <= tol or (sense == "inequality" and g0 <= 0.0):
        return candidate(0.0)

    # constraint(lam) is nonincreasing; expand a bracket around the root.
    if g0 > 0.0:
        lo, hi = 0.0, 1.0
        while constraint(hi) > 0.0:
            hi *= 2.0
            if hi > 1e12:
                raise BisectionError(
                    f"no upper bracket: g({hi:.1e}) = {constraint(hi):.3e}, g(0) = {g0:.3e}"
                )
    else:
        lo, hi = -1.0, 0.0
        while constraint(lo) < 0.0:
            lo *= 2.0
            if lo < -1e12:
                raise BisectionError(
                    f"no lower bracket: g({lo:.1e}) = {constraint(lo):.3e}, g(0) = {g0:.3e}"
                )

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = constraint(mid)
        if abs(gm) <= tol:
            return candidate(mid)
        if gm > 0.0:
            lo = mid
        else:
            hi = mid
    gm = constraint(0.5 * (lo + hi))
    if abs(gm) <= 1e-6:
        return candidate(0.5 * (lo + hi))
    raise BisectionError(f"bisection stalled: bracket [{lo:.3e}, {hi:.3e}], g = {gm:.3e}")


def _advance(state: MmaState, x: np.ndarray, lower=None, upper=None) -> None:
    state.x_prev2 = state.x_prev
    state.x_prev = x.copy()
    if lower is not None:
        state.lower = lower
        state.upper = upper
    state.iteration += 1


def oc_update(
    x: DensityField,
    dfdx: np.ndarray,
    volume_target: float,
    move: float = DEFAULT_MOVE_LIMIT,
) -> DensityField:
    """Classical optimality-criteria step, used as a cross-check oracle.

    Requires a compliance-style gradient (dfdx <= 0). Bisects the volume
    multiplier until the mean of the multiplicative update hits the
    target.
    """
    xv = x.values
    dfdx = np.asarray(dfdx, dtype=float)
    if np.any(dfdx > 1e-12):
        raise ValueError("oc_update requires nonpositive sensitivities")

    lo_bound = np.maximum(0.0, xv - move)
    hi_bound = np.minimum(1.0, xv + move)

    def trial(lam: float) -> np.ndarray:
        return np.clip(xv * np.sqrt(np.maximum(-dfdx, 0.0) / lam), lo_bound, hi_bound)

    if np.mean(hi_bound) < volume_target - 1e-7 or np.mean(lo_bound) > volume_target + 1e-7:
        raise BisectionError(
            f"volume target {volume_target} unreachable within move limits "
            f"[{np.mean(lo_bound):.4f}, {np.mean(hi_bound):.4f}]"
        )

    l1, l2 = 1e-12, 1e12
    for _ in range(300):
        lam = np.sqrt(l1 * l2)
        x_new = trial(lam)
        vol = np.mean(x_new)
        if abs(vol - volume_target) <= 1e-7:
            return x.copy_with(x_new)
        if vol > volume_target:
            l1 = lam
        else:
            l2 = lam
    if abs(np.mean(x_new) - volume_target) <= 1e-6:
        return x.copy_with(x_new)
    raise BisectionError(f"OC bisection stalled at volume {np.mean(x_new):.6f}")
