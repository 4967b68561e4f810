"""Locate, refine, classify and deduplicate critical points of a mixture.

The ascent is two-phase. Phase one iterates the fixed-point map

    x' = [sum_i r_i(x) P_i]^{-1} [sum_i r_i(x) P_i mu_i]

where r_i are the responsibilities and P_i the component precisions;
this is the mean-shift step and its fixed points are exactly the
critical points of the density. Phase two polishes with damped Newton
on the gradient, which also yields the Hessian used for classification.

All convergence tests are scale-free (||grad f|| / f) because density
magnitudes across the constructions here differ by hundreds of orders
of magnitude.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import bounds
from .errors import IllConditioned, NonFinite, TooFewSamples
from .mixture import Mixture, evaluate, mixture_to_dict

__all__ = [
    "AscentOptions",
    "CriticalPoint",
    "ModeReport",
    "fixed_point_step",
    "ascend",
    "default_starts",
    "find_critical_points",
    "ridgeline_point",
    "ridgeline_oracle_k2",
    "verify_ridgeline_membership",
]

_CONDITION_LIMIT = 1e14
# Damped fixed-point steps may not decrease log-density by more than this.
_MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class AscentOptions:
    """Tolerances and iteration caps for the two-phase ascent.

    ``dedup_radius`` of None means 1e-5 times the search-box diameter,
    resolved per run from the bounding box of the starts.
    ``degenerate_eigen_tolerance`` is relative to the largest absolute
    Hessian eigenvalue at the point being classified.
    """

    max_fixed_point_iters: int = 500
    max_newton_iters: int = 50
    gradient_tolerance: float = 1e-10
    step_tolerance: float = 1e-12
    dedup_radius: float | None = None
    degenerate_eigen_tolerance: float = 1e-8

    def __post_init__(self):
        if self.max_fixed_point_iters < 1 or self.max_newton_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        for name in ("gradient_tolerance", "step_tolerance", "degenerate_eigen_tolerance"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.dedup_radius is not None and self.dedup_radius <= 0.0:
            raise ValueError("dedup_radius must be > 0")


@dataclass(frozen=True)
class CriticalPoint:
    """A refined critical point with its Hessian-based classification.

    ``gradient_norm`` is the scale-free norm ||grad f|| / f. ``kind`` is
    one of ``mode``, ``antimode``, ``saddle`` (with ``saddle_index``
    negative eigenvalues) or ``degenerate``. A degenerate point that a
    deterministic neighborhood probe certifies as a strict local maximum
    is reported as a mode with ``degenerate_hessian`` set.
    """

    location: np.ndarray
    log_density: float
    gradient_norm: float
    hessian_eigenvalues: np.ndarray
    kind: str
    saddle_index: int | None = None
    converged_from: int = 1
    converged: bool = True
    degenerate_hessian: bool = False

    @property
    def kind_label(self) -> str:
        if self.kind == "saddle":
            return f"saddle({self.saddle_index})"
        return self.kind


@dataclass(frozen=True)
class BoundCheck:
    lower: int
    conjecture: int
    upper: int
    mode_count_within_upper: bool


@dataclass(frozen=True)
class ModeReport:
    """Deduplicated critical points of one mixture plus bound comparison."""

    mixture_digest: str
    critical_points: tuple[CriticalPoint, ...]
    mode_count: int
    starts_used: int
    starts_converged: int
    bound_check: BoundCheck
    dedup_radius: float = 0.0

    @property
    def modes(self) -> tuple[CriticalPoint, ...]:
        return tuple(c for c in self.critical_points if c.kind == "mode")

    def count(self, kind: str) -> int:
        return sum(1 for c in self.critical_points if c.kind == kind)

    def to_dict(self) -> dict:
        return {
            "mixture_digest": self.mixture_digest,
            "mode_count": self.mode_count,
            "starts_used": self.starts_used,
            "starts_converged": self.starts_converged,
            "dedup_radius": self.dedup_radius,
            "bound_check": {
                "lower": self.bound_check.lower,
                "conjecture": self.bound_check.conjecture,
                "upper": self.bound_check.upper,
                "mode_count_within_upper": self.bound_check.mode_count_within_upper,
            },
            "critical_points": [
                {
                    "location": cp.location.tolist(),
                    "log_density": cp.log_density,
                    "gradient_norm": cp.gradient_norm,
                    "hessian_eigenvalues": cp.hessian_eigenvalues.tolist(),
                    "kind": cp.kind_label,
                    "converged_from": cp.converged_from,
                    "degenerate_hessian": cp.degenerate_hessian,
                }
                for cp in self.critical_points
            ],
        }

    def to_csv(self) -> str:
        d = len(self.critical_points[0].location) if self.critical_points else 0
        out = io.StringIO()
        cols = [f"x_{i + 1}" for i in range(d)]
        out.write(",".join(cols + ["log_density", "kind", "min_eigenvalue", "converged_from"]) + "\n")
        for cp in self.critical_points:
            row = [repr(float(v)) for v in cp.location]
            row += [
                repr(cp.log_density),
                cp.kind_label,
                repr(float(cp.hessian_eigenvalues[0])),
                str(cp.converged_from),
            ]
            out.write(",".join(row) + "\n")
        return out.getvalue()


def mixture_digest(mix: Mixture) -> str:
    payload = json.dumps(mixture_to_dict(mix), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


# ----------------------------------------------------------------------
# Fixed-point (mean shift) iteration
# ----------------------------------------------------------------------

def _combined_precision(mix: Mixture, resp: np.ndarray):
    """Responsibility-weighted precision and its weighted mean pull."""
    P = np.einsum("k,kst->st", resp, mix._precisions)
    rhs = np.einsum("k,kst,kt->s", resp, mix._precisions, mix._means)
    return P, rhs


def fixed_point_step(mix: Mixture, x) -> np.ndarray:
    """One mean-shift step from x; fixed points are critical points."""
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"start contains non-finite entries: {x}")
    resp = mix.responsibilities(x[None, :])[:, 0]
    P, rhs = _combined_precision(mix, resp)
    eigs = np.linalg.eigvalsh(P)
    if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > _CONDITION_LIMIT:
        raise IllConditioned(
            f"combined precision condition estimate {eigs[-1] / max(eigs[0], 1e-300):.3g}"
        )
    return cho_solve(cho_factor(P, lower=True), rhs)


def _fixed_point_batch(mix: Mixture, X: np.ndarray) -> np.ndarray:
    """Vectorized mean-shift step for all rows of X."""
    resp = mix.responsibilities(X)                                # (k, m)
    P = np.einsum("km,kst->mst", resp, mix._precisions)
    pmu = np.einsum("kst,kt->ks", mix._precisions, mix._means)    # (k, d)
    rhs = np.einsum("km,ks->ms", resp, pmu)
    return np.linalg.solve(P, rhs[..., None])[..., 0]


# ----------------------------------------------------------------------
# Newton refinement and classification
# ----------------------------------------------------------------------

def _newton_polish(mix: Mixture, x: np.ndarray, opts: AscentOptions, step_cap: float):
    """Newton iterations on grad f; returns (x, EvalResult, converged)."""
    res = evaluate(mix, x)
    for _ in range(opts.max_newton_iters):
        g = res.grad_over_density
        # Polish past the gradient test down to step_tolerance so that in
        # flat (near-degenerate) regions every start lands on the same
        # point instead of scattering across the plateau.
        H = res.hessian_over_density
        # Regularize only the linear solve: clamp tiny eigenvalues away
        # from zero, keeping their sign so saddles are still repelled.
        w, V = np.linalg.eigh(H)
        floor = max(1e-12 * np.max(np.abs(w)), 1e-300)
        w = np.where(np.abs(w) < floor, np.where(w >= 0, floor, -floor), w)
        step = -V @ ((V.T @ g) / w)
        norm = np.linalg.norm(step)
        if norm > step_cap:
            step *= step_cap / norm
        x_new = x + step
        res_new = evaluate(mix, x_new)
        # Back off if Newton overshoots into a lower-gradient-free region.
        halvings = 0
        while (
            np.linalg.norm(res_new.grad_over_density) > 2.0 * np.linalg.norm(g)
            and halvings < 30
        ):
            x_new = 0.5 * (x_new + x)
            res_new = evaluate(mix, x_new)
            halvings += 1
        moved = np.linalg.norm(x_new - x)
        x, res = x_new, res_new
        if moved < opts.step_tolerance:
            break
    converged = np.linalg.norm(res.grad_over_density) <= opts.gradient_tolerance
    return x, res, converged


_PROBE_FRACTIONS = (1e-4, 1e-3, 1e-2)


def _probe_extremum(mix: Mixture, x: np.ndarray, directions: np.ndarray, scale: float):
    """Deterministic neighborhood probe for degenerate Hessians.

    Returns "mode" / "antimode" when the center beats (or loses to) every
    probe sample by a margin above float noise, else "degenerate".
    """
    center = mix.log_density(x[None, :])[0]
    for frac in _PROBE_FRACTIONS:
        r = frac * scale
        samples = mix.log_density(x[None, :] + r * directions)
        hi, lo = np.max(samples), np.min(samples)
        margin = 64.0 * np.finfo(float).eps * max(abs(center), 1.0)
        if center - hi > margin:
            return "mode"
        if lo - center > margin:
            return "antimode"
        if hi - center > margin and center - lo > margin:
            return "degenerate"
    return "degenerate"


def _classify(mix: Mixture, x: np.ndarray, res, opts: AscentOptions, scale: float):
    """Classify a converged critical point from its Hessian spectrum."""
    eigs = np.sort(np.linalg.eigvalsh(res.hessian_over_density))
    tol = opts.degenerate_eigen_tolerance * np.max(np.abs(eigs)) if eigs.size else 0.0
    d = eigs.size
    degenerate = bool(np.any(np.abs(eigs) <= tol))
    if not degenerate:
        neg = int(np.sum(eigs < -tol))
        if neg == d:
            return "mode", None, eigs, False
        if neg == 0:
            return "antimode", None, eigs, False
        return "saddle", neg, eigs, False
    # Degenerate spectrum: resolve strict local extrema by direct probing
    # along coordinate axes and Hessian eigenvectors.
    _, V = np.linalg.eigh(res.hessian_over_density)
    dirs = np.concatenate([np.eye(d), -np.eye(d), V.T, -V.T], axis=0)
    kind = _probe_extremum(mix, x, dirs, scale)
    return kind, None, eigs, True


def ascend(mix: Mixture, x0, opts: AscentOptions | None = None, scale: float | None = None) -> CriticalPoint:
    """Run the two-phase ascent from one start and classify the endpoint.

    ``scale`` is the search-box diameter used for Newton step capping and
    degenerate probing; it defaults to a spread estimate from the means.
    """
    opts = opts or AscentOptions()
    x = np.asarray(x0, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"start contains non-finite entries: {x}")
    if scale is None:
        scale = _default_scale(mix)

    coarse_tol = 1e3 * opts.gradient_tolerance
    logf = mix.log_density(x[None, :])[0]
    for _ in range(opts.max_fixed_point_iters):
        g = mix.grad_over_density(x[None, :])[0]
        if np.linalg.norm(g) < coarse_tol:
            break
        x_new = fixed_point_step(mix, x)
        logf_new = mix.log_density(x_new[None, :])[0]
        halvings = 0
        while logf_new < logf - _MONOTONE_SLACK and halvings < 60:
            x_new = 0.5 * (x_new + x)
            logf_new = mix.log_density(x_new[None, :])[0]
            halvings += 1
        if np.linalg.norm(x_new - x) < opts.step_tolerance:
            x, logf = x_new, logf_new
            break
        x, logf = x_new, logf_new

    x, res, converged = _newton_polish(mix, x, opts, step_cap=0.5 * scale)
    kind, sidx, eigs, degen = _classify(mix, x, res, opts, scale)
    return CriticalPoint(
        location=x,
        log_density=res.log_density,
        gradient_norm=float(np.linalg.norm(res.grad_over_density)),
        hessian_eigenvalues=eigs,
        kind=kind,
        saddle_index=sidx,
        converged_from=1,
        converged=converged,
        degenerate_hessian=degen,
    )


def _default_scale(mix: Mixture) -> float:
    spread = np.ptp(mix._means, axis=0) if mix.k > 1 else np.zeros(mix.dim)
    sigma = np.sqrt(max(np.max(np.linalg.eigvalsh(c.cov)) for c in mix.components))
    return float(np.linalg.norm(spread) + 6.0 * sigma)


# ----------------------------------------------------------------------
# Start generation
# ----------------------------------------------------------------------

def default_starts(scenario, budget: int, seed: int = 0) -> np.ndarray:
    """Deterministic multistart seeds for a scenario.

    The union of component means, arrangement vertices (when present) and
    pairwise mean midpoints, then filled to ``budget`` with a seeded
    Halton sequence over the scenario's search box.
    """
    from scipy.stats import qmc

    mix = scenario.mixture
    if budget < mix.k:
        raise ValueError(f"budget {budget} is below the component count {mix.k}")
    pts = [c.mean for c in mix.components]
    arr = getattr(scenario, "arrangement", None)
    if arr is not None:
        pts.extend(v for v in arr.vertices)
    means = mix._means
    for i in range(mix.k):
        for j in range(i + 1, mix.k):
            pts.append(0.5 * (means[i] + means[j]))
    remaining = budget - len(pts)
    if remaining > 0:
        lo, hi = scenario.search_box
        sampler = qmc.Halton(d=mix.dim, scramble=True, seed=seed)
        fill = qmc.scale(sampler.random(remaining), lo, hi)
        pts.extend(fill)
    return np.array(pts)


# ----------------------------------------------------------------------
# Multistart driver
# ----------------------------------------------------------------------

def _dedup(points, order_key, radius):
    """Greedy cluster points within radius; returns list of index lists."""
    clusters = []
    for idx in order_key:
        placed = False
        for cl in clusters:
            if np.linalg.norm(points[idx] - points[cl[0]]) <= radius:
                cl.append(idx)
                placed = True
                break
        if not placed:
            clusters.append([idx])
    return clusters


def find_critical_points(
    mix: Mixture,
    starts,
    opts: AscentOptions | None = None,
    search_box=None,
) -> ModeReport:
    """Multistart search: ascend from every start, dedup and classify.

    Phase one runs vectorized over all active starts; the outcome is
    identical to running :func:`ascend` sequentially because every start
    follows the same damped iteration, and deduplication is performed on
    a deterministic lexicographic ordering of the converged points.
    """
    opts = opts or AscentOptions()
    X = np.atleast_2d(np.asarray(starts, dtype=float))
    m = X.shape[0]
    if m < 1:
        raise ValueError("at least one start is required")

    if search_box is not None:
        lo, hi = (np.asarray(a, dtype=float) for a in search_box)
    else:
        lo, hi = X.min(axis=0), X.max(axis=0)
    diam = float(np.linalg.norm(hi - lo))
    scale = diam if diam > 0 else _default_scale(mix)
    radius = opts.dedup_radius if opts.dedup_radius is not None else 1e-5 * scale

    coarse_tol = 1e3 * opts.gradient_tolerance
    X = X.copy()
    logf = mix.log_density(X)
    active = np.ones(m, dtype=bool)
    for _ in range(opts.max_fixed_point_iters):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        g = mix.grad_over_density(X[idx])
        done = np.linalg.norm(g, axis=1) < coarse_tol
        active[idx[done]] = False
        idx = idx[~done]
        if idx.size == 0:
            continue
        X_new = _fixed_point_batch(mix, X[idx])
        logf_new = mix.log_density(X_new)
        for _ in range(60):
            bad = logf_new < logf[idx] - _MONOTONE_SLACK
            if not np.any(bad):
                break
            X_new[bad] = 0.5 * (X_new[bad] + X[idx[bad]])
            logf_new[bad] = mix.log_density(X_new[bad])
        steps = np.linalg.norm(X_new - X[idx], axis=1)
        X[idx] = X_new
        logf[idx] = logf_new
        active[idx[steps < opts.step_tolerance]] = False

    refined = []
    for i in range(m):
        x, res, converged = _newton_polish(mix, X[i], opts, step_cap=0.5 * max(scale, 1e-300))
        refined.append((x, res, converged))

    conv_idx = [i for i, (_, _, ok) in enumerate(refined) if ok]
    # Deterministic dedup order: lexicographic by location.
    conv_idx.sort(key=lambda i: tuple(refined[i][0]))
    pts = {i: refined[i][0] for i in conv_idx}
    clusters = _dedup(pts, conv_idx, radius)

    critical_points = []
    for cl in clusters:
        rep = min(cl, key=lambda i: np.linalg.norm(refined[i][1].grad_over_density))
        x, res, _ = refined[rep]
        kind, sidx, eigs, degen = _classify(mix, x, res, opts, scale)
        critical_points.append(
            CriticalPoint(
                location=x,
                log_density=res.log_density,
                gradient_norm=float(np.linalg.norm(res.grad_over_density)),
                hessian_eigenvalues=eigs,
                kind=kind,
                saddle_index=sidx,
                converged_from=len(cl),
                converged=True,
                degenerate_hessian=degen,
            )
        )

    mode_count = sum(1 for c in critical_points if c.kind == "mode")
    up = bounds.upper(mix.dim, mix.k)
    check = BoundCheck(
        lower=bounds.lower(mix.dim, mix.k),
        conjecture=bounds.conjecture(mix.dim, mix.k),
        upper=up,
        mode_count_within_upper=mode_count <= up,
    )
    return ModeReport(
        mixture_digest=mixture_digest(mix),
        critical_points=tuple(critical_points),
        mode_count=mode_count,
        starts_used=m,
        starts_converged=len(conv_idx),
        bound_check=check,
        dedup_radius=radius,
    )


# ----------------------------------------------------------------------
# Ridgeline curve (exhaustive oracle for k = 2)
# ----------------------------------------------------------------------

def ridgeline_point(means, covariances, alpha) -> np.ndarray:
    """Point of the ridgeline map for simplex weights alpha:

        x*(alpha) = [sum_i alpha_i P_i]^{-1} [sum_i alpha_i P_i mu_i]
    """
    from .mixture import make_mixture

    alpha = np.asarray(alpha, dtype=float).ravel()
    k = alpha.shape[0]
    mix = make_mixture(np.full(k, 1.0 / k), means, covariances)
    return _ridgeline_solve(mix, alpha)


def _ridgeline_solve(mix: Mixture, alpha: np.ndarray) -> np.ndarray:
    P = np.einsum("k,kst->st", alpha, mix._precisions)
    rhs = np.einsum("k,kst,kt->s", alpha, mix._precisions, mix._means)
    eigs = np.linalg.eigvalsh(P)
    if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > _CONDITION_LIMIT:
        raise IllConditioned("combined ridgeline precision is ill-conditioned")
    return cho_solve(cho_factor(P, lower=True), rhs)


def _ridgeline_curve_k2(mix: Mixture, t: np.ndarray):
    """x*(t) and dx*/dt for alpha = (t, 1 - t), vectorized over t."""
    P1, P2 = mix._precisions
    m1 = P1 @ mix._means[0]
    m2 = P2 @ mix._means[1]
    P = t[:, None, None] * P1 + (1.0 - t)[:, None, None] * P2
    rhs = t[:, None] * m1 + (1.0 - t)[:, None] * m2
    x = np.linalg.solve(P, rhs[..., None])[..., 0]
    dP_x = np.einsum("st,mt->ms", P1 - P2, x)
    dx = np.linalg.solve(P, ((m1 - m2)[None, :] - dP_x)[..., None])[..., 0]
    return x, dx


def _ridgeline_derivative(mix: Mixture, t: np.ndarray) -> np.ndarray:
    """Scale-free derivative of f along the ridgeline: (grad f / f) . dx*/dt."""
    x, dx = _ridgeline_curve_k2(mix, np.atleast_1d(t))
    g = mix.grad_over_density(x)
    return np.einsum("md,md->m", g, dx)


def ridgeline_oracle_k2(mix: Mixture, samples: int = 4000, opts: AscentOptions | None = None):
    """Exhaustively enumerate the critical points of a 2-component mixture.

    Every critical point lies on the ridgeline curve x*(t), t in [0, 1],
    and is a zero of d f(x*(t)) / dt. The derivative is evaluated in
    closed form on a uniform grid, each sign change is bisected to an
    interval below 1e-12, and the resulting points are polished with
    Newton on grad f and deduplicated.

    The two component means (the curve endpoints) are always polished as
    well: a critical point whose minority responsibility underflows the
    grid spacing, or even the floating-point gap around t = 0 or 1, has
    no representable sign change in t but sits inside Newton's basin
    around the corresponding mean.
    """
    if mix.k != 2:
        raise ValueError(f"ridgeline oracle requires exactly 2 components, got {mix.k}")
    if samples < 1000:
        raise TooFewSamples(f"need at least 1000 samples, got {samples}")
    opts = opts or AscentOptions()

    t_grid = np.linspace(0.0, 1.0, samples)
    h = _ridgeline_derivative(mix, t_grid)
    roots = list(t_grid[h == 0.0])
    sign = np.sign(h)
    flips = np.flatnonzero((sign[:-1] * sign[1:]) < 0)
    for j in flips:
        a, b = t_grid[j], t_grid[j + 1]
        ha = h[j]
        while b - a > 1e-12:
            mid = 0.5 * (a + b)
            hm = _ridgeline_derivative(mix, np.array([mid]))[0]
            if hm == 0.0:
                a = b = mid
                break
            if (ha < 0) != (hm < 0):
                b = mid
            else:
                a, ha = mid, hm
        roots.append(0.5 * (a + b))

    scale = _default_scale(mix)
    points = []
    seeds = [_ridgeline_curve_k2(mix, np.array([t]))[0][0] for t in sorted(roots)]
    seeds.extend(mix._means)
    for x0 in seeds:
        x, res, converged = _newton_polish(mix, x0, opts, step_cap=0.5 * scale)
        if not converged:
            continue
        kind, sidx, eigs, degen = _classify(mix, x, res, opts, scale)
        points.append(
            CriticalPoint(
                location=x,
                log_density=res.log_density,
                gradient_norm=float(np.linalg.norm(res.grad_over_density)),
                hessian_eigenvalues=eigs,
                kind=kind,
                saddle_index=sidx,
                degenerate_hessian=degen,
            )
        )

    radius = opts.dedup_radius if opts.dedup_radius is not None else 1e-5 * scale
    order = sorted(range(len(points)), key=lambda i: tuple(points[i].location))
    locs = {i: points[i].location for i in order}
    clusters = _dedup(locs, order, radius)
    out = []
    for cl in clusters:
        rep = min(cl, key=lambda i: points[i].gradient_norm)
        out.append(replace(points[rep], converged_from=len(cl)))
    return out


def verify_ridgeline_membership(mix: Mixture, cp: CriticalPoint) -> float:
    """Distance from cp to its own ridgeline image x*(responsibilities(cp)).

    Zero (up to refinement tolerance) exactly when cp is a critical
    point, since critical points are fixed points of the responsibility-
    weighted ridgeline map.
    """
    x = np.asarray(cp.location, dtype=float)
    alpha = mix.responsibilities(x[None, :])[:, 0]
    return float(np.linalg.norm(_ridgeline_solve(mix, alpha) - x))
