"""Gaussian mixture representation and stable density evaluation.

A :class:`Mixture` is a convex combination of Gaussian components. Each
component caches the lower Cholesky factor of its covariance at
construction; every quadratic form and precision application goes through
triangular solves of that factor, never an explicitly formed inverse of
the covariance in a quadratic form. Density, gradient and Hessian are
accumulated in a max-shifted log scale so that mixtures whose component
peak heights differ by hundreds of orders of magnitude (normal variances
as small as ~1e-9) still evaluate without overflow or underflow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from .errors import (
    DimensionMismatch,
    NegativeWeight,
    NonFinite,
    NonSPD,
    SingularTransform,
    WeightSumInvalid,
)

__all__ = [
    "GaussianComponent",
    "Mixture",
    "EvalResult",
    "make_mixture",
    "evaluate",
    "affine_transform",
    "is_homoscedastic",
    "is_isotropic",
    "mixture_to_dict",
    "mixture_from_dict",
    "save_mixture",
    "load_mixture",
]

# Below this log-density the reported density is flushed to exactly 0.0
# while log_density stays exact, keeping far-tail ascent usable.
LOG_DENSITY_FLOOR = -700.0

_SYM_RTOL = 1e-12
_WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class GaussianComponent:
    """One weighted Gaussian term of a mixture.

    ``chol`` is the lower Cholesky factor of ``cov`` and ``log_norm`` the
    cached log-normalizer -0.5*log det(2*pi*cov). Instances are immutable;
    arrays are never written after construction.
    """

    weight: float
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(repr=False)
    log_norm: float = field(repr=False)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class Mixture:
    """A validated Gaussian mixture density in R^dim.

    Immutable after construction; all evaluation entry points are pure
    functions of (mixture, point) and safe to call concurrently.
    """

    dim: int
    components: tuple[GaussianComponent, ...]
    # Stacked per-component arrays for vectorized evaluation.
    _means: np.ndarray = field(repr=False)       # (k, d)
    _chols: np.ndarray = field(repr=False)       # (k, d, d) lower
    _precisions: np.ndarray = field(repr=False)  # (k, d, d)
    _log_weights: np.ndarray = field(repr=False)  # (k,)
    _log_norms: np.ndarray = field(repr=False)    # (k,)

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self._log_weights)

    @property
    def means(self) -> np.ndarray:
        return self._means.copy()

    @property
    def covariances(self) -> np.ndarray:
        return np.stack([c.cov for c in self.components])

    # ------------------------------------------------------------------
    # Batched internals. X has shape (m, d); all returns are per-point.
    # ------------------------------------------------------------------

    def log_terms(self, X: np.ndarray) -> np.ndarray:
        """Per-component log(alpha_i * f_i(x)) for points X, shape (k, m)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m = X.shape[0]
        out = np.empty((self.k, m))
        for i in range(self.k):
            Y = (X - self._means[i]).T                       # (d, m)
            Z = solve_triangular(self._chols[i], Y, lower=True)
            out[i] = self._log_weights[i] + self._log_norms[i] - 0.5 * np.sum(Z * Z, axis=0)
        return out

    def log_density(self, X: np.ndarray) -> np.ndarray:
        lt = self.log_terms(X)
        shift = np.max(lt, axis=0)
        return shift + np.log(np.sum(np.exp(lt - shift), axis=0))

    def responsibilities(self, X: np.ndarray) -> np.ndarray:
        """Normalized component contributions, shape (k, m)."""
        lt = self.log_terms(X)
        lt -= np.max(lt, axis=0)
        w = np.exp(lt)
        return w / np.sum(w, axis=0)

    def grad_over_density(self, X: np.ndarray) -> np.ndarray:
        """Scale-free gradient grad f / f at each point, shape (m, d).

        Finite even where the density itself underflows, which is what
        the scale-free ascent convergence test needs.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r = self.responsibilities(X)                          # (k, m)
        pulls = np.einsum("ist,mt->ims", self._precisions, -X) + np.einsum(
            "ist,it->is", self._precisions, self._means
        )[:, None, :]                                         # (k, m, d)
        return np.einsum("im,imd->md", r, pulls)

    # ------------------------------------------------------------------

    def __getstate__(self):
        return self.__dict__

    def to_dict(self) -> dict:
        return mixture_to_dict(self)


@dataclass(frozen=True)
class EvalResult:
    """Density evaluation at one point.

    ``density`` is 0.0 whenever ``log_density`` is below -700 while
    ``log_density`` stays exact. The ``*_over_density`` fields carry the
    gradient and Hessian divided by the density; they stay finite deep in
    the tails and are what scale-free convergence tests consume.
    """

    log_density: float
    density: float
    gradient: np.ndarray
    hessian: np.ndarray
    responsibilities: np.ndarray
    grad_over_density: np.ndarray
    hessian_over_density: np.ndarray


def _validate_covariance(cov: np.ndarray, index: int) -> np.ndarray:
    scale = np.max(np.abs(cov))
    if scale == 0.0 or np.max(np.abs(cov - cov.T)) > _SYM_RTOL * scale:
        raise NonSPD(index, f"covariance {index} is not symmetric")
    try:
        L = cholesky(cov, lower=True)
    except LinAlgError as exc:
        raise NonSPD(index) from exc
    if np.any(np.diag(L) <= 0.0):
        raise NonSPD(index)
    return L


def make_mixture(weights, means, covariances) -> Mixture:
    """Build a validated Mixture with cached factorizations.

    Weights must be nonnegative and sum to 1 within 1e-9 (they are
    renormalized inside that band, rejected outside). Covariances must be
    symmetric positive definite.
    """
    weights = np.asarray(weights, dtype=float)
    means = [np.asarray(m, dtype=float).ravel() for m in means]
    covs = [np.asarray(c, dtype=float) for c in covariances]
    if not (len(weights) == len(means) == len(covs)) or len(weights) == 0:
        raise DimensionMismatch("weights, means, covariances must have equal nonzero length")
    d = means[0].shape[0]
    for i, (mu, cov) in enumerate(zip(means, covs)):
        if mu.shape != (d,):
            raise DimensionMismatch(f"mean {i} has dimension {mu.shape}, expected ({d},)")
        if cov.shape != (d, d):
            raise DimensionMismatch(f"covariance {i} has shape {cov.shape}, expected ({d},{d})")
    if np.any(weights < 0.0):
        raise NegativeWeight(f"weights must be nonnegative, got {weights}")
    s = float(np.sum(weights))
    if abs(s - 1.0) > _WEIGHT_SUM_TOL:
        raise WeightSumInvalid(f"weights sum to {s!r}, not 1 within {_WEIGHT_SUM_TOL}")
    weights = weights / s

    comps = []
    for i in range(len(weights)):
        L = _validate_covariance(covs[i], i)
        log_norm = -float(np.sum(np.log(np.diag(L)))) - 0.5 * d * np.log(2.0 * np.pi)
        comps.append(
            GaussianComponent(
                weight=float(weights[i]),
                mean=means[i].copy(),
                cov=covs[i].copy(),
                chol=L,
                log_norm=log_norm,
            )
        )
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    eye = np.eye(d)
    precs = np.stack([cho_solve((c.chol, True), eye) for c in comps])
    precs = 0.5 * (precs + np.transpose(precs, (0, 2, 1)))
    return Mixture(
        dim=d,
        components=tuple(comps),
        _means=np.stack([c.mean for c in comps]),
        _chols=np.stack([c.chol for c in comps]),
        _precisions=precs,
        _log_weights=log_w,
        _log_norms=np.array([c.log_norm for c in comps]),
    )


def evaluate(mix: Mixture, x) -> EvalResult:
    """Evaluate density, gradient, Hessian and responsibilities at x.

    Accumulation happens in the max-shifted log scale: per-component
    weights exp(logterm_i - max logterm) multiply the per-component
    gradient/Hessian factors and the single rescale by exp(max + logsum)
    is applied at the end.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (mix.dim,):
        raise DimensionMismatch(f"point has shape {x.shape}, expected ({mix.dim},)")
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"point contains non-finite entries: {x}")

    lt = mix.log_terms(x[None, :])[:, 0]                     # (k,)
    shift = float(np.max(lt))
    w = np.exp(lt - shift)                                   # (k,)
    wsum = float(np.sum(w))
    log_density = shift + np.log(wsum)
    resp = w / wsum

    d = mix.dim
    grad_over_f = np.zeros(d)
    hess_over_f = np.zeros((d, d))
    for i, comp in enumerate(mix.components):
        y = mix._means[i] - x
        g = cho_solve((comp.chol, True), y)                  # Sigma_i^{-1} (mu_i - x)
        grad_over_f += resp[i] * g
        hess_over_f += resp[i] * (np.outer(g, g) - mix._precisions[i])
    hess_over_f = 0.5 * (hess_over_f + hess_over_f.T)

    if log_density > LOG_DENSITY_FLOOR:
        density = float(np.exp(log_density))
    else:
        density = 0.0
    return EvalResult(
        log_density=float(log_density),
        density=density,
        gradient=density * grad_over_f,
        hessian=density * hess_over_f,
        responsibilities=resp,
        grad_over_density=grad_over_f,
        hessian_over_density=hess_over_f,
    )


def affine_transform(mix: Mixture, A, b) -> Mixture:
    """Push the mixture forward through x -> A x + b.

    Means become A mu + b, covariances A Sigma A^T; weights are kept.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    d = mix.dim
    if A.shape != (d, d) or b.shape != (d,):
        raise DimensionMismatch(f"transform shapes {A.shape}, {b.shape} do not match dim {d}")
    sign, _ = np.linalg.slogdet(A)
    if not np.all(np.isfinite(A)) or sign == 0.0:
        raise SingularTransform("transform matrix is singular")
    weights = [c.weight for c in mix.components]
    means = [A @ c.mean + b for c in mix.components]
    covs = [A @ c.cov @ A.T for c in mix.components]
    return make_mixture(weights, means, covs)


def is_homoscedastic(mix: Mixture) -> bool:
    """True when every component shares one covariance (1e-12 relative)."""
    ref = mix.components[0].cov
    scale = max(np.max(np.abs(ref)), 1.0e-300)
    return all(
        np.max(np.abs(c.cov - ref)) <= _SYM_RTOL * scale for c in mix.components
    )


def is_isotropic(mix: Mixture) -> bool:
    """True when every covariance is a scalar multiple of the identity."""
    d = mix.dim
    eye = np.eye(d)
    for c in mix.components:
        sigma = np.trace(c.cov) / d
        if np.max(np.abs(c.cov - sigma * eye)) > _SYM_RTOL * max(abs(sigma), 1.0e-300):
            return False
    return True


# ----------------------------------------------------------------------
# JSON schema:
# {"dim": d, "components": [{"weight": w, "mean": [..], "cov": [[..],..]}]}
# ----------------------------------------------------------------------

def mixture_to_dict(mix: Mixture) -> dict:
    return {
        "dim": mix.dim,
        "components": [
            {
                "weight": c.weight,
                "mean": c.mean.tolist(),
                "cov": c.cov.tolist(),
            }
            for c in mix.components
        ],
    }


def mixture_from_dict(obj: dict) -> Mixture:
    """Rebuild a mixture from its JSON object, re-validating all invariants."""
    comps = obj["components"]
    d = int(obj["dim"])
    mix = make_mixture(
        [c["weight"] for c in comps],
        [c["mean"] for c in comps],
        [c["cov"] for c in comps],
    )
    if mix.dim != d:
        raise DimensionMismatch(f"declared dim {d} != component dim {mix.dim}")
    return mix


def save_mixture(mix: Mixture, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mixture_to_dict(mix), fh, indent=2)
        fh.write("\n")


def load_mixture(path) -> Mixture:
    with open(path, encoding="utf-8") as fh:
        return mixture_from_dict(json.load(fh))
