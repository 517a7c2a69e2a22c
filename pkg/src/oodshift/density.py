"""Feature standardization and Gaussian kernel density estimation.

All density arithmetic is done in log space; bandwidths follow Scott's rule
per dimension with a small floor so duplicate points stay finite.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

_BANDWIDTH_FLOOR = 1e-6
_STD_FLOOR = 1e-8
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # floored at 1e-8

    def apply(self, F):
        return (np.asarray(F) - self.mean) / self.std

    def invert(self, F):
        return np.asarray(F) * self.std + self.mean


def fit_standardizer(F):
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit a standardizer")
    std = np.maximum(F.std(axis=0), _STD_FLOOR)
    return Standardizer(mean=F.mean(axis=0), std=std)


@dataclass(frozen=True)
class KdeModel:
    points: np.ndarray  # (k, m)
    bandwidth: np.ndarray  # (m,)
    log_norm_const: float  # -log k - sum_j log(h_j * sqrt(2 pi))

    @property
    def dim(self):
        return self.points.shape[1]


def kde_fit(F, bandwidth_scale=1.0, std=None):
    """Fit a product-Gaussian KDE; h_j = scale * sigma_j * k^(-1/(m+4)).

    sigma_j defaults to the per-dimension std of F (Scott's rule). Passing
    `std` overrides it, which lets several related fits (e.g. the two
    environment halves of one standardized pool) share a common kernel
    scale so their densities stay directly comparable.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    k, m = F.shape
    if k < 2:
        raise ValueError("need at least 2 rows to fit a KDE")
    sigma = F.std(axis=0) if std is None else np.broadcast_to(
        np.asarray(std, dtype=np.float64), (m,)
    )
    h = sigma * k ** (-1.0 / (m + 4))
    h = np.maximum(h * bandwidth_scale, _BANDWIDTH_FLOOR)
    log_norm = -np.log(k) - np.sum(np.log(h) + 0.5 * _LOG_2PI)
    return KdeModel(points=F, bandwidth=h, log_norm_const=float(log_norm))


def kde_logpdf(model, Z, chunk=256):
    """Log-density at query points (log-sum-exp over kernel centers)."""
    Z = np.asarray(Z, dtype=np.float64)
    single = Z.ndim == 1
    if single:
        Z = Z[None, :]
    if Z.shape[1] != model.dim:
        raise ValueError(f"query dim {Z.shape[1]} != model dim {model.dim}")
    scaled_pts = model.points / model.bandwidth
    out = np.empty(Z.shape[0])
    for start in range(0, Z.shape[0], chunk):
        zs = Z[start : start + chunk] / model.bandwidth
        # squared distances via (a-b)^2 = a^2 - 2ab + b^2
        d2 = (
            np.sum(zs**2, axis=1)[:, None]
            - 2.0 * zs @ scaled_pts.T
            + np.sum(scaled_pts**2, axis=1)[None, :]
        )
        np.maximum(d2, 0.0, out=d2)
        out[start : start + chunk] = logsumexp(-0.5 * d2, axis=1)
    out += model.log_norm_const
    return out[0] if single else out


def kde_pdf(model, Z, chunk=256):
    return np.exp(kde_logpdf(model, Z, chunk=chunk))


def kde_sample(model, n, rng):
    """Exact sampler for the KDE mixture: fit point + bandwidth noise."""
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = rng.integers(0, model.points.shape[0], n)
    noise = rng.normal(0.0, 1.0, (n, model.dim)) * model.bandwidth
    return model.points[idx] + noise
