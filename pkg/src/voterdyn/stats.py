"""Statistical machinery for the verification layer.

Gaussianity is assessed through moments (skewness, excess kurtosis, a
Jarque-Bera-style omnibus statistic) plus the correlation of the sample
quantiles with normal quantiles; thresholds come from the asymptotic
variances var(skew) ~ 6/R and var(kurt) ~ 24/R, so no external statistical
tables are needed.  All reductions go through numpy's pairwise summation in
a fixed order, keeping results deterministic and rounding below 1e-12
relative at millions of samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import EstimateWithError


def mean_and_se(samples) -> EstimateWithError:
    """Sample mean with its standard error (ddof-1 standard deviation / sqrt R)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("need a one-dimensional sample of length >= 2")
    r = x.shape[0]
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / np.sqrt(r))
    return EstimateWithError(value=mean, std_error=se, replications=r)


def covariance_se(x, y) -> float:
    """Delta-method standard error of the sample covariance of (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = x.shape[0]
    dx = x - x.mean()
    dy = y - y.mean()
    c = float(np.sum(dx * dy) / (r - 1))
    m22 = float(np.mean(dx * dx * dy * dy))
    var = max(m22 - c * c, 0.0) / r
    return float(np.sqrt(var))


def covariance_estimate(x, y) -> EstimateWithError:
    """Unbiased sample covariance of two paired samples, with delta-method SE."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("need two paired one-dimensional samples of length >= 2")
    r = x.shape[0]
    c = float(np.sum((x - x.mean()) * (y - y.mean())) / (r - 1))
    return EstimateWithError(value=c, std_error=covariance_se(x, y), replications=r)


@dataclass(frozen=True)
class CovarianceMatrixEstimate:
    matrix: np.ndarray      # (d, d) unbiased sample covariance
    std_errors: np.ndarray  # (d, d) per-entry delta-method SEs
    replications: int

    def is_psd(self, rel_tol: float = 1e-12) -> bool:
        eig = np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))
        scale = max(abs(eig[-1]), 1.0)
        return bool(eig[0] >= -rel_tol * scale)


def covariance_matrix(samples) -> CovarianceMatrixEstimate:
    """Unbiased sample covariance matrix with per-entry delta-method SEs."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two equal-dimension sample vectors")
    r, d = x.shape
    centered = x - x.mean(axis=0, keepdims=True)
    mat = centered.T @ centered / (r - 1)
    m22 = np.einsum("ri,rj->ij", centered ** 2, centered ** 2) / r
    var = np.maximum(m22 - mat ** 2, 0.0) / r
    return CovarianceMatrixEstimate(matrix=mat, std_errors=np.sqrt(var), replications=r)


def norm_ppf(q):
    """Inverse standard normal CDF (Acklam's rational approximation, ~1e-9)."""
    q = np.asarray(q, dtype=np.float64)
    a = [-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00]
    b = [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01]
    c = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00]
    d = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00]
    out = np.empty_like(q)
    low = q < 0.02425
    high = q > 1 - 0.02425
    mid = ~(low | high)
    if mid.any():
        u = q[mid] - 0.5
        r = u * u
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)
        out[mid] = num * u / den
    for mask, sign in ((low, 1.0), (high, -1.0)):
        if mask.any():
            qq = q[mask] if sign > 0 else 1 - q[mask]
            r = np.sqrt(-2 * np.log(qq))
            num = ((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]
            den = ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1)
            out[mask] = sign * num / den
    return out


@dataclass(frozen=True)
class NormalityReport:
    """Moment and quantile diagnostics of a (possibly multivariate) sample."""

    skewness: np.ndarray          # per coordinate
    excess_kurtosis: np.ndarray
    skewness_se: float            # sqrt(6/R)
    kurtosis_se: float            # sqrt(24/R)
    omnibus: np.ndarray           # R*(skew^2/6 + kurt^2/24) per coordinate
    qq_correlation: np.ndarray
    degenerate: np.ndarray        # zero-variance coordinates
    replications: int
    cov_distance: float | None = None      # Frobenius distance to target_cov
    cov_distance_se: float | None = None   # bootstrap SE of the distance

    def to_record_fields(self) -> dict:
        return {
            "skewness": [float(v) for v in self.skewness],
            "excess_kurtosis": [float(v) for v in self.excess_kurtosis],
            "skewness_se": self.skewness_se,
            "kurtosis_se": self.kurtosis_se,
            "omnibus": [float(v) for v in self.omnibus],
            "qq_correlation": [float(v) for v in self.qq_correlation],
            "degenerate": [bool(v) for v in self.degenerate],
            "replications": self.replications,
            "cov_distance": self.cov_distance,
            "cov_distance_se": self.cov_distance_se,
        }


def normality_diagnostics(samples, target_cov=None, min_samples: int = 200,
                          bootstrap: int = 200, seed: int = 0) -> NormalityReport:
    """Per-coordinate skewness/kurtosis, QQ correlation, optional covariance distance.

    The QQ correlation is the Pearson correlation of the sorted sample with
    normal quantiles, which is invariant to the location and scale of the
    data.  Zero-variance coordinates are flagged degenerate instead of
    crashing.  When ``target_cov`` is given, the Frobenius distance of the
    sample covariance to the target is reported with a bootstrap SE.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    r, d = x.shape
    if r < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {r}")
    centered = x - x.mean(axis=0, keepdims=True)
    m2 = np.mean(centered ** 2, axis=0)
    degenerate = m2 == 0.0
    safe_m2 = np.where(degenerate, 1.0, m2)
    skew = np.where(degenerate, 0.0, np.mean(centered ** 3, axis=0) / safe_m2 ** 1.5)
    kurt = np.where(degenerate, 0.0, np.mean(centered ** 4, axis=0) / safe_m2 ** 2 - 3.0)
    omnibus = r * (skew ** 2 / 6.0 + kurt ** 2 / 24.0)

    probs = (np.arange(1, r + 1) - 0.5) / r
    theo = norm_ppf(probs)
    qq = np.zeros(d)
    for j in range(d):
        if degenerate[j]:
            qq[j] = 0.0
        else:
            qq[j] = float(np.corrcoef(np.sort(x[:, j]), theo)[0, 1])

    cov_distance = cov_distance_se = None
    if target_cov is not None:
        target = np.asarray(target_cov, dtype=np.float64)
        if target.shape != (d, d):
            raise ValueError("target covariance has the wrong dimension")
        sample_cov = centered.T @ centered / (r - 1)
        cov_distance = float(np.linalg.norm(sample_cov - target))
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        dists = np.empty(bootstrap)
        for b in range(bootstrap):
            idx = rng.integers(0, r, size=r)
            xb = x[idx]
            cb = xb - xb.mean(axis=0, keepdims=True)
            dists[b] = np.linalg.norm(cb.T @ cb / (r - 1) - target)
        cov_distance_se = float(np.std(dists, ddof=1))

    return NormalityReport(
        skewness=skew, excess_kurtosis=kurt,
        skewness_se=float(np.sqrt(6.0 / r)), kurtosis_se=float(np.sqrt(24.0 / r)),
        omnibus=omnibus, qq_correlation=qq, degenerate=degenerate, replications=r,
        cov_distance=cov_distance, cov_distance_se=cov_distance_se,
    )
