"""Singular values, rank-1 deflation, dispersion losses, and the CL bound check.

Embeddings are stored rows-as-entities (N x d). All spectral quantities come
from the d x d Gram matrix, so the deflation direction vectors live in the
d-dimensional row space.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .losses import infonce_loss, l2_normalize_rows

EPS_GUARD = 1e-12
MAX_RESAMPLES = 8


def jacobi_eigenvalues(a, tol=1e-10, max_sweeps=60):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm falls below tol scaled by
    the matrix norm. Values only; rotations are accumulated in place.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if n == 1:
        return a[0, :1].copy()
    scale = max(np.linalg.norm(a), 1.0)

    def off(m):
        # norm of the strictly off-diagonal part, summed directly so the
        # result stays meaningful once it drops far below the matrix norm
        return np.linalg.norm(m - np.diag(np.diag(m)))

    for _ in range(max_sweeps):
        if off(a) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 1.0 / (2.0 * theta)
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
    else:
        if off(a) > tol * scale:
            raise NumericError("jacobi eigensolve failed to converge")
    return np.diag(a).copy()


@dataclass
class SpectralReport:
    values: np.ndarray
    tag: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.values < 0) or np.any(np.diff(self.values) > 0):
            raise ValueError("singular values must be non-negative and sorted descending")

    @property
    def smoothness(self):
        """(sigma_max / mean sigma, sigma_max / smallest nonzero sigma)."""
        v = self.values
        mean = v.mean()
        nonzero = v[v > 0]
        ratio_mean = float(v[0] / mean) if mean > 0 else float("inf")
        ratio_min = float(v[0] / nonzero[-1]) if len(nonzero) else float("inf")
        return ratio_mean, ratio_min

    def rows(self):
        return [(rank + 1, float(v)) for rank, v in enumerate(self.values)]


def singular_values(z, tag=""):
    """Singular values of z via Jacobi on the Gram matrix, sorted descending."""
    z = np.asarray(z, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValueError("non-finite input matrix")
    if z.ndim != 2 or z.shape[0] < z.shape[1]:
        raise ValueError("expected an n x d matrix with n >= d")
    gram = z.T @ z
    eig = jacobi_eigenvalues(gram)
    eig = np.clip(eig, 0.0, None)
    return SpectralReport(values=np.sort(np.sqrt(eig))[::-1], tag=tag)


@dataclass
class DeflationState:
    v: np.ndarray
    v_prime: np.ndarray
    resamples: int = 0


def draw_deflation(z, rng):
    """Standard-normal direction V and its Gram image V' = Z^T Z V.

    Resamples V up to 8 times while ||V'|| stays under the guard.
    """
    z = np.asarray(z, dtype=np.float64)
    rng = np.random.default_rng(rng)
    gram = z.T @ z
    for attempt in range(MAX_RESAMPLES + 1):
        v = rng.standard_normal(z.shape[1])
        v_prime = gram @ v
        if np.linalg.norm(v_prime) > EPS_GUARD:
            return DeflationState(v=v, v_prime=v_prime, resamples=attempt)
    raise NumericError("degenerate spectrum input")


def rank1_deflate(z, deflation):
    """Project the direction V'/||V'|| out of the row space of Z."""
    z = np.asarray(z, dtype=np.float64)
    vp = deflation.v_prime
    denom = float(vp @ vp)
    if denom <= EPS_GUARD**2 or not np.any(z):
        raise NumericError("degenerate spectrum input")
    return z - np.outer(z @ vp, vp) / denom


def dispersion_loss(z, deflation):
    """Negated entrywise L1 mass of the component removed by deflation."""
    z = np.asarray(z, dtype=np.float64)
    vp = deflation.v_prime
    denom = float(vp @ vp)
    if denom <= EPS_GUARD**2 or not np.any(z):
        raise NumericError("degenerate spectrum input")
    component = np.outer(z @ vp, vp)
    return float(-np.abs(component).sum() / denom)


def dispersion_gradient(z, deflation):
    """Gradient of dispersion_loss w.r.t. Z with V' held constant."""
    z = np.asarray(z, dtype=np.float64)
    vp = deflation.v_prime
    denom = float(vp @ vp)
    if denom <= EPS_GUARD**2 or not np.any(z):
        raise NumericError("degenerate spectrum input")
    signs = np.sign(np.outer(z @ vp, vp))
    return -np.outer(signs @ vp, vp) / denom


def dispersion_loss_direct(z, c, beta):
    """L1 distance between the sorted spectrum of Z and the power law c*k^-beta.

    Validation-only reference; the attack loop never calls it.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    report = singular_values(z)
    k = np.arange(1, len(report.values) + 1, dtype=np.float64)
    target = c * k ** (-beta)
    return float(np.abs(report.values - target).sum())


@dataclass(eq=False)
class BoundCheckInstance:
    """Two views sharing singular vectors, differing only in singular values."""

    left: np.ndarray       # d x d orthogonal factor
    right: np.ndarray      # N x d, orthonormal columns
    sigma1: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=np.float64)
        self.right = np.asarray(self.right, dtype=np.float64)
        self.sigma1 = np.asarray(self.sigma1, dtype=np.float64)
        self.sigma2 = np.asarray(self.sigma2, dtype=np.float64)
        d = self.left.shape[0]
        if self.left.shape != (d, d) or self.right.shape[1] != d:
            raise ValueError("factor shapes are inconsistent")
        if len(self.sigma1) != d or len(self.sigma2) != d:
            raise ValueError("singular value vectors must have length d")
        for name, f in (("left", self.left), ("right", self.right)):
            gram = f.T @ f
            if np.abs(gram - np.eye(d)).max() > 1e-10:
                raise ValueError(f"{name} factor columns are not orthonormal")
        if np.any(self.sigma1 < 0) or np.any(self.sigma2 < 0):
            raise ValueError("singular values must be non-negative")

    def views(self):
        a = self.right @ np.diag(self.sigma1) @ self.left.T
        b = self.right @ np.diag(self.sigma2) @ self.left.T
        return a, b

    @property
    def n(self):
        return self.right.shape[0]


@dataclass
class BoundCheck:
    lhs: float
    rhs: float
    holds: bool
    # intermediate bounds of the proof chain, in order
    after_logsumexp: float
    after_alignment: float
    trace_term: float
    sum_sigma: float


def _dft_frame(n, freqs):
    # cosine/sine column pairs: orthonormal with constant per-pair row mass 2/n
    p = np.arange(n)
    cols = []
    for k in freqs:
        ang = 2.0 * math.pi * k * p / n
        cols.append(np.cos(ang) * math.sqrt(2.0 / n))
        cols.append(np.sin(ang) * math.sqrt(2.0 / n))
    return np.column_stack(cols)


def sample_bound_instance(rng, n=None, d=None):
    """Random instance whose assembled views have exactly unit rows.

    Uses a harmonic frame for the right factor so each frequency pair spreads
    2/n of squared mass onto every row; per-pair singular values rescaled to
    sum-of-squares n then make both views row-normalized by construction.
    """
    rng = np.random.default_rng(rng)
    if d is None:
        d = 2 * int(rng.integers(1, 5))
    if d % 2 != 0 or d > 8:
        raise ValueError("instance generator supports even d <= 8")
    if n is None:
        n = int(rng.integers(d + 2, 33))
    if (n - 1) // 2 < d // 2:
        raise ValueError("n too small for d/2 distinct frequencies")
    freqs = rng.choice(np.arange(1, (n - 1) // 2 + 1), size=d // 2, replace=False)
    right = _dft_frame(n, np.sort(freqs))
    gauss = rng.standard_normal((d, d))
    q, r = np.linalg.qr(gauss)
    left = q * np.sign(np.diag(r))

    def paired_sigma():
        raw = rng.uniform(0.2, 2.0, size=d // 2)
        raw *= math.sqrt((n / 2.0) / float(raw @ raw))
        return np.repeat(raw, 2)

    return BoundCheckInstance(left=left, right=right, sigma1=paired_sigma(), sigma2=paired_sigma())


def cl_bound_check(instance):
    """Contrastive loss at temperature 1 vs. its singular-value upper bound.

    Also evaluates each intermediate quantity of the bounding chain:
    log-sum-exp step, max-alignment step, and the trace identity.
    """
    a, b = instance.views()
    if np.any(np.linalg.norm(a, axis=1) == 0) or np.any(np.linalg.norm(b, axis=1) == 0):
        raise ValueError("views cannot be row-normalized")
    a = l2_normalize_rows(a)
    b = l2_normalize_rows(b)
    n = instance.n
    lhs = infonce_loss(a, b, 1.0)
    sim = a @ b.T
    diag = np.diag(sim)
    trace_term = float(diag.sum())
    after_logsumexp = float(-trace_term + (np.log(n) + sim.max(axis=1)).sum())
    after_alignment = float(-trace_term + n * math.log(n) + n * diag.max())
    products = instance.sigma1 * instance.sigma2
    sum_sigma = float(products.sum())
    rhs = float(n * products.max() - sum_sigma + n * math.log(n))
    return BoundCheck(
        lhs=lhs,
        rhs=rhs,
        holds=lhs < rhs,
        after_logsumexp=after_logsumexp,
        after_alignment=after_alignment,
        trace_term=trace_term,
        sum_sigma=sum_sigma,
    )


@dataclass
class SmoothnessComparison:
    stat_a: float
    stat_b: float
    tag_a: str
    tag_b: str

    @property
    def sharper(self):
        return self.tag_a if self.stat_a > self.stat_b else self.tag_b


def _as_matrix(source):
    # trained states contribute their stacked propagated embeddings
    if hasattr(source, "final_user_emb"):
        if source.final_user_emb is None or source.final_item_emb is None:
            raise ValueError("state has no final embeddings; train first")
        return np.vstack([source.final_user_emb, source.final_item_emb])
    return np.asarray(source, dtype=np.float64)


def smoothness_compare(source_a, source_b, tag_a="a", tag_b="b"):
    """Compare sigma_max / mean-sigma of two embedding matrices or states."""
    ra = singular_values(_as_matrix(source_a), tag=tag_a)
    rb = singular_values(_as_matrix(source_b), tag=tag_b)
    return SmoothnessComparison(
        stat_a=ra.smoothness[0],
        stat_b=rb.smoothness[0],
        tag_a=tag_a,
        tag_b=tag_b,
    )
