"""Kineme codebook learning and decoding.

Head motion is treated as a bank of K reusable templates over short
pitch/yaw/roll segments. Learning stacks all 2 s segments column-wise,
factorizes the (shifted, non-negative) matrix with multiplicative-update NMF,
clusters the coefficient columns with a diagonal-covariance Gaussian mixture,
and maps the component means back through the basis to obtain the templates.
Decoding projects each new segment onto the basis with non-negative least
squares and picks the mixture component with the highest posterior.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, ShapeError, TooShortError
from .ingest import HeadPoseSeries, WindowPlan, plan_windows

logger = logging.getLogger(__name__)

DEFAULT_K = 16
DEFAULT_RANK = 20
CODEBOOK_FORMAT = "kineme-codebook/1"

VARIANCE_FLOOR = 1e-6
DEGENERATE_WEIGHT = 1e-8
NNLS_KKT_TOL = 1e-8


@dataclass(frozen=True)
class SegmentMatrix:
    """Stacked segment vectors, one column per 2 s head-motion segment.

    Each column is [pitch span | yaw span | roll span] of length 3*seg_len,
    shifted by `shift` so every entry is non-negative.
    """

    columns: np.ndarray  # (3*seg_len, n_segments)
    seg_len: int
    source_index: tuple[tuple[str, int], ...]  # (video_id, segment index) per column
    shift: float

    @property
    def n_segments(self) -> int:
        return self.columns.shape[1]


@dataclass(frozen=True)
class NMFModel:
    basis: np.ndarray  # (3*seg_len, rank), >= 0
    coeffs: np.ndarray | None  # (rank, n_segments), >= 0; dropped on save/load
    rank: int
    objective_trace: tuple[float, ...]  # Frobenius reconstruction error per iteration


@dataclass(frozen=True)
class CoeffMixture:
    """Diagonal-covariance Gaussian mixture over NMF coefficient columns."""

    weights: np.ndarray  # (K,), simplex
    means: np.ndarray  # (K, rank)
    covariances: np.ndarray  # (K, rank), each entry >= VARIANCE_FLOOR
    log_likelihood_trace: tuple[float, ...]

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class KinemeCodebook:
    nmf: NMFModel
    mixture: CoeffMixture
    templates: np.ndarray  # (K, 3*seg_len) = basis @ means[k], in shifted space
    k: int
    seg_len: int
    fps: float
    shift: float

    def template_angles(self, index: int) -> np.ndarray:
        """Template as a (seg_len, 3) pitch/yaw/roll curve in the original angle space."""
        t = self.templates[index] - self.shift
        return t.reshape(3, self.seg_len).T


@dataclass(frozen=True)
class KinemeSequence:
    video_id: str
    ids: np.ndarray  # (n_windows,) int, each in [0, K)
    one_hot: np.ndarray  # (n_windows, K) binary

    def __len__(self) -> int:
        return self.ids.shape[0]


def build_segment_matrix(series: list[HeadPoseSeries], plan_params: dict | None = None) -> SegmentMatrix:
    """Stack every video's windows into one matrix and shift it non-negative.

    The shift constant c0 = max(0, -min entry) is global and recorded so it
    can be applied symmetrically when projecting new segments.
    """
    if not series:
        raise InsufficientDataError("no pose series given")
    fps = series[0].fps
    if any(s.fps != fps for s in series):
        raise ConfigurationError("all series must share the codebook fps")
    params = {"window_len_s": 2.0, "hop_s": 1.0}
    if plan_params:
        params.update(plan_params)

    cols = []
    source = []
    seg_len = None
    for s in series:
        plan = plan_windows(len(s), s.fps, **params)
        for j, (start, end) in enumerate(plan.boundaries):
            seg = s.frames[start:end]  # (l, 3)
            if seg_len is None:
                seg_len = end - start
            cols.append(seg.T.reshape(-1))  # [pitch | yaw | roll]
            source.append((s.video_id, j))
    matrix = np.stack(cols, axis=1)
    shift = float(max(0.0, -matrix.min()))
    matrix = matrix + shift
    return SegmentMatrix(columns=matrix, seg_len=int(seg_len), source_index=tuple(source), shift=shift)


def fit_nmf(
    matrix: np.ndarray,
    rank: int,
    max_iter: int = 500,
    tol: float = 1e-6,
    seed: int = 0,
) -> NMFModel:
    """Factorize a non-negative matrix as B @ C with multiplicative updates.

    Minimizes ||H - BC||_F^2; the per-iteration objective trace is recorded
    and is non-increasing (the classic alternating update property).
    Stops early when the relative decrease falls below `tol`.
    """
    H = np.asarray(matrix, dtype=np.float64)
    if np.any(H < 0):
        raise ConfigurationError("NMF input must be non-negative")
    m, n = H.shape
    if not 1 <= rank <= min(m, n):
        raise ConfigurationError(f"rank {rank} outside [1, {min(m, n)}]")

    rng = np.random.default_rng(seed)
    scale = np.sqrt(H.mean() / rank) if H.mean() > 0 else 1.0
    B = rng.uniform(0.0, 1.0, size=(m, rank)) * scale + 1e-4
    C = rng.uniform(0.0, 1.0, size=(rank, n)) * scale + 1e-4

    eps = 1e-12
    trace = []
    prev = None
    for _ in range(max_iter):
        C *= (B.T @ H) / np.maximum(B.T @ B @ C, eps)
        B *= (H @ C.T) / np.maximum(B @ (C @ C.T), eps)
        obj = float(np.linalg.norm(H - B @ C) ** 2)
        trace.append(obj)
        if prev is not None and prev > 0 and (prev - obj) < tol * prev:
            break
        prev = obj
    return NMFModel(basis=B, coeffs=C, rank=rank, objective_trace=tuple(trace))


def _log_gaussian_diag(points: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """Log density of each point under each diagonal Gaussian: (n, K)."""
    d = points.shape[1]
    log_det = np.sum(np.log(covs), axis=1)  # (K,)
    diff = points[:, None, :] - means[None, :, :]  # (n, K, d)
    maha = np.sum(diff * diff / covs[None, :, :], axis=2)  # (n, K)
    return -0.5 * (d * np.log(2.0 * np.pi) + log_det[None, :] + maha)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    amax = np.max(a, axis=axis, keepdims=True)
    return (amax + np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True))).squeeze(axis)


def _kmeanspp_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    for _ in range(k - 1):
        d2 = np.min(
            [np.sum((points - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(points[rng.integers(n)])
            continue
        probs = d2 / total
        centers.append(points[rng.choice(n, p=probs)])
    return np.stack(centers)


def _em_single_run(
    points: np.ndarray, k: int, max_iter: int, tol: float, rng: np.random.Generator
) -> CoeffMixture:
    n, d = points.shape
    means = _kmeanspp_seeds(points, k, rng)
    var0 = np.maximum(points.var(axis=0), VARIANCE_FLOOR)
    covs = np.tile(var0, (k, 1))
    weights = np.full(k, 1.0 / k)

    trace = []
    prev_ll = None
    for _ in range(max_iter):
        # E-step (the appended log-likelihood is evaluated at the current params,
        # so the trace inherits EM's ascent guarantee).
        log_joint = _log_gaussian_diag(points, means, covs) + np.log(weights)[None, :]
        log_norm = _logsumexp(log_joint, axis=1)  # (n,)
        ll = float(log_norm.sum())
        trace.append(ll)
        resp = np.exp(log_joint - log_norm[:, None])  # (n, k)

        # M-step
        mass = resp.sum(axis=0)  # (k,)
        degenerate = mass / n < DEGENERATE_WEIGHT
        if degenerate.any():
            # Re-seed empty components from the point the mixture explains worst.
            worst = int(np.argmin(log_norm))
            for j in np.where(degenerate)[0]:
                logger.warning("re-seeding degenerate mixture component %d", j)
                resp[:, j] = 0.0
                resp[worst, :] = 0.0
                resp[worst, j] = 1.0
            mass = resp.sum(axis=0)
        weights = mass / n
        means = (resp.T @ points) / mass[:, None]
        sq = (resp.T @ (points * points)) / mass[:, None]
        covs = np.maximum(sq - means * means, VARIANCE_FLOOR)

        if prev_ll is not None and abs(ll - prev_ll) < tol * max(1.0, abs(prev_ll)):
            break
        prev_ll = ll
    return CoeffMixture(
        weights=weights, means=means, covariances=covs, log_likelihood_trace=tuple(trace)
    )


def fit_coeff_mixture(
    coeffs: np.ndarray,
    k: int,
    max_iter: int = 200,
    tol: float = 1e-8,
    seed: int = 0,
    restarts: int = 3,
) -> CoeffMixture:
    """EM fit of a diagonal-covariance GMM to coefficient columns.

    `coeffs` is (rank, n_segments); points are the columns. Runs `restarts`
    k-means++-seeded EM runs and keeps the best final log-likelihood.
    """
    points = np.asarray(coeffs, dtype=np.float64).T  # (n, rank)
    if k > points.shape[0]:
        raise ConfigurationError(f"K={k} exceeds the {points.shape[0]} coefficient columns")
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    for ss in seeds:
        run = _em_single_run(points, k, max_iter, tol, np.random.default_rng(ss))
        if best is None or run.log_likelihood_trace[-1] > best.log_likelihood_trace[-1]:
            best = run
    return best


def responsibilities(mixture: CoeffMixture, points: np.ndarray) -> np.ndarray:
    """Posterior component probabilities for each row of `points`: (n, K)."""
    log_joint = _log_gaussian_diag(points, mixture.means, mixture.covariances)
    log_joint = log_joint + np.log(mixture.weights)[None, :]
    log_norm = _logsumexp(log_joint, axis=1)
    return np.exp(log_joint - log_norm[:, None])


def learn_codebook(
    series: list[HeadPoseSeries],
    k: int = DEFAULT_K,
    rank: int = DEFAULT_RANK,
    plan_params: dict | None = None,
    nmf_max_iter: int = 500,
    em_max_iter: int = 200,
    restarts: int = 3,
    seed: int = 0,
) -> KinemeCodebook:
    """Full learning pass: segment matrix -> NMF -> coefficient GMM -> templates.

    Kineme indices are ordered by descending mixture weight (ties broken by
    the lower component index) so ids are stable and reportable.
    """
    matrix = build_segment_matrix(series, plan_params)
    if matrix.n_segments < k * 10:
        raise InsufficientDataError(
            f"{matrix.n_segments} segments is below the {k * 10} needed for K={k}"
        )
    if rank > matrix.columns.shape[0]:
        raise ConfigurationError(f"rank {rank} exceeds segment dimension {matrix.columns.shape[0]}")
    ss = np.random.SeedSequence(seed).spawn(2)
    nmf = fit_nmf(matrix.columns, rank=rank, max_iter=nmf_max_iter,
                  seed=int(ss[0].generate_state(1)[0]))
    mixture = fit_coeff_mixture(
        nmf.coeffs, k=k, max_iter=em_max_iter, restarts=restarts,
        seed=int(ss[1].generate_state(1)[0]),
    )
    # Stable ordering: weight descending, index ascending on ties.
    order = np.lexsort((np.arange(k), -mixture.weights))
    mixture = CoeffMixture(
        weights=mixture.weights[order],
        means=mixture.means[order],
        covariances=mixture.covariances[order],
        log_likelihood_trace=mixture.log_likelihood_trace,
    )
    templates = mixture.means @ nmf.basis.T  # (K, 3*seg_len)
    fps = series[0].fps
    return KinemeCodebook(
        nmf=nmf,
        mixture=mixture,
        templates=templates,
        k=k,
        seg_len=matrix.seg_len,
        fps=fps,
        shift=matrix.shift,
    )


def _kkt_residual(c: np.ndarray, grad: np.ndarray) -> float:
    # Stationarity on the interior, non-negative gradient on the active bound.
    return float(np.max(np.where(c > 0, np.abs(grad), np.maximum(-grad, 0.0))))


def nnls_project(basis: np.ndarray, target: np.ndarray, kkt_tol: float = NNLS_KKT_TOL) -> np.ndarray:
    """argmin_{c >= 0} ||target - basis @ c||^2 by projected gradient.

    Armijo backtracking from an optimistic step, floored at 1/L (L = twice the
    largest eigenvalue of B^T B), where sufficient decrease always holds; the
    working active set is periodically polished with an exact reduced
    least-squares solve so the 1e-8 KKT residual is reached even on
    ill-conditioned bases. Iterations are bounded by 10 * rank * dim.
    """
    B = np.asarray(basis, dtype=np.float64)
    h = np.asarray(target, dtype=np.float64)
    if h.shape[0] != B.shape[0]:
        raise ShapeError(f"segment dim {h.shape[0]} != basis dim {B.shape[0]}")
    gram = B.T @ B
    bh = B.T @ h
    rank = B.shape[1]
    lip = 2.0 * float(np.linalg.eigvalsh(gram)[-1])
    if lip <= 0:
        return np.zeros(rank)
    step_floor = 1.0 / lip

    def objective(x: np.ndarray) -> float:
        return float(x @ gram @ x - 2.0 * (bh @ x))

    def polish(x: np.ndarray, grad: np.ndarray) -> np.ndarray | None:
        """Exact least squares on the free coordinates of the working set."""
        free = (x > 0) | (grad < 0)
        if not free.any():
            return None
        sub = gram[np.ix_(free, free)]
        try:
            sol = np.linalg.solve(sub, bh[free])
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(sub, bh[free], rcond=None)[0]
        if sol.min() < -1e-10:
            return None  # wrong active set; keep iterating
        candidate = np.zeros(rank)
        candidate[free] = np.maximum(sol, 0.0)
        return candidate

    c = np.zeros(rank)
    step = 8.0 * step_floor
    max_iter = 10 * rank * B.shape[0]
    for iteration in range(max_iter):
        grad = 2.0 * (gram @ c - bh)
        if _kkt_residual(c, grad) < kkt_tol:
            return c
        if iteration % 10 == 9:
            candidate = polish(c, grad)
            if candidate is not None:
                cand_grad = 2.0 * (gram @ candidate - bh)
                if _kkt_residual(candidate, cand_grad) < kkt_tol:
                    return candidate
                if objective(candidate) < objective(c):
                    c = candidate
                    continue
        obj = c @ gram @ c - 2.0 * (bh @ c)
        while True:
            trial = np.maximum(c - step * grad, 0.0)
            if step <= step_floor:
                break  # the 1/L step satisfies sufficient decrease by construction
            delta = trial - c
            if objective(trial) <= obj + grad @ delta + (0.5 / step) * (delta @ delta):
                break
            step = max(step * 0.5, step_floor)
        c = trial
        step = min(step * 2.0, 64.0 * step_floor)
    return c


def project_segment(segment: np.ndarray, codebook: KinemeCodebook) -> np.ndarray:
    """Non-negative coefficients of one raw (unshifted) segment vector."""
    seg = np.asarray(segment, dtype=np.float64)
    if seg.shape[0] != 3 * codebook.seg_len:
        raise ShapeError(f"segment length {seg.shape[0]} != {3 * codebook.seg_len}")
    return nnls_project(codebook.nmf.basis, seg + codebook.shift)


def decode_kinemes(
    series: HeadPoseSeries, codebook: KinemeCodebook, plan: WindowPlan | None = None
) -> KinemeSequence:
    """Map a pose series to its kineme-id sequence (and one-hot form).

    Each window is projected onto the basis; the id is the mixture component
    with the highest posterior responsibility (ties -> lowest index).
    """
    if series.fps != codebook.fps:
        raise ConfigurationError(
            f"series fps {series.fps} != codebook fps {codebook.fps}; resample first"
        )
    if plan is None:
        plan = plan_windows(len(series), series.fps)
    if plan.boundaries[-1][1] > len(series):
        raise TooShortError("window plan extends past the series")

    coeffs = np.empty((plan.n_windows, codebook.nmf.rank))
    for w, (start, end) in enumerate(plan.boundaries):
        seg = series.frames[start:end].T.reshape(-1)
        coeffs[w] = project_segment(seg, codebook)
    resp = responsibilities(codebook.mixture, coeffs)
    ids = np.argmax(resp, axis=1)  # argmax takes the lowest index on ties
    one_hot = np.zeros((plan.n_windows, codebook.k))
    one_hot[np.arange(plan.n_windows), ids] = 1.0
    return KinemeSequence(video_id=series.video_id, ids=ids, one_hot=one_hot)


def save_codebook(codebook: KinemeCodebook, path: str | Path) -> None:
    """Versioned JSON with canonical field order and repr floats."""
    doc = {
        "format": CODEBOOK_FORMAT,
        "k": codebook.k,
        "rank": codebook.nmf.rank,
        "seg_len": codebook.seg_len,
        "fps": codebook.fps,
        "shift": codebook.shift,
        "basis": codebook.nmf.basis.tolist(),
        "weights": codebook.mixture.weights.tolist(),
        "means": codebook.mixture.means.tolist(),
        "covariances": codebook.mixture.covariances.tolist(),
        "templates": codebook.templates.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_codebook(path: str | Path) -> KinemeCodebook:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CODEBOOK_FORMAT:
        raise ConfigurationError(f"{path}: unknown codebook format {doc.get('format')!r}")
    nmf = NMFModel(
        basis=np.array(doc["basis"]), coeffs=None, rank=int(doc["rank"]), objective_trace=()
    )
    mixture = CoeffMixture(
        weights=np.array(doc["weights"]),
        means=np.array(doc["means"]),
        covariances=np.array(doc["covariances"]),
        log_likelihood_trace=(),
    )
    return KinemeCodebook(
        nmf=nmf,
        mixture=mixture,
        templates=np.array(doc["templates"]),
        k=int(doc["k"]),
        seg_len=int(doc["seg_len"]),
        fps=float(doc["fps"]),
        shift=float(doc["shift"]),
    )
