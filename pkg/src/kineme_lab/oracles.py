"""Brute-force reference implementations and the release-gate oracle suite.

Each oracle re-derives an answer through a deliberately plain, independent
route (explicit DFT sums, exhaustive grids, nearest-centroid labeling, finite
differences) and compares it against the production path. Implementations
here must stay decoupled from the production code they check; only the
callable under test is shared, and each check accepts that callable as a
parameter so tests can inject perturbed variants as negative controls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fusion, kineme, neural, speech

NMF_MONOTONE_TOL = 1e-12
EM_MONOTONE_TOL = 1e-9
NNLS_OBJECTIVE_TOL = 2e-3
MFCC_TOL = 1e-6
GRAD_REL_TOL = 1e-4
BCE_GRAD_TOL = 1e-6

GRADIENT_ARCHS = ("kin", "au", "aud", "ff-kin-au", "ff-kin-aud", "ff-au-aud",
                  "ff-tri", "af-tri")


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    max_error: float
    detail: str
    failing_case: dict | None = None


@dataclass(frozen=True)
class OracleReport:
    results: tuple[OracleResult, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def summary_lines(self) -> list[str]:
        lines = []
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            lines.append(f"{status}  {r.name}: max error {r.max_error:.3e} ({r.detail})")
        return lines


# --- direct-DFT MFCC --------------------------------------------------------


def mfcc_direct(frame: np.ndarray, sr: int, n_mel: int = 26, n_coef: int = 20) -> np.ndarray:
    """O(n^2) MFCC: explicit DFT sum, hand-built filterbank and cosine transform."""
    x = np.asarray(frame, dtype=np.float64)
    n = x.shape[0]
    n_fft = 1
    while n_fft < n:
        n_fft *= 2
    # Hann window, written out.
    window = np.array([0.5 - 0.5 * math.cos(2.0 * math.pi * j / (n - 1)) for j in range(n)])
    padded = np.zeros(n_fft)
    padded[:n] = x * window
    # Direct DFT of the first n_fft//2 + 1 bins.
    n_bins = n_fft // 2 + 1
    ks = np.arange(n_bins)[:, None]
    js = np.arange(n_fft)[None, :]
    basis = np.exp(-2.0j * math.pi * ks * js / n_fft)
    spectrum = basis @ padded
    power = np.abs(spectrum) ** 2

    def mel(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    def mel_inv(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges = [mel_inv(mel(0.0) + (mel(sr / 2.0) - mel(0.0)) * i / (n_mel + 1))
             for i in range(n_mel + 2)]
    energies = np.zeros(n_mel)
    for m in range(n_mel):
        left, center, right = edges[m], edges[m + 1], edges[m + 2]
        for k in range(n_bins):
            f = k * sr / n_fft
            if left <= f <= center and center > left:
                w = (f - left) / (center - left)
            elif center < f <= right and right > center:
                w = (right - f) / (right - center)
            else:
                w = 0.0
            energies[m] += w * power[k]
    log_mel = np.log(np.maximum(energies, 1e-10))

    coefs = np.zeros(n_coef)
    for k in range(n_coef):
        acc = 0.0
        for j in range(n_mel):
            acc += log_mel[j] * math.cos(math.pi * k * (2 * j + 1) / (2 * n_mel))
        scale = math.sqrt(1.0 / n_mel) if k == 0 else math.sqrt(2.0 / n_mel)
        coefs[k] = scale * acc
    return coefs


def check_mfcc(n_frames: int = 100, seed: int = 11, impl=None) -> OracleResult:
    impl = impl or speech.mfcc
    rng = np.random.default_rng(seed)
    sr = 16000
    flen = 1488  # 93 ms at 16 kHz
    worst = 0.0
    failing = None
    for i in range(n_frames):
        frame = rng.uniform(-1.0, 1.0, size=flen)
        got = impl(frame, sr)
        want = mfcc_direct(frame, sr)
        err = float(np.max(np.abs(got - want)))
        if err > worst:
            worst = err
            if err > MFCC_TOL:
                failing = {"frame_index": i, "max_abs_diff": err}
    return OracleResult(
        name="mfcc-direct-dft",
        passed=worst <= MFCC_TOL,
        max_error=worst,
        detail=f"{n_frames} random frames, tol {MFCC_TOL:g}",
        failing_case=failing,
    )


# --- NNLS grid refinement ---------------------------------------------------


def nnls_grid(basis: np.ndarray, target: np.ndarray, box: float = 2.0,
              steps: tuple[float, ...] = (0.1, 0.01, 0.001)) -> tuple[np.ndarray, float]:
    """Grid search over [0, box]^r, progressively refined to the final step.

    The objective ||target - basis c||^2 is convex, so refining around each
    stage's best point reaches the box optimum at the final resolution.
    """
    r = basis.shape[1]
    lo = np.zeros(r)
    hi = np.full(r, box)
    best = None
    for step in steps:
        axes = [np.arange(lo[d], hi[d] + step / 2, step) for d in range(r)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, r)
        residual = target[None, :] - mesh @ basis.T
        objectives = np.sum(residual * residual, axis=1)
        idx = int(np.argmin(objectives))
        best = (mesh[idx], float(objectives[idx]))
        lo = np.clip(best[0] - step, 0.0, box)
        hi = np.clip(best[0] + step, 0.0, box)
    return best


def check_nnls(n_cases: int = 20, seed: int = 5, impl=None) -> OracleResult:
    impl = impl or kineme.nnls_project
    rng = np.random.default_rng(seed)
    worst = 0.0
    failing = None
    for i in range(n_cases):
        m, r = 12, 3
        basis = rng.uniform(0.0, 1.0, size=(m, r))
        c_true = rng.uniform(0.0, 1.5, size=r)
        target = basis @ c_true + rng.normal(0.0, 0.05, size=m)
        target = np.maximum(target, 0.0)
        c_hat = impl(basis, target)
        obj_hat = float(np.sum((target - basis @ c_hat) ** 2))
        _, obj_grid = nnls_grid(basis, target)
        gap = obj_hat - obj_grid
        if gap > worst:
            worst = gap
            if gap > NNLS_OBJECTIVE_TOL:
                failing = {"case": i, "solver_objective": obj_hat, "grid_objective": obj_grid}
    return OracleResult(
        name="nnls-grid",
        passed=worst <= NNLS_OBJECTIVE_TOL,
        max_error=worst,
        detail=f"{n_cases} random r=3 cases, objective gap tol {NNLS_OBJECTIVE_TOL:g}",
        failing_case=failing,
    )


# --- monotonicity of the iterative fits --------------------------------------


def check_nmf_monotone(n_instances: int = 10, shape: tuple[int, int] = (180, 200),
                       rank: int = 20, iters: int = 500, seed: int = 3,
                       impl=None) -> OracleResult:
    impl = impl or kineme.fit_nmf
    rng = np.random.default_rng(seed)
    worst = -np.inf
    failing = None
    for i in range(n_instances):
        matrix = rng.uniform(0.0, 1.0, size=shape)
        model = impl(matrix, rank=rank, max_iter=iters, tol=0.0, seed=i)
        diffs = np.diff(model.objective_trace)
        rise = float(diffs.max()) if diffs.size else 0.0
        if rise > worst:
            worst = rise
            if rise > NMF_MONOTONE_TOL:
                failing = {"instance": i, "max_rise": rise}
    return OracleResult(
        name="nmf-monotone",
        passed=worst <= NMF_MONOTONE_TOL,
        max_error=max(worst, 0.0),
        detail=f"{n_instances} instances of {shape[0]}x{shape[1]}, {iters} iters",
        failing_case=failing,
    )


def check_em_monotone(n_instances: int = 5, seed: int = 7, impl=None) -> OracleResult:
    impl = impl or kineme.fit_coeff_mixture
    rng = np.random.default_rng(seed)
    worst = -np.inf
    failing = None
    for i in range(n_instances):
        centers = rng.uniform(-3.0, 3.0, size=(3, 6))
        points = np.concatenate(
            [c + rng.normal(0.0, 0.5, size=(80, 6)) for c in centers], axis=0
        )
        mixture = impl(points.T, k=4, max_iter=150, tol=0.0, seed=i, restarts=1)
        diffs = np.diff(mixture.log_likelihood_trace)
        drop = float(-diffs.min()) if diffs.size else 0.0
        if drop > worst:
            worst = drop
            if drop > EM_MONOTONE_TOL:
                failing = {"instance": i, "max_drop": drop}
    return OracleResult(
        name="em-monotone",
        passed=worst <= EM_MONOTONE_TOL,
        max_error=max(worst, 0.0),
        detail=f"{n_instances} 3-blob datasets, K=4",
        failing_case=failing,
    )


# --- GMM vs nearest centroid --------------------------------------------------


def check_gmm_clustering(seed: int = 13, impl=None) -> OracleResult:
    impl = impl or kineme.fit_coeff_mixture
    rng = np.random.default_rng(seed)
    d = 5
    a = rng.normal(0.0, 1.0, size=(100, d))
    b = 10.0 + rng.normal(0.0, 1.0, size=(100, d))
    points = np.concatenate([a, b], axis=0)
    mixture = impl(points.T, k=2, seed=seed, restarts=2)
    resp = kineme.responsibilities(mixture, points)
    hard = np.argmax(resp, axis=1)
    # Brute-force nearest-centroid labels against the true centers.
    truth = np.empty(points.shape[0], dtype=int)
    for i, p in enumerate(points):
        d0 = float(np.sum((p - 0.0) ** 2))
        d1 = float(np.sum((p - 10.0) ** 2))
        truth[i] = 0 if d0 <= d1 else 1
    agreement = max(float(np.mean(hard == truth)), float(np.mean(hard == 1 - truth)))
    return OracleResult(
        name="gmm-nearest-centroid",
        passed=agreement >= 0.99,
        max_error=1.0 - agreement,
        detail=f"two spherical clusters, agreement {agreement:.3f}",
        failing_case=None if agreement >= 0.99 else {"agreement": agreement},
    )


# --- finite-difference gradient suite ----------------------------------------


def _gradient_samples(arch: str, rng: np.random.Generator, n_samples: int, L: int,
                      dims: dict[str, int], task: str):
    modalities = fusion.ARCH_MODALITIES[arch]
    samples = []
    for _ in range(n_samples):
        xs = tuple(rng.uniform(-1.0, 1.0, size=(L, dims[m])) for m in modalities)
        x = xs[0] if len(xs) == 1 else xs
        y = float(rng.integers(0, 2)) if task == "cls" else float(rng.uniform())
        samples.append((x, y))
    return samples


def check_gradients(archs: tuple[str, ...] = GRADIENT_ARCHS, hidden: int = 4,
                    L: int = 5, seed: int = 17, tasks: tuple[str, ...] = ("reg", "cls"),
                    ) -> OracleResult:
    dims = {"kin": 6, "au": 5, "aud": 7}
    worst = 0.0
    failing = None
    for arch in archs:
        for task in tasks:
            rng = np.random.default_rng(seed)
            model = fusion.build_model(arch, dims, hidden_dim=hidden, task=task, seed=seed)
            samples = _gradient_samples(arch, rng, n_samples=2, L=L, dims=dims, task=task)
            loss = "bce" if task == "cls" else "mae"
            err = neural.finite_difference_check(model, loss, samples)
            if err > worst:
                worst = err
                if err > GRAD_REL_TOL:
                    failing = {"arch": arch, "task": task, "rel_error": err}
    return OracleResult(
        name="gradient-finite-difference",
        passed=worst <= GRAD_REL_TOL,
        max_error=worst,
        detail=f"{len(archs)} archs x {len(tasks)} tasks, hidden {hidden}, L={L}",
        failing_case=failing,
    )


def check_bce_gradient(seed: int = 19) -> OracleResult:
    rng = np.random.default_rng(seed)
    h = 1e-6
    worst = 0.0
    for _ in range(50):
        p = rng.uniform(0.05, 0.95)
        t = float(rng.integers(0, 2))
        numeric = (neural.bce(p + h, t) - neural.bce(p - h, t)) / (2 * h)
        analytic = float(neural.bce_grad(p, t))
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), 1.0))
    return OracleResult(
        name="bce-gradient",
        passed=worst <= BCE_GRAD_TOL,
        max_error=worst,
        detail="loss-level finite differences, 50 points",
    )


# --- decision fusion re-evaluation -------------------------------------------


def _pearson_loops(a, b) -> float:
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    num = sum((a[i] - ma) * (b[i] - mb) for i in range(n))
    da = math.sqrt(sum((a[i] - ma) ** 2 for i in range(n)))
    db = math.sqrt(sum((b[i] - mb) ** 2 for i in range(n)))
    if da == 0.0 or db == 0.0:
        return float("nan")
    return num / (da * db)


def _f1_loops(pred, truth) -> float:
    tp = fp = fn = 0
    for p, t in zip(pred, truth):
        if p == 1 and t == 1:
            tp += 1
        elif p == 1 and t == 0:
            fp += 1
        elif p == 0 and t == 1:
            fn += 1
    return 2.0 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0


def decision_fusion_exhaustive(pred_lists, labels, metric: str, step: float = 0.05):
    """Independent full-grid re-evaluation with the same tie rule (first maximum
    in lexicographic order, improvements below 1e-12 count as ties)."""
    divisions = int(round(1.0 / step))
    n_models = len(pred_lists)
    grid = []
    if n_models == 2:
        for i in range(divisions + 1):
            grid.append((i / divisions, (divisions - i) / divisions))
    else:
        for i in range(divisions + 1):
            for j in range(divisions + 1 - i):
                grid.append((i / divisions, j / divisions, (divisions - i - j) / divisions))
    best_w = None
    best_s = -float("inf")
    for weights in grid:
        fused = [
            sum(w * pred_lists[m][i] for m, w in enumerate(weights))
            for i in range(len(labels))
        ]
        if metric == "f1":
            score = _f1_loops([1 if v >= 0.5 else 0 for v in fused], [int(t) for t in labels])
        else:
            score = _pearson_loops(fused, list(labels))
            if math.isnan(score):
                score = -float("inf")
        if score > best_s + 1e-12:
            best_s = score
            best_w = weights
    return best_w, best_s


def check_decision_fusion(n_cases: int = 20, seed: int = 23, impl=None) -> OracleResult:
    impl = impl or fusion.decision_fuse
    rng = np.random.default_rng(seed)
    mismatches = 0
    failing = None
    for i in range(n_cases):
        n = 30
        labels = rng.uniform(0.0, 1.0, size=n)
        preds = [labels + rng.normal(0.0, s, size=n) for s in (0.1, 0.3, 0.6)]
        metric = "pcc" if i % 2 == 0 else "f1"
        lab = labels if metric == "pcc" else (labels >= 0.5).astype(int)
        got = impl(preds, lab, metric=metric)
        want_w, _ = decision_fusion_exhaustive(preds, lab, metric=metric)
        if tuple(got.weights) != tuple(want_w):
            mismatches += 1
            if failing is None:
                failing = {"case": i, "got": list(got.weights), "want": list(want_w)}
    # Perfect-predictor sanity: exact labels versus noise must pick alpha = 1.
    labels = rng.uniform(0.0, 1.0, size=40)
    noise = rng.uniform(0.0, 1.0, size=40)
    perfect = impl([labels, noise], labels, metric="pcc")
    if perfect.weights[0] != 1.0:
        mismatches += 1
        failing = failing or {"case": "perfect-predictor", "got": list(perfect.weights)}
    return OracleResult(
        name="decision-fusion-grid",
        passed=mismatches == 0,
        max_error=float(mismatches),
        detail=f"{n_cases} random triples + perfect-predictor case",
        failing_case=failing,
    )


# --- suite --------------------------------------------------------------------


def oracle_suite(fast: bool = False) -> OracleReport:
    """Run every oracle; `fast` shrinks instance counts for quick smoke runs."""
    if fast:
        results = (
            check_nmf_monotone(n_instances=2, shape=(60, 40), rank=8, iters=120),
            check_em_monotone(n_instances=2),
            check_nnls(n_cases=5),
            check_mfcc(n_frames=10),
            check_gradients(archs=("kin", "ff-tri", "af-tri"), tasks=("reg",)),
            check_bce_gradient(),
            check_gmm_clustering(),
            check_decision_fusion(n_cases=6),
        )
    else:
        results = (
            check_nmf_monotone(),
            check_em_monotone(),
            check_nnls(),
            check_mfcc(),
            check_gradients(),
            check_bce_gradient(),
            check_gmm_clustering(),
            check_decision_fusion(),
        )
    return OracleReport(results=results)
