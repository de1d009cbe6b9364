"""Recurrent predictors over aligned modality windows and their fusion.

Three families share one LSTM backbone per modality:

* unimodal: LSTM -> last hidden state -> single-neuron head,
* feature fusion: one LSTM per modality, final hidden states concatenated
  before the head,
* attention fusion: per-window softmax weights over the three modalities
  (concat -> 12-neuron FC -> 3-neuron softmax), each modality layer-normalized
  and projected to the hidden size, weighted-summed per window, and the fused
  sequence read recurrently by a small LSTM whose last state feeds the head.

Decision fusion combines already-trained model scores by exhaustive simplex
grid search (step 0.05) on a validation metric.

The head uses sigmoid activation for classification and linear for
regression; every architecture passes `neural.finite_difference_check`.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ShapeError
from .neural import Dense, LayerNorm, LSTMLayer, softmax, softmax_backward

logger = logging.getLogger(__name__)

MODALITIES = ("kin", "au", "aud")
ARCH_MODALITIES: dict[str, tuple[str, ...]] = {
    "kin": ("kin",),
    "au": ("au",),
    "aud": ("aud",),
    "ff-kin-au": ("kin", "au"),
    "ff-kin-aud": ("kin", "aud"),
    "ff-au-aud": ("au", "aud"),
    "ff-tri": ("kin", "au", "aud"),
    "af-tri": ("kin", "au", "aud"),
}
ATTENTION_FC_NEURONS = 12
TIE_EPS = 1e-12
DEFAULT_HIDDEN = 32
MODEL_FORMAT = "kineme-model/1"


@dataclass(frozen=True)
class AlignedSample:
    """One training/eval item: aligned per-window features plus its target."""

    chunk_id: str
    kineme: np.ndarray  # (L, K) one-hot rows
    au: np.ndarray  # (L, 17) binary rows
    speech: np.ndarray  # (L, 23)
    target: float

    def __post_init__(self):
        L = self.kineme.shape[0]
        if self.au.shape[0] != L or self.speech.shape[0] != L:
            raise ShapeError(
                f"modality lengths differ: {self.kineme.shape[0]}/{self.au.shape[0]}"
                f"/{self.speech.shape[0]}"
            )

    @property
    def n_windows(self) -> int:
        return self.kineme.shape[0]

    def modality(self, name: str) -> np.ndarray:
        return {"kin": self.kineme, "au": self.au, "aud": self.speech}[name]


@dataclass(frozen=True)
class AttentionTrace:
    """Per-window modality weights on the 3-simplex, plus their mean."""

    chunk_id: str
    weights: np.ndarray  # (L, 3) rows sum to 1

    @property
    def aggregate(self) -> np.ndarray:
        return self.weights.mean(axis=0)


def model_input(sample: AlignedSample, modalities: tuple[str, ...]):
    if len(modalities) == 1:
        return sample.modality(modalities[0])
    return tuple(sample.modality(m) for m in modalities)


def _head_activation(task: str) -> str:
    if task not in ("cls", "reg"):
        raise ConfigurationError(f"task must be 'cls' or 'reg', got {task!r}")
    return "sigmoid" if task == "cls" else "identity"


def _prefixed(layers: dict[str, object], getter: str) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for name, layer in layers.items():
        for key, value in getattr(layer, getter)().items():
            out[f"{name}.{key}"] = value
    return out


class _ModelBase:
    arch: str
    task: str
    hidden_dim: int
    input_dims: dict[str, int]
    _layers: dict[str, object]

    def parameters(self) -> dict[str, np.ndarray]:
        return _prefixed(self._layers, "parameters")

    def gradients(self) -> dict[str, np.ndarray]:
        return _prefixed(self._layers, "gradients")

    def zero_grads(self) -> None:
        for layer in self._layers.values():
            layer.zero_grads()

    def spec_dict(self) -> dict:
        return {
            "arch": self.arch,
            "task": self.task,
            "hidden_dim": self.hidden_dim,
            "input_dims": dict(self.input_dims),
        }


class UnimodalModel(_ModelBase):
    """LSTM over one modality, head on the final hidden state."""

    def __init__(self, arch: str, input_dim: int, hidden_dim: int, task: str,
                 rng: np.random.Generator):
        self.arch = arch
        self.task = task
        self.hidden_dim = hidden_dim
        self.input_dims = {arch: input_dim}
        self.lstm = LSTMLayer(input_dim, hidden_dim, rng)
        self.head = Dense(hidden_dim, 1, rng, activation=_head_activation(task))
        self._layers = {"lstm": self.lstm, "head": self.head}
        self._L = None

    def forward(self, x: np.ndarray) -> float:
        hs = self.lstm.forward(x)
        self._L = hs.shape[0]
        return float(self.head.forward(hs[-1])[0])

    def backward(self, dpred: float) -> None:
        dh_last = self.head.backward(np.array([dpred]))
        d_hs = np.zeros((self._L, self.hidden_dim))
        d_hs[-1] = dh_last
        self.lstm.backward(d_hs)


class FeatureFusionModel(_ModelBase):
    """One LSTM per modality; final hidden states concatenated into the head."""

    def __init__(self, arch: str, input_dims: dict[str, int], hidden_dim: int,
                 task: str, rng: np.random.Generator):
        self.arch = arch
        self.task = task
        self.hidden_dim = hidden_dim
        self.modalities = ARCH_MODALITIES[arch]
        self.input_dims = {m: input_dims[m] for m in self.modalities}
        self.lstms = {m: LSTMLayer(input_dims[m], hidden_dim, rng) for m in self.modalities}
        self.head = Dense(len(self.modalities) * hidden_dim, 1, rng,
                          activation=_head_activation(task))
        self._layers = {f"lstm_{m}": l for m, l in self.lstms.items()}
        self._layers["head"] = self.head
        self._L = None

    def forward(self, xs: tuple[np.ndarray, ...]) -> float:
        if len(xs) != len(self.modalities):
            raise ConfigurationError(
                f"{self.arch} expects {len(self.modalities)} modalities, got {len(xs)}"
            )
        lengths = {x.shape[0] for x in xs}
        if len(lengths) != 1:
            raise ShapeError(f"modality lengths differ: {sorted(lengths)}")
        finals = [self.lstms[m].forward(x)[-1] for m, x in zip(self.modalities, xs)]
        self._L = xs[0].shape[0]
        return float(self.head.forward(np.concatenate(finals))[0])

    def backward(self, dpred: float) -> None:
        dcat = self.head.backward(np.array([dpred]))
        h = self.hidden_dim
        for k, m in enumerate(self.modalities):
            d_hs = np.zeros((self._L, h))
            d_hs[-1] = dcat[k * h : (k + 1) * h]
            self.lstms[m].backward(d_hs)


class AttentionFusionModel(_ModelBase):
    """Per-window additive soft attention over the three modality streams."""

    def __init__(self, input_dims: dict[str, int], hidden_dim: int, task: str,
                 rng: np.random.Generator):
        self.arch = "af-tri"
        self.task = task
        self.hidden_dim = hidden_dim
        self.modalities = MODALITIES
        self.input_dims = {m: input_dims[m] for m in MODALITIES}
        h = hidden_dim
        self.lstms = {m: LSTMLayer(input_dims[m], h, rng) for m in MODALITIES}
        self.fc = Dense(3 * h, ATTENTION_FC_NEURONS, rng, activation="tanh")
        self.att = Dense(ATTENTION_FC_NEURONS, 3, rng, activation="identity")
        # The normalization and projection are shared across modalities, so the
        # softmax weights are the only per-modality scaling on the value path
        # and remain interpretable as modality importance.
        self.norm = LayerNorm(h)
        self.proj = Dense(h, h, rng, activation="identity")
        self.fusion_lstm = LSTMLayer(h, h, rng)
        self.head = Dense(h, 1, rng, activation=_head_activation(task))
        self._layers = {f"lstm_{m}": l for m, l in self.lstms.items()}
        self._layers.update(
            {"fc": self.fc, "att": self.att, "norm": self.norm, "proj": self.proj,
             "fusion_lstm": self.fusion_lstm, "head": self.head}
        )
        self._cache = None

    def forward(self, xs: tuple[np.ndarray, ...]) -> float:
        pred, _ = self.forward_with_trace(xs)
        return pred

    def forward_with_trace(self, xs: tuple[np.ndarray, ...]) -> tuple[float, np.ndarray]:
        if len(xs) != 3:
            raise ConfigurationError("attention fusion expects all three modalities")
        lengths = {x.shape[0] for x in xs}
        if len(lengths) != 1:
            raise ShapeError(f"modality lengths differ: {sorted(lengths)}")
        L = xs[0].shape[0]
        hs = {m: self.lstms[m].forward(x) for m, x in zip(MODALITIES, xs)}  # (L, H) each
        concat = np.concatenate([hs[m] for m in MODALITIES], axis=1)  # (L, 3H)
        fc_out = self.fc.forward(concat)  # (L, 12)
        weights = softmax(self.att.forward(fc_out))  # (L, 3)
        # Shared-layer pass over all modalities at once (single cache).
        stacked = np.concatenate([hs[m] for m in MODALITIES], axis=0)  # (3L, H)
        values_all = self.proj.forward(self.norm.forward(stacked))
        values = {m: values_all[k * L : (k + 1) * L] for k, m in enumerate(MODALITIES)}
        fused = sum(weights[:, k : k + 1] * values[m] for k, m in enumerate(MODALITIES))
        fh = self.fusion_lstm.forward(fused)
        pred = float(self.head.forward(fh[-1])[0])
        self._cache = (weights, values, L)
        return pred, weights

    def backward(self, dpred: float) -> None:
        weights, values, L = self._cache
        h = self.hidden_dim
        d_fh = np.zeros((L, h))
        d_fh[-1] = self.head.backward(np.array([dpred]))
        dfused = self.fusion_lstm.backward(d_fh)  # (L, H)

        dweights = np.stack(
            [np.sum(dfused * values[m], axis=1) for m in MODALITIES], axis=1
        )  # (L, 3)
        dlogits = softmax_backward(weights, dweights)
        dconcat = self.fc.backward(self.att.backward(dlogits))  # (L, 3H)

        dvalues_all = np.concatenate(
            [weights[:, k : k + 1] * dfused for k in range(3)], axis=0
        )  # (3L, H)
        d_stacked = self.norm.backward(self.proj.backward(dvalues_all))
        for k, m in enumerate(MODALITIES):
            d_hs = d_stacked[k * L : (k + 1) * L] + dconcat[:, k * h : (k + 1) * h]
            self.lstms[m].backward(d_hs)


def build_model(arch: str, input_dims: dict[str, int], hidden_dim: int = DEFAULT_HIDDEN,
                task: str = "reg", seed: int = 0):
    """Construct any architecture by its CLI name with a seeded initialization."""
    if arch not in ARCH_MODALITIES:
        raise ConfigurationError(f"unknown arch {arch!r}, expected one of {sorted(ARCH_MODALITIES)}")
    rng = np.random.default_rng(seed)
    if arch in ("kin", "au", "aud"):
        return UnimodalModel(arch, input_dims[arch], hidden_dim, task, rng)
    if arch == "af-tri":
        return AttentionFusionModel(input_dims, hidden_dim, task, rng)
    return FeatureFusionModel(arch, input_dims, hidden_dim, task, rng)


def unimodal_predict(sequence: np.ndarray, model: UnimodalModel) -> float:
    """Score one modality sequence; (0,1) for classification, real for regression."""
    return model.forward(sequence)


def feature_fusion_predict(sample: AlignedSample, model: FeatureFusionModel) -> float:
    return model.forward(model_input(sample, model.modalities))


def attention_fusion_predict(sample: AlignedSample, model: AttentionFusionModel
                             ) -> tuple[float, AttentionTrace]:
    pred, weights = model.forward_with_trace(model_input(sample, MODALITIES))
    return pred, AttentionTrace(chunk_id=sample.chunk_id, weights=weights)


# --- decision fusion -------------------------------------------------------


@dataclass(frozen=True)
class DecisionFusionWeights:
    weights: tuple[float, ...]  # on the simplex, multiples of the grid step
    metric: str
    score: float


def _simplex_grid(n_models: int, step: float):
    divisions = int(round(1.0 / step))
    if n_models == 2:
        for i in range(divisions + 1):
            yield (i / divisions, (divisions - i) / divisions)
    elif n_models == 3:
        for i, j in itertools.product(range(divisions + 1), repeat=2):
            if i + j <= divisions:
                yield (i / divisions, j / divisions, (divisions - i - j) / divisions)
    else:
        raise ConfigurationError("decision fusion supports 2 or 3 models")


def decision_fuse(
    pred_lists: list[np.ndarray],
    labels: np.ndarray,
    metric: str = "pcc",
    step: float = 0.05,
) -> DecisionFusionWeights:
    """Exhaustive simplex grid search for convex score-combination weights.

    `metric` is 'f1' (classification; fused scores thresholded at 0.5) or
    'pcc' (regression). A grid point whose metric is undefined (e.g. PCC of a
    constant combination) scores -inf. Ties return the lexicographically
    smallest weight vector; score differences below 1e-12 count as ties so
    float noise in the convex combination cannot break the tie rule.
    """
    from .evaluation import binary_f1, pearson

    if metric not in ("f1", "pcc"):
        raise ConfigurationError(f"metric must be 'f1' or 'pcc', got {metric!r}")
    preds = [np.asarray(p, dtype=np.float64) for p in pred_lists]
    labels = np.asarray(labels, dtype=np.float64)
    if any(p.shape != labels.shape for p in preds):
        raise ShapeError("prediction lists must align with the labels")

    best_weights = None
    best_score = -np.inf
    for weights in _simplex_grid(len(preds), step):
        fused = sum(w * p for w, p in zip(weights, preds))
        if metric == "f1":
            score = binary_f1((fused >= 0.5).astype(int), labels.astype(int))
        else:
            score = pearson(fused, labels)
            if np.isnan(score):
                logger.warning("degenerate PCC at weights %s; scoring -inf", weights)
                score = -np.inf
        # Strict improvement keeps the first (lexicographically smallest) maximum.
        if best_weights is None or score > best_score + TIE_EPS:
            best_score = score
            best_weights = weights
    return DecisionFusionWeights(weights=best_weights, metric=metric, score=float(best_score))


# --- checkpoints ------------------------------------------------------------


def save_model(model, path: str | Path) -> None:
    """Versioned JSON checkpoint: spec plus row-major parameter arrays."""
    doc = {"format": MODEL_FORMAT}
    doc.update(model.spec_dict())
    doc["params"] = {
        key: {"shape": list(value.shape), "data": value.reshape(-1).tolist()}
        for key, value in model.parameters().items()
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_model(path: str | Path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ConfigurationError(f"{path}: unknown model format {doc.get('format')!r}")
    model = build_model(doc["arch"], doc["input_dims"], doc["hidden_dim"], doc["task"], seed=0)
    params = model.parameters()
    if set(params) != set(doc["params"]):
        raise ConfigurationError(f"{path}: parameter names do not match arch {doc['arch']}")
    for key, value in doc["params"].items():
        arr = np.array(value["data"], dtype=np.float64).reshape(value["shape"])
        if arr.shape != params[key].shape:
            raise ShapeError(f"{path}: shape mismatch for {key}")
        params[key][...] = arr
    return model
