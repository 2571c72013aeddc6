"""Grouped-branch feed-forward classifier with from-scratch backpropagation.

Each feature group passes through its own fully connected ReLU layer; the
branch outputs are concatenated and fed through a fusion ReLU layer whose
output is the model embedding; a single sigmoid unit produces the fussy
probability. Training minimizes class-weighted binary cross-entropy with
mini-batch Adam; the fussy class carries a 9x penalty by default to counter
the roughly 1:9 fussy:alert imbalance.

Weights initialize from a seeded uniform distribution scaled by
1/sqrt(fan_in), and shuffling is seeded per epoch, so training is
bit-reproducible for a fixed (seed, data, config).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import (
    CorruptFileError,
    DimensionMismatchError,
    SingleClassFoldError,
    VersionMismatchError,
)
from .preprocess import ALL_GROUPS, BODY_GROUPS, FACE_GROUPS, FeatureGroupId
from .select import TOP_K_DEFAULT, FeatureSelection, select_top_k

PROB_CLIP = 1e-7

MODEL_SPEC_GROUPS = {
    "face": FACE_GROUPS,
    "body": BODY_GROUPS,
    "joint": ALL_GROUPS,
}


@dataclass
class TrainConfig:
    epochs: int = 5
    class_weight_fussy: float = 9.0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    seed: int = 0
    branch_width: int = 16      # hidden units per group branch
    embedding_width: int = 32   # fusion layer output

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.class_weight_fussy <= 0:
            raise ValueError("class_weight_fussy must be positive")


@dataclass
class GroupedModel:
    """Weights, selection, and standardization of one trained classifier."""

    groups: tuple[FeatureGroupId, ...]
    branch_weights: dict[FeatureGroupId, np.ndarray]   # (k, h) each
    branch_biases: dict[FeatureGroupId, np.ndarray]    # (h,)
    fusion_weights: np.ndarray                         # (h * n_groups, e)
    fusion_bias: np.ndarray                            # (e,)
    output_weights: np.ndarray                         # (e,)
    output_bias: float
    feature_selection: FeatureSelection
    standardize_mean: dict[FeatureGroupId, np.ndarray]  # (k,) per group
    standardize_std: dict[FeatureGroupId, np.ndarray]
    config: TrainConfig

    def standardize(self, features: dict[FeatureGroupId, np.ndarray]
                    ) -> dict[FeatureGroupId, np.ndarray]:
        """Select this model's columns from full aggregate vectors and z-score."""
        out = {}
        for g in self.groups:
            x = np.asarray(features[g], dtype=np.float64)
            cols = self.feature_selection.indices[g]
            x = x[..., cols]
            out[g] = (x - self.standardize_mean[g]) / self.standardize_std[g]
        return out

    def predict(self, features: dict[FeatureGroupId, np.ndarray]):
        """Probability of fussy for full (unselected) aggregate vectors."""
        prob, _ = forward(self, self.standardize(features))
        return prob


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(model: GroupedModel, features: dict[FeatureGroupId, np.ndarray]):
    """(fussy probability, embedding) for standardized per-group features.

    Accepts single samples (k,) or batches (n, k) per group.
    """
    probs, emb, _ = _forward_batch(model, features)
    single = np.asarray(features[model.groups[0]]).ndim == 1
    if single:
        return float(probs[0]), emb[0]
    return probs, emb


def _forward_batch(model: GroupedModel, features: dict[FeatureGroupId, np.ndarray]):
    acts = []
    for g in model.groups:
        x = np.atleast_2d(np.asarray(features[g], dtype=np.float64))
        k = model.branch_weights[g].shape[0]
        if x.shape[1] != k:
            raise DimensionMismatchError(
                f"group {g.value} expects width {k}, got {x.shape[1]}")
        acts.append((x, np.maximum(x @ model.branch_weights[g] + model.branch_biases[g], 0.0)))
    concat = np.concatenate([z for _, z in acts], axis=1)
    emb = np.maximum(concat @ model.fusion_weights + model.fusion_bias, 0.0)
    logits = emb @ model.output_weights + model.output_bias
    return sigmoid(logits), emb, (acts, concat, emb)


def _backward_batch(model: GroupedModel, cache, probs: np.ndarray,
                    y: np.ndarray, sample_weights: np.ndarray):
    """Gradients of mean weighted BCE over the batch, matching forward()."""
    acts, concat, emb = cache
    n = len(y)
    dlogit = sample_weights * (probs - y) / n               # (n,)
    g_wo = emb.T @ dlogit                                   # (e,)
    g_bo = dlogit.sum()
    demb = np.outer(dlogit, model.output_weights)
    demb[emb <= 0.0] = 0.0
    g_wf = concat.T @ demb
    g_bf = demb.sum(axis=0)
    dconcat = demb @ model.fusion_weights.T
    grads_branch = {}
    h = model.config.branch_width
    for i, g in enumerate(model.groups):
        x, z = acts[i]
        dz = dconcat[:, i * h: (i + 1) * h].copy()
        dz[z <= 0.0] = 0.0
        grads_branch[g] = (x.T @ dz, dz.sum(axis=0))
    return grads_branch, g_wf, g_bf, g_wo, g_bo


def named_params(model: GroupedModel) -> list[tuple[str, np.ndarray]]:
    """The model's array parameters by name (output_bias is a plain float)."""
    out = []
    for g in model.groups:
        out.append((f"branch_weight/{g.value}", model.branch_weights[g]))
        out.append((f"branch_bias/{g.value}", model.branch_biases[g]))
    out += [("fusion_weight", model.fusion_weights),
            ("fusion_bias", model.fusion_bias),
            ("output_weight", model.output_weights)]
    return out


def loss_gradients(model: GroupedModel, features: dict[FeatureGroupId, np.ndarray],
                   label, class_weight_fussy: float = 9.0) -> dict[str, np.ndarray]:
    """Analytic gradients of weighted_bce(forward(x), label) for one sample.

    Keys match :func:`named_params`, plus ``output_bias`` as a length-1 array.
    """
    y = float(getattr(label, "value", label))
    batch = {g: np.atleast_2d(features[g]) for g in model.groups}
    probs, _, cache = _forward_batch(model, batch)
    w = np.array([class_weight_fussy if y == 1.0 else 1.0])
    grads_branch, g_wf, g_bf, g_wo, g_bo = _backward_batch(
        model, cache, probs, np.array([y]), w)
    out = {}
    for g in model.groups:
        out[f"branch_weight/{g.value}"], out[f"branch_bias/{g.value}"] = grads_branch[g]
    out["fusion_weight"] = g_wf
    out["fusion_bias"] = g_bf
    out["output_weight"] = g_wo
    out["output_bias"] = np.array([g_bo])
    return out


def weighted_bce(prob: float, label, class_weight_fussy: float = 9.0) -> float:
    """Class-weighted binary cross-entropy for one prediction.

    ``label`` is AffectLabel-like or the integer 0/1; the fussy class carries
    ``class_weight_fussy``. Probabilities clamp to [1e-7, 1 - 1e-7].
    """
    y = int(getattr(label, "value", label))
    p = min(max(float(prob), PROB_CLIP), 1.0 - PROB_CLIP)
    w = class_weight_fussy if y == 1 else 1.0
    return -w * (y * np.log(p) + (1 - y) * np.log1p(-p))


def late_fuse(p_face: float, p_body: float) -> float:
    """Soft voting with equal weights on the two unimodal probabilities."""
    return (p_face + p_body) / 2.0


def _init_model(groups, config: TrainConfig, rng: np.random.Generator,
                selection: FeatureSelection, std_mean, std_std) -> GroupedModel:
    h, e = config.branch_width, config.embedding_width

    def uniform(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    branch_w, branch_b = {}, {}
    for g in groups:
        width = len(selection.indices[g])
        branch_w[g] = uniform(width, (width, h))
        branch_b[g] = uniform(width, (h,))
    fan_f = h * len(groups)
    return GroupedModel(
        groups=tuple(groups),
        branch_weights=branch_w,
        branch_biases=branch_b,
        fusion_weights=uniform(fan_f, (fan_f, e)),
        fusion_bias=uniform(fan_f, (e,)),
        output_weights=uniform(e, (e,)),
        output_bias=float(uniform(e, (1,))[0]),
        feature_selection=selection,
        standardize_mean=std_mean,
        standardize_std=std_std,
        config=config,
    )


def _params(model: GroupedModel) -> list[np.ndarray]:
    out = []
    for g in model.groups:
        out += [model.branch_weights[g], model.branch_biases[g]]
    out += [model.fusion_weights, model.fusion_bias, model.output_weights]
    return out


def fit_network(x_groups: dict[FeatureGroupId, np.ndarray], y: np.ndarray,
                groups, config: TrainConfig, selection: FeatureSelection,
                std_mean, std_std, rng: np.random.Generator | None = None
                ) -> GroupedModel:
    """Mini-batch Adam on standardized, already-selected training matrices."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    model = _init_model(groups, config, rng, selection, std_mean, std_std)
    n = len(y)
    y = np.asarray(y, dtype=np.float64)
    weights = np.where(y == 1.0, config.class_weight_fussy, 1.0)

    params = _params(model)
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    mb, vb = 0.0, 0.0  # output bias runs scalar
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start: start + config.batch_size]
            batch = {g: x_groups[g][idx] for g in model.groups}
            probs, _, cache = _forward_batch(model, batch)
            grads_branch, g_wf, g_bf, g_wo, g_bo = _backward_batch(
                model, cache, probs, y[idx], weights[idx])
            grads = []
            for g in model.groups:
                grads += list(grads_branch[g])
            grads += [g_wf, g_bf, g_wo]

            step += 1
            bc1 = 1.0 - config.beta1 ** step
            bc2 = 1.0 - config.beta2 ** step
            for p, grad, m, v in zip(params, grads, m_state, v_state):
                m *= config.beta1
                m += (1.0 - config.beta1) * grad
                v *= config.beta2
                v += (1.0 - config.beta2) * grad * grad
                p -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.epsilon)
            mb = config.beta1 * mb + (1.0 - config.beta1) * g_bo
            vb = config.beta2 * vb + (1.0 - config.beta2) * g_bo * g_bo
            model.output_bias -= config.learning_rate * (mb / bc1) / (np.sqrt(vb / bc2) + config.epsilon)
    return model


def standardization_from_matrix(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column (mean, std) with unit std substituted for constant columns."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def train(samples, groups, config: TrainConfig, k: int = TOP_K_DEFAULT) -> GroupedModel:
    """Fit selection, standardization, and the network on a training fold.

    ``samples`` is a WindowedSample list (the caller supplies the training
    folds' D_confident subset). With epochs = 0 the returned model is its
    seeded initialization, which the tests rely on.

    Raises:
        SingleClassFoldError: the fold does not contain both classes.
    """
    labels = np.array([s.label.value for s in samples], dtype=np.int64) if samples else np.empty(0)
    if len(samples) == 0 or len(np.unique(labels)) < 2:
        raise SingleClassFoldError("training fold must contain both classes")
    selection = select_top_k(samples, k=k)
    selection = FeatureSelection(
        fold_id=selection.fold_id, k=selection.k,
        indices={g: selection.indices[g] for g in groups},
        t_stats={g: selection.t_stats[g] for g in groups},
        dfs={g: selection.dfs[g] for g in groups},
        p_values={g: selection.p_values[g] for g in groups})

    x_groups, std_mean, std_std = {}, {}, {}
    for g in groups:
        raw = np.stack([s.groups[g] for s in samples])[:, selection.indices[g]]
        std_mean[g], std_std[g] = standardization_from_matrix(raw)
        x_groups[g] = (raw - std_mean[g]) / std_std[g]
    return fit_network(x_groups, labels, groups, config, selection, std_mean, std_std)


# ---------------------------------------------------------------------------
# Embedding PCA


@dataclass
class PcaResult:
    components: np.ndarray          # (2, e) rows, unit norm
    projected: np.ndarray           # (n, 2)
    explained_variance: np.ndarray  # (2,) non-increasing
    degenerate: bool = False


def pca_embed(embeddings: np.ndarray) -> PcaResult:
    """Top-2 principal components of a set of embedding vectors.

    Mean-centers, eigendecomposes the sample covariance, and fixes each
    component's sign so its largest-magnitude entry is positive. If the
    covariance has rank < 2 the second component is zero-filled and the
    result is flagged degenerate.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3 or x.shape[1] < 2:
        raise ValueError("need at least 3 embeddings of dimension >= 2")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:2]
    comps = eigvecs[:, order].T.copy()
    var = np.maximum(eigvals[order], 0.0)
    for c in comps:
        if c[np.argmax(np.abs(c))] < 0:
            c *= -1.0
    degenerate = bool(var[1] <= max(var[0], 1e-300) * 1e-12)
    if degenerate:
        comps[1] = 0.0
        var[1] = 0.0
    return PcaResult(components=comps, projected=centered @ comps.T,
                     explained_variance=var, degenerate=degenerate)


# ---------------------------------------------------------------------------
# Serialization: versioned binary container with checksum.
#
# Layout: magic b"GBMF" | u32 version | u64 payload length | 32-byte sha256
# of the payload | payload. The payload is a u32 header length, a JSON header
# (groups, config, fold id, and an array manifest of name/dtype/shape), then
# the arrays' raw little-endian bytes concatenated in manifest order.

MODEL_MAGIC = b"GBMF"
MODEL_FORMAT_VERSION = 1


def _model_arrays(model: GroupedModel) -> list[tuple[str, np.ndarray]]:
    sel = model.feature_selection
    arrays = []
    for g in model.groups:
        arrays += [
            (f"branch_weight/{g.value}", model.branch_weights[g]),
            (f"branch_bias/{g.value}", model.branch_biases[g]),
            (f"selection_indices/{g.value}", sel.indices[g].astype(np.int64)),
            (f"selection_t/{g.value}", sel.t_stats[g]),
            (f"selection_df/{g.value}", sel.dfs[g]),
            (f"selection_p/{g.value}", sel.p_values[g]),
            (f"standardize_mean/{g.value}", model.standardize_mean[g]),
            (f"standardize_std/{g.value}", model.standardize_std[g]),
        ]
    arrays += [
        ("fusion_weight", model.fusion_weights),
        ("fusion_bias", model.fusion_bias),
        ("output_weight", model.output_weights),
        ("output_bias", np.array([model.output_bias])),
    ]
    return arrays


def save_model(model: GroupedModel, path: str | Path) -> None:
    arrays = _model_arrays(model)
    header = {
        "groups": [g.value for g in model.groups],
        "config": asdict(model.config),
        "fold_id": model.feature_selection.fold_id,
        "k": model.feature_selection.k,
        "arrays": [{"name": name, "dtype": a.dtype.str if a.dtype.kind == "i" else "<f8",
                    "shape": list(a.shape)} for name, a in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = bytearray(struct.pack("<I", len(header_bytes)))
    payload += header_bytes
    for name, a in arrays:
        dtype = "<i8" if a.dtype.kind == "i" else "<f8"
        payload += np.ascontiguousarray(a, dtype=dtype).tobytes()
    digest = hashlib.sha256(bytes(payload)).digest()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(digest)
        fh.write(payload)


def load_model(path: str | Path) -> GroupedModel:
    """Load a model file, verifying magic, version, and checksum.

    Raises:
        CorruptFileError: truncated file, bad magic, or checksum mismatch.
        VersionMismatchError: written by an unsupported format version.
    """
    blob = Path(path).read_bytes()
    if len(blob) < 48 or blob[:4] != MODEL_MAGIC:
        raise CorruptFileError(f"{path} is not a model file")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != MODEL_FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path} uses format version {version}; this build reads {MODEL_FORMAT_VERSION}")
    payload_len = struct.unpack("<Q", blob[8:16])[0]
    digest = blob[16:48]
    payload = blob[48:]
    if len(payload) != payload_len or hashlib.sha256(payload).digest() != digest:
        raise CorruptFileError(f"{path} failed its integrity check")

    header_len = struct.unpack("<I", payload[:4])[0]
    header = json.loads(payload[4: 4 + header_len].decode("utf-8"))
    offset = 4 + header_len
    arrays = {}
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * dtype.itemsize
        arrays[spec["name"]] = np.frombuffer(
            payload[offset: offset + nbytes], dtype=dtype).reshape(spec["shape"]).copy()
        offset += nbytes

    groups = tuple(FeatureGroupId(g) for g in header["groups"])
    config = TrainConfig(**header["config"])
    selection = FeatureSelection(
        fold_id=header["fold_id"], k=header["k"],
        indices={g: arrays[f"selection_indices/{g.value}"] for g in groups},
        t_stats={g: arrays[f"selection_t/{g.value}"] for g in groups},
        dfs={g: arrays[f"selection_df/{g.value}"] for g in groups},
        p_values={g: arrays[f"selection_p/{g.value}"] for g in groups})
    return GroupedModel(
        groups=groups,
        branch_weights={g: arrays[f"branch_weight/{g.value}"] for g in groups},
        branch_biases={g: arrays[f"branch_bias/{g.value}"] for g in groups},
        fusion_weights=arrays["fusion_weight"],
        fusion_bias=arrays["fusion_bias"],
        output_weights=arrays["output_weight"],
        output_bias=float(arrays["output_bias"][0]),
        feature_selection=selection,
        standardize_mean={g: arrays[f"standardize_mean/{g.value}"] for g in groups},
        standardize_std={g: arrays[f"standardize_std/{g.value}"] for g in groups},
        config=config,
    )
