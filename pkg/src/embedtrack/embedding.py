"""Two-layer embedding head over ROI feature vectors, with its training losses.

The head maps an F-dimensional detector feature to an E-dimensional metric
embedding through one hidden rectified layer:

    embedding = w2 @ relu(w1 @ feature + b1) + b2

Distances between embeddings are squared Euclidean throughout the package;
margins and thresholds are expressed in those units.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "EmbeddingHeadParams",
    "LossConfig",
    "init_params",
    "embed",
    "embed_batch",
    "pairwise_distances",
    "triplet_loss",
    "pull_loss",
    "joint_loss",
    "save_params",
    "load_params",
]

PARAMS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LossConfig:
    """Loss margins and weights.

    `margin` separates hardest-positive from hardest-negative distances,
    `pull_margin` anchors the absolute scale of intra-identity distances,
    and the four weights blend externally supplied detector losses with the
    embedding losses. `score_threshold` filters detections by confidence
    before identities are assigned.
    """

    margin: float = 5.0
    pull_margin: float = 1.0
    w_cls: float = 1.0
    w_reg: float = 1.0
    w_triplet: float = 0.2
    w_pull: float = 0.2
    score_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not self.margin > 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.pull_margin < 0:
            raise ValueError(f"pull_margin must be non-negative, got {self.pull_margin}")
        for name in ("w_cls", "w_reg", "w_triplet", "w_pull"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError(f"score_threshold must lie in [0, 1], got {self.score_threshold}")


def _as_param_array(value, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64, copy=True)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class EmbeddingHeadParams:
    """Weights of the two fully connected layers.

    Shapes: w1 (hidden, feature), b1 (hidden,), w2 (embed, hidden), b2 (embed,).
    Instances are immutable; arithmetic returns new instances.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        w1 = np.array(self.w1, dtype=np.float64, copy=True)
        if w1.ndim != 2:
            raise ValueError(f"w1 must be 2-D, got shape {w1.shape}")
        hidden, feature = w1.shape
        w2 = np.array(self.w2, dtype=np.float64, copy=True)
        if w2.ndim != 2:
            raise ValueError(f"w2 must be 2-D, got shape {w2.shape}")
        embed_dim = w2.shape[0]
        object.__setattr__(self, "w1", _as_param_array(w1, (hidden, feature), "w1"))
        object.__setattr__(self, "b1", _as_param_array(self.b1, (hidden,), "b1"))
        object.__setattr__(self, "w2", _as_param_array(w2, (embed_dim, hidden), "w2"))
        object.__setattr__(self, "b2", _as_param_array(self.b2, (embed_dim,), "b2"))

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.w2.shape[0]

    def to_flat(self) -> np.ndarray:
        """Concatenate all parameters into one vector (w1, b1, w2, b2; row-major)."""
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    @classmethod
    def from_flat(cls, vec: np.ndarray, feature_dim: int, hidden_dim: int, embed_dim: int) -> "EmbeddingHeadParams":
        vec = np.asarray(vec, dtype=np.float64)
        sizes = [hidden_dim * feature_dim, hidden_dim, embed_dim * hidden_dim, embed_dim]
        if vec.shape != (sum(sizes),):
            raise ValueError(f"expected flat vector of length {sum(sizes)}, got shape {vec.shape}")
        o1, o2, o3 = np.cumsum(sizes[:3])
        return cls(
            w1=vec[:o1].reshape(hidden_dim, feature_dim),
            b1=vec[o1:o2],
            w2=vec[o2:o3].reshape(embed_dim, hidden_dim),
            b2=vec[o3:],
        )

    def add_scaled(self, other: "EmbeddingHeadParams", scale: float) -> "EmbeddingHeadParams":
        """Return self + scale * other (used for gradient steps)."""
        return EmbeddingHeadParams(
            w1=self.w1 + scale * other.w1,
            b1=self.b1 + scale * other.b1,
            w2=self.w2 + scale * other.w2,
            b2=self.b2 + scale * other.b2,
        )

    @classmethod
    def zeros(cls, feature_dim: int, hidden_dim: int, embed_dim: int) -> "EmbeddingHeadParams":
        return cls(
            w1=np.zeros((hidden_dim, feature_dim)),
            b1=np.zeros(hidden_dim),
            w2=np.zeros((embed_dim, hidden_dim)),
            b2=np.zeros(embed_dim),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingHeadParams):
            return NotImplemented
        return (
            np.array_equal(self.w1, other.w1)
            and np.array_equal(self.b1, other.b1)
            and np.array_equal(self.w2, other.w2)
            and np.array_equal(self.b2, other.b2)
        )


def init_params(
    feature_dim: int, hidden_dim: int, embed_dim: int, rng: np.random.Generator
) -> EmbeddingHeadParams:
    """Uniform initialisation in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer.

    Draw order is fixed (w1, b1, w2, b2) so a seeded generator reproduces the
    same parameters.
    """
    if min(feature_dim, hidden_dim, embed_dim) < 1:
        raise ValueError("all head dimensions must be positive")
    bound1 = 1.0 / np.sqrt(feature_dim)
    bound2 = 1.0 / np.sqrt(hidden_dim)
    return EmbeddingHeadParams(
        w1=rng.uniform(-bound1, bound1, size=(hidden_dim, feature_dim)),
        b1=rng.uniform(-bound1, bound1, size=hidden_dim),
        w2=rng.uniform(-bound2, bound2, size=(embed_dim, hidden_dim)),
        b2=rng.uniform(-bound2, bound2, size=embed_dim),
    )


def embed(params: EmbeddingHeadParams, feature: np.ndarray) -> np.ndarray:
    """Map a single F-vector to its E-dimensional embedding.

    Delegates to `embed_batch` so single and batched evaluation share one
    floating-point path (gemm and gemv associate sums differently).
    """
    feat = np.asarray(feature, dtype=np.float64)
    if feat.shape != (params.feature_dim,):
        raise ValueError(
            f"feature has shape {feat.shape}, head expects ({params.feature_dim},)"
        )
    return embed_batch(params, feat[None, :])[0]


def embed_batch(params: EmbeddingHeadParams, features: np.ndarray) -> np.ndarray:
    """Map an (n, F) feature matrix to (n, E) embeddings."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != params.feature_dim:
        raise ValueError(
            f"features must have shape (n, {params.feature_dim}), got {feats.shape}"
        )
    hidden = np.maximum(feats @ params.w1.T + params.b1, 0.0)
    return hidden @ params.w2.T + params.b2


def pairwise_distances(embeddings: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance matrix between all rows.

    Exactly symmetric with a zero diagonal (computed from coordinate
    differences, not the dot-product identity, to avoid cancellation).
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ValueError(f"embeddings must be 2-D, got shape {emb.shape}")
    diff = emb[:, None, :] - emb[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def triplet_loss(distances: np.ndarray, identities: Sequence[int], margin: float) -> float:
    """Batch-hard triplet loss from a precomputed distance matrix.

    Each element with at least one same-identity other and one
    different-identity other acts as an anchor and contributes

        max(max(d_same) - min(d_diff) + margin, 0)

    The result is the mean over valid anchors, or 0.0 when there is none.
    """
    d = np.asarray(distances, dtype=np.float64)
    ids = np.asarray(identities)
    n = ids.shape[0]
    if d.shape != (n, n):
        raise ValueError(f"distance matrix shape {d.shape} does not match {n} identities")
    same = ids[:, None] == ids[None, :]
    off_diag = ~np.eye(n, dtype=bool)
    pos = same & off_diag
    neg = ~same
    valid = pos.any(axis=1) & neg.any(axis=1)
    if not valid.any():
        return 0.0
    hardest_pos = np.where(pos, d, -np.inf).max(axis=1)
    hardest_neg = np.where(neg, d, np.inf).min(axis=1)
    per_anchor = np.maximum(hardest_pos - hardest_neg + margin, 0.0)
    return float(per_anchor[valid].mean())


def pull_loss(distances: np.ndarray, identities: Sequence[int], pull_margin: float) -> float:
    """Absolute deviation of each identity's largest intra-identity distance
    from `pull_margin`, averaged over identities with at least two members.

    Returns 0.0 when no identity has two members.
    """
    d = np.asarray(distances, dtype=np.float64)
    ids = np.asarray(identities)
    if d.shape != (ids.shape[0], ids.shape[0]):
        raise ValueError(f"distance matrix shape {d.shape} does not match {ids.shape[0]} identities")
    terms = []
    for ident in np.unique(ids):
        members = np.nonzero(ids == ident)[0]
        if members.size < 2:
            continue
        sub = d[np.ix_(members, members)]
        largest = sub[~np.eye(members.size, dtype=bool)].max()
        terms.append(abs(float(largest) - pull_margin))
    if not terms:
        return 0.0
    return float(np.mean(terms))


def joint_loss(
    cls_loss: float, reg_loss: float, tri_loss: float, pull_loss_value: float, cfg: LossConfig
) -> float:
    """Weighted sum of detector and embedding losses.

    Detector losses are supplied externally (pass 0.0 when training the
    embedding head alone).
    """
    terms = (cls_loss, reg_loss, tri_loss, pull_loss_value)
    if not all(np.isfinite(t) and t >= 0 for t in terms):
        raise ValueError(f"loss terms must be finite and non-negative, got {terms}")
    return (
        cfg.w_cls * cls_loss
        + cfg.w_reg * reg_loss
        + cfg.w_triplet * tri_loss
        + cfg.w_pull * pull_loss_value
    )


def save_params(
    path: Union[str, Path],
    params: EmbeddingHeadParams,
    *,
    seed: Optional[int] = None,
    loss_config: Optional[LossConfig] = None,
) -> None:
    """Write parameters as a versioned JSON document.

    Weight arrays are stored flat in row-major order; dims allow reshaping.
    """
    doc = {
        "format_version": PARAMS_FORMAT_VERSION,
        "feature_dim": params.feature_dim,
        "hidden_dim": params.hidden_dim,
        "embed_dim": params.embed_dim,
        "w1": params.w1.ravel().tolist(),
        "b1": params.b1.tolist(),
        "w2": params.w2.ravel().tolist(),
        "b2": params.b2.tolist(),
        "seed": seed,
        "loss_config": asdict(loss_config) if loss_config is not None else None,
    }
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_params(
    path: Union[str, Path],
) -> tuple[EmbeddingHeadParams, Optional[int], Optional[LossConfig]]:
    """Read a parameter document written by `save_params`.

    Returns (params, seed, loss_config); the latter two may be None.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("format_version")
    if version != PARAMS_FORMAT_VERSION:
        raise ValueError(f"unsupported parameter file version: {version!r}")
    f, h, e = (int(doc[k]) for k in ("feature_dim", "hidden_dim", "embed_dim"))
    params = EmbeddingHeadParams(
        w1=np.asarray(doc["w1"], dtype=np.float64).reshape(h, f),
        b1=np.asarray(doc["b1"], dtype=np.float64),
        w2=np.asarray(doc["w2"], dtype=np.float64).reshape(e, h),
        b2=np.asarray(doc["b2"], dtype=np.float64),
    )
    seed = doc.get("seed")
    loss_cfg = doc.get("loss_config")
    return (
        params,
        int(seed) if seed is not None else None,
        LossConfig(**loss_cfg) if loss_cfg is not None else None,
    )
