"""Class-specialised feature extractors.

A base model is a backbone trained to separate one predominant class from
"others" on a 90:10 subset, restored to its best validation epoch, frozen,
and used without its binary head. Its feature vector for an image is the
spatial mean of the backbone's last feature map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backbone import (
    BackboneConfig,
    BinaryClassifier,
    BinaryHead,
    FeatureExtractor,
    attach_binary_head,
    build_reference_backbone,
    forward_features,
    freeze,
    load_backbone,
    save_backbone,
)
from .data.images import load_images
from .data.manifest import Binary, ClassLabel, Manifest
from .errors import EmptyTestSet, MissingOtherClass, NotFinalized, ShapeMismatch
from .evaluation.metrics import MetricsReport, Mode, confusion_matrix, metrics_from_confusion
from .nn import checkpoint
from .nn.functional import cross_entropy, global_avg_pool
from .nn.tensor import Tensor, no_grad, params_digest
from .training import TrainConfig, fit


@dataclass
class BaseModel:
    backbone: FeatureExtractor
    predominant: ClassLabel
    binary_head: BinaryHead | None = None
    training_log: list[dict] = field(default_factory=list)
    selected_epoch: int = 0
    seed: int = 0
    finalized: bool = False

    @property
    def feature_dim(self) -> int:
        return self.backbone.feature_channels

    @property
    def params(self):
        return list(self.backbone.params)

    def digest(self) -> str:
        return params_digest(self.backbone.params)

    def classifier(self) -> BinaryClassifier:
        if self.binary_head is None:
            raise NotFinalized("base model has no binary head to evaluate with")
        return BinaryClassifier(self.backbone, self.binary_head)


def binary_targets(m: Manifest, predominant: ClassLabel) -> np.ndarray:
    """1 for PREDOMINANT, 0 for OTHERS; records without a relabeling use their class."""
    return np.array(
        [
            (r.binary is Binary.PREDOMINANT) if r.binary is not None else (r.label == predominant)
            for r in m
        ],
        dtype=np.int64,
    )


def _forward_logits(model: BinaryClassifier, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    out = []
    with no_grad():
        for s in range(0, len(images), batch_size):
            out.append(model.forward(Tensor(images[s:s + batch_size])).data)
    return np.concatenate(out) if out else np.zeros((0, 2))


def train_base_model(
    subset: Manifest,
    val: Manifest,
    predominant: ClassLabel,
    backbone_config: BackboneConfig | None = None,
    train_config: TrainConfig | None = None,
    backbone: FeatureExtractor | None = None,
) -> BaseModel:
    """Binary training on an unbalanced subset; returns a finalized (frozen, head-stripped) model."""
    predominant = ClassLabel.parse(predominant)
    train_config = train_config or TrainConfig()
    y_train = binary_targets(subset, predominant)
    y_val = binary_targets(val, predominant)
    if len(y_train) == 0 or y_train.min() == 1:
        raise MissingOtherClass(f"training subset for {predominant.name} has no 'others' records")
    if y_train.max() == 0:
        raise MissingOtherClass(f"training subset for {predominant.name} has no predominant records")
    if len(y_val) == 0 or len(set(y_val.tolist())) < 2:
        raise MissingOtherClass("validation set must contain both predominant and 'others' records")

    if backbone is None:
        backbone = build_reference_backbone(backbone_config or BackboneConfig(seed=train_config.seed))
    model = attach_binary_head(backbone, seed=train_config.seed)
    size = backbone.input_size
    x_train = load_images(subset.paths, size)
    x_val = load_images(val.paths, size)

    def batch_loss(idx):
        return cross_entropy(model.forward(Tensor(x_train[idx])), y_train[idx])

    def val_loss():
        logits = _forward_logits(model, x_val)
        return float(cross_entropy(Tensor(logits), y_val).data)

    result = fit(model.params, len(y_train), batch_loss, val_loss, train_config)
    freeze(model)
    bb, head = model.strip()
    return BaseModel(
        backbone=bb,
        predominant=predominant,
        binary_head=head,
        training_log=result.log,
        selected_epoch=result.selected_epoch,
        seed=train_config.seed,
        finalized=True,
    )


def extract_phi_batch(bm: BaseModel, images: np.ndarray | Tensor) -> np.ndarray:
    """(N, 3, H, W) images -> (N, L) feature vectors."""
    if not bm.finalized or any(not p.frozen for p in bm.backbone.params):
        raise NotFinalized(f"{bm.predominant.name} base model is not finalized")
    x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=np.float32))
    with no_grad():
        return global_avg_pool(forward_features(bm.backbone, x), channel_axis=1).data


def extract_phi(bm: BaseModel, image: np.ndarray | Tensor) -> Tensor:
    """(3, H, W) image -> length-L feature vector."""
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    if data.ndim != 3:
        raise ShapeMismatch(f"expected a (3, H, W) image, got {data.shape}")
    return Tensor(extract_phi_batch(bm, data[None])[0])


def evaluate_base_model(bm: BaseModel, test: Manifest, setting: str = "") -> MetricsReport:
    """Binary metrics with PREDOMINANT as the positive class."""
    if len(test) == 0:
        raise EmptyTestSet("empty test manifest")
    y = binary_targets(test, bm.predominant)
    logits = _forward_logits(bm.classifier(), load_images(test.paths, bm.backbone.input_size))
    # ties go to OTHERS (index 0)
    preds = np.argmax(logits, axis=1)
    cm = confusion_matrix(preds.tolist(), y.tolist(), classes=("others", "predominant"))
    return metrics_from_confusion(cm, Mode.BINARY, setting=setting or f"base_{bm.predominant.tag}")


def save_base_model(bm: BaseModel, directory: str | Path) -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    digest = save_backbone(directory / "backbone.dfxckpt", bm.backbone)
    head_digest = None
    if bm.binary_head is not None:
        head_digest = checkpoint.save(directory / "binary_head.dfxckpt", bm.binary_head.params)
    meta = {
        "predominant": bm.predominant.tag,
        "feature_dim": bm.feature_dim,
        "selected_epoch": bm.selected_epoch,
        "training_log": bm.training_log,
        "seed": bm.seed,
        "finalized": bm.finalized,
        "backbone_digest": digest,
        "binary_head_digest": head_digest,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return meta


def load_base_model(directory: str | Path) -> BaseModel:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    backbone = load_backbone(directory / "backbone.dfxckpt")
    head = None
    head_path = directory / "binary_head.dfxckpt"
    if head_path.exists():
        head = BinaryHead(backbone.feature_channels)
        loaded, _ = checkpoint.load(head_path)
        checkpoint.restore_into(head.params, loaded)
    return BaseModel(
        backbone=backbone,
        predominant=ClassLabel.parse(meta["predominant"]),
        binary_head=head,
        training_log=meta["training_log"],
        selected_epoch=meta["selected_epoch"],
        seed=meta["seed"],
        finalized=meta["finalized"],
    )
