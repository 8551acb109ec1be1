from __future__ import annotations

import numpy as np
import pytest

from conftest import read_json
from oracles import naive_avg_pool2, naive_conv2d, naive_gap
from deepfeaturex.backbone import (
    Backbone,
    BackboneConfig,
    BinaryHead,
    attach_binary_head,
    build_reference_backbone,
    forward_features,
    freeze,
    load_backbone,
    save_backbone,
)
from deepfeaturex.basemodel import (
    BaseModel,
    evaluate_base_model,
    extract_phi,
    extract_phi_batch,
    load_base_model,
    save_base_model,
    train_base_model,
)
from deepfeaturex.data import (
    ClassLabel,
    Manifest,
    balance_eval_set,
    carve_validation,
    ingest,
    make_unbalanced_subset,
    split_three_way,
)
from deepfeaturex.errors import (
    BadConfig,
    DivergedLoss,
    InputTooShort,
    LengthMismatch,
    MissingOtherClass,
    NotFinalized,
    NotFrozenBase,
    ShapeMismatch,
)
from deepfeaturex.data.images import load_images
from deepfeaturex.evaluation.metrics import Mode
from deepfeaturex.fusion import (
    BRANCH_ORDER,
    FusionHead,
    FusionModel,
    HeadConfig,
    build_fusion_model,
    concat_features,
    head_forward,
    load_fusion_model,
    predict,
    predict_batch,
    save_fusion_model,
    train_head,
)
from deepfeaturex.nn import Parameter, Tensor, sgd_step
from deepfeaturex.nn.functional import cross_entropy
from deepfeaturex.toy import make_toy_corpus
from deepfeaturex.training import TrainConfig, fit

REAL, GAN, DM = ClassLabel.REAL, ClassLabel.GAN, ClassLabel.DM
SMALL = BackboneConfig(widths=(4, 8), input_size=(16, 16), seed=3)


class ConstantBackbone:
    """Stub extractor whose feature map is a constant ``value`` everywhere."""

    feature_channels = 9
    input_size = (8, 8)

    def __init__(self, value):
        self.value = value
        self.params = [Parameter(np.zeros(1), "stub", frozen=True)]

    def forward(self, batch):
        return Tensor(np.full((batch.shape[0], self.feature_channels, 2, 2), self.value))

    def architecture(self):
        return {"arch": "constant"}


def frozen_base(label, config=SMALL, seed=0):
    b = build_reference_backbone(BackboneConfig(widths=config.widths, input_size=config.input_size, seed=seed))
    freeze(b)
    return BaseModel(b, label, finalized=True)


# backbone


def test_backbone_default_shapes():
    b = build_reference_backbone()
    assert b.feature_channels == 128
    assert b.output_spatial == (4, 4)
    out = forward_features(b, np.zeros((1, 3, 64, 64), dtype=np.float32))
    assert out.shape == (1, 128, 4, 4)


def test_backbone_floors_odd_sizes():
    b = Backbone(BackboneConfig(widths=(4, 4, 4), input_size=(21, 19)))
    assert b.output_spatial == (2, 2)
    assert forward_features(b, np.zeros((2, 3, 21, 19), dtype=np.float32)).shape == (2, 4, 2, 2)


def test_backbone_seeded_and_pure(rng):
    a, b = build_reference_backbone(seed=5), build_reference_backbone(seed=5)
    assert a.digest() == b.digest()
    assert a.digest() != build_reference_backbone(seed=6).digest()
    x = rng.uniform(size=(2, 3, 64, 64)).astype(np.float32)
    assert np.array_equal(forward_features(a, x).data, forward_features(a, x).data)


def test_backbone_matches_composed_naive_layers(rng):
    b = Backbone(SMALL)
    x = rng.uniform(size=(3, 16, 16))
    h = (x - SMALL.input_mean) / SMALL.input_std
    for i in range(len(SMALL.widths)):
        w = b.params[2 * i].data.astype(np.float64)
        bias = b.params[2 * i + 1].data.astype(np.float64)
        h = naive_avg_pool2(np.maximum(naive_conv2d(h, w, bias, 1, 1), 0))
    got = forward_features(b, x[None].astype(np.float32)).data[0]
    assert np.abs(got - h).max() < 1e-6


def test_backbone_rejects_wrong_input():
    b = Backbone(SMALL)
    with pytest.raises(ShapeMismatch):
        forward_features(b, np.zeros((1, 3, 32, 32), dtype=np.float32))
    with pytest.raises(ShapeMismatch):
        forward_features(b, np.zeros((1, 1, 16, 16), dtype=np.float32))


@pytest.mark.parametrize(
    "kwargs",
    [dict(widths=(8,)), dict(widths=(8, 0)), dict(widths=(4, 4), depth=3), dict(input_size=(4, 4), widths=(2, 2, 2)), dict(input_std=0)],
)
def test_backbone_bad_config(kwargs):
    with pytest.raises(BadConfig):
        BackboneConfig(**kwargs)


def test_binary_head_attach_and_strip(rng):
    b = Backbone(SMALL)
    before = b.digest()
    clf = attach_binary_head(b, zero_init=True)
    x = rng.uniform(size=(5, 3, 16, 16)).astype(np.float32)
    logits = clf.forward(Tensor(x))
    assert logits.shape == (5, 2)
    assert np.array_equal(logits.data, np.zeros((5, 2)))
    stripped, _ = clf.strip()
    assert stripped.digest() == before


def test_freeze_blocks_training(rng):
    b = Backbone(SMALL)
    clf = attach_binary_head(b)
    x = rng.uniform(size=(4, 3, 16, 16)).astype(np.float32)
    out_before = clf.forward(Tensor(x)).data.copy()
    freeze(b)
    freeze(b)
    digest = b.digest()
    assert np.array_equal(clf.forward(Tensor(x)).data, out_before)
    for _ in range(10):
        cross_entropy(clf.forward(Tensor(x)), [0, 1, 0, 1]).backward()
        sgd_step(clf.params, 0.5)
    assert b.digest() == digest


def test_backbone_save_load(tmp_path):
    b = Backbone(SMALL)
    digest = save_backbone(tmp_path / "bb.dfxckpt", b)
    back = load_backbone(tmp_path / "bb.dfxckpt")
    assert back.digest() == digest and back.config == b.config


# training loop


def test_fit_restores_best_epoch():
    p = Parameter([0.0], "p", dtype=np.float64)
    vals = iter([3.0, 1.0, 2.0, 1.0])
    snapshots = []

    def batch_loss(idx):
        d = p + (-1.0)
        return (d * d).sum()

    def val_loss():
        snapshots.append(float(p.data[0]))
        return next(vals)

    result = fit([p], 4, batch_loss, val_loss, TrainConfig(epochs=4, learning_rate=0.1, batch_size=4))
    assert result.selected_epoch == 2
    assert float(p.data[0]) == snapshots[1]
    assert [e["epoch"] for e in result.log] == [1, 2, 3, 4]


def test_fit_diverged():
    p = Parameter([0.0], "p", dtype=np.float64)
    with pytest.raises(DivergedLoss):
        fit([p], 2, lambda idx: (p * float("nan")).sum(), lambda: 0.0, TrainConfig(epochs=1))


# base models


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = make_toy_corpus(tmp_path_factory.mktemp("small") / "c", per_class=150, size=32, seed=7, strength=0.2)
    return split_three_way(ingest(root), seed=7)


def _train_gan(small_corpus):
    base, _, _ = small_corpus
    train, val = carve_validation(make_unbalanced_subset(base, GAN, 0.9, seed=7), 0.1, seed=7, by_binary=True)
    return train_base_model(
        train, val, GAN,
        BackboneConfig(widths=(8, 16, 32), input_size=(32, 32), seed=7),
        TrainConfig(epochs=5, learning_rate=0.1, batch_size=8, seed=7),
    )


def test_base_model_learns_separable_class(small_corpus):
    bm = _train_gan(small_corpus)
    report = evaluate_base_model(bm, balance_eval_set(small_corpus[2], seed=7))
    assert report.recall == 1.0
    assert report.accuracy >= 0.9
    assert bm.finalized and all(p.frozen for p in bm.params)
    again = _train_gan(small_corpus)
    assert again.digest() == bm.digest()


def test_base_model_needs_others(small_corpus):
    base = small_corpus[0]
    only = Manifest(tuple(base.by_label(GAN)))
    with pytest.raises(MissingOtherClass):
        train_base_model(only, only, GAN, SMALL)


def test_constant_predominant_predictions(small_corpus, tmp_path):
    """A head that always says PREDOMINANT scores recall 1 and precision 1/3 on a balanced set."""
    bm = frozen_base(GAN, BackboneConfig(widths=(4, 8), input_size=(32, 32)))
    head = BinaryHead(8, zero_init=True)
    head.bias.data[:] = [0.0, 1.0]
    bm.binary_head = head
    test = balance_eval_set(small_corpus[2], seed=0)
    report = evaluate_base_model(bm, test)
    assert report.recall == 1.0
    assert report.precision == pytest.approx(1 / 3)
    two_class = Manifest(tuple(r for r in test if r.label != DM))
    assert evaluate_base_model(bm, two_class).precision == 0.5


def test_phi_shapes_and_constant_stub():
    bm = BaseModel(ConstantBackbone(2.5), DM, finalized=True)
    phi = extract_phi(bm, np.zeros((3, 8, 8), dtype=np.float32))
    assert phi.shape == (9,) and np.all(phi.data == 2.5)
    ref = frozen_base(DM, BackboneConfig())
    assert extract_phi_batch(ref, np.zeros((2, 3, 64, 64), dtype=np.float32)).shape == (2, 128)


def test_phi_requires_finalized():
    b = build_reference_backbone(SMALL)
    with pytest.raises(NotFinalized):
        extract_phi_batch(BaseModel(b, REAL), np.zeros((1, 3, 16, 16), dtype=np.float32))


def test_phi_is_gap_of_feature_map(rng):
    bm = frozen_base(REAL)
    x = rng.uniform(size=(2, 3, 16, 16)).astype(np.float32)
    fmap = forward_features(bm.backbone, x).data
    assert np.abs(extract_phi_batch(bm, x)[1] - naive_gap(fmap[1])).max() < 1e-6


def test_base_model_bundle_roundtrip(tmp_path, rng):
    bm = frozen_base(DM)
    bm.binary_head = BinaryHead(8, seed=2)
    meta = save_base_model(bm, tmp_path / "b")
    back = load_base_model(tmp_path / "b")
    assert back.digest() == meta["backbone_digest"] == bm.digest()
    assert back.predominant == DM and back.finalized
    x = rng.uniform(size=(2, 3, 16, 16)).astype(np.float32)
    assert np.array_equal(extract_phi_batch(back, x), extract_phi_batch(bm, x))


# fusion head


def test_concat_order_and_shapes():
    out = concat_features([1.0, 1.0], [2.0, 2.0], [3.0, 3.0])
    assert out.data.tolist() == [[1, 1], [2, 2], [3, 3]]
    assert concat_features(np.zeros(8), np.zeros(8), np.zeros(8)).shape == (3, 8)
    with pytest.raises(LengthMismatch):
        concat_features(np.zeros(8), np.zeros(8), np.zeros(16))


def test_head_lengths_and_guards(rng):
    head = FusionHead()
    assert head.trunk(Tensor(rng.normal(size=(3, 128)))).shape == (64, 122)
    assert head_forward(rng.normal(size=(4, 3, 128)), head).shape == (4, 3)
    with pytest.raises(InputTooShort):
        head_forward(rng.normal(size=(3, 6)), head)
    with pytest.raises(ShapeMismatch):
        head_forward(rng.normal(size=(2, 128)), head)


def test_head_zero_weights_give_bias(rng):
    head = FusionHead(zero_init=True)
    head.out_bias.data[:] = [0.5, -1.0, 2.0]
    out = head_forward(rng.normal(size=(3, 40)), head)
    assert np.allclose(out.data, [0.5, -1.0, 2.0])


def test_head_config_is_fixed():
    with pytest.raises(BadConfig):
        HeadConfig(kernel_sizes=(3, 3, 3, 3, 3))
    with pytest.raises(BadConfig):
        HeadConfig(channel_widths=(8, 8))


def test_fusion_model_ordering_and_dims():
    bases = [frozen_base(c) for c in (REAL, DM, GAN)]
    fm = build_fusion_model(bases)
    assert tuple(bm.predominant for bm in fm.base_models) == BRANCH_ORDER
    with pytest.raises(BadConfig):
        FusionModel(tuple(bases), FusionHead())
    mixed = [frozen_base(DM), frozen_base(GAN), frozen_base(REAL, BackboneConfig(widths=(4, 16), input_size=(16, 16)))]
    with pytest.raises(LengthMismatch):
        build_fusion_model(mixed)


def test_prediction_tie_break_and_probabilities(rng):
    fm = build_fusion_model([frozen_base(c) for c in BRANCH_ORDER], HeadConfig())
    for w, b in fm.head.convs:
        w.data[:] = 0
    fm.head.out_weight.data[:] = 0
    label, probs = predict(fm, rng.uniform(size=(3, 16, 16)).astype(np.float32))
    assert label == REAL
    assert np.allclose(probs, 1 / 3)

    fm2 = build_fusion_model([frozen_base(c, seed=i) for i, c in enumerate(BRANCH_ORDER)])
    _, probs = predict_batch(fm2, rng.uniform(size=(6, 3, 16, 16)).astype(np.float32))
    assert np.all(np.abs(probs.sum(axis=1) - 1) < 1e-9)


def test_train_head_rejects_unfrozen_base(small_corpus):
    bases = [frozen_base(c, BackboneConfig(widths=(4, 8), input_size=(32, 32))) for c in BRANCH_ORDER]
    bases[1].backbone.params[0].unfreeze()
    fm = build_fusion_model(bases)
    head = small_corpus[1]
    with pytest.raises(NotFrozenBase):
        train_head(fm, head, head)


def test_train_head_keeps_bases_and_roundtrips(small_corpus, tmp_path):
    bases = [frozen_base(c, BackboneConfig(widths=(4, 8), input_size=(32, 32)), seed=i) for i, c in enumerate(BRANCH_ORDER)]
    fm = build_fusion_model(bases, HeadConfig(channel_widths=(4, 4, 4, 4, 4)))
    digests = fm.base_digests()
    train, val = carve_validation(small_corpus[1], 0.1, seed=0)
    train_head(fm, train, val, config=TrainConfig(epochs=2, learning_rate=1.0, batch_size=32))
    assert fm.base_digests() == digests
    assert len(fm.training_log) == 2 and fm.selected_epoch in (1, 2)

    meta = save_fusion_model(fm, tmp_path / "fm")
    back = load_fusion_model(tmp_path / "fm")
    assert back.base_digests() == meta["base_digests"] == digests
    assert back.head.digest() == fm.head.digest()
    assert back.weights == fm.weights
    x = np.stack([np.full((3, 32, 32), v, dtype=np.float32) for v in (0.2, 0.7)])
    assert np.array_equal(predict_batch(back, x)[1], predict_batch(fm, x)[1])


def test_toy_fusion_validation_accuracy(toy_run):
    """Held-out head-training validation split, carved the same way the CLI does."""
    head = Manifest.load(toy_run.workdir / "manifests" / "head_train.jsonl")
    train, val = carve_validation(head, 0.1, seed=0)
    val = balance_eval_set(val, seed=0)
    labels, _ = predict_batch(toy_run.fusion, load_images(val.paths, (64, 64)))
    acc = np.mean([p == r.label for p, r in zip(labels, val)])
    assert acc >= 0.9
    meta = read_json(toy_run.workdir / "models" / "fusion" / "meta.json")
    assert meta["class_weights"] == {c.tag: 1.0 / n for c, n in train.class_counts().items()}


def test_toy_base_reports_are_binary(toy_run):
    for c in BRANCH_ORDER:
        row = read_json(toy_run.workdir / "reports" / f"base_{c.tag}.json")["rows"][0]
        assert row["mode"] == Mode.BINARY.value
