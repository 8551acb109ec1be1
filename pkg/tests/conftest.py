from __future__ import annotations

import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from deepfeaturex.basemodel import extract_phi_batch, load_base_model
from deepfeaturex.cli import main
from deepfeaturex.data import ClassLabel, ImageRecord, Manifest, Split
from deepfeaturex.data.images import load_images
from deepfeaturex.fusion import BRANCH_ORDER, load_fusion_model

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def synthetic_manifest(counts: dict[ClassLabel, int], generators: dict[ClassLabel, tuple[str, ...]] | None = None) -> Manifest:
    """Records with fake paths; nothing touches the disk."""
    records = []
    for label, n in counts.items():
        gens = (generators or {}).get(label, (label.tag,))
        for i in range(n):
            g = gens[i % len(gens)]
            records.append(ImageRecord(f"/corpus/{label.tag}/{g}/{i:06d}.png", label, g, Split.UNASSIGNED, 64, 64))
    return Manifest(tuple(records), seed=0)


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """The full reference workflow on a 900-image procedural corpus, driven through the CLI.

    Base-model digests and features are captured between train-base and
    train-head so freeze invariance can be checked against the saved bundles.
    """
    root = tmp_path_factory.mktemp("toy")
    corpus, wd, cfg = root / "corpus", root / "wd", root / "config.json"
    t0 = time.perf_counter()
    assert main(["make-toy", "--out", str(corpus), "--per-class", "300", "--write-config", str(cfg), "--workdir", str(wd)]) == 0
    common = ["--config", str(cfg)]
    for step in (["ingest"], ["split"], ["make-subsets"], *(["train-base", "--class", c.tag] for c in BRANCH_ORDER)):
        assert main(step + common) == 0, step

    test = Manifest.load(wd / "manifests" / "test.jsonl")
    probe = load_images(test.paths[:12], (64, 64))
    bases = {c: load_base_model(wd / "models" / f"base_{c.tag}") for c in BRANCH_ORDER}
    before = SimpleNamespace(
        digests={c: bm.digest() for c, bm in bases.items()},
        phi={c: extract_phi_batch(bm, probe) for c, bm in bases.items()},
    )

    assert main(["train-head"] + common) == 0
    assert main(["eval"] + common) == 0
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(
        root=root,
        corpus=corpus,
        workdir=wd,
        config=cfg,
        common=common,
        test=test,
        probe=probe,
        before=before,
        fusion=load_fusion_model(wd / "models" / "fusion"),
        elapsed=elapsed,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def read_json(path: Path):
    import json

    return json.loads(Path(path).read_text(encoding="utf-8"))
