"""Image ingest, decoding and JPEG re-encoding."""

from __future__ import annotations

import fnmatch
import functools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import EmptyCorpus, EncodeFailure, UnreadableImage, ValidationError
from .manifest import ClassLabel, ImageRecord, Manifest, sorted_by_path

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

# A rule maps a glob on the file's directory (relative to the root, POSIX
# separators) to a label and a generator tag. A generator of "*" takes the
# tag from the directory name one level below the class directory.
LabelingRules = Mapping[str, tuple]

LAYOUT_RULES: dict[str, tuple[ClassLabel, str]] = {
    "real/*": (ClassLabel.REAL, "*"),
    "gan/*": (ClassLabel.GAN, "*"),
    "dm/*": (ClassLabel.DM, "*"),
}


def _workers() -> int:
    return min(8, os.cpu_count() or 1)


def read_size(path: str | Path) -> tuple[int, int]:
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise UnreadableImage(path, f"unsupported format {im.format}")
            im.load()
            return im.size
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise UnreadableImage(path, str(exc)) from None


def load_rgb(path: str | Path) -> Image.Image:
    try:
        with Image.open(path) as im:
            return im.convert("RGB")
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise UnreadableImage(path, str(exc)) from None


def load_array(path: str | Path, size: tuple[int, int] | None = None) -> np.ndarray:
    """Decode to a float32 (3, H, W) array in [0, 1], bilinearly resized to ``size`` = (H, W)."""
    im = load_rgb(path)
    if size is not None and (im.height, im.width) != tuple(size):
        im = im.resize((size[1], size[0]), Image.BILINEAR)
    return (np.asarray(im, dtype=np.float32) / 255.0).transpose(2, 0, 1).copy()


def _match_rule(rel_dir: str, rules: LabelingRules) -> tuple[ClassLabel, str] | None:
    for pattern, (label, generator) in rules.items():
        if fnmatch.fnmatchcase(rel_dir, pattern) or fnmatch.fnmatchcase(rel_dir, pattern + "/*"):
            if generator == "*":
                parts = rel_dir.split("/")
                depth = pattern.count("/")
                generator = parts[depth] if len(parts) > depth else parts[-1]
            return ClassLabel.parse(label), generator
    return None


def ingest(root_dir: str | Path, labeling_rules: LabelingRules | None = None, seed: int = 0) -> Manifest:
    """Index every PNG/JPEG below ``root_dir`` that a labeling rule matches.

    Undecodable files are logged and skipped; their count is recorded in the
    manifest provenance.
    """
    root = Path(root_dir).resolve()
    if not root.is_dir():
        raise ValidationError(f"corpus root {root} is not a readable directory")
    rules = LAYOUT_RULES if labeling_rules is None else labeling_rules

    candidates: list[tuple[Path, ClassLabel, str]] = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        rel_dir = Path(dirpath).relative_to(root).as_posix()
        for name in sorted(filenames):
            if not name.lower().endswith(IMAGE_SUFFIXES):
                continue
            hit = _match_rule(rel_dir, rules)
            if hit is not None:
                candidates.append((Path(dirpath) / name, *hit))

    def probe(item):
        path, label, generator = item
        try:
            w, h = read_size(path)
        except UnreadableImage as exc:
            return exc
        return ImageRecord(path=path.as_posix(), label=label, generator=generator, width=w, height=h)

    with ThreadPoolExecutor(_workers()) as pool:
        results = list(pool.map(probe, candidates))
    records = [r for r in results if isinstance(r, ImageRecord)]
    skipped = [r for r in results if isinstance(r, UnreadableImage)]
    for exc in skipped:
        log.warning("skipping %s", exc)
    if not records:
        raise EmptyCorpus(f"no decodable images matched under {root}")
    return Manifest(
        sorted_by_path(records),
        seed=seed,
        provenance=f"ingest root={root.as_posix()} skipped={len(skipped)}",
    )


def common_root(paths: Sequence[str]) -> str:
    if len(paths) == 1:
        return os.path.dirname(paths[0])
    return os.path.commonpath(paths)


def encode_jpeg(src: str | Path, dst: str | Path, qf: int) -> None:
    """Baseline JPEG with 4:2:0 chroma subsampling and the standard tables scaled by ``qf``."""
    im = load_rgb(src)
    try:
        Path(dst).parent.mkdir(parents=True, exist_ok=True)
        im.save(dst, format="JPEG", quality=int(qf), subsampling="4:2:0", optimize=False, progressive=False)
    except (OSError, ValueError) as exc:
        raise EncodeFailure(src, qf, str(exc)) from None


def jpeg_corpus(m: Manifest, qf_list: Sequence[int], out_dir: str | Path) -> dict[int, Manifest]:
    """Re-encode every record at each quality factor under ``out_dir/qf<QF>/``."""
    qfs = [int(q) for q in qf_list]
    if not qfs:
        raise ValidationError("qf_list is empty")
    for q in qfs:
        if not 1 <= q <= 100:
            raise ValidationError(f"JPEG quality {q} outside [1, 100]")
    if len(m) == 0:
        return {q: Manifest((), seed=m.seed, provenance=f"jpeg_corpus qf={q}") for q in qfs}
    out_dir = Path(out_dir)
    root = common_root(m.paths)
    jobs = []
    for q in qfs:
        for r in m:
            rel = Path(os.path.relpath(r.path, root)).with_suffix(".jpg")
            jobs.append((r, q, out_dir / f"qf{q}" / rel))

    def work(job):
        r, q, dst = job
        encode_jpeg(r.path, dst, q)
        return replace(r, path=dst.as_posix())

    with ThreadPoolExecutor(_workers()) as pool:
        encoded = list(pool.map(work, jobs))
    out: dict[int, Manifest] = {}
    n = len(m)
    for i, q in enumerate(qfs):
        recs = encoded[i * n:(i + 1) * n]
        out[q] = Manifest(
            sorted_by_path(recs),
            seed=m.seed,
            provenance=f"{m.provenance} | jpeg_corpus qf={q}".strip(" |"),
        )
    return out


@functools.lru_cache(maxsize=8192)
def _cached_array(path: str, size: tuple[int, int] | None, mtime_ns: int) -> np.ndarray:
    arr = load_array(path, size)
    arr.setflags(write=False)
    return arr


def _mtime(path) -> int:
    try:
        return os.stat(path).st_mtime_ns
    except OSError as exc:
        raise UnreadableImage(path, str(exc)) from None


def load_images(paths: Sequence[str], size: tuple[int, int] | None) -> np.ndarray:
    """Decode ``paths`` into one (N, 3, H, W) float32 array; decoded images are memoised."""
    key = None if size is None else (int(size[0]), int(size[1]))
    with ThreadPoolExecutor(_workers()) as pool:
        arrays = list(pool.map(lambda p: _cached_array(str(p), key, _mtime(p)), paths))
    return np.stack(arrays) if arrays else np.zeros((0, 3, *(key or (0, 0))), dtype=np.float32)
