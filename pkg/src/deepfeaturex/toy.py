"""Procedural three-class corpus for desk-scale runs.

Every image is a smooth random colour field. GAN images add a faint
period-2 checkerboard (the up-sampling grid artifact), DM images add
per-pixel Gaussian noise, REAL images add nothing. Generator tags cycle
through a few names per class so benchmark assembly has something to draw
from.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .data.manifest import ClassLabel

REAL_SOURCES = ("celeba", "ffhq", "coco")
GAN_GENERATORS = ("stylegan2", "progan", "biggan", "cyclegan")
DM_GENERATORS = ("ddpm", "latent_diffusion", "stable_diffusion", "glide")

TAGS = {
    ClassLabel.REAL: REAL_SOURCES,
    ClassLabel.GAN: GAN_GENERATORS,
    ClassLabel.DM: DM_GENERATORS,
}


def _smooth_field(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = rng.uniform(0.2, 0.8, size=(3, 4, 4))
    up = np.stack(
        [np.asarray(Image.fromarray(c.astype(np.float32)).resize((size, size), Image.BICUBIC)) for c in coarse]
    )
    return up


def render(label: ClassLabel, rng: np.random.Generator, size: int = 64, strength: float = 0.08) -> np.ndarray:
    """One (H, W, 3) uint8 image of class ``label``."""
    img = _smooth_field(rng, size)
    if label == ClassLabel.GAN:
        yy, xx = np.mgrid[0:size, 0:size]
        img = img + strength * np.where((yy + xx) % 2 == 0, 1.0, -1.0)[None]
    elif label == ClassLabel.DM:
        img = img + rng.normal(0.0, strength, size=img.shape)
    return (np.clip(img, 0, 1) * 255 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def make_toy_corpus(
    root: str | Path,
    per_class: int = 300,
    size: int = 64,
    seed: int = 0,
    strength: float = 0.08,
) -> Path:
    """Write ``per_class`` PNGs per class under root/{real,gan,dm}/<tag>/."""
    root = Path(root)
    for label in (ClassLabel.REAL, ClassLabel.GAN, ClassLabel.DM):
        rng = np.random.default_rng([seed, int(label)])
        tags = TAGS[label]
        for i in range(per_class):
            tag = tags[i % len(tags)]
            out = root / label.tag / tag / f"{label.tag}_{i:05d}.png"
            out.parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(render(label, rng, size, strength)).save(out)
    return root
