"""Generalization benchmark templates.

Nine benches cross fake family (G = GAN, D = DM, GD = both) with generator
familiarity (i = seen in training, o = unseen, io = both).
"""

from __future__ import annotations

from .manifest import GenBenchSpec

BENCH_NAMES = ("T_G_i", "T_G_o", "T_G_io", "T_D_i", "T_D_o", "T_D_io", "T_GD_i", "T_GD_o", "T_GD_io")

REFERENCE_GENERATORS = {
    "G_i": ("gaugan", "biggan", "progan", "cyclegan"),
    "G_o": ("ganformer", "denoising_diffusion_gan", "diffusion_gan", "projected_gan", "taming_transformers"),
    "D_i": ("diffusion", "cocofake"),
    "D_o": ("vq_diffusion", "ddpm", "cocoglide"),
}
REFERENCE_REAL_SOURCES = ("afhq", "imagenet", "coco")

TOY_GENERATORS = {
    "G_i": ("stylegan2", "progan"),
    "G_o": ("biggan", "cyclegan"),
    "D_i": ("ddpm", "latent_diffusion"),
    "D_o": ("stable_diffusion", "glide"),
}
TOY_REAL_SOURCES = ("celeba", "ffhq", "coco")


def bench_specs(
    generators: dict[str, tuple[str, ...]],
    real_sources: tuple[str, ...],
    fakes_total: int,
    reals_total: int,
    seed: int = 0,
) -> list[GenBenchSpec]:
    g = {
        "G_i": generators["G_i"],
        "G_o": generators["G_o"],
        "D_i": generators["D_i"],
        "D_o": generators["D_o"],
    }
    g["G_io"] = g["G_i"] + g["G_o"]
    g["D_io"] = g["D_i"] + g["D_o"]
    g["GD_i"] = g["G_i"] + g["D_i"]
    g["GD_o"] = g["G_o"] + g["D_o"]
    g["GD_io"] = g["G_io"] + g["D_io"]
    return [
        GenBenchSpec(name, g[name[2:]], fakes_total, real_sources, reals_total, seed=seed + i)
        for i, name in enumerate(BENCH_NAMES)
    ]


def reference_bench_specs(seed: int = 0) -> list[GenBenchSpec]:
    """2000 fakes split equally over the listed generators plus 2000 reals from three sources."""
    return bench_specs(REFERENCE_GENERATORS, REFERENCE_REAL_SOURCES, 2000, 2000, seed)


def toy_bench_specs(fakes_total: int = 16, reals_total: int = 16, seed: int = 0) -> list[GenBenchSpec]:
    return bench_specs(TOY_GENERATORS, TOY_REAL_SOURCES, fakes_total, reals_total, seed)
