"""Dataset-construction protocols.

Every sampler sorts its input by path before drawing, and draws from a
generator seeded with ``(seed, stream)``, so outputs depend only on the
record set and the seed.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable, Hashable, Sequence

import numpy as np

from ..errors import BadFractions, InsufficientOthers, InsufficientPool, MissingClass, TooFewRecords
from .manifest import (
    CLASSES,
    Binary,
    ClassLabel,
    GenBenchSpec,
    ImageRecord,
    Manifest,
    Split,
    sorted_by_path,
)


def largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    """Integer parts of ``total * fractions`` summing exactly to ``total``.

    Leftover units go to the largest fractional remainders; ties go to the
    earlier position.
    """
    targets = [total * f for f in fractions]
    counts = [math.floor(t) for t in targets]
    leftover = total - sum(counts)
    order = sorted(range(len(targets)), key=lambda i: (-(targets[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def equal_division(total: int, parts: int) -> list[int]:
    """Split ``total`` into ``parts`` quotas differing by at most one; earlier parts get the extra."""
    q, r = divmod(total, parts)
    return [q + 1 if i < r else q for i in range(parts)]


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def _shuffled(records: Sequence[ImageRecord], rng: np.random.Generator) -> list[ImageRecord]:
    ordered = sorted_by_path(records)
    return [ordered[i] for i in rng.permutation(len(ordered))]


def _sample(records: Sequence[ImageRecord], k: int, rng: np.random.Generator) -> list[ImageRecord]:
    ordered = sorted_by_path(records)
    idx = rng.choice(len(ordered), size=k, replace=False)
    return [ordered[i] for i in sorted(idx)]


def _require_all_classes(m: Manifest) -> dict[ClassLabel, int]:
    counts = m.class_counts()
    for c in CLASSES:
        if counts[c] == 0:
            raise MissingClass(c)
    return counts


def stratified_partition(
    records: Sequence[ImageRecord],
    fractions: Sequence[float],
    seed: int,
    key: Callable[[ImageRecord], Hashable] = lambda r: r.label,
    min_per_group: int = 0,
) -> list[list[ImageRecord]]:
    """Partition ``records`` per stratum with largest-remainder quotas."""
    groups: dict[Hashable, list[ImageRecord]] = {}
    for r in sorted_by_path(records):
        groups.setdefault(key(r), []).append(r)
    parts: list[list[ImageRecord]] = [[] for _ in fractions]
    for stream, g in enumerate(sorted(groups, key=_stratum_order)):
        members = groups[g]
        if len(members) < min_per_group:
            raise TooFewRecords(f"stratum {g} has {len(members)} records, need >= {min_per_group}")
        counts = largest_remainder(len(members), fractions)
        shuffled = _shuffled(members, _rng(seed, stream))
        start = 0
        for part, n in zip(parts, counts):
            part.extend(shuffled[start:start + n])
            start += n
    return [list(sorted_by_path(p)) for p in parts]


def _stratum_order(g):
    if isinstance(g, ClassLabel):
        return (0, int(g), "")
    if isinstance(g, Binary):
        return (1, g.index, "")
    return (2, 0, str(g))


def split_three_way(
    m: Manifest,
    fractions: Sequence[float] = (0.4, 0.4, 0.2),
    seed: int = 0,
) -> tuple[Manifest, Manifest, Manifest]:
    """Stratified split into (BASE_TRAIN, HEAD_TRAIN, TEST) manifests."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise BadFractions(f"need three positive fractions, got {tuple(fractions)}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise BadFractions(f"fractions sum to {sum(fractions)!r}, not 1")
    counts = m.class_counts()
    for c, n in counts.items():
        if 0 < n < 3:
            raise TooFewRecords(f"class {c.name} has {n} records, need >= 3")
    parts = stratified_partition(m.records, fractions, seed)
    splits = (Split.BASE_TRAIN, Split.HEAD_TRAIN, Split.TEST)
    frac_txt = "/".join(f"{f:g}" for f in fractions)
    return tuple(
        Manifest(
            tuple(replace(r, split=s) for r in part),
            seed=seed,
            provenance=f"split_three_way fractions={frac_txt} part={s.value}",
        )
        for part, s in zip(parts, splits)
    )


def carve_validation(m: Manifest, fraction: float = 0.1, seed: int = 0, by_binary: bool = False) -> tuple[Manifest, Manifest]:
    """Stratified (train, val) carve-out; each stratum keeps at least one record on each side when it has two."""
    if not 0 < fraction < 1:
        raise BadFractions(f"validation fraction must be in (0, 1), got {fraction}")
    key = (lambda r: r.binary) if by_binary else (lambda r: r.label)
    groups: dict[Hashable, list[ImageRecord]] = {}
    for r in sorted_by_path(m.records):
        groups.setdefault(key(r), []).append(r)
    train: list[ImageRecord] = []
    val: list[ImageRecord] = []
    for stream, g in enumerate(sorted(groups, key=_stratum_order)):
        members = groups[g]
        _, n_val = largest_remainder(len(members), (1 - fraction, fraction))
        if len(members) >= 2:
            n_val = min(max(n_val, 1), len(members) - 1)
        shuffled = _shuffled(members, _rng(seed, 1000 + stream))
        val.extend(shuffled[:n_val])
        train.extend(shuffled[n_val:])
    prov = f"{m.provenance} | carve_validation fraction={fraction:g}".strip(" |")
    return (
        Manifest(sorted_by_path(train), seed=seed, provenance=prov + " part=train"),
        Manifest(sorted_by_path(val), seed=seed, provenance=prov + " part=val"),
    )


def others_quota(predominant_count: int, ratio: float = 0.9) -> int:
    """Number of "others" records that makes ``predominant_count`` a ``ratio`` share."""
    if not 0 < ratio < 1:
        raise BadFractions(f"ratio must be in (0, 1), got {ratio}")
    return math.floor(predominant_count * (1 - ratio) / ratio + 0.5)


def make_unbalanced_subset(m: Manifest, predominant: ClassLabel, ratio: float = 0.9, seed: int = 0) -> Manifest:
    """All ``predominant`` records plus a seeded half-and-half sample of the other two classes."""
    counts = _require_all_classes(m)
    predominant = ClassLabel.parse(predominant)
    p = counts[predominant]
    k = others_quota(p, ratio)
    rest = [c for c in CLASSES if c != predominant]
    quotas = equal_division(k, 2)
    available = sum(counts[c] for c in rest)
    if available < k or any(counts[c] < q for c, q in zip(rest, quotas)):
        detail = ", ".join(f"{c.name}: need {q}, have {counts[c]}" for c, q in zip(rest, quotas))
        raise InsufficientOthers(f"needs {k} others, has {available} ({detail})")

    out = [replace(r, binary=Binary.PREDOMINANT) for r in m.by_label(predominant)]
    for c, q in zip(rest, quotas):
        picked = _sample(m.by_label(c), q, _rng(seed, int(predominant), int(c)))
        out.extend(replace(r, binary=Binary.OTHERS) for r in picked)
    return Manifest(
        sorted_by_path(out),
        seed=seed,
        provenance=(
            f"make_unbalanced_subset predominant={predominant.tag} ratio={ratio:g} "
            f"others={k} ({rest[0].tag}={quotas[0]}, {rest[1].tag}={quotas[1]}); "
            "others may be shared with the other subsets"
        ),
    )


def balance_eval_set(m: Manifest, seed: int = 0) -> Manifest:
    """Subsample every class down to the smallest class count."""
    counts = _require_all_classes(m)
    n = min(counts.values())
    out: list[ImageRecord] = []
    for c in CLASSES:
        members = m.by_label(c)
        out.extend(members if len(members) == n else _sample(members, n, _rng(seed, 2000 + int(c))))
    prov = f"{m.provenance} | balance_eval_set per_class={n}".strip(" |")
    return Manifest(sorted_by_path(out), seed=seed, provenance=prov)


def assemble_generalization_set(pool: Manifest, spec: GenBenchSpec) -> Manifest:
    """Draw equal per-tag quotas of fakes and reals from ``pool``."""
    fakes = [r for r in pool if r.label != ClassLabel.REAL]
    reals = [r for r in pool if r.label == ClassLabel.REAL]
    plan = []
    if spec.fake_generators:
        plan += [(tag, q, fakes) for tag, q in zip(spec.fake_generators, equal_division(spec.fakes_total, len(spec.fake_generators)))]
    if spec.real_sources:
        plan += [(tag, q, reals) for tag, q in zip(spec.real_sources, equal_division(spec.reals_total, len(spec.real_sources)))]

    out: list[ImageRecord] = []
    for stream, (tag, quota, candidates) in enumerate(plan):
        members = [r for r in candidates if r.generator == tag]
        if len(members) < quota:
            raise InsufficientPool(tag, quota, len(members))
        out.extend(_sample(members, quota, _rng(spec.seed, 3000 + stream)))
    return Manifest(
        sorted_by_path(out),
        seed=spec.seed,
        provenance=f"assemble_generalization_set bench={spec.name} fakes={spec.fakes_total} reals={spec.reals_total}",
    )
