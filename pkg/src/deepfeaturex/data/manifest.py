"""Dataset ledger types and their JSONL serialization."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator

from ..errors import DuplicatePath, ValidationError


class ClassLabel(enum.IntEnum):
    """Image origin. The integer value is also the logit index."""

    REAL = 0
    GAN = 1
    DM = 2

    @property
    def tag(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: str | int | ClassLabel) -> ClassLabel:
        if isinstance(value, ClassLabel):
            return value
        if isinstance(value, int):
            return cls(value)
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ValidationError(f"unknown class label {value!r}") from None


CLASSES: tuple[ClassLabel, ...] = (ClassLabel.REAL, ClassLabel.GAN, ClassLabel.DM)


class Split(enum.Enum):
    BASE_TRAIN = "base_train"
    HEAD_TRAIN = "head_train"
    TEST = "test"
    UNASSIGNED = "unassigned"


class Binary(enum.Enum):
    """Relabeling used by base-model subsets."""

    OTHERS = "others"
    PREDOMINANT = "predominant"

    @property
    def index(self) -> int:
        return 1 if self is Binary.PREDOMINANT else 0


@dataclass(frozen=True)
class ImageRecord:
    path: str
    label: ClassLabel
    generator: str
    split: Split = Split.UNASSIGNED
    width: int = 0
    height: int = 0
    binary: Binary | None = None

    def __post_init__(self):
        if not self.generator:
            raise ValidationError(f"record {self.path} has an empty generator tag")

    def to_json(self) -> str:
        # fixed key order
        doc = {
            "path": self.path,
            "label": self.label.tag,
            "generator": self.generator,
            "split": self.split.value,
            "width": self.width,
            "height": self.height,
        }
        if self.binary is not None:
            doc["binary"] = self.binary.value
        return json.dumps(doc, ensure_ascii=False)

    @classmethod
    def from_dict(cls, doc: dict) -> ImageRecord:
        return cls(
            path=doc["path"],
            label=ClassLabel.parse(doc["label"]),
            generator=doc["generator"],
            split=Split(doc.get("split", "unassigned")),
            width=int(doc.get("width", 0)),
            height=int(doc.get("height", 0)),
            binary=Binary(doc["binary"]) if doc.get("binary") else None,
        )


_HEADER = re.compile(r"^#deepfeaturex-manifest v1 seed=(\d+)\s*$")


@dataclass(frozen=True)
class Manifest:
    records: tuple[ImageRecord, ...]
    seed: int = 0
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for r in self.records:
            if r.path in seen:
                raise DuplicatePath(f"duplicate path in manifest: {r.path}")
            seen.add(r.path)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ImageRecord]:
        return iter(self.records)

    @property
    def paths(self) -> list[str]:
        return [r.path for r in self.records]

    def by_label(self, label: ClassLabel) -> list[ImageRecord]:
        return [r for r in self.records if r.label == label]

    def class_counts(self) -> dict[ClassLabel, int]:
        counts = {c: 0 for c in CLASSES}
        for r in self.records:
            counts[r.label] += 1
        return counts

    def with_split(self, split: Split) -> Manifest:
        return replace(self, records=tuple(replace(r, split=split) for r in self.records))

    def dumps(self) -> str:
        lines = [f"#deepfeaturex-manifest v1 seed={self.seed}"]
        if self.provenance:
            lines.append("#provenance " + json.dumps(self.provenance, ensure_ascii=False))
        lines.extend(r.to_json() for r in self.records)
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> Manifest:
        lines = text.splitlines()
        if not lines:
            raise ValidationError("empty manifest file")
        m = _HEADER.match(lines[0])
        if m is None:
            raise ValidationError(f"bad manifest header: {lines[0]!r}")
        seed = int(m.group(1))
        provenance = ""
        records = []
        for line in lines[1:]:
            if not line.strip():
                continue
            if line.startswith("#provenance "):
                provenance = json.loads(line[len("#provenance "):])
                continue
            if line.startswith("#"):
                continue
            records.append(ImageRecord.from_dict(json.loads(line)))
        return cls(tuple(records), seed=seed, provenance=provenance)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> Manifest:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def sorted_by_path(records: Iterable[ImageRecord]) -> tuple[ImageRecord, ...]:
    return tuple(sorted(records, key=lambda r: r.path))


@dataclass(frozen=True)
class GenBenchSpec:
    name: str
    fake_generators: tuple[str, ...]
    fakes_total: int
    real_sources: tuple[str, ...]
    reals_total: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "fake_generators", tuple(self.fake_generators))
        object.__setattr__(self, "real_sources", tuple(self.real_sources))
        if self.fakes_total < 0 or self.reals_total < 0:
            raise ValidationError("bench totals must be non-negative")
        if self.fakes_total and not self.fake_generators:
            raise ValidationError(f"bench {self.name}: fakes requested but no generators listed")
        if self.reals_total and not self.real_sources:
            raise ValidationError(f"bench {self.name}: reals requested but no sources listed")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fake_generators"] = list(self.fake_generators)
        d["real_sources"] = list(self.real_sources)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> GenBenchSpec:
        return cls(
            name=doc["name"],
            fake_generators=tuple(doc["fake_generators"]),
            fakes_total=int(doc["fakes_total"]),
            real_sources=tuple(doc["real_sources"]),
            reals_total=int(doc["reals_total"]),
            seed=int(doc.get("seed", 0)),
        )

    @classmethod
    def load_many(cls, path: str | Path) -> list[GenBenchSpec]:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(doc, dict) and "benches" in doc:
            doc = doc["benches"]
        if isinstance(doc, dict):
            doc = [doc]
        return [cls.from_dict(d) for d in doc]
