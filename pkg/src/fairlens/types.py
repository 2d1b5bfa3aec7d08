"""Core domain model: boxes, demographics, instances, detections, manifests.

Values are immutable after construction and validated eagerly, so a
``DatasetManifest`` in hand always satisfies its invariants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import DanglingImageRef, DuplicateInstanceId, InvalidBox

UNKNOWN = "Unknown"

POSITIVE = "Positive"
NEGATIVE = "Negative"

GENDERS = ("Male", "Female", UNKNOWN)
AGE_GROUPS = ("Young", "Middle", "Older", UNKNOWN)

# Ethnicity taxonomies are an open registry: datasets declare which canonical
# label set they use. Unknown is always admissible.
ETHNICITY_TAXONOMIES: dict[str, tuple[str, ...]] = {
    "rfw": ("Asian", "Indian", "Black", "White"),
    "fairface": ("White", "Latino", "Indian", "East Asian", "Southeast Asian",
                 "Black", "Middle Eastern"),
}


def register_taxonomy(name: str, ethnicities: tuple[str, ...]) -> None:
    ETHNICITY_TAXONOMIES[name] = tuple(ethnicities)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in image coordinates, origin top-left."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v != v or v in (float("inf"), float("-inf")):
                raise InvalidBox(f"non-finite coordinate {v!r}")
            if v < 0:
                raise InvalidBox(f"negative coordinate {v}")
            object.__setattr__(self, name, float(v))
        if not self.x_min < self.x_max:
            raise InvalidBox(f"x_min={self.x_min} must be < x_max={self.x_max}")
        if not self.y_min < self.y_max:
            raise InvalidBox(f"y_min={self.y_min} must be < y_max={self.y_max}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_dict(self) -> dict:
        return {"x_min": self.x_min, "y_min": self.y_min,
                "x_max": self.x_max, "y_max": self.y_max}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundingBox":
        return cls(float(d["x_min"]), float(d["y_min"]), float(d["x_max"]), float(d["y_max"]))


@dataclass(frozen=True)
class Demographics:
    ethnicity: str = UNKNOWN
    gender: str = UNKNOWN
    age_group: str = UNKNOWN

    def validate(self, taxonomy: Optional[str] = None) -> None:
        if taxonomy is not None:
            allowed = ETHNICITY_TAXONOMIES[taxonomy] + (UNKNOWN,)
            if self.ethnicity not in allowed:
                raise ValueError(f"ethnicity {self.ethnicity!r} not in taxonomy {taxonomy!r}")
        if self.gender not in GENDERS:
            raise ValueError(f"gender {self.gender!r} not in {GENDERS}")
        if self.age_group not in AGE_GROUPS:
            raise ValueError(f"age_group {self.age_group!r} not in {AGE_GROUPS}")

    def attribute(self, key: str) -> str:
        if key not in ("ethnicity", "gender", "age_group"):
            raise KeyError(key)
        return getattr(self, key)

    def as_dict(self) -> dict:
        return {"ethnicity": self.ethnicity, "gender": self.gender, "age_group": self.age_group}

    @classmethod
    def from_dict(cls, d: dict) -> "Demographics":
        return cls(d.get("ethnicity", UNKNOWN), d.get("gender", UNKNOWN),
                   d.get("age_group", UNKNOWN))


@dataclass(frozen=True)
class FaceInstance:
    instance_id: str
    image_id: str
    box: BoundingBox
    region_kind: str  # POSITIVE or NEGATIVE
    demographics: Demographics = field(default_factory=Demographics)
    embedding_ref: Optional[str] = None

    def __post_init__(self):
        if self.region_kind not in (POSITIVE, NEGATIVE):
            raise ValueError(f"region_kind must be {POSITIVE!r} or {NEGATIVE!r}")
        if self.region_kind == NEGATIVE and self.embedding_ref is not None:
            raise ValueError("Negative regions never carry an embedding_ref")

    @property
    def is_positive(self) -> bool:
        return self.region_kind == POSITIVE

    def as_dict(self) -> dict:
        d = {"instance_id": self.instance_id, "image_id": self.image_id,
             "box": self.box.as_dict(), "region_kind": self.region_kind,
             "demographics": self.demographics.as_dict()}
        if self.embedding_ref is not None:
            d["embedding_ref"] = self.embedding_ref
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FaceInstance":
        return cls(d["instance_id"], d["image_id"], BoundingBox.from_dict(d["box"]),
                   d["region_kind"], Demographics.from_dict(d.get("demographics", {})),
                   d.get("embedding_ref"))


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} not in [0,1]")
        object.__setattr__(self, "confidence", float(self.confidence))

    def as_dict(self) -> dict:
        return {"image_id": self.image_id, "box": self.box.as_dict(),
                "confidence": self.confidence}

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionRecord":
        return cls(d["image_id"], BoundingBox.from_dict(d["box"]), float(d["confidence"]))


@dataclass(frozen=True)
class ImageEntry:
    image_id: str
    path: Optional[str]
    group: Demographics

    def as_dict(self) -> dict:
        return {"image_id": self.image_id, "path": self.path, "group": self.group.as_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ImageEntry":
        return cls(d["image_id"], d.get("path"), Demographics.from_dict(d.get("group", {})))


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    images: tuple[ImageEntry, ...]
    instances: tuple[FaceInstance, ...]
    provenance: str = ""
    taxonomy: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "instances", tuple(self.instances))
        image_ids = {img.image_id for img in self.images}
        seen = set()
        for inst in self.instances:
            if inst.instance_id in seen:
                raise DuplicateInstanceId(inst.instance_id)
            seen.add(inst.instance_id)
            if inst.image_id not in image_ids:
                raise DanglingImageRef(inst.image_id)

    def image_ids(self) -> set[str]:
        return {img.image_id for img in self.images}

    def image_group(self, image_id: str) -> Demographics:
        for img in self.images:
            if img.image_id == image_id:
                return img.group
        raise KeyError(image_id)

    def image_group_map(self) -> dict[str, Demographics]:
        return {img.image_id: img.group for img in self.images}
