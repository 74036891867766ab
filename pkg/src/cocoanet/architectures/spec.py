from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

FAMILIES = ("vgg16", "resnet50", "vit")
VIT_HEADS = ("mlp", "linear")

# Per-family dropout defaults (attention, feed-forward).
_DROPOUT_DEFAULTS = {
    "vgg16": (0.0, 0.5),
    "resnet50": (0.0, 0.0),
    "vit": (0.5, 0.2),
}


@dataclass
class ArchitectureSpec:
    """Declarative description of one classifier.

    ``attn_dropout``/``ff_dropout`` default per family when left as None.
    The ViT fields are ignored by the convolutional families.
    """

    family: str
    num_classes: int = 3
    image_size: int = 224
    patch_size: int = 16
    depth: int = 8
    embed_dim: int = 256
    heads: int = 8
    mlp_hidden: int = 1024
    class_head_hidden: int = 256
    head: str = "mlp"
    attn_dropout: float | None = None
    ff_dropout: float | None = None
    extra: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown architecture family {self.family!r}; expected one of {FAMILIES}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        attn, ff = _DROPOUT_DEFAULTS[self.family]
        if self.attn_dropout is None:
            self.attn_dropout = attn
        if self.ff_dropout is None:
            self.ff_dropout = ff
        for name in ("attn_dropout", "ff_dropout"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {rate}")
        if self.family == "vit":
            if self.embed_dim % self.heads:
                raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
            if self.image_size % self.patch_size:
                raise ValueError(
                    f"image size {self.image_size} not divisible by patch size {self.patch_size}")
            if self.head not in VIT_HEADS:
                raise ValueError(f"unknown ViT head {self.head!r}; expected one of {VIT_HEADS}")
        elif self.image_size % 32:
            raise ValueError(f"{self.family} needs an image size divisible by 32, got {self.image_size}")

    @property
    def sequence_length(self) -> int:
        """ViT token count: patches plus the class token."""
        return (self.image_size // self.patch_size) ** 2 + 1

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("extra")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        known = {f.name for f in dataclasses.fields(cls)} - {"extra"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown architecture keys: {sorted(unknown)}")
        return cls(**d)
