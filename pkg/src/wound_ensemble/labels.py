"""Class vocabulary.

The master order is D, V, P, S, BG, N. A :class:`LabelSpace` is an ordered
selection from that vocabulary; its order is whatever the caller fixed at
construction (``LabelSpace.subset`` keeps master order, ``LabelSpace.of``
keeps the order given).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigError


@dataclass(frozen=True)
class ClassLabel:
    code: str
    display_name: str
    non_wound: bool

    def __str__(self) -> str:
        return self.code


D = ClassLabel("D", "Diabetic", False)
V = ClassLabel("V", "Venous", False)
P = ClassLabel("P", "Pressure", False)
S = ClassLabel("S", "Surgical", False)
BG = ClassLabel("BG", "Background", True)
N = ClassLabel("N", "Normal skin", True)

MASTER_ORDER: tuple[ClassLabel, ...] = (D, V, P, S, BG, N)
_BY_CODE = {c.code: c for c in MASTER_ORDER}
NON_WOUND_CODES = ("BG", "N")


def label(code: str | ClassLabel) -> ClassLabel:
    if isinstance(code, ClassLabel):
        return code
    try:
        return _BY_CODE[code.strip().upper()]
    except (KeyError, AttributeError):
        raise ConfigError(f"unknown class code {code!r}; expected one of {[c.code for c in MASTER_ORDER]}") from None


def master_rank(code: str | ClassLabel) -> int:
    return MASTER_ORDER.index(label(code))


@dataclass(frozen=True)
class LabelSpace:
    classes: tuple[ClassLabel, ...]

    def __post_init__(self):
        codes = [c.code for c in self.classes]
        if not codes:
            raise ConfigError("label space is empty")
        if len(set(codes)) != len(codes):
            raise ConfigError(f"duplicate classes in label space: {codes}")

    @classmethod
    def of(cls, codes: Iterable[str | ClassLabel]) -> "LabelSpace":
        """Label space in exactly the given order."""
        return cls(tuple(label(c) for c in codes))

    @classmethod
    def subset(cls, codes: Iterable[str | ClassLabel]) -> "LabelSpace":
        """Label space over ``codes`` in master order."""
        wanted = {label(c).code for c in codes}
        return cls(tuple(c for c in MASTER_ORDER if c.code in wanted))

    @classmethod
    def full(cls) -> "LabelSpace":
        return cls(MASTER_ORDER)

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(c.code for c in self.classes)

    @property
    def wound_classes(self) -> tuple[ClassLabel, ...]:
        return tuple(c for c in self.classes if not c.non_wound)

    def wound_space(self) -> "LabelSpace":
        wound = self.wound_classes
        if not wound:
            raise ConfigError(f"label space {self.codes} has no wound classes")
        return LabelSpace(wound)

    def with_context(self) -> "LabelSpace":
        """This space's wound classes followed by BG and N (patch label space)."""
        return LabelSpace(self.wound_classes + (BG, N))

    def index(self, code: str | ClassLabel) -> int:
        c = label(code)
        try:
            return self.classes.index(c)
        except ValueError:
            raise ConfigError(f"class {c.code} not in label space {self.codes}") from None

    def __contains__(self, code) -> bool:
        try:
            return label(code) in self.classes
        except ConfigError:
            return False

    def __len__(self) -> int:
        return len(self.classes)

    def __iter__(self):
        return iter(self.classes)

    def __str__(self) -> str:
        return "".join(self.codes)


def parse_codes(text: str | Sequence[str]) -> list[str]:
    """Accepts ``"S,V"``, ``["S", "V"]`` or a run-together string like ``"BGNVS"``."""
    if not isinstance(text, str):
        return [label(c).code for c in text]
    if "," in text:
        return [label(c).code for c in text.split(",") if c.strip()]
    out, rest = [], text.strip().upper()
    while rest:
        if rest.startswith("BG"):
            out.append("BG")
            rest = rest[2:]
        else:
            out.append(label(rest[0]).code)
            rest = rest[1:]
    return out
