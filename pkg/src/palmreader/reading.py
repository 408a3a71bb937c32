"""Turn detected palm lines into trait text via a data-driven rule table.

The mapping from line geometry to personality text is folk material, not
science, so it ships as an editable rule file rather than code. Every
report carries a fixed entertainment disclaimer. Hand category only picks
the greeting framing; it never changes trait text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import RuleTableError
from .features import LineKind, PalmLine
from .synth import HandCategory

__all__ = [
    "DISCLAIMER",
    "LengthClass",
    "ShapeClass",
    "LineDescriptor",
    "ComboRule",
    "RuleTable",
    "ReportEntry",
    "TraitReport",
    "describe_line",
    "generate_report",
    "parse_rule_table",
    "load_rule_table",
    "default_rules_path",
]

DISCLAIMER = (
    "For entertainment only: palm reading is a folk practice, "
    "not a scientific or medical assessment."
)

# descriptor thresholds, as fractions of the image diagonal / arc length
SHORT_MAX = 0.25
LONG_MIN = 0.45
CURVED_MIN = 0.12


class LengthClass(Enum):
    SHORT = "short"
    MEDIUM = "medium"
    LONG = "long"


class ShapeClass(Enum):
    STRAIGHT = "straight"
    CURVED = "curved"


@dataclass(frozen=True)
class LineDescriptor:
    """Coarse geometry classes of one line; classes exist only when present."""

    kind: LineKind
    present: bool
    length_class: LengthClass | None = None
    shape_class: ShapeClass | None = None

    def __post_init__(self):
        if self.present:
            if self.length_class is None or self.shape_class is None:
                raise ValueError("present descriptor requires length and shape classes")
        elif self.length_class is not None or self.shape_class is not None:
            raise ValueError("absent descriptor must not carry length or shape classes")

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.label,
            "present": self.present,
            "length_class": self.length_class.value if self.present else None,
            "shape_class": self.shape_class.value if self.present else None,
        }


def describe_line(
    line: PalmLine,
    img_diagonal: float,
    *,
    short_max: float = SHORT_MAX,
    long_min: float = LONG_MIN,
    curved_min: float = CURVED_MIN,
) -> LineDescriptor:
    """Classify a detected line by normalized length and bend depth.

    Length thresholds compare arc_length / img_diagonal; both boundaries
    fall into Medium. Curved means depth / arc_length >= curved_min.
    """
    if img_diagonal <= 0:
        raise ValueError("img_diagonal must be positive")
    if not 0 < short_max < long_min:
        raise ValueError("thresholds must satisfy 0 < short_max < long_min")
    arc_norm = line.arc_length / img_diagonal
    if arc_norm < short_max:
        length = LengthClass.SHORT
    elif arc_norm > long_min:
        length = LengthClass.LONG
    else:
        length = LengthClass.MEDIUM
    depth_ratio = line.depth / line.arc_length if line.arc_length > 0 else 0.0
    shape = ShapeClass.CURVED if depth_ratio >= curved_min else ShapeClass.STRAIGHT
    return LineDescriptor(kind=line.kind, present=True, length_class=length, shape_class=shape)


# one conjunct of a combination predicate: (kind, mode, length, shape)
# mode is "present", "absent", or "match"; wildcards leave length/shape None
@dataclass(frozen=True)
class _Atom:
    kind: LineKind
    mode: str
    length: LengthClass | None = None
    shape: ShapeClass | None = None

    def holds(self, desc: LineDescriptor) -> bool:
        if self.mode == "absent":
            return not desc.present
        if not desc.present:
            return False
        if self.mode == "present":
            return True
        if self.length is not None and desc.length_class != self.length:
            return False
        if self.shape is not None and desc.shape_class != self.shape:
            return False
        return True


@dataclass(frozen=True)
class ComboRule:
    """Named multi-line predicate with supplementary text."""

    name: str
    atoms: tuple[_Atom, ...]
    text: str

    def matches(self, by_kind: dict[LineKind, LineDescriptor]) -> bool:
        return all(atom.holds(by_kind[atom.kind]) for atom in self.atoms)


@dataclass(frozen=True)
class RuleTable:
    """Total mapping from line descriptors to trait text.

    Totality is enforced at construction: one entry for every
    (kind, length, shape) triple, one absent text per kind, and exactly
    the declared combination rules.
    """

    version: int
    entries: dict[tuple[LineKind, LengthClass, ShapeClass], str]
    absent: dict[LineKind, str]
    combos: tuple[ComboRule, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.version < 1:
            raise RuleTableError(f"version must be >= 1, got {self.version}")
        for kind in LineKind:
            for length in LengthClass:
                for shape in ShapeClass:
                    key = (kind, length, shape)
                    text = self.entries.get(key)
                    if not text:
                        raise RuleTableError(
                            f"missing or empty rule {kind.label}.{length.value}.{shape.value}"
                        )
            if not self.absent.get(kind):
                raise RuleTableError(f"missing or empty rule {kind.label}.absent")
        if len(self.entries) != len(LineKind) * len(LengthClass) * len(ShapeClass):
            raise RuleTableError("rule table has entries beyond the known keys")
        names = [c.name for c in self.combos]
        if len(set(names)) != len(names):
            raise RuleTableError("duplicate combination names")
        for combo in self.combos:
            if not combo.text:
                raise RuleTableError(f"combination {combo.name} has empty text")

    def lookup(self, kind: LineKind, length: LengthClass, shape: ShapeClass) -> str:
        return self.entries[(kind, length, shape)]

    def absent_text(self, kind: LineKind) -> str:
        return self.absent[kind]

    def matching_combinations(
        self, descriptors: dict[LineKind, LineDescriptor]
    ) -> list[ComboRule]:
        return [c for c in self.combos if c.matches(descriptors)]


_KEY_RE = re.compile(r"^[a-z_][a-z0-9_]*(\.[a-z_*][a-z0-9_*]*)*$")


def _parse_atom(token: str, where: str) -> _Atom:
    parts = token.strip().split(".")
    try:
        kind = LineKind.from_label(parts[0])
    except ValueError:
        raise RuleTableError(f"{where}: unknown line kind in predicate {token!r}") from None
    if len(parts) == 2 and parts[1] in ("present", "absent"):
        return _Atom(kind=kind, mode=parts[1])
    if len(parts) == 3:
        length = None
        shape = None
        if parts[1] != "*":
            try:
                length = LengthClass(parts[1])
            except ValueError:
                raise RuleTableError(f"{where}: bad length class in {token!r}") from None
        if parts[2] != "*":
            try:
                shape = ShapeClass(parts[2])
            except ValueError:
                raise RuleTableError(f"{where}: bad shape class in {token!r}") from None
        return _Atom(kind=kind, mode="match", length=length, shape=shape)
    raise RuleTableError(f"{where}: malformed predicate atom {token!r}")


def parse_rule_table(text: str, source: str = "<string>") -> RuleTable:
    """Parse and validate rule file text.

    Line format: ``key = value``; full-line comments start with '#'.
    Keys: ``version``, ``combinations`` (comma list of declared combo
    names), ``<kind>.<length>.<shape>``, ``<kind>.absent``, and
    ``combo.<name> = <atom> & <atom> ... : <text>``.
    """
    version = None
    declared: list[str] | None = None
    entries: dict[tuple[LineKind, LengthClass, ShapeClass], str] = {}
    absent: dict[LineKind, str] = {}
    combo_lines: dict[str, tuple[tuple[_Atom, ...], str]] = {}
    seen: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise RuleTableError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        where = f"{source}:{lineno}"
        if key in seen:
            raise RuleTableError(f"{where}: duplicate key {key!r}")
        seen.add(key)

        if key == "version":
            try:
                version = int(value)
            except ValueError:
                raise RuleTableError(f"{where}: version must be an integer") from None
            continue
        if key == "combinations":
            declared = [n.strip() for n in value.split(",") if n.strip()]
            continue
        if not _KEY_RE.match(key):
            raise RuleTableError(f"{where}: malformed key {key!r}")

        parts = key.split(".")
        if parts[0] == "combo":
            if len(parts) != 2:
                raise RuleTableError(f"{where}: combo keys are combo.<name>")
            if ":" not in value:
                raise RuleTableError(f"{where}: combo value needs '<predicate> : <text>'")
            pred, _, combo_text = value.partition(":")
            atoms = tuple(_parse_atom(tok, where) for tok in pred.split("&"))
            combo_lines[parts[1]] = (atoms, combo_text.strip())
            continue
        try:
            kind = LineKind.from_label(parts[0])
        except ValueError:
            raise RuleTableError(f"{where}: unknown key {key!r}") from None
        if len(parts) == 2 and parts[1] == "absent":
            absent[kind] = value
            continue
        if len(parts) == 3:
            try:
                length = LengthClass(parts[1])
                shape = ShapeClass(parts[2])
            except ValueError:
                raise RuleTableError(f"{where}: unknown key {key!r}") from None
            entries[(kind, length, shape)] = value
            continue
        raise RuleTableError(f"{where}: unknown key {key!r}")

    if version is None:
        raise RuleTableError(f"{source}: missing version")
    if declared is None:
        raise RuleTableError(f"{source}: missing combinations declaration")
    if sorted(combo_lines) != sorted(declared):
        raise RuleTableError(
            f"{source}: declared combinations {sorted(declared)} "
            f"do not match provided {sorted(combo_lines)}"
        )
    combos = tuple(
        ComboRule(name=name, atoms=combo_lines[name][0], text=combo_lines[name][1])
        for name in declared
    )
    return RuleTable(version=version, entries=entries, absent=absent, combos=combos)


def default_rules_path() -> Path:
    return Path(__file__).parent / "rules" / "default.rules"


def load_rule_table(path) -> RuleTable:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise RuleTableError(f"cannot read rule file {p}: {e}") from e
    return parse_rule_table(text, source=str(p))


@dataclass(frozen=True)
class ReportEntry:
    descriptor: LineDescriptor
    text: str
    confidence: float

    def as_dict(self) -> dict:
        return {
            **self.descriptor.as_dict(),
            "text": self.text,
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class TraitReport:
    """Complete reading: one entry per kind plus matched combination texts."""

    entries: tuple[ReportEntry, ...]
    combinations: tuple[tuple[str, str], ...]
    category: HandCategory
    disclaimer: str = DISCLAIMER

    def __post_init__(self):
        kinds = [e.descriptor.kind for e in self.entries]
        if kinds != list(LineKind):
            raise ValueError("report must contain exactly one entry per kind, in kind order")
        if not self.disclaimer:
            raise ValueError("disclaimer must be non-empty")

    @property
    def greeting(self) -> str:
        side = "right" if self.category.is_right else "left"
        subject = "male" if self.category in (HandCategory.MALE_LEFT, HandCategory.MALE_RIGHT) else "female"
        return f"Palm reading for the {side} hand ({subject} form)."

    def entry_for(self, kind: LineKind) -> ReportEntry:
        return self.entries[int(kind)]

    def as_dict(self) -> dict:
        return {
            "greeting": self.greeting,
            "category": self.category.label,
            "entries": [e.as_dict() for e in self.entries],
            "combinations": [{"name": n, "text": t} for n, t in self.combinations],
            "disclaimer": self.disclaimer,
        }


def generate_report(
    lines: list[PalmLine],
    category: HandCategory,
    rules: RuleTable,
    img_diagonal: float,
    *,
    short_max: float = SHORT_MAX,
    long_min: float = LONG_MIN,
    curved_min: float = CURVED_MIN,
) -> TraitReport:
    """Build the full 4-entry report; kinds without a line get absent text."""
    by_kind: dict[LineKind, PalmLine] = {}
    for line in lines:
        if line.kind in by_kind:
            raise ValueError(f"duplicate line kind {line.kind.label}")
        by_kind[line.kind] = line

    descriptors: dict[LineKind, LineDescriptor] = {}
    entries = []
    for kind in LineKind:
        line = by_kind.get(kind)
        if line is None:
            desc = LineDescriptor(kind=kind, present=False)
            entries.append(ReportEntry(descriptor=desc, text=rules.absent_text(kind), confidence=0.0))
        else:
            desc = describe_line(
                line,
                img_diagonal,
                short_max=short_max,
                long_min=long_min,
                curved_min=curved_min,
            )
            text = rules.lookup(kind, desc.length_class, desc.shape_class)
            entries.append(ReportEntry(descriptor=desc, text=text, confidence=line.confidence))
        descriptors[kind] = desc

    combos = tuple((c.name, c.text) for c in rules.matching_combinations(descriptors))
    return TraitReport(entries=tuple(entries), combinations=combos, category=category)
