"""Attribute branches and their disjoint grouping by body region.

Partition files are plain text, one group per line::

    # group: attribute[:classes], ...
    whole: motion:5, pose:6
    head: hat, gender

An attribute without ``:classes`` is binary.  Blank lines and ``#`` comments
are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, ParseError


@dataclass(frozen=True)
class BranchSpec:
    name: str
    classes: int
    group_id: int

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError(f"branch {self.name!r} needs at least 2 classes, got {self.classes}")

    @property
    def beta(self) -> float:
        """Classification-loss weight: one over the class count."""
        return 1.0 / self.classes


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint cover of branch indices ``0..B-1`` by ``K`` named groups."""

    groups: tuple
    names: tuple = ()

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        names = tuple(self.names) if self.names else tuple(f"g{k}" for k in range(len(groups)))
        object.__setattr__(self, "names", names)
        if len(self.names) != len(groups):
            raise ConfigError("partition: one name per group required")
        if any(len(g) == 0 for g in groups):
            raise ConfigError("partition: empty group")
        flat = [i for g in groups for i in g]
        if len(set(flat)) != len(flat):
            raise ConfigError("partition: groups overlap")
        if sorted(flat) != list(range(len(flat))):
            raise ConfigError(f"partition: groups must cover branches 0..{len(flat) - 1} exactly")

    @property
    def n_branches(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def gammas(self) -> tuple:
        return tuple(1.0 / len(g) for g in self.groups)

    def group_of(self, branch: int) -> int:
        for k, g in enumerate(self.groups):
            if branch in g:
                return k
        raise ConfigError(f"branch {branch} not in partition")

    @classmethod
    def singletons(cls, n_branches: int) -> "GroupPartition":
        return cls(tuple((i,) for i in range(n_branches)))


def make_layout(groups: Sequence[tuple]) -> tuple[list[BranchSpec], GroupPartition]:
    """Build specs and partition from ``[(group_name, [(attr, classes), ...]), ...]``."""
    specs, members, names = [], [], []
    seen = set()
    for k, (gname, attrs) in enumerate(groups):
        idx = []
        for attr, classes in attrs:
            if attr in seen:
                raise ConfigError(f"attribute {attr!r} appears in more than one group")
            seen.add(attr)
            idx.append(len(specs))
            specs.append(BranchSpec(attr, int(classes), k))
        members.append(tuple(idx))
        names.append(gname)
    return specs, GroupPartition(tuple(members), tuple(names))


# Class counts of the multi-class attributes are not published alongside the
# grouping; these follow the usual annotation of the two datasets.
_DUKE = [
    ("whole", [("motion", 5), ("pose", 6)]),
    ("head", [("hat", 2), ("gender", 2)]),
    ("upper", [("backpack", 2), ("top color", 8), ("shoulder bag", 2), ("handbag", 2)]),
    ("lower", [("top length", 2), ("bottom color", 7)]),
    ("foot", [("boots", 2), ("shoe color", 2)]),
]

_MARS = [
    ("whole", [("motion", 5), ("pose", 6)]),
    ("head", [("age", 2), ("hat", 2), ("hair", 2), ("gender", 2)]),
    ("upper", [("backpack", 2), ("top color", 11), ("shoulder bag", 2), ("handbag", 2), ("top length", 2)]),
    ("lower", [("bottom length", 2), ("bottom color", 9), ("type of bottom", 2)]),
]

# Same layout as _DUKE (5 groups of sizes 2, 2, 4, 2, 2) with small class counts.
SYNTHETIC_LAYOUT = [
    ("whole", [("motion", 3), ("pose", 3)]),
    ("head", [("hat", 2), ("gender", 2)]),
    ("upper", [("backpack", 2), ("top color", 4), ("shoulder bag", 2), ("handbag", 2)]),
    ("lower", [("top length", 2), ("bottom color", 4)]),
    ("foot", [("boots", 2), ("shoe color", 2)]),
]


def builtin_partitions(name: str, layout=None) -> tuple[list[BranchSpec], GroupPartition]:
    """Return ``(specs, partition)`` for ``duke``, ``mars`` or ``synthetic``.

    ``synthetic`` uses ``layout`` when given (same structure as
    ``SYNTHETIC_LAYOUT``), else the default synthetic layout.
    """
    if name == "duke":
        return make_layout(_DUKE)
    if name == "mars":
        return make_layout(_MARS)
    if name == "synthetic":
        return make_layout(layout if layout is not None else SYNTHETIC_LAYOUT)
    raise ConfigError(f"unknown partition {name!r}; expected duke, mars or synthetic")


def parse_partition(text: str) -> list:
    layout = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ParseError(f"expected 'group: attr, ...', got {raw!r}", lineno)
        gname, rest = line.split(":", 1)
        gname = gname.strip()
        attrs = []
        for item in rest.split(","):
            item = item.strip()
            if not item:
                continue
            attr, classes = item, "2"
            if ":" in item:
                attr, classes = item.rsplit(":", 1)
            try:
                attrs.append((attr.strip(), int(classes)))
            except ValueError:
                raise ParseError(f"bad class count in {item!r}", lineno) from None
        if not gname or not attrs:
            raise ParseError(f"group needs a name and at least one attribute: {raw!r}", lineno)
        layout.append((gname, attrs))
    return layout


def load_partition(path, branch_names: Sequence[str] | None = None):
    """Read a partition file; optionally check it covers exactly ``branch_names``."""
    layout = parse_partition(Path(path).read_text())
    specs, part = make_layout(layout)
    if branch_names is not None:
        names = [s.name for s in specs]
        if sorted(names) != sorted(branch_names):
            missing = sorted(set(branch_names) - set(names))
            extra = sorted(set(names) - set(branch_names))
            raise ConfigError(f"partition does not cover the branches: missing {missing}, unknown {extra}")
    return specs, part


def format_partition(specs: Sequence[BranchSpec], part: GroupPartition) -> str:
    lines = []
    for name, members in zip(part.names, part.groups):
        attrs = ", ".join(f"{specs[i].name}:{specs[i].classes}" for i in members)
        lines.append(f"{name}: {attrs}")
    return "\n".join(lines) + "\n"
