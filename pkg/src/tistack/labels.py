"""Label schemes and the unification protocol.

A scheme names integer codes (0 is always unlabeled background). A
unification map translates one scheme's codes into a common grouping so
segmentations from different tools can be compared. Codes with no
counterpart in the target grouping become "distinct" classes numbered
from 100 upward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import UnmappedLabelError, ValidationError
from .volume import Volume

DISTINCT_BASE = 100

POLICY_ERROR = "error"
POLICY_DISTINCT = "pass-through-as-distinct"


@dataclass(frozen=True)
class LabelEntry:
    code: int
    abbr: str
    name: str


@dataclass(frozen=True)
class LabelScheme:
    """Named set of label codes; code 0 is reserved for background."""

    name: str
    entries: tuple[LabelEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValidationError(f"scheme {self.name!r} has no entries")
        codes = [e.code for e in self.entries]
        if any(c == 0 for c in codes):
            raise ValidationError("code 0 is reserved for background")
        if any(c < 0 or int(c) != c for c in codes):
            raise ValidationError("label codes must be positive integers")
        dupes = {c for c in codes if codes.count(c) > 1}
        if dupes:
            raise ValidationError(f"duplicate codes in scheme {self.name!r}: {sorted(dupes)}")
        abbrs = [e.abbr for e in self.entries]
        dupe_abbrs = {a for a in abbrs if abbrs.count(a) > 1}
        if dupe_abbrs:
            raise ValidationError(
                f"duplicate abbreviations in scheme {self.name!r}: {sorted(dupe_abbrs)}"
            )

    def codes(self) -> tuple[int, ...]:
        return tuple(e.code for e in self.entries)

    def code_for(self, abbr: str) -> int:
        for e in self.entries:
            if e.abbr == abbr:
                return e.code
        raise ValidationError(f"no entry {abbr!r} in scheme {self.name!r}")


@dataclass(frozen=True)
class UnificationMap:
    """source code -> target code pairs plus a policy for uncovered codes.

    Background maps to background unconditionally; pairs may not touch 0.
    """

    source: str
    target: str
    pairs: dict[int, int] = field(default_factory=dict)
    unmatched: str = POLICY_ERROR

    def __post_init__(self):
        if self.unmatched not in (POLICY_ERROR, POLICY_DISTINCT):
            raise ValidationError(f"unknown unmatched policy {self.unmatched!r}")
        clean = {}
        for k, v in self.pairs.items():
            k, v = int(k), int(v)
            if k == 0:
                raise ValidationError("code 0 may not appear as a map source")
            if v < 0:
                raise ValidationError("target codes must be >= 0")
            clean[k] = v
        object.__setattr__(self, "pairs", clean)


_RATNUS13 = (
    (1, "AN", "Anterior Nucleus"),
    (2, "CM", "Center Median"),
    (3, "LD", "Lateral Dorsal"),
    (4, "LP", "Lateral Posterior"),
    (5, "MD", "Mediodorsal"),
    (6, "PuA", "Anterior Pulvinar"),
    (7, "PuI", "Inferior Pulvinar"),
    (8, "VA", "Ventral Anterior"),
    (9, "VLa", "Ventral Lateral Anterior"),
    (10, "VLp", "Ventral Lateral Posterior"),
    (11, "VPL", "Ventral Posterior Lateral"),
    (12, "VPM", "Ventral Posterior Medial"),
    (13, "CL", "Central Lateral"),
)

_UNIFIED7 = (
    (1, "A", "Anterior group"),
    (2, "M", "Medial group"),
    (3, "Mid", "Midline group"),
    (4, "VA", "Ventral Anterior group"),
    (5, "VP", "Ventral Posterior group"),
    (6, "VL", "Ventral Lateral group"),
    (7, "P", "Posterior group"),
)

# Placeholder grouping by classical atlas anatomy. The true correspondence
# table is an editable config decision, not code: review and adjust before
# using the result for any comparison that matters.
_RATNUS13_TO_UNIFIED7 = {
    1: 1,   # AN -> Anterior
    2: 2,   # CM -> Medial
    3: 1,   # LD -> Anterior
    4: 7,   # LP -> Posterior
    5: 2,   # MD -> Medial
    6: 7,   # PuA -> Posterior
    7: 7,   # PuI -> Posterior
    8: 4,   # VA -> Ventral Anterior
    9: 6,   # VLa -> Ventral Lateral
    10: 6,  # VLp -> Ventral Lateral
    11: 5,  # VPL -> Ventral Posterior
    12: 5,  # VPM -> Ventral Posterior
    13: 2,  # CL -> Medial
}


def _scheme_from_rows(name: str, rows) -> LabelScheme:
    return LabelScheme(name, tuple(LabelEntry(c, a, n) for c, a, n in rows))


def builtin_scheme(name: str) -> LabelScheme:
    if name == "ratnus13":
        return _scheme_from_rows("ratnus13", _RATNUS13)
    if name == "unified7":
        return _scheme_from_rows("unified7", _UNIFIED7)
    raise ValidationError(f"no built-in scheme named {name!r}")


def default_unification_map() -> UnificationMap:
    """Editable default ratnus13 -> unified7 grouping (see comment above)."""
    return UnificationMap("ratnus13", "unified7", dict(_RATNUS13_TO_UNIFIED7))


def load_scheme(doc) -> LabelScheme:
    """Build a scheme from a parsed JSON document or a built-in name."""
    if isinstance(doc, str):
        return builtin_scheme(doc)
    try:
        entries = tuple(
            LabelEntry(int(e["code"]), str(e["abbr"]), str(e.get("name", e["abbr"])))
            for e in doc["entries"]
        )
        return LabelScheme(str(doc["name"]), entries)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed scheme document: {exc}") from exc


def load_mapping(doc) -> UnificationMap:
    """Build a unification map from a parsed JSON document."""
    try:
        pairs = {int(k): int(v) for k, v in doc.get("pairs", {}).items()}
        return UnificationMap(
            source=str(doc["source"]),
            target=str(doc["target"]),
            pairs=pairs,
            unmatched=str(doc.get("unmatched", POLICY_ERROR)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed mapping document: {exc}") from exc


def scheme_to_doc(scheme: LabelScheme) -> dict:
    return {
        "name": scheme.name,
        "entries": [{"code": e.code, "abbr": e.abbr, "name": e.name} for e in scheme.entries],
    }


def mapping_to_doc(um: UnificationMap) -> dict:
    return {
        "source": um.source,
        "target": um.target,
        "pairs": {str(k): v for k, v in sorted(um.pairs.items())},
        "unmatched": um.unmatched,
    }


def remap(lv: Volume, um: UnificationMap) -> Volume:
    """Voxelwise code translation. Background (0) always stays 0.

    Codes missing from the map either raise (policy "error") or are
    assigned distinct target codes 100, 101, ... in ascending source-code
    order (policy "pass-through-as-distinct").
    """
    data = lv.data
    present = np.unique(data)
    lookup = {0: 0, **um.pairs}
    missing = sorted(int(c) for c in present if int(c) not in lookup)
    if missing:
        if um.unmatched == POLICY_ERROR:
            raise UnmappedLabelError(
                f"volume contains code(s) {missing} not covered by the map "
                f"{um.source!r} -> {um.target!r}"
            )
        taken = {v for v in um.pairs.values() if v >= DISTINCT_BASE}
        nxt = DISTINCT_BASE
        for code in missing:
            while nxt in taken:
                nxt += 1
            lookup[code] = nxt
            taken.add(nxt)
            nxt += 1
    src = np.array(sorted(int(c) for c in present))
    tgt = np.array([lookup[int(c)] for c in src])
    out = tgt[np.searchsorted(src, data)]
    return lv.with_data(out.astype(np.int32))


def validate_mapping(um: UnificationMap, source: LabelScheme,
                     target: LabelScheme) -> dict:
    """Report-only coverage check; never raises for coverage gaps."""
    src_codes = set(source.codes())
    tgt_codes = set(target.codes())
    covered = set(um.pairs)
    uncovered = sorted(src_codes - covered)
    used_targets = {v for k, v in um.pairs.items() if k in src_codes}
    unused_targets = sorted(tgt_codes - used_targets)
    invalid_targets = sorted(
        {v for v in um.pairs.values() if v != 0 and v < DISTINCT_BASE and v not in tgt_codes}
    )
    distinct = {k: v for k, v in sorted(um.pairs.items()) if v >= DISTINCT_BASE}
    if um.unmatched == POLICY_DISTINCT:
        taken = set(distinct.values())
        nxt = DISTINCT_BASE
        for code in uncovered:
            while nxt in taken:
                nxt += 1
            distinct[code] = nxt
            taken.add(nxt)
            nxt += 1
    return {
        "source": um.source,
        "target": um.target,
        "uncovered": uncovered,
        "unused_targets": unused_targets,
        "invalid_targets": invalid_targets,
        "distinct": {str(k): v for k, v in distinct.items()},
        "complete": not uncovered and not invalid_targets,
    }


def compose(first: UnificationMap, second: UnificationMap) -> UnificationMap:
    """Map equal to applying `first` then `second` (both must be explicit)."""
    if first.target != second.source:
        raise ValidationError(
            f"cannot compose: {first.target!r} != {second.source!r}"
        )
    pairs = {}
    for k, mid in first.pairs.items():
        if mid == 0:
            pairs[k] = 0
        elif mid in second.pairs:
            pairs[k] = second.pairs[mid]
        elif second.unmatched == POLICY_ERROR:
            raise UnmappedLabelError(f"intermediate code {mid} not covered")
        else:
            raise ValidationError(
                "cannot statically compose through a pass-through policy"
            )
    return UnificationMap(first.source, second.target, pairs, first.unmatched)


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
