"""Per-class regex induction and membership checks.

The induced form is deliberately constrained: observed character set, length
range of the pre-suffix portion (after removal of a literal prefix), the set
of observed public suffixes, and an optional literal prefix. Matching is
evaluated directly on these fields; the textual regex is rendered for
documentation only. The benign class uses a match-all regex.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .domain import DomainName
from .synth import BENIGN_LABEL

_PREFIX_MIN_LEN = 2  # shorter common prefixes are treated as coincidence


@dataclass(frozen=True)
class ClassRegex:
    class_name: str
    charset: frozenset[str] = frozenset()
    len_min: int = 0
    len_max: int = 0
    suffixes: frozenset[str] = frozenset()
    literal_prefix: str = ""
    match_all: bool = False


def _pre_suffix(d: DomainName) -> str:
    # full domain minus "." + suffix; sub-label dots stay inside
    return d.full[: -(len(d.suffix) + 1)]


def benign_regex() -> ClassRegex:
    return ClassRegex(class_name=BENIGN_LABEL, match_all=True)


def _common_prefix(strings: list[str]) -> str:
    prefix = strings[0]
    for s in strings[1:]:
        while not s.startswith(prefix):
            prefix = prefix[:-1]
            if not prefix:
                return ""
    return prefix


def induce_class_regex(samples: list[DomainName], class_name: str) -> ClassRegex:
    if not samples:
        raise ValueError("cannot induce a regex from zero samples")
    pres = [_pre_suffix(d) for d in samples]
    prefix = _common_prefix(pres) if len(pres) > 1 else ""
    if len(prefix) < _PREFIX_MIN_LEN:
        prefix = ""
    bodies = [p[len(prefix):] for p in pres]
    charset = frozenset("".join(pres))
    lens = [len(b) for b in bodies]
    return ClassRegex(
        class_name=class_name,
        charset=charset,
        len_min=min(lens),
        len_max=max(lens),
        suffixes=frozenset(d.suffix for d in samples),
        literal_prefix=prefix,
    )


def regex_matches(r: ClassRegex, d: DomainName) -> bool:
    if r.match_all:
        return True
    if d.suffix not in r.suffixes:
        return False
    pre = _pre_suffix(d)
    if not pre.startswith(r.literal_prefix):
        return False
    body = pre[len(r.literal_prefix):]
    if not (r.len_min <= len(body) <= r.len_max):
        return False
    return set(body) <= r.charset


def _char_class(charset: frozenset[str]) -> str:
    chars = sorted(charset)
    # collapse runs into ranges for readability
    parts = []
    i = 0
    while i < len(chars):
        j = i
        while j + 1 < len(chars) and ord(chars[j + 1]) == ord(chars[j]) + 1:
            j += 1
        if j - i >= 2:
            parts.append(f"{re.escape(chars[i])}-{re.escape(chars[j])}")
            i = j + 1
        else:
            parts.append(re.escape(chars[i]))
            i += 1
    return "[" + "".join(parts) + "]"


def render_regex(r: ClassRegex) -> str:
    """Equivalent textual regex, for documentation and the bundle manifest."""
    if r.match_all:
        return ".*"
    suffix_alt = "|".join(sorted(r.suffixes))
    return (
        re.escape(r.literal_prefix)
        + _char_class(r.charset)
        + f"{{{r.len_min},{r.len_max}}}"
        + r"\." + f"({suffix_alt})"
    )


def save_regexes(regexes: dict[str, ClassRegex], path) -> None:
    rows = {}
    for name, r in regexes.items():
        rows[name] = {
            "charset": "".join(sorted(r.charset)),
            "min": r.len_min,
            "max": r.len_max,
            "suffixes": sorted(r.suffixes),
            "prefix": r.literal_prefix,
            "match_all": r.match_all,
            "rendered": render_regex(r),
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_regexes(path) -> dict[str, ClassRegex]:
    with open(path, encoding="utf-8") as fh:
        rows = json.load(fh)
    out = {}
    for name, row in rows.items():
        out[name] = ClassRegex(
            class_name=name,
            charset=frozenset(row["charset"]),
            len_min=int(row["min"]),
            len_max=int(row["max"]),
            suffixes=frozenset(row["suffixes"]),
            literal_prefix=row["prefix"],
            match_all=bool(row["match_all"]),
        )
    return out
