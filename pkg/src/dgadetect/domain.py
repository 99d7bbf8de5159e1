"""Domain parsing, normalization, integer encoding, and context-less features.

Everything here is pure and immutable after construction, so values are safe
to share across threads and processes.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789-_."
PAD = 0
UNK = 1
DEFAULT_MAX_LEN = 64
MAX_DOMAIN_LEN = 253


class DomainError(ValueError):
    """Raised when a raw string cannot be normalized into a DomainName."""


def _read_lines(name: str) -> list[str]:
    text = resources.files("dgadetect.data").joinpath(name).read_text("utf-8")
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


@lru_cache(maxsize=None)
def bundled_suffixes() -> frozenset[str]:
    return frozenset(_read_lines("public_suffixes.txt"))


@lru_cache(maxsize=None)
def bundled_wordlist() -> tuple[str, ...]:
    return tuple(_read_lines("wordlist.txt"))


def load_suffixes(path) -> frozenset[str]:
    """Load a swap-in public suffix list (one suffix per line, '#' comments)."""
    out = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.add(line.lower())
    return frozenset(out)


def load_wordlist(path) -> tuple[str, ...]:
    with open(path, encoding="utf-8") as fh:
        return tuple(
            line.strip().lower()
            for line in fh
            if line.strip() and not line.startswith("#")
        )


@dataclass(frozen=True)
class DomainName:
    full: str
    sld: str
    suffix: str
    sub_labels: tuple[str, ...] = ()

    def render(self) -> str:
        return ".".join(self.sub_labels + (self.sld,)) + "." + self.suffix


_ALLOWED = frozenset(ALPHABET)


def parse_domain(raw: str, suffixes: frozenset[str] | None = None) -> DomainName:
    """Normalize and parse a raw domain string.

    Lowercases, validates the character set, and splits off the longest
    matching public suffix. Rejects empty labels and single-label inputs.
    """
    if suffixes is None:
        suffixes = bundled_suffixes()
    s = raw.strip().lower()
    if not s:
        raise DomainError("empty domain")
    bad = set(s) - _ALLOWED
    if bad:
        raise DomainError(f"invalid characters in {raw!r}: {sorted(bad)}")
    labels = s.split(".")
    if any(not lab for lab in labels):
        raise DomainError(f"empty label in {raw!r}")
    # longest-match public suffix, leaving at least one label to its left
    suffix_start = None
    for i in range(1, len(labels)):
        if ".".join(labels[i:]) in suffixes:
            suffix_start = i
            break
    if suffix_start is None:
        raise DomainError(f"no recognized public suffix in {raw!r}")
    suffix = ".".join(labels[suffix_start:])
    sld = labels[suffix_start - 1]
    sub = tuple(labels[: suffix_start - 1])
    return DomainName(full=s, sld=sld, suffix=suffix, sub_labels=sub)


@dataclass(frozen=True)
class CharVocab:
    """Dense character-to-index mapping with PAD == 0 and an UNK bucket."""

    alphabet: str = ALPHABET
    max_len: int = DEFAULT_MAX_LEN

    def __post_init__(self):
        if not (1 <= self.max_len <= MAX_DOMAIN_LEN):
            raise ValueError(f"max_len must be in [1, {MAX_DOMAIN_LEN}]")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet has duplicate characters")
        object.__setattr__(
            self, "_index", {c: i + 2 for i, c in enumerate(self.alphabet)}
        )

    @property
    def size(self) -> int:
        return len(self.alphabet) + 2

    def char_id(self, c: str) -> int:
        return self._index.get(c, UNK)

    def id_char(self, i: int) -> str:
        if i in (PAD, UNK):
            return ""
        return self.alphabet[i - 2]


@dataclass(frozen=True)
class EncodedDomain:
    ids: tuple[int, ...]
    true_len: int


def encode_domain(d: DomainName, v: CharVocab) -> EncodedDomain:
    """Left-padded integer encoding; over-long domains keep their rightmost
    characters so the suffix is never truncated away."""
    s = d.full[-v.max_len:]
    ids = [PAD] * (v.max_len - len(s)) + [v.char_id(c) for c in s]
    return EncodedDomain(ids=tuple(ids), true_len=len(s))


def decode_ids(e: EncodedDomain, v: CharVocab) -> str:
    return "".join(v.id_char(i) for i in e.ids if i != PAD)


def shannon_entropy(s: str) -> float:
    """Character-level Shannon entropy in bits."""
    if not s:
        raise ValueError("entropy of empty string is undefined")
    n = len(s)
    ent = 0.0
    for count in Counter(s).values():
        p = count / n
        ent -= p * math.log2(p)
    return ent


@dataclass(frozen=True)
class ContextlessFeatures:
    length: int
    charset_sig: int
    suffix: str
    entropy_bits: float
    english_words: int


def charset_signature(s: str, alphabet: str = ALPHABET) -> int:
    sig = 0
    present = set(s)
    for i, c in enumerate(alphabet):
        if c in present:
            sig |= 1 << i
    return sig


def count_contained_words(sld: str, wordlist: tuple[str, ...] | None = None) -> int:
    if wordlist is None:
        wordlist = bundled_wordlist()
    return sum(1 for w in wordlist if len(w) >= 3 and w in sld)


def extract_contextless(
    d: DomainName, wordlist: tuple[str, ...] | None = None
) -> ContextlessFeatures:
    return ContextlessFeatures(
        length=len(d.full),
        charset_sig=charset_signature(d.full),
        suffix=d.suffix,
        entropy_bits=shannon_entropy(d.full),
        english_words=count_contained_words(d.sld, wordlist),
    )
