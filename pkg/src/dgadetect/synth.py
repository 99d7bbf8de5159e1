"""Synthetic DGA family generators, dataset construction, and LOGO splits.

Generators are deterministic pure functions of (spec, n): identical specs
(modulo the class name) produce byte-identical corpora, which lets the
catalog ship an intentionally identical-output family pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .domain import DomainName, bundled_wordlist, parse_domain
from .rng import SplitMix64, derive_seed, fnv1a64

BENIGN_LABEL = "benign"

SCHEMES = (
    "arith-prng",
    "hash-hex",
    "restricted-alpha",
    "wordlist-concat",
    "prefixed-hash",
)

_HEX = "0123456789abcdef"


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class FamilySpec:
    name: str
    scheme: str
    charset: str
    sld_min: int
    sld_max: int
    suffixes: tuple[str, ...]
    literal_prefix: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise SynthError(f"unknown scheme {self.scheme!r}")
        if not self.charset:
            raise SynthError(f"{self.name}: empty charset")
        if not self.suffixes:
            raise SynthError(f"{self.name}: empty suffix set")
        if self.sld_min < 1 or self.sld_max < self.sld_min:
            raise SynthError(f"{self.name}: bad length range")


@dataclass(frozen=True)
class DatasetConfig:
    per_class_cap: int = 10_000
    test_cap: int = 2_000
    folds: int = 5
    benign_count: int = 10_000
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.per_class_cap >= self.test_cap >= 1):
            raise SynthError("need per_class_cap >= test_cap >= 1")
        if self.folds < 2:
            raise SynthError("need folds >= 2")


@dataclass(frozen=True)
class LabeledSample:
    domain: DomainName
    label: str


@dataclass(frozen=True)
class LogoRun:
    fold_index: int
    left_out: str
    train: tuple[LabeledSample, ...]
    test: tuple[LabeledSample, ...]


def _gen_sld(spec: FamilySpec, rng: SplitMix64, words: tuple[str, ...]) -> str:
    chars = sorted(set(spec.charset))
    n = rng.randint(spec.sld_min, spec.sld_max)
    scheme = spec.scheme
    if scheme in ("arith-prng", "restricted-alpha"):
        return "".join(rng.choice(chars) for _ in range(n))
    if scheme in ("hash-hex", "prefixed-hash"):
        s = ""
        while len(s) < n:
            s += format(rng.next_u64(), "016x")
        return s[:n]
    if scheme == "wordlist-concat":
        s = ""
        while len(s) < spec.sld_min:
            s += rng.choice(words)
        return s[:n] if len(s) > n else s
    raise SynthError(f"unknown scheme {scheme!r}")


def generate_family(spec: FamilySpec, n: int) -> list[LabeledSample]:
    """Exactly n samples for the family; duplicates allowed, as real DGAs
    collide. Deterministic for (spec, n) independent of the family name."""
    if n < 1:
        raise SynthError("need n >= 1")
    rng = SplitMix64(spec.seed)
    words = bundled_wordlist()
    suffixes = sorted(spec.suffixes)
    out = []
    for _ in range(n):
        sld = _gen_sld(spec, rng, words)
        suffix = rng.choice(suffixes)
        full = spec.literal_prefix + sld + "." + suffix
        out.append(LabeledSample(domain=parse_domain(full), label=spec.name))
    return out


_BENIGN_SUFFIXES = ("com", "net", "org", "de", "io", "co.uk")
_BENIGN_SUBS = ("www", "mail", "api", "cdn", "shop", "blog")


def generate_benign(n: int, seed: int) -> list[LabeledSample]:
    """Benign-looking mixture: word concatenations, hyphenations, word+digit
    forms, and multi-label hostnames."""
    if n < 1:
        raise SynthError("need n >= 1")
    rng = SplitMix64(derive_seed(seed, "benign"))
    words = bundled_wordlist()
    out = []
    for _ in range(n):
        form = rng.randrange(5)
        if form == 0:
            sld = rng.choice(words) + rng.choice(words)
        elif form == 1:
            sld = rng.choice(words) + "-" + rng.choice(words)
        elif form == 2:
            sld = rng.choice(words) + str(rng.randint(0, 999))
        elif form == 3:
            sld = rng.choice(words) + rng.choice(words) + rng.choice(words)
        else:
            sld = rng.choice(words)
        suffix = rng.choice(_BENIGN_SUFFIXES)
        if rng.randrange(4) == 0:
            full = rng.choice(_BENIGN_SUBS) + "." + sld + "." + suffix
        else:
            full = sld + "." + suffix
        out.append(LabeledSample(domain=parse_domain(full), label=BENIGN_LABEL))
    return out


def build_dataset(
    catalog: list[FamilySpec],
    cfg: DatasetConfig,
    external_benign: list[LabeledSample] | None = None,
) -> list[LabeledSample]:
    """Per family: up to per_class_cap unique samples. Benign rows are
    filtered against every generated DGA sample by exact full-domain match."""
    if not catalog:
        raise SynthError("empty catalog")
    names = [s.name for s in catalog]
    if len(set(names)) != len(names):
        raise SynthError("duplicate family names in catalog")
    if BENIGN_LABEL in names:
        raise SynthError(f"family may not be named {BENIGN_LABEL!r}")

    dataset: list[LabeledSample] = []
    dga_fulls: set[str] = set()
    for spec in catalog:
        seen: set[str] = set()
        for s in generate_family(spec, cfg.per_class_cap):
            if s.domain.full not in seen:
                seen.add(s.domain.full)
                dataset.append(s)
        dga_fulls |= seen

    if external_benign is not None:
        benign = [replace(s, label=BENIGN_LABEL) for s in external_benign]
    else:
        benign = generate_benign(cfg.benign_count, cfg.rng_seed)
    seen = set()
    for s in benign:
        if s.domain.full in dga_fulls or s.domain.full in seen:
            continue
        seen.add(s.domain.full)
        dataset.append(s)
    return dataset


def fold_of(sample: LabeledSample, cfg: DatasetConfig) -> int:
    """Stable stratified fold assignment by hash of (domain, fold seed)."""
    h = fnv1a64(f"{sample.domain.full}|fold|{cfg.rng_seed}")
    return h % cfg.folds


def make_logo_runs(dataset: list[LabeledSample], cfg: DatasetConfig) -> list[LogoRun]:
    by_label: dict[str, list[LabeledSample]] = {}
    for s in dataset:
        by_label.setdefault(s.label, []).append(s)
    for label, samples in by_label.items():
        if len(samples) < cfg.folds:
            raise SynthError(f"class {label!r} has fewer samples than folds")
    families = [lab for lab in by_label if lab != BENIGN_LABEL]

    folds = [fold_of(s, cfg) for s in dataset]
    runs = []
    for fold in range(cfg.folds):
        test_base = [s for s, f in zip(dataset, folds) if f == fold]
        train_base = [s for s, f in zip(dataset, folds) if f != fold]
        for fam in families:
            train = tuple(s for s in train_base if s.label != fam)
            excluded = [s for s in train_base if s.label == fam]
            fam_test = [s for s in test_base if s.label == fam]
            rng = SplitMix64(derive_seed(cfg.rng_seed, f"logo:{fold}:{fam}"))
            if len(fam_test) > cfg.test_cap:
                rng.shuffle(fam_test)
                fam_test = fam_test[: cfg.test_cap]
            elif len(fam_test) < cfg.test_cap:
                rng.shuffle(excluded)
                fam_test += excluded[: cfg.test_cap - len(fam_test)]
            test = tuple(s for s in test_base if s.label != fam) + tuple(fam_test)
            runs.append(
                LogoRun(fold_index=fold, left_out=fam, train=train, test=test)
            )
    return runs


# ---------------------------------------------------------------------------
# catalogs

def archetype_catalog(seed: int = 0) -> list[FamilySpec]:
    """Twelve archetype families, including the adversarial structures the
    detection study exercises: a containment pair (emotet/ramnit analogs), a
    near-identical trio differing only in max length and two suffixes
    (pykspa analogs), and an identical-output pair (oderoor/vidro analogs)."""
    lower = "abcdefghijklmnopqrstuvwxyz"
    no_z = lower[:-1]  # a-y
    pair_seed = derive_seed(seed, "identical-pair")
    return [
        FamilySpec("emotet_like", "restricted-alpha", no_z, 16, 16,
                   ("eu",), seed=derive_seed(seed, "emotet_like")),
        FamilySpec("ramnit_like", "restricted-alpha", no_z, 16, 16,
                   ("bid", "click", "com", "eu"), seed=derive_seed(seed, "ramnit_like")),
        FamilySpec("pykspa_like", "arith-prng", lower, 6, 12,
                   ("com", "net", "org"), seed=derive_seed(seed, "pykspa_like")),
        FamilySpec("pykspa2_like", "arith-prng", lower, 6, 15,
                   ("com", "net", "org", "cc", "biz"), seed=derive_seed(seed, "pykspa2_like")),
        FamilySpec("pykspa2s_like", "arith-prng", lower, 6, 15,
                   ("com", "net", "org", "cc", "biz"), seed=derive_seed(seed, "pykspa2s_like")),
        FamilySpec("oderoor_like", "arith-prng", lower, 8, 12,
                   ("com",), seed=pair_seed),
        FamilySpec("vidro_like", "arith-prng", lower, 8, 12,
                   ("com",), seed=pair_seed),
        FamilySpec("hexhash_like", "hash-hex", _HEX, 12, 20,
                   ("info", "biz"), seed=derive_seed(seed, "hexhash_like")),
        FamilySpec("wordy_like", "wordlist-concat", lower, 9, 18,
                   ("net",), seed=derive_seed(seed, "wordy_like")),
        FamilySpec("dropper_like", "prefixed-hash", _HEX, 24, 40,
                   ("com", "info"), literal_prefix="downloads.",
                   seed=derive_seed(seed, "dropper_like")),
        FamilySpec("numeric_like", "arith-prng", "0123456789", 10, 16,
                   ("pw", "us"), seed=derive_seed(seed, "numeric_like")),
        FamilySpec("under_like", "arith-prng", lower + "0123456789_-", 20, 30,
                   ("xyz",), seed=derive_seed(seed, "under_like")),
    ]


def separable_catalog(seed: int = 0) -> list[FamilySpec]:
    """Twelve structurally distinct families (pairwise disjoint induced
    regexes) used for clean end-to-end checks."""
    lower = "abcdefghijklmnopqrstuvwxyz"
    return [
        FamilySpec("sep_alpha_eu", "restricted-alpha", lower[:13], 16, 16,
                   ("eu",), seed=derive_seed(seed, "sep_alpha_eu")),
        FamilySpec("sep_alpha_cc", "restricted-alpha", lower[13:], 8, 12,
                   ("cc",), seed=derive_seed(seed, "sep_alpha_cc")),
        FamilySpec("sep_hex_info", "hash-hex", _HEX, 20, 28,
                   ("info",), seed=derive_seed(seed, "sep_hex_info")),
        FamilySpec("sep_hex_biz", "hash-hex", _HEX, 10, 14,
                   ("biz",), seed=derive_seed(seed, "sep_hex_biz")),
        FamilySpec("sep_num_pw", "arith-prng", "0123456789", 10, 16,
                   ("pw",), seed=derive_seed(seed, "sep_num_pw")),
        FamilySpec("sep_under_xyz", "arith-prng", lower + "_", 20, 26,
                   ("xyz",), seed=derive_seed(seed, "sep_under_xyz")),
        FamilySpec("sep_dash_top", "arith-prng", "0123456789-", 12, 18,
                   ("top",), seed=derive_seed(seed, "sep_dash_top")),
        FamilySpec("sep_word_club", "wordlist-concat", lower, 12, 20,
                   ("club",), seed=derive_seed(seed, "sep_word_club")),
        FamilySpec("sep_prefix_host", "prefixed-hash", _HEX, 16, 24,
                   ("host",), literal_prefix="cdn.",
                   seed=derive_seed(seed, "sep_prefix_host")),
        FamilySpec("sep_alpha_ru", "restricted-alpha", "bcdfghjklmnpqrstvwxz", 14, 18,
                   ("ru",), seed=derive_seed(seed, "sep_alpha_ru")),
        FamilySpec("sep_mix_site", "arith-prng", lower + "0123456789", 22, 30,
                   ("site",), seed=derive_seed(seed, "sep_mix_site")),
        FamilySpec("sep_short_ga", "arith-prng", "aeiou", 6, 8,
                   ("ga",), seed=derive_seed(seed, "sep_short_ga")),
    ]


# ---------------------------------------------------------------------------
# file formats

def save_catalog(catalog: list[FamilySpec], path) -> None:
    rows = [
        {
            "name": s.name,
            "scheme": s.scheme,
            "charset": s.charset,
            "sld_len": [s.sld_min, s.sld_max],
            "suffixes": list(s.suffixes),
            "literal_prefix": s.literal_prefix,
            "seed": s.seed,
        }
        for s in catalog
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")


def load_catalog(path) -> list[FamilySpec]:
    with open(path, encoding="utf-8") as fh:
        rows = json.load(fh)
    return [
        FamilySpec(
            name=r["name"],
            scheme=r["scheme"],
            charset=r["charset"],
            sld_min=int(r["sld_len"][0]),
            sld_max=int(r["sld_len"][1]),
            suffixes=tuple(r["suffixes"]),
            literal_prefix=r.get("literal_prefix", ""),
            seed=int(r.get("seed", 0)),
        )
        for r in rows
    ]


def save_dataset(dataset: list[LabeledSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in dataset:
            fh.write(json.dumps({"domain": s.domain.full, "label": s.label}) + "\n")


def load_dataset(path) -> list[LabeledSample]:
    """Read JSONL rows, or a plain newline domain list (label: benign)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("{"):
                row = json.loads(line)
                out.append(
                    LabeledSample(parse_domain(row["domain"]), row.get("label", BENIGN_LABEL))
                )
            else:
                out.append(LabeledSample(parse_domain(line), BENIGN_LABEL))
    return out
