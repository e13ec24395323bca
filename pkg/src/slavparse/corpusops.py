"""Corpus manifests, deterministic splitting, assembly, and accounting.

A corpus is described by a manifest file (INI syntax, one section per
text) listing each text's variety, macro area, file path, and split mode.
Texts are split into train/dev/test by contiguous spans in document
order, merged into datasets only at need, and counted for reporting.
The package ships ``data/torot.manifest`` describing the TOROT corpus
layout this toolkit targets.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .treebank import Treebank, read_conllu

__all__ = [
    "Variety",
    "MacroArea",
    "SplitMode",
    "Section",
    "ManifestError",
    "TextManifest",
    "SplitReport",
    "SplitResult",
    "TextStats",
    "CorpusStats",
    "MACRO_FILTERS",
    "TEST_SETS",
    "bundled_manifest_path",
    "load_manifest",
    "split_text",
    "text_sections",
    "assemble_dataset",
    "assemble_test_set",
    "corpus_stats",
]


class ManifestError(ValueError):
    """Problem with a manifest file or the files it references."""


class Variety(str, Enum):
    OCS = "OCS"    # Old Church Slavonic
    SCS = "SCS"    # Serbian Church Slavonic
    RCS = "RCS"    # Russian Church Slavonic
    OES = "OES"    # Old East Slavic
    MRUS = "MRus"  # Middle Russian
    ONOV = "ONov"  # Old Novgorodian


class MacroArea(str, Enum):
    SOUTH = "SouthSlavic"
    EAST = "EastSlavic"


# Each variety belongs to exactly one macro area; manifests must agree.
MACRO_OF = {
    Variety.OCS: MacroArea.SOUTH,
    Variety.SCS: MacroArea.SOUTH,
    Variety.RCS: MacroArea.SOUTH,
    Variety.OES: MacroArea.EAST,
    Variety.MRUS: MacroArea.EAST,
    Variety.ONOV: MacroArea.EAST,
}


class SplitMode(str, Enum):
    RATIO = "ratio"            # contiguous 80/10/10 by token count
    PREDEFINED = "predefined"  # ships its own train/dev/test files
    TRAIN_ONLY = "train_only"  # whole text goes to train


class Section(str, Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


# Training-regime filters: South Slavic only, East Slavic only, or both.
MACRO_FILTERS: dict[str, MacroArea | None] = {
    "SSL": MacroArea.SOUTH,
    "ESL": MacroArea.EAST,
    "GEN": None,
}


@dataclass
class TextManifest:
    """One text in a corpus manifest."""

    label: str
    variety: Variety
    macro_area: MacroArea
    path: Path
    split_mode: SplitMode
    predefined: dict[Section, Path] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if MACRO_OF[self.variety] is not self.macro_area:
            raise ManifestError(
                f"text {self.label!r}: variety {self.variety.value} belongs to "
                f"{MACRO_OF[self.variety].value}, not {self.macro_area.value}")
        if self.split_mode is SplitMode.PREDEFINED:
            missing = [s.value for s in Section if s not in self.predefined]
            if missing:
                raise ManifestError(
                    f"text {self.label!r}: predefined split lacks {missing}")


def bundled_manifest_path() -> Path:
    """Path of the TOROT manifest shipped with the package."""
    return Path(__file__).parent / "data" / "torot.manifest"


def _resolve_base(manifest_path: Path, base_dir: str | Path | None) -> Path:
    if base_dir is not None:
        return Path(base_dir)
    env = os.environ.get("SLAVPARSE_DATA_DIR")
    if env:
        return Path(env)
    return manifest_path.parent


def load_manifest(path: str | Path,
                  base_dir: str | Path | None = None) -> list[TextManifest]:
    """Read a manifest file into an ordered list of text descriptions.

    Relative data paths are resolved against ``base_dir`` when given, else
    the SLAVPARSE_DATA_DIR environment variable, else the manifest's own
    directory. Duplicate labels, unknown field values, and missing
    required fields all raise :class:`ManifestError`.
    """
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.DuplicateSectionError as exc:
        raise ManifestError(f"duplicate text label {exc.section!r}") from exc
    except configparser.Error as exc:
        raise ManifestError(f"malformed manifest {path}: {exc}") from exc

    base = _resolve_base(path, base_dir)
    out: list[TextManifest] = []
    for label in parser.sections():
        sec = parser[label]
        try:
            variety = Variety(sec["variety"])
            macro = MacroArea(sec["macro_area"])
            mode = SplitMode(sec["split_mode"])
            text_path = base / sec["path"]
        except KeyError as exc:
            raise ManifestError(f"text {label!r}: missing field {exc.args[0]}") from exc
        except ValueError as exc:
            raise ManifestError(f"text {label!r}: {exc}") from exc
        predefined: dict[Section, Path] = {}
        if mode is SplitMode.PREDEFINED:
            for section in Section:
                key = section.value
                if key not in sec:
                    raise ManifestError(f"text {label!r}: missing field {key}")
                predefined[section] = base / sec[key]
        out.append(TextManifest(label=label, variety=variety, macro_area=macro,
                                path=text_path, split_mode=mode,
                                predefined=predefined))
    return out


@dataclass(frozen=True)
class SplitReport:
    """Token and sentence counts per section of one split."""

    train_tokens: int
    dev_tokens: int
    test_tokens: int
    train_sentences: int
    dev_sentences: int
    test_sentences: int


@dataclass
class SplitResult:
    """A three-way partition of one text's sentences."""

    train: Treebank
    dev: Treebank
    test: Treebank
    report: SplitReport

    def section(self, which: Section) -> Treebank:
        return {Section.TRAIN: self.train, Section.DEV: self.dev,
                Section.TEST: self.test}[which]


def split_text(tb: Treebank,
               ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
               min_ratio_tokens: int = 400,
               seed: int = 0,
               shuffled: bool = False) -> SplitResult:
    """Partition a text into train/dev/test sections.

    Sentences are taken in document order: train until the cumulative
    token count first reaches ratios[0] of the total, then dev until it
    reaches ratios[0] + ratios[1], then test for the remainder. A text
    with fewer than ``min_ratio_tokens`` tokens goes entirely to train.
    With ``shuffled=True`` the same cumulative rule runs over a seeded
    random sentence order instead, and each section is then restored to
    document order. Every sentence lands in exactly one section.
    """
    if not tb.sentences:
        raise ValueError("cannot split an empty treebank")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be three non-negative numbers, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios!r}")

    n = len(tb.sentences)
    total = tb.token_count
    buckets: dict[Section, list[int]] = {s: [] for s in Section}

    if total < min_ratio_tokens:
        buckets[Section.TRAIN] = list(range(n))
    else:
        order = list(range(n))
        if shuffled:
            order = list(np.random.default_rng(seed).permutation(n))
        cum = 0
        train_done = dev_done = False
        for idx in order:
            if not train_done:
                section = Section.TRAIN
            elif not dev_done:
                section = Section.DEV
            else:
                section = Section.TEST
            buckets[section].append(idx)
            cum += len(tb.sentences[idx].tokens)
            # Dimensionless comparison keeps the boundary exact when the
            # cumulative fraction equals the ratio as a rational number.
            frac = cum / total
            if not train_done and frac >= ratios[0]:
                train_done = True
            if train_done and not dev_done and frac >= ratios[0] + ratios[1]:
                dev_done = True

    parts = {}
    for section in Section:
        idxs = sorted(buckets[section])
        parts[section] = Treebank([tb.sentences[i] for i in idxs])
    report = SplitReport(
        train_tokens=parts[Section.TRAIN].token_count,
        dev_tokens=parts[Section.DEV].token_count,
        test_tokens=parts[Section.TEST].token_count,
        train_sentences=len(parts[Section.TRAIN].sentences),
        dev_sentences=len(parts[Section.DEV].sentences),
        test_sentences=len(parts[Section.TEST].sentences),
    )
    return SplitResult(train=parts[Section.TRAIN], dev=parts[Section.DEV],
                       test=parts[Section.TEST], report=report)


def _check_labels(manifests: Sequence[TextManifest]) -> None:
    seen: set[str] = set()
    for m in manifests:
        if m.label in seen:
            raise ManifestError(f"duplicate text label {m.label!r}")
        seen.add(m.label)


def _read_text(m: TextManifest, path: Path) -> Treebank:
    if not path.is_file():
        raise ManifestError(f"text {m.label!r}: file not found: {path}")
    return read_conllu(path, source_label=m.label)


def text_sections(m: TextManifest,
                  ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
                  min_ratio_tokens: int = 400) -> dict[Section, Treebank]:
    """The three sections of one manifest entry, honoring its split mode.

    Predefined texts read their shipped section files; train-only texts
    put everything in train (dev and test come back empty); ratio texts
    run the deterministic contiguous split.
    """
    if m.split_mode is SplitMode.PREDEFINED:
        return {s: _read_text(m, m.predefined[s]) for s in Section}
    tb = _read_text(m, m.path)
    if m.split_mode is SplitMode.TRAIN_ONLY:
        return {Section.TRAIN: tb, Section.DEV: Treebank(), Section.TEST: Treebank()}
    result = split_text(tb, ratios=ratios, min_ratio_tokens=min_ratio_tokens)
    return {s: result.section(s) for s in Section}


def assemble_dataset(manifests: Sequence[TextManifest],
                     section: Section,
                     area: MacroArea | None = None,
                     ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
                     min_ratio_tokens: int = 400) -> Treebank:
    """Concatenate one section of every matching text, in manifest order.

    ``area`` keeps only texts of one macro area (None keeps all). Ratio
    texts are split on the fly with the default deterministic rule, so
    assembling the same section twice yields the same sentences.
    """
    _check_labels(manifests)
    sentences = []
    for m in manifests:
        if area is not None and m.macro_area is not area:
            continue
        sections = text_sections(m, ratios, min_ratio_tokens)
        sentences.extend(sections[section].sentences)
    return Treebank(sentences)


@dataclass(frozen=True)
class TextStats:
    label: str
    variety: Variety
    macro_area: MacroArea
    tokens: int
    sentences: int


@dataclass(frozen=True)
class VarietyStats:
    variety: Variety
    texts: int
    tokens: int
    sentences: int


@dataclass
class CorpusStats:
    """Per-text rows plus per-variety and total aggregates."""

    rows: list[TextStats]
    by_variety: dict[Variety, VarietyStats]
    total_tokens: int
    total_sentences: int


def corpus_stats(manifests: Sequence[TextManifest]) -> CorpusStats:
    """Count tokens and sentences per text and aggregate by variety."""
    _check_labels(manifests)
    rows: list[TextStats] = []
    for m in manifests:
        tb = _read_text(m, m.path)
        rows.append(TextStats(label=m.label, variety=m.variety,
                              macro_area=m.macro_area,
                              tokens=tb.token_count,
                              sentences=len(tb.sentences)))
    by_variety: dict[Variety, VarietyStats] = {}
    for variety in Variety:
        matching = [r for r in rows if r.variety is variety]
        if matching:
            by_variety[variety] = VarietyStats(
                variety=variety,
                texts=len(matching),
                tokens=sum(r.tokens for r in matching),
                sentences=sum(r.sentences for r in matching),
            )
    return CorpusStats(rows=rows, by_variety=by_variety,
                       total_tokens=sum(r.tokens for r in rows),
                       total_sentences=sum(r.sentences for r in rows))


@dataclass(frozen=True)
class TestSet:
    """A named evaluation set: either one text or a whole macro area."""

    code: str
    description: str
    labels: tuple[str, ...] | None = None  # None means filter by area
    area: MacroArea | None = None


# The nine standard evaluation sets. Single-text sets use that text's
# test section; area sets use the test sections of every text in the area.
TEST_SETS: dict[str, TestSet] = {
    "ss": TestSet("ss", "all South Slavic texts", area=MacroArea.SOUTH),
    "cm": TestSet("cm", "marianus", labels=("marianus",)),
    "cs": TestSet("cs", "supr", labels=("supr",)),
    "vc": TestSet("vc", "vit-const", labels=("vit-const",)),
    "es": TestSet("es", "all East Slavic texts", area=MacroArea.EAST),
    "pc": TestSet("pc", "lav", labels=("lav",)),
    "sr": TestSet("sr", "sergrad", labels=("sergrad",)),
    "av": TestSet("av", "avv", labels=("avv",)),
    "on": TestSet("on", "birchbark", labels=("birchbark",)),
}


def assemble_test_set(manifests: Sequence[TextManifest], code: str) -> Treebank:
    """Assemble the test section of one of the named evaluation sets."""
    try:
        spec = TEST_SETS[code]
    except KeyError:
        raise ManifestError(
            f"unknown test set {code!r}; known: {', '.join(sorted(TEST_SETS))}") from None
    if spec.labels is not None:
        chosen = [m for m in manifests if m.label in spec.labels]
        missing = set(spec.labels) - {m.label for m in chosen}
        if missing:
            raise ManifestError(f"test set {code!r}: manifest lacks {sorted(missing)}")
        return assemble_dataset(chosen, Section.TEST)
    return assemble_dataset(manifests, Section.TEST, area=spec.area)
