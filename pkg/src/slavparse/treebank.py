"""CoNLL-U and CoNLL-X treebank data model and IO.

The data model is deliberately plain: dataclasses holding what the file
formats hold, with validation reported as data rather than enforced in
constructors. Reading is strict about file structure (column counts, id
contiguity, integer ids and heads) and lenient about tree well-formedness,
which is the job of :func:`validate_sentence`. Writing refuses treebanks
whose sentences fail validation with errors.

Serialization is canonical: LF line endings, feature keys sorted
case-insensitively, ``_`` for empty values, one blank line after every
sentence. Reading a canonical file and writing it back is byte-identical.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, TextIO, Union

__all__ = [
    "ParseError",
    "MappingError",
    "FeatureSet",
    "Token",
    "MultiwordRange",
    "Sentence",
    "Treebank",
    "Violation",
    "MorphMapping",
    "read_conllu",
    "read_conllx",
    "write_conllu",
    "conllu_text",
    "convert_morphotag",
    "validate_sentence",
    "bundled_morph_map_path",
]

_TOKEN_ID_RE = re.compile(r"^\d+$")
_RANGE_ID_RE = re.compile(r"^(\d+)-(\d+)$")
_DECIMAL_ID_RE = re.compile(r"^\d+\.\d+$")


class ParseError(ValueError):
    """Malformed treebank input. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MappingError(ValueError):
    """Problem with a morphological tag or its mapping table."""


class FeatureSet:
    """Morphological features as an ordered set of key=value pairs.

    Pairs are stored in canonical order (case-insensitive by key) so that
    equality and serialization do not depend on input order. Keys are
    unique; a duplicate key is an error.
    """

    __slots__ = ("_pairs",)

    def __init__(self, pairs: Iterable[tuple[str, str]] = ()):
        seen: dict[str, str] = {}
        for key, value in pairs:
            if not key or not value:
                raise ValueError(f"empty feature key or value in pair {(key, value)!r}")
            if "|" in key or "=" in key or "|" in value:
                raise ValueError(f"illegal character in feature {key!r}={value!r}")
            if key in seen:
                raise ValueError(f"duplicate feature key {key!r}")
            seen[key] = value
        self._pairs = tuple(sorted(seen.items(), key=lambda kv: (kv[0].lower(), kv[0])))

    @classmethod
    def parse(cls, text: str) -> "FeatureSet":
        """Parse a FEATS column value. ``_`` or empty means no features."""
        if text in ("_", ""):
            return cls()
        pairs = []
        for item in text.split("|"):
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"feature {item!r} is not of the form Key=Value")
            pairs.append((key, value))
        return cls(pairs)

    def items(self) -> tuple[tuple[str, str], ...]:
        return self._pairs

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self._pairs:
            if k == key:
                return v
        return default

    def __bool__(self) -> bool:
        return bool(self._pairs)

    def __len__(self) -> int:
        return len(self._pairs)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FeatureSet) and self._pairs == other._pairs

    def __hash__(self) -> int:
        return hash(self._pairs)

    def __str__(self) -> str:
        if not self._pairs:
            return "_"
        return "|".join(f"{k}={v}" for k, v in self._pairs)

    def __repr__(self) -> str:
        return f"FeatureSet({list(self._pairs)!r})"


@dataclass
class Token:
    """One syntactic word. Ids are 1-based within the sentence."""

    id: int
    form: str
    lemma: str = ""
    upos: str = ""
    xpos: str = ""
    feats: FeatureSet = field(default_factory=FeatureSet)
    head: int = 0
    deprel: str = ""
    deps: str = ""
    misc: str = ""


@dataclass
class MultiwordRange:
    """Surface token covering syntactic words start..end inclusive."""

    start: int
    end: int
    form: str


@dataclass
class Sentence:
    """A sentence: comment lines (verbatim), tokens, and surface ranges."""

    tokens: list[Token] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)
    ranges: list[MultiwordRange] = field(default_factory=list)
    source_label: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    def _comment_value(self, key: str) -> str | None:
        prefix = f"# {key} = "
        for line in self.comments:
            if line.startswith(prefix):
                return line[len(prefix):]
        return None

    @property
    def sent_id(self) -> str | None:
        return self._comment_value("sent_id")

    @property
    def text(self) -> str | None:
        return self._comment_value("text")


@dataclass
class Treebank:
    """An ordered collection of sentences."""

    sentences: list[Sentence] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    @property
    def token_count(self) -> int:
        """Number of syntactic words; multiword ranges do not count."""
        return sum(len(s.tokens) for s in self.sentences)


@dataclass(frozen=True)
class Violation:
    """One well-formedness problem found in a sentence."""

    kind: str
    severity: str  # "error" or "warning"
    message: str
    token_ids: tuple[int, ...] = ()


def validate_sentence(sent: Sentence) -> list[Violation]:
    """Check tree well-formedness and return all problems found.

    Violations are data: nothing is raised and nothing is repaired. Errors
    are conditions that make the sentence unusable as a dependency tree
    (non-contiguous ids, empty forms, heads out of range, self-heads,
    missing root, cycles, inverted ranges). More than one token attached to
    the root is a warning, since source treebanks legitimately contain such
    sentences.
    """
    out: list[Violation] = []
    n = len(sent.tokens)
    ids = [t.id for t in sent.tokens]
    if ids != list(range(1, n + 1)):
        out.append(Violation("noncontiguous-ids", "error",
                             f"token ids {ids} are not 1..{n}", tuple(ids)))
        return out  # head-based checks are meaningless without clean ids
    if n == 0:
        out.append(Violation("no-tokens", "error", "sentence has no tokens"))
        return out

    heads_ok = True
    for tok in sent.tokens:
        if tok.form == "":
            out.append(Violation("empty-form", "error",
                                 f"token {tok.id} has an empty form", (tok.id,)))
        if not 0 <= tok.head <= n:
            out.append(Violation("head-out-of-range", "error",
                                 f"token {tok.id} has head {tok.head}, valid range is 0..{n}",
                                 (tok.id,)))
            heads_ok = False
        elif tok.head == tok.id:
            out.append(Violation("self-head", "error",
                                 f"token {tok.id} is its own head", (tok.id,)))
            heads_ok = False

    roots = [t.id for t in sent.tokens if t.head == 0]
    if not roots:
        out.append(Violation("no-root", "error", "no token attaches to the root"))
    elif len(roots) > 1:
        out.append(Violation("multiple-roots", "warning",
                             f"tokens {roots} all attach to the root", tuple(roots)))

    if heads_ok:
        # Walk parent pointers from each node; marks avoid rescanning.
        state = [0] * (n + 1)  # 0 unseen, 1 on current path, 2 done
        state[0] = 2
        head_of = {t.id: t.head for t in sent.tokens}
        reported: set[frozenset[int]] = set()
        for start in range(1, n + 1):
            if state[start]:
                continue
            path = []
            node = start
            while state[node] == 0:
                state[node] = 1
                path.append(node)
                node = head_of[node]
            if state[node] == 1:  # hit the current path: a cycle
                cycle = path[path.index(node):]
                key = frozenset(cycle)
                if key not in reported:
                    reported.add(key)
                    out.append(Violation("cycle", "error",
                                         f"tokens {sorted(cycle)} form a head cycle",
                                         tuple(sorted(cycle))))
            for v in path:
                state[v] = 2

    for rng in sent.ranges:
        if rng.start >= rng.end:
            out.append(Violation("bad-range", "error",
                                 f"range {rng.start}-{rng.end} is not increasing",
                                 (rng.start, rng.end)))
    return out


def _opt(value: str) -> str:
    return "" if value == "_" else value


def _unopt(value: str) -> str:
    return value if value else "_"


Source = Union[str, Path, TextIO]


def _open_for_read(source: Source):
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    return source, False


def _sentence_name(sent: Sentence, ordinal: int) -> str:
    sid = sent.sent_id
    return f"sentence {sid!r}" if sid else f"sentence #{ordinal}"


def read_conllu(source: Source, source_label: str = "") -> Treebank:
    """Read a CoNLL-U file or text stream.

    Structural problems raise :class:`ParseError` with the line number:
    lines without exactly 10 tab-separated columns, non-integer ids or
    heads, empty-node ids (decimal, e.g. ``1.1``, not supported here),
    and token ids that are not exactly 1..n. Tree-level problems (bad
    heads, cycles) are left for :func:`validate_sentence`.
    """
    stream, close = _open_for_read(source)
    try:
        return _parse_conllu(stream, source_label)
    finally:
        if close:
            stream.close()


def _parse_conllu(stream: TextIO, source_label: str) -> Treebank:
    sentences: list[Sentence] = []
    comments: list[str] = []
    tokens: list[Token] = []
    ranges: list[MultiwordRange] = []
    first_token_line = 0

    def flush(lineno: int) -> None:
        nonlocal comments, tokens, ranges
        if not comments and not tokens and not ranges:
            return
        sent = Sentence(tokens=tokens, comments=comments, ranges=ranges,
                        source_label=source_label)
        if not tokens:
            raise ParseError(f"{_sentence_name(sent, len(sentences) + 1)} has no tokens",
                             lineno)
        ids = [t.id for t in tokens]
        if ids != list(range(1, len(ids) + 1)):
            raise ParseError(
                f"{_sentence_name(sent, len(sentences) + 1)}: token ids {ids} "
                f"are not contiguous from 1", first_token_line)
        sentences.append(sent)
        comments, tokens, ranges = [], [], []

    lineno = 0
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n")
        if line.endswith("\r"):
            line = line[:-1]
        if line == "":
            flush(lineno)
            continue
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(f"expected 10 tab-separated columns, got {len(cols)}",
                             lineno)
        idcol = cols[0]
        m = _RANGE_ID_RE.match(idcol)
        if m:
            ranges.append(MultiwordRange(int(m.group(1)), int(m.group(2)), cols[1]))
            continue
        if _DECIMAL_ID_RE.match(idcol):
            raise ParseError(f"empty-node id {idcol!r} is not supported", lineno)
        if not _TOKEN_ID_RE.match(idcol):
            raise ParseError(f"token id {idcol!r} is not an integer", lineno)
        if not _TOKEN_ID_RE.match(cols[6]):
            raise ParseError(f"head {cols[6]!r} is not an integer", lineno)
        if not tokens:
            first_token_line = lineno
        try:
            feats = FeatureSet.parse(cols[5])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        tokens.append(Token(
            id=int(idcol),
            form=cols[1],
            lemma=_opt(cols[2]),
            upos=_opt(cols[3]),
            xpos=_opt(cols[4]),
            feats=feats,
            head=int(cols[6]),
            deprel=_opt(cols[7]),
            deps=_opt(cols[8]),
            misc=_opt(cols[9]),
        ))
    flush(lineno + 1)
    return Treebank(sentences)


def _token_line(tok: Token) -> str:
    return "\t".join([
        str(tok.id),
        tok.form,
        _unopt(tok.lemma),
        _unopt(tok.upos),
        _unopt(tok.xpos),
        str(tok.feats),
        str(tok.head),
        _unopt(tok.deprel),
        _unopt(tok.deps),
        _unopt(tok.misc),
    ])


def _sentence_lines(sent: Sentence) -> Iterator[str]:
    yield from sent.comments
    by_start: dict[int, list[MultiwordRange]] = {}
    for rng in sent.ranges:
        by_start.setdefault(rng.start, []).append(rng)
    for tok in sent.tokens:
        for rng in by_start.get(tok.id, ()):
            yield "\t".join([f"{rng.start}-{rng.end}", rng.form] + ["_"] * 8)
        yield _token_line(tok)


def write_conllu(tb: Treebank, target: Source) -> None:
    """Write a treebank in canonical CoNLL-U form.

    Refuses with ValueError if any sentence validates with errors
    (warnings pass). Canonical form: LF endings, sorted features, ``_``
    for empties, a blank line after every sentence including the last.
    """
    for i, sent in enumerate(tb.sentences, 1):
        errors = [v for v in validate_sentence(sent) if v.severity == "error"]
        if errors:
            raise ValueError(
                f"{_sentence_name(sent, i)} fails validation: {errors[0].message}")
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            _write_all(tb, fh)
    else:
        _write_all(tb, target)


def _write_all(tb: Treebank, fh: TextIO) -> None:
    for sent in tb.sentences:
        for line in _sentence_lines(sent):
            fh.write(line)
            fh.write("\n")
        fh.write("\n")


def conllu_text(tb: Treebank) -> str:
    """Canonical CoNLL-U serialization as a string."""
    buf = io.StringIO()
    write_conllu(tb, buf)
    return buf.getvalue()


class MorphMapping:
    """Lookup table from positional morphology atoms to UD feature pairs.

    The table is a text file with one mapping per line::

        KEY<TAB>code<TAB>Feature<TAB>Value

    where ``KEY`` is the positional field name (e.g. NUMB), ``code`` its
    one-character value (e.g. s), and ``Feature=Value`` the UD rendering
    (e.g. Number=Sing). Lines starting with ``#`` and blank lines are
    ignored. The atom looked up is the concatenation KEY+code exactly as
    it appears in source data.
    """

    def __init__(self, entries: dict[str, tuple[str, str]]):
        self.entries = dict(entries)

    @classmethod
    def from_file(cls, path: str | Path) -> "MorphMapping":
        entries: dict[str, tuple[str, str]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                cols = line.split("\t")
                if len(cols) != 4:
                    raise ParseError(
                        f"mapping line needs 4 tab-separated columns, got {len(cols)}",
                        lineno)
                key, code, feature, value = cols
                atom = key + code
                if atom in entries:
                    raise ParseError(f"duplicate mapping for {atom!r}", lineno)
                entries[atom] = (feature, value)
        return cls(entries)

    def lookup(self, atom: str) -> tuple[str, str]:
        try:
            return self.entries[atom]
        except KeyError:
            raise MappingError(f"unknown morphological tag {atom!r}") from None

    def __len__(self) -> int:
        return len(self.entries)


def bundled_morph_map_path() -> Path:
    """Path of the PROIEL positional-tag table shipped with the package."""
    return Path(__file__).parent / "data" / "proiel_morph.map"


def convert_morphotag(tag: str, mapping: MorphMapping) -> FeatureSet:
    """Convert a positional morphotag like ``NUMBs|GENDn|CASEn`` to UD features.

    The result is order-independent: permuting the input atoms yields the
    same FeatureSet. Unknown atoms and atom combinations that map onto the
    same UD feature twice raise :class:`MappingError`.
    """
    if tag in ("", "_"):
        return FeatureSet()
    pairs = []
    seen: set[str] = set()
    for atom in tag.split("|"):
        feature, value = mapping.lookup(atom)
        if feature in seen:
            raise MappingError(
                f"tag {tag!r} maps feature {feature!r} more than once")
        seen.add(feature)
        pairs.append((feature, value))
    return FeatureSet(pairs)


def read_conllx(source: Source, mapping: MorphMapping,
                source_label: str = "") -> Treebank:
    """Read a CoNLL-X file, converting morphology via ``mapping``.

    Column mapping: CPOSTAG becomes upos, POSTAG becomes xpos, FEATS is
    converted with :func:`convert_morphotag`, and the projective
    PHEAD/PDEPRel columns are dropped. The result uses the same sentence
    and token structure as :func:`read_conllu`.
    """
    stream, close = _open_for_read(source)
    try:
        return _parse_conllx(stream, mapping, source_label)
    finally:
        if close:
            stream.close()


def _parse_conllx(stream: TextIO, mapping: MorphMapping,
                  source_label: str) -> Treebank:
    sentences: list[Sentence] = []
    comments: list[str] = []
    tokens: list[Token] = []
    first_token_line = 0

    def flush(lineno: int) -> None:
        nonlocal comments, tokens
        if not comments and not tokens:
            return
        sent = Sentence(tokens=tokens, comments=comments, source_label=source_label)
        if not tokens:
            raise ParseError(f"{_sentence_name(sent, len(sentences) + 1)} has no tokens",
                             lineno)
        ids = [t.id for t in tokens]
        if ids != list(range(1, len(ids) + 1)):
            raise ParseError(
                f"{_sentence_name(sent, len(sentences) + 1)}: token ids {ids} "
                f"are not contiguous from 1", first_token_line)
        sentences.append(sent)
        comments, tokens = [], []

    lineno = 0
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n")
        if line.endswith("\r"):
            line = line[:-1]
        if line == "":
            flush(lineno)
            continue
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(f"expected 10 tab-separated columns, got {len(cols)}",
                             lineno)
        if not _TOKEN_ID_RE.match(cols[0]):
            raise ParseError(f"token id {cols[0]!r} is not an integer", lineno)
        if not _TOKEN_ID_RE.match(cols[6]):
            raise ParseError(f"head {cols[6]!r} is not an integer", lineno)
        if not tokens:
            first_token_line = lineno
        try:
            feats = convert_morphotag(cols[5], mapping)
        except MappingError as exc:
            raise ParseError(str(exc), lineno) from exc
        tokens.append(Token(
            id=int(cols[0]),
            form=cols[1],
            lemma=_opt(cols[2]),
            upos=_opt(cols[3]),
            xpos=_opt(cols[4]),
            feats=feats,
            head=int(cols[6]),
            deprel=_opt(cols[7]),
        ))
    flush(lineno + 1)
    return Treebank(sentences)
