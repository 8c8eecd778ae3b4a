"""Four-column CSV corpus reader, vocabulary builder, id encoding, statistics.

The corpus layout is one or more UTF-8 CSV files with the header
``file_name,sentence,word,tag``.  Rows sharing the same (file_name,
sentence) pair form one tagged sentence; words are normalized at load
time so the rest of the pipeline only ever sees normalized tokens.
"""

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bioes import CATEGORIES, Tag, TagParseError, OUTSIDE, parse_tag, tag_to_id, validate_sequence
from .textnorm import DEFAULT_CONFIG, NormalizationConfig, normalize_text

EXPECTED_HEADER = ["file_name", "sentence", "word", "tag"]

# tag-id slot for padded positions; always masked out of loss and accuracy
PAD_TAG_ID = -1


class CorpusFormatError(ValueError):
    """Structurally unreadable corpus file (header, column count, encoding)."""


@dataclass
class CorpusRow:
    file_name: str
    sentence: int
    word: str
    tag: str


@dataclass
class TaggedSentence:
    """Parallel normalized tokens and parsed tags, plus source identifiers."""

    tokens: list[str]
    tags: list[Tag]
    file_name: str = ""
    sentence_id: int = 0

    def __post_init__(self):
        if len(self.tokens) != len(self.tags) or not self.tokens:
            raise ValueError(
                f"need equal, nonzero token/tag counts, got {len(self.tokens)}/{len(self.tags)}"
            )

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class LoadIssue:
    path: str
    line: int  # 1-based physical line in the CSV (0 for sentence-level issues)
    message: str

    def __str__(self) -> str:
        where = f"{self.path}:{self.line}" if self.line else self.path
        return f"{where}: {self.message}"


@dataclass
class LoadReport:
    issues: list[LoadIssue] = field(default_factory=list)
    dropped_sentences: int = 0

    @property
    def clean(self) -> bool:
        return not self.issues

    def add(self, path, line, message):
        self.issues.append(LoadIssue(str(path), line, message))


class Vocabulary:
    """Token-to-id bijection with PAD=0 and UNK=1 reserved."""

    PAD_ID = 0
    UNK_ID = 1
    PAD_TOKEN = "<PAD>"
    UNK_TOKEN = "<UNK>"

    def __init__(self, tokens: list[str]):
        """``tokens`` are the non-reserved entries, already in id order."""
        self.id_to_token = [self.PAD_TOKEN, self.UNK_TOKEN] + list(tokens)
        self.token_to_id = {tok: i + 2 for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, self.UNK_ID)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token


def build_vocab(sentences: list[TaggedSentence], min_count: int = 1) -> Vocabulary:
    """Collect every token with frequency >= min_count.

    Ids are deterministic: descending frequency, ties broken by codepoint
    order, starting at 2 (after PAD and UNK).
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(tok for s in sentences for tok in s.tokens)
    kept = [t for t, n in counts.items() if n >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


def _read_rows(path: Path) -> list[tuple[int, CorpusRow]]:
    """Parse one CSV file into (line_number, row) pairs; structural problems raise."""
    try:
        with open(path, encoding="utf-8-sig", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise CorpusFormatError(f"{path}:1: missing header row") from None
            except UnicodeDecodeError as exc:
                raise CorpusFormatError(f"{path}: not valid UTF-8 ({exc})") from None
            if [h.strip() for h in header] != EXPECTED_HEADER:
                raise CorpusFormatError(
                    f"{path}:1: expected header {','.join(EXPECTED_HEADER)!r}, got {','.join(header)!r}"
                )
            rows = []
            for row in reader:
                line = reader.line_num
                if not row:
                    continue  # stray blank line
                if len(row) != 4:
                    raise CorpusFormatError(f"{path}:{line}: expected 4 columns, got {len(row)}")
                file_name, sentence, word, tag = row
                try:
                    sentence_id = int(sentence)
                except ValueError:
                    raise CorpusFormatError(
                        f"{path}:{line}: sentence id {sentence!r} is not an integer"
                    ) from None
                rows.append((line, CorpusRow(file_name, sentence_id, word, tag)))
            return rows
    except UnicodeDecodeError as exc:
        raise CorpusFormatError(f"{path}: not valid UTF-8 ({exc})") from None
    except OSError as exc:
        raise CorpusFormatError(f"{path}: unreadable ({exc})") from None


def _corpus_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix == ".csv" and p.is_file())
        if not files:
            raise CorpusFormatError(f"{path}: no .csv files found")
        return files
    raise CorpusFormatError(f"{path}: no such file or directory")


def read_corpus(
    path: str | Path,
    strict: bool = True,
    norm_cfg: NormalizationConfig = DEFAULT_CONFIG,
) -> tuple[list[TaggedSentence], LoadReport]:
    """Load every sentence under ``path`` (a CSV file or a directory of them).

    Grouping happens within each physical file: a sentence is a maximal
    run of rows sharing the (file_name, sentence) column pair.  Words are
    normalized; tags are parsed.  In strict mode a sentence with any
    unparseable tag or a BIOES grammar violation is dropped and reported;
    in lenient mode unparseable tags are coerced to O with a warning and
    grammar violations are reported but the sentence is kept.
    """
    report = LoadReport()
    sentences: list[TaggedSentence] = []
    for file_path in _corpus_files(Path(path)):
        rows = _read_rows(file_path)
        for group in _group_rows(rows):
            sentence = _assemble_sentence(group, file_path, strict, norm_cfg, report)
            if sentence is not None:
                sentences.append(sentence)
            else:
                report.dropped_sentences += 1
    return sentences, report


def _group_rows(rows):
    group = []
    current = None
    for line, row in rows:
        key = (row.file_name, row.sentence)
        if key != current and group:
            yield group
            group = []
        current = key
        group.append((line, row))
    if group:
        yield group


def _assemble_sentence(group, path, strict, norm_cfg, report) -> TaggedSentence | None:
    tokens = []
    tags = []
    bad_rows = False
    for line, row in group:
        tokens.append(normalize_text(row.word, norm_cfg))
        try:
            tags.append(parse_tag(row.tag))
        except TagParseError as exc:
            report.add(path, line, str(exc))
            bad_rows = True
            tags.append(OUTSIDE)  # lenient-mode coercion; strict drops the sentence
    if bad_rows and strict:
        return None
    first_line, first_row = group[0]
    violation = validate_sequence(tags)
    if violation is not None:
        report.add(
            path,
            0,
            f"sentence ({first_row.file_name}, {first_row.sentence}) "
            f"starting at line {first_line}: {violation}",
        )
        if strict:
            return None
    return TaggedSentence(tokens, tags, first_row.file_name, first_row.sentence)


def encode_sentence(
    s: TaggedSentence, v: Vocabulary, max_len: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encode to fixed-length (token_ids, tag_ids, mask) arrays.

    Unknown tokens map to UNK; positions past the sentence length are PAD
    with tag id PAD_TAG_ID and mask 0.  Sentences longer than max_len are
    truncated (detectable by the caller via sum(mask) == max_len < len(s)).
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    n = min(len(s), max_len)
    token_ids = np.full(max_len, Vocabulary.PAD_ID, dtype=np.int64)
    tag_ids = np.full(max_len, PAD_TAG_ID, dtype=np.int64)
    mask = np.zeros(max_len, dtype=np.float64)
    for i in range(n):
        token_ids[i] = v.lookup(s.tokens[i])
        tag_ids[i] = tag_to_id(s.tags[i])
        mask[i] = 1.0
    return token_ids, tag_ids, mask


@dataclass
class SplitStats:
    files: int = 0
    sentences: int = 0
    words: int = 0
    category_tokens: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.category_tokens:
            self.category_tokens = {c: 0 for c in CATEGORIES}


@dataclass
class CorpusStats:
    splits: dict[str, SplitStats]
    total: SplitStats


def corpus_stats(splits: dict[str, list[TaggedSentence]]) -> CorpusStats:
    """Per-split file/sentence/word counts plus per-category entity-token counts.

    A token counts toward category X when its tag has category X under any
    prefix, mirroring the per-category word counts of the dataset tables.
    """
    per_split = {}
    total = SplitStats()
    for name, sentences in splits.items():
        st = SplitStats(
            files=len({s.file_name for s in sentences}),
            sentences=len(sentences),
            words=sum(len(s) for s in sentences),
        )
        for s in sentences:
            for tag in s.tags:
                if not tag.is_outside:
                    st.category_tokens[tag.category] += 1
        per_split[name] = st
        total.files += st.files
        total.sentences += st.sentences
        total.words += st.words
        for c in CATEGORIES:
            total.category_tokens[c] += st.category_tokens[c]
    return CorpusStats(per_split, total)
