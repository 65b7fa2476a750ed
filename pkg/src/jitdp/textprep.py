"""Text preparation: tokenization, per-file change documents with the
"Added:"/"Removed:" headers, vocabulary construction, and fixed-shape
encoding of commits to token-id matrices.

Reserved ids: 0 padding, 1 unknown, 2 the added-lines header, 3 the
removed-lines header. The header strings are inserted verbatim (they can
never be produced by the tokenizer, which lowercases and splits punctuation)
and always map to their reserved ids.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import CommitRecord, FileChange

PAD_ID = 0
UNK_ID = 1
ADDED_ID = 2
REMOVED_ID = 3
ADDED_HEADER = "Added:"
REMOVED_HEADER = "Removed:"
_RESERVED = ((PAD_ID, "<pad>"), (UNK_ID, "<unk>"), (ADDED_ID, ADDED_HEADER), (REMOVED_ID, REMOVED_HEADER))

_TOKEN_PATTERN = re.compile(r"\w+|[^\w\s]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and punctuation boundaries; runs of
    punctuation stay single tokens."""
    return _TOKEN_PATTERN.findall(text.lower())


def render_change_document(file: FileChange) -> list[str]:
    """One token sequence per file: the added header, all added lines in
    order, the removed header, all removed lines in order."""
    doc = [ADDED_HEADER]
    doc += tokenize("\n".join(file.added_lines))
    doc.append(REMOVED_HEADER)
    doc += tokenize("\n".join(file.removed_lines))
    return doc


@dataclass(frozen=True)
class TextShape:
    """Fixed encoding shapes: message length, per-file document length, and
    the number of file slots per commit."""

    l_msg: int = 64
    l_code: int = 256
    files: int = 8


MICRO_SHAPE = TextShape(l_msg=24, l_code=48, files=4)


@dataclass(frozen=True)
class Vocab:
    token_to_id: dict
    max_size: int
    min_frequency: int
    split: str = "train"
    provenance: str = ""

    def __len__(self) -> int:
        return 4 + len(self.token_to_id)

    def lookup(self, token: str) -> int:
        if token == ADDED_HEADER:
            return ADDED_ID
        if token == REMOVED_HEADER:
            return REMOVED_ID
        return self.token_to_id.get(token, UNK_ID)

    def id_to_token(self) -> dict:
        table = {i: name for i, name in _RESERVED}
        table.update({i: t for t, i in self.token_to_id.items()})
        return table


def build_vocab(documents, max_size: int = 20_000, min_frequency: int = 2,
                split: str = "train", provenance: str = "") -> Vocab:
    """Keep the most frequent tokens, ties broken lexicographically, up to
    max_size total entries including the 4 reserved ids. Must only ever see
    training-split documents."""
    counts = Counter()
    for doc in documents:
        for tok in doc:
            if tok in (ADDED_HEADER, REMOVED_HEADER):
                continue
            counts[tok] += 1
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty training corpus")
    eligible = [(-c, t) for t, c in counts.items() if c >= min_frequency]
    eligible.sort()
    kept = eligible[: max(0, max_size - 4)]
    token_to_id = {t: i + 4 for i, (_, t) in enumerate(kept)}
    return Vocab(token_to_id=token_to_id, max_size=max_size,
                 min_frequency=min_frequency, split=split, provenance=provenance)


@dataclass(frozen=True)
class EncodedCommit:
    message_ids: np.ndarray  # (l_msg,) int64
    file_ids: np.ndarray  # (files, l_code) int64
    shape: TextShape


def _fit(ids: list, length: int) -> np.ndarray:
    out = np.full(length, PAD_ID, dtype=np.int64)
    ids = ids[:length]
    out[: len(ids)] = ids
    return out


def encode_commit(commit: CommitRecord, vocab: Vocab, shape: TextShape) -> EncodedCommit:
    """Pad/truncate the message to l_msg, each file document to l_code, and
    the file list to `files` rows (first rows by file order; padding rows
    are all-padding)."""
    msg = _fit([vocab.lookup(t) for t in tokenize(commit.message)], shape.l_msg)
    file_ids = np.full((shape.files, shape.l_code), PAD_ID, dtype=np.int64)
    for row, file in enumerate(commit.files[: shape.files]):
        doc = render_change_document(file)
        file_ids[row] = _fit([vocab.lookup(t) for t in doc], shape.l_code)
    return EncodedCommit(message_ids=msg, file_ids=file_ids, shape=shape)


def decode_ids(ids, vocab: Vocab) -> list[str]:
    """Tokens for the non-padding prefix of an id sequence."""
    table = vocab.id_to_token()
    out = []
    for i in ids:
        if i == PAD_ID:
            break
        out.append(table[int(i)])
    return out


# ---------------------------------------------------------------------------
# Vocabulary file: four fixed preamble lines for the reserved entries, then
# one token per line; a token on 0-based body line n has id n + 4.
# ---------------------------------------------------------------------------


def save_vocab(path, vocab: Vocab) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for rid, name in _RESERVED:
            handle.write(f"#{rid}\t{name}\n")
        for token, _ in sorted(vocab.token_to_id.items(), key=lambda kv: kv[1]):
            handle.write(token + "\n")


def load_vocab(path, max_size: int = 20_000, min_frequency: int = 2,
               split: str = "train", provenance: str = "") -> Vocab:
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().split("\n")
    body = [ln for ln in lines[4:] if ln != ""]
    token_to_id = {t: i + 4 for i, t in enumerate(body)}
    return Vocab(token_to_id=token_to_id, max_size=max_size,
                 min_frequency=min_frequency, split=split, provenance=provenance)
