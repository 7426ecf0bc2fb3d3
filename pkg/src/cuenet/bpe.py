"""Byte-level BPE tokenizer with fixed-length id/mask output.

Training is plain byte-pair merging over raw UTF-8 bytes, no pre-split, no
normalization beyond trimming outer whitespace: emojis, hashtags, and
punctuation survive verbatim, and byte fallback means encode never produces
an unknown token. Pair counting and merge application are vectorized over a
single id array with -1 separators between texts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cuenet.errors import DataError

PAD_ID = 0
UNK_ID = 1
BOS_ID = 2
EOS_ID = 3
SPECIAL_TOKENS = (b"<pad>", b"<unk>", b"<bos>", b"<eos>")
N_SPECIALS = len(SPECIAL_TOKENS)
BYTE_OFFSET = N_SPECIALS  # byte b maps to id BYTE_OFFSET + b

VOCAB_HEADER = "bpe-vocab v1"


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token byte-sequences plus the merge list that produced them."""

    tokens: tuple  # tuple[bytes], ids dense from 0; specials first, then bytes, then merges
    merges: tuple  # tuple[(bytes, bytes)] in learning order

    def __post_init__(self):
        known = set(self.tokens)
        for left, right in self.merges:
            if left + right not in known:
                raise DataError(f"merge output {(left + right)!r} missing from token list")

    @property
    def size(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class TokenizedPost:
    """Fixed-length ids and a same-length prefix-of-ones mask."""

    ids: np.ndarray  # int64, shape (max_len,)
    mask: np.ndarray  # float64 0/1, shape (max_len,)
    valid_len: int

    def __post_init__(self):
        if not 1 <= self.valid_len <= len(self.ids):
            raise DataError(f"valid_len {self.valid_len} out of range for length {len(self.ids)}")


def _pair_counts(seq: np.ndarray):
    """Counts of adjacent id pairs, ignoring pairs that span a -1 separator."""
    left, right = seq[:-1], seq[1:]
    ok = (left >= 0) & (right >= 0)
    if not ok.any():
        return np.empty((0, 2), dtype=np.int64), np.empty(0, dtype=np.int64)
    keys = left[ok].astype(np.int64) << 21 | right[ok].astype(np.int64)
    uniq, counts = np.unique(keys, return_counts=True)
    pairs = np.stack([uniq >> 21, uniq & ((1 << 21) - 1)], axis=1)
    return pairs, counts


def _apply_merge(seq: np.ndarray, left: int, right: int, new_id: int) -> np.ndarray:
    """Replace non-overlapping (left, right) occurrences, leftmost-first."""
    hits = np.where((seq[:-1] == left) & (seq[1:] == right))[0]
    if hits.size == 0:
        return seq
    if left == right:
        # drop overlapping hits: in a run like [a a a] only positions 0, 2, ... merge
        keep = []
        prev = -2
        for h in hits:
            if h == prev + 1:
                continue
            keep.append(h)
            prev = h
        hits = np.asarray(keep)
    out = seq.copy()
    out[hits] = new_id
    return np.delete(out, hits + 1)


def train_bpe(texts, vocab_size: int) -> Vocabulary:
    """Learn merges greedily by pair frequency until ``vocab_size`` tokens exist.

    Ties in pair frequency break toward the lexicographically smaller
    (left-bytes, right-bytes) pair, so training is fully deterministic.
    """
    texts = list(texts)
    if not texts or all(not t.strip() for t in texts):
        raise DataError("cannot train a tokenizer on an empty corpus")
    min_size = 256 + N_SPECIALS
    if vocab_size <= min_size:
        raise DataError(f"vocab_size must exceed {min_size}, got {vocab_size}")

    tokens = list(SPECIAL_TOKENS) + [bytes([b]) for b in range(256)]
    pieces = []
    for t in texts:
        raw = t.strip().encode("utf-8")
        if raw:
            pieces.append(np.frombuffer(raw, dtype=np.uint8).astype(np.int64) + BYTE_OFFSET)
            pieces.append(np.array([-1], dtype=np.int64))
    seq = np.concatenate(pieces)

    merges = []
    while len(tokens) < vocab_size:
        pairs, counts = _pair_counts(seq)
        if counts.size == 0 or counts.max() < 2:
            break
        top = pairs[counts == counts.max()]
        lb, rb = min((tokens[l], tokens[r]) for l, r in top)
        left_id = tokens.index(lb)
        right_id = tokens.index(rb)
        new_id = len(tokens)
        tokens.append(lb + rb)
        merges.append((lb, rb))
        seq = _apply_merge(seq, left_id, right_id, new_id)
    return Vocabulary(tokens=tuple(tokens), merges=tuple(merges))


def _merge_ids(vocab: Vocabulary):
    index = {tok: i for i, tok in enumerate(vocab.tokens)}
    return [(index[l], index[r], index[l + r]) for l, r in vocab.merges]


def encode(text: str, vocab: Vocabulary, max_len: int = 128,
           add_bos_eos: bool = False) -> TokenizedPost:
    """Encode to exactly ``max_len`` ids: merges in learned order, then
    right-truncate or right-pad."""
    raw = text.strip().encode("utf-8")
    if not raw:
        raise DataError("cannot encode empty text")
    seq = np.frombuffer(raw, dtype=np.uint8).astype(np.int64) + BYTE_OFFSET
    for left_id, right_id, new_id in _merge_ids(vocab):
        if seq.size < 2:
            break
        seq = _apply_merge(seq, left_id, right_id, new_id)
    ids = seq.tolist()
    if add_bos_eos:
        ids = [BOS_ID] + ids + [EOS_ID]
    ids = ids[:max_len]
    valid_len = len(ids)
    ids = ids + [PAD_ID] * (max_len - valid_len)
    mask = np.zeros(max_len, dtype=np.float64)
    mask[:valid_len] = 1.0
    return TokenizedPost(ids=np.asarray(ids, dtype=np.int64), mask=mask, valid_len=valid_len)


def decode(ids, vocab: Vocabulary) -> str:
    """Concatenate token bytes, dropping specials; bad UTF-8 becomes U+FFFD."""
    out = bytearray()
    for i in ids:
        i = int(i)
        if not 0 <= i < vocab.size:
            raise DataError(f"token id {i} out of range for vocabulary of size {vocab.size}")
        if i < N_SPECIALS:
            continue
        out.extend(vocab.tokens[i])
    return out.decode("utf-8", errors="replace")


# ---------------------------------------------------------------------------
# Vocabulary file format: header line, hex token lines, '#merges', merge lines.


def save_vocab(vocab: Vocabulary, path) -> None:
    lines = [f"{VOCAB_HEADER} {vocab.size}"]
    lines.extend(tok.hex() for tok in vocab.tokens)
    lines.append("#merges")
    lines.extend(f"{l.hex()} {r.hex()}" for l, r in vocab.merges)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_vocab(path) -> Vocabulary:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(VOCAB_HEADER + " "):
        raise DataError(f"{path}: not a {VOCAB_HEADER} file")
    try:
        n = int(lines[0].rsplit(" ", 1)[1])
    except ValueError:
        raise DataError(f"{path}: bad vocabulary header {lines[0]!r}") from None
    if len(lines) < n + 2 or lines[n + 1] != "#merges":
        raise DataError(f"{path}: truncated vocabulary (expected {n} tokens then '#merges')")
    tokens = tuple(bytes.fromhex(line) for line in lines[1:n + 1])
    if tokens[:N_SPECIALS] != SPECIAL_TOKENS:
        raise DataError(f"{path}: special tokens malformed; pad must be id 0")
    merges = []
    for line in lines[n + 2:]:
        if not line:
            continue
        l, r = line.split(" ")
        merges.append((bytes.fromhex(l), bytes.fromhex(r)))
    return Vocabulary(tokens=tokens, merges=tuple(merges))
