"""Dataset ingestion (label<TAB>text files) and the synthetic trigger task."""

from __future__ import annotations

import hashlib

import numpy as np

from auber.errors import GenerationError, InputError, ParseError
from auber.trainer import Dataset, Example


def token_id(word: str, vocab_size: int) -> int:
    """Stable 64-bit hash (BLAKE2b, little-endian) of the UTF-8 word, mod vocab."""
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % vocab_size


def tokenize(text: str, vocab_size: int, max_len: int) -> tuple[int, ...]:
    return tuple(token_id(w, vocab_size) for w in text.split()[:max_len])


def load_dataset_tsv(path, vocab_size: int, max_len: int, num_classes: int = 2) -> Dataset:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected '<label>\\t<text>'")
            try:
                label = int(parts[0].strip())
            except ValueError:
                raise ParseError(f"{path}:{lineno}: label {parts[0]!r} is not an integer") from None
            if not 0 <= label < num_classes:
                raise InputError(f"{path}:{lineno}: unknown label {label} (expected 0..{num_classes - 1})")
            tokens = tokenize(parts[1], vocab_size, max_len)
            if not tokens:
                raise ParseError(f"{path}:{lineno}: empty text")
            examples.append(Example(tokens, label))
    if not examples:
        raise InputError(f"{path}: no examples")
    return Dataset(examples, num_classes)


def generate_synthetic(
    n_examples: int,
    seq_len: int,
    vocab: int,
    trigger_token: int,
    label_noise: float,
    rng: np.random.Generator,
    max_draw_factor: int = 200,
    max_flip_retries: int = 50,
) -> Dataset:
    """Uniform random sequences; clean label = 1 iff ``trigger_token`` occurs.

    Clean classes are filled to equal quotas by rejection, then each label is
    flipped with probability ``label_noise``. Flip draws are repeated (bounded)
    until the noisy labels are balanced within 5% (or one example).
    """
    if not 0 <= trigger_token < vocab:
        raise InputError(f"trigger token {trigger_token} outside vocabulary of {vocab}")
    if not 0 <= label_noise < 0.5:
        raise InputError(f"label noise must lie in [0, 0.5), got {label_noise}")
    if n_examples < 1 or seq_len < 1:
        raise InputError("n_examples and seq_len must be >= 1")
    quota = {1: n_examples // 2, 0: n_examples - n_examples // 2}
    kept: dict[int, list[np.ndarray]] = {0: [], 1: []}
    drawn = 0
    budget = max_draw_factor * n_examples
    while len(kept[0]) < quota[0] or len(kept[1]) < quota[1]:
        if drawn >= budget:
            raise GenerationError(
                f"could not balance classes after {drawn} draws "
                f"(have {len(kept[0])}/{quota[0]} negatives, {len(kept[1])}/{quota[1]} positives)"
            )
        batch = rng.integers(0, vocab, size=(n_examples, seq_len))
        drawn += n_examples
        for seq in batch:
            label = int((seq == trigger_token).any())
            if len(kept[label]) < quota[label]:
                kept[label].append(seq)
    seqs = kept[0] + kept[1]
    clean = np.array([0] * quota[0] + [1] * quota[1])
    order = rng.permutation(n_examples)
    tolerance = max(0.05 * n_examples, 1.0)
    for _ in range(max_flip_retries):
        flips = rng.random(n_examples) < label_noise
        noisy = np.where(flips, 1 - clean, clean)
        if abs(noisy.sum() - n_examples / 2) <= tolerance:
            break
    else:
        raise GenerationError("noisy labels stayed unbalanced after bounded retries")
    examples = [Example(tuple(int(t) for t in seqs[i]), int(noisy[i]), int(clean[i])) for i in order]
    return Dataset(examples, 2)
