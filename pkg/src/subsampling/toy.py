"""The one-slot memory transduction task and its random data generator."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

ALPHABET = (0, 1, 2)


@dataclass(frozen=True)
class ToyPair:
    input: tuple[int, ...]
    target: tuple[int, ...]


def check_symbols(x) -> tuple[int, ...]:
    x = tuple(int(v) for v in x)
    if not x:
        raise ValueError("symbol sequence must be non-empty")
    if any(v not in ALPHABET for v in x):
        raise ValueError(f"symbols must be in {ALPHABET}, got {x}")
    return x


# (memory, incoming) -> emitted symbol
_PAIR_OUTPUT = {(1, 1): 0, (2, 2): 0, (2, 1): 2, (1, 2): 1}


def transduce(x) -> tuple[int, ...]:
    """Reference target for an input sequence.

    Zeros are ignored. A nonzero symbol fills an empty memory; the next one
    empties it and emits 0 on a match, otherwise the remembered symbol.
    Overrides: a length-1 input maps to itself, an all-zero input to ``(0,)``
    and an input with a single nonzero symbol to that symbol. Memory still
    held at the end is dropped.

    >>> transduce([1, 0, 2, 2, 2])
    (1, 0)
    """
    x = check_symbols(x)
    nonzero = [v for v in x if v]
    if len(x) == 1:
        return x
    if not nonzero:
        return (0,)
    if len(nonzero) == 1:
        return (nonzero[0],)
    out = []
    memory = 0
    for v in nonzero:
        if memory == 0:
            memory = v
        else:
            out.append(_PAIR_OUTPUT[memory, v])
            memory = 0
    return tuple(out)


def gen_batch(T: int, batch: int, seed) -> list[ToyPair]:
    """``batch`` uniform random length-``T`` inputs with their targets.

    ``seed`` may be an int or a ``numpy.random.Generator`` (which is advanced).
    """
    if T < 1 or batch < 1:
        raise ValueError("T and batch must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    xs = rng.integers(0, 3, size=(batch, T))
    return [ToyPair(tuple(int(v) for v in row), transduce(row)) for row in xs]


def one_hot(x) -> np.ndarray:
    """``(T, 3)`` float64 one-hot encoding; also accepts a ``(B, T)`` integer array."""
    x = np.asarray(x)
    if x.size == 0 or np.any((x < 0) | (x > 2)):
        raise ValueError("symbols must be in {0, 1, 2}")
    return np.eye(3)[x.astype(np.intp)]


def format_pairs(pairs) -> str:
    return "".join(
        " ".join(map(str, p.input)) + "\t" + " ".join(map(str, p.target)) + "\n" for p in pairs
    )


def write_pairs(path, pairs) -> None:
    """Dump pairs as ``input symbols<TAB>target symbols`` lines (UTF-8)."""
    Path(path).write_text(format_pairs(pairs), encoding="utf-8")


def read_pairs(path) -> list[ToyPair]:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            src, tgt = line.split("\t")
            pairs.append(ToyPair(check_symbols(src.split()), check_symbols(tgt.split())))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed pair line") from exc
    return pairs
