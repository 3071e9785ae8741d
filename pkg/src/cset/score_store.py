"""Score matrices, file formats, softmax, sorting, and data splits.

A score matrix holds one row of classifier outputs per example (logits or
probabilities) plus the true label. All downstream set construction consumes
the sorted view produced by :func:`sort_scores`. Internal arithmetic is
64-bit; the binary file format stores scores as float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import seeds

KINDS = ("logits", "probabilities")

_MAGIC = b"CSET1"
_ROW_SUM_OK = 1e-6
_ROW_SUM_FIX = 1e-3


class DataError(ValueError):
    """Malformed or inconsistent input data (distinct from usage errors)."""


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise DataError(msg)


@dataclass(frozen=True)
class ScoreMatrix:
    """Validated (n, K) score matrix with integer labels in [0, K).

    Probability rows must sum to 1 within 1e-6; rows off by at most 1e-3
    are renormalized, anything worse is rejected. Arrays are read-only
    after construction.
    """

    scores: np.ndarray
    labels: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        _check(self.kind in KINDS, f"unknown kind {self.kind!r}")
        scores = np.array(self.scores, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        _check(scores.ndim == 2, "scores must be a 2-D array")
        n, k = scores.shape
        _check(n >= 1, "empty matrix: need at least one row")
        _check(k >= 2, f"need at least 2 classes, got {k}")
        _check(labels.shape == (n,), "labels must be one integer per row")
        bad = ~np.isfinite(scores)
        if bad.any():
            row = int(np.argwhere(bad)[0, 0])
            raise DataError(f"non-finite score in row {row}")
        out = (labels < 0) | (labels >= k)
        if out.any():
            row = int(np.argmax(out))
            raise DataError(f"label out of range in row {row}: {labels[row]} not in [0, {k})")
        if self.kind == "probabilities":
            if (scores < 0).any():
                row = int(np.argwhere(scores < 0)[0, 0])
                raise DataError(f"negative probability in row {row}")
            sums = scores.sum(axis=1)
            dev = np.abs(sums - 1.0)
            if (dev > _ROW_SUM_FIX).any():
                row = int(np.argmax(dev > _ROW_SUM_FIX))
                raise DataError(
                    f"row {row} sums to {sums[row]:.6f}, outside the {_ROW_SUM_FIX} "
                    "renormalization band"
                )
            fix = dev > _ROW_SUM_OK
            if fix.any():
                scores = scores.copy()
                scores[fix] /= sums[fix, None]
        for arr in (scores, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def n_classes(self) -> int:
        return self.scores.shape[1]

    def take(self, idx: np.ndarray) -> "ScoreMatrix":
        """Row subset (copy) in the given order."""
        return ScoreMatrix(self.scores[idx], self.labels[idx], self.kind)


@dataclass(frozen=True)
class SortedScores:
    """Per-row descending sort of a probability matrix.

    ``sorted[i, j]`` is the (j+1)-th largest probability of row i,
    ``perm[i, j]`` the class index it came from, and ``cumsum`` the running
    row prefix sums. Ties are broken by a seeded shuffle inside
    :func:`sort_scores`, so ``perm`` rows are always true permutations.
    """

    sorted: np.ndarray
    perm: np.ndarray
    cumsum: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.sorted, self.perm, self.cumsum):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.sorted.shape[0]

    @property
    def n_classes(self) -> int:
        return self.sorted.shape[1]

    def take(self, idx: np.ndarray) -> "SortedScores":
        return SortedScores(
            self.sorted[idx].copy(), self.perm[idx].copy(), self.cumsum[idx].copy()
        )

    def label_ranks(self, labels: np.ndarray) -> np.ndarray:
        """1-based rank of each row's label in that row's sorted order."""
        n, k = self.perm.shape
        labels = np.asarray(labels)
        _check(labels.shape == (n,), "labels must be one integer per row")
        inv = np.empty_like(self.perm)
        np.put_along_axis(inv, self.perm, np.broadcast_to(np.arange(k), (n, k)), axis=1)
        return inv[np.arange(n), labels] + 1


def softmax(m: ScoreMatrix, temperature: float = 1.0) -> ScoreMatrix:
    """Row-wise softmax of a logit matrix at the given temperature.

    Stabilized by subtracting the row max before exponentiation. Preserves
    the within-row ranking for any positive temperature.
    """
    if m.kind != "logits":
        raise ValueError("softmax expects logits")
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = (m.scores - m.scores.max(axis=1, keepdims=True)) / temperature
    e = np.exp(z)
    return ScoreMatrix(e / e.sum(axis=1, keepdims=True), m.labels, "probabilities")


def sort_scores(m: ScoreMatrix, seed: int = 0) -> SortedScores:
    """Descending per-row sort with seeded uniform tie-breaking.

    Tied entries are ordered by an auxiliary random key drawn from the
    substream (seed, TIEBREAK); row i consumes row i of that key matrix, so
    the outcome does not depend on processing order.
    """
    if m.kind != "probabilities":
        raise ValueError("sort_scores expects probabilities; apply softmax first")
    tie = seeds.rng(seed, seeds.TIEBREAK).random(m.scores.shape)
    perm = np.lexsort((tie, -m.scores), axis=1)
    srt = np.take_along_axis(m.scores, perm, axis=1)
    return SortedScores(srt, perm, np.cumsum(srt, axis=1))


@dataclass(frozen=True)
class SplitSpec:
    """Sizes of the (tuning, calibration, evaluation) splits.

    Each size is an absolute row count (int) or a fraction of n (float in
    [0, 1)). The three splits are disjoint; leftover rows are dropped.
    """

    seed: int
    sizes: tuple

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if len(self.sizes) != 3:
            raise ValueError("sizes must be (tuning, calibration, evaluation)")

    def resolve(self, n: int) -> tuple[int, int, int]:
        out = []
        for s in self.sizes:
            if isinstance(s, float):
                if not 0 <= s < 1:
                    raise ValueError(f"fractional size must be in [0, 1), got {s}")
                out.append(int(round(s * n)))
            else:
                if s < 0:
                    raise ValueError(f"split size must be nonnegative, got {s}")
                out.append(int(s))
        if sum(out) > n:
            raise DataError(f"split sizes {tuple(out)} exceed available rows ({n})")
        return tuple(out)


def split(m: ScoreMatrix, spec: SplitSpec) -> tuple[ScoreMatrix | None, ...]:
    """Disjoint (tuning, calibration, evaluation) split via a seeded shuffle.

    A size of zero yields None for that slot. Deterministic given the seed.
    """
    t, c, e = spec.resolve(m.n)
    perm = seeds.rng(spec.seed, seeds.SPLIT).permutation(m.n)
    parts = []
    at = 0
    for size in (t, c, e):
        parts.append(m.take(perm[at:at + size]) if size > 0 else None)
        at += size
    return tuple(parts)


# --- file formats ---------------------------------------------------------

def save_scores(m: ScoreMatrix, path: str, fmt: str = "binary") -> None:
    if fmt == "csv":
        _save_csv(m, path)
    elif fmt == "binary":
        _save_binary(m, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def load_scores(path: str, fmt: str = "auto") -> ScoreMatrix:
    """Load a score file. With fmt="auto" the binary magic decides."""
    if fmt == "auto":
        with open(path, "rb") as fh:
            head = fh.read(len(_MAGIC))
        fmt = "binary" if head == _MAGIC else "csv"
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "binary":
        return _load_binary(path)
    raise ValueError(f"unknown format {fmt!r}")


def _save_csv(m: ScoreMatrix, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"scores,K={m.n_classes}\n")
        for row, label in zip(m.scores, m.labels):
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write(f",{int(label)}\n")


def _load_csv(path: str) -> ScoreMatrix:
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            if not header.startswith("scores,K="):
                raise DataError(f"{path}: malformed header {header!r}")
            try:
                k = int(header[len("scores,K="):])
            except ValueError:
                raise DataError(f"{path}: malformed header {header!r}") from None
            rows, labels = [], []
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != k + 1:
                    raise DataError(f"{path}: row {i} has {len(parts) - 1} scores, expected {k}")
                try:
                    rows.append([float(p) for p in parts[:k]])
                    labels.append(int(parts[k]))
                except ValueError:
                    raise DataError(f"{path}: row {i} has a malformed value") from None
    except UnicodeDecodeError:
        raise DataError(
            f"{path}: not a text CSV and the binary magic is absent"
        ) from None
    _check(rows, f"{path}: empty matrix")
    scores = np.array(rows, dtype=np.float64)
    kind = _infer_kind(scores)
    return ScoreMatrix(scores, np.array(labels, dtype=np.int64), kind)


def _infer_kind(scores: np.ndarray) -> str:
    # CSV carries no kind flag; rows that look like distributions (entries in
    # [0, 1], sums within the renormalization band) are read as probabilities.
    if (scores >= 0).all() and (scores <= 1).all():
        if np.abs(scores.sum(axis=1) - 1.0).max() <= _ROW_SUM_FIX:
            return "probabilities"
    return "logits"


def _save_binary(m: ScoreMatrix, path: str) -> None:
    kind_flag = 0 if m.kind == "logits" else 1
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BQQ", kind_flag, m.n, m.n_classes))
        fh.write(m.scores.astype("<f4").tobytes(order="C"))
        fh.write(m.labels.astype("<u4").tobytes())


def _load_binary(path: str) -> ScoreMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    head = len(_MAGIC) + struct.calcsize("<BQQ")
    _check(len(blob) >= head, f"{path}: truncated header")
    _check(blob[: len(_MAGIC)] == _MAGIC, f"{path}: bad magic, not a score file")
    kind_flag, n, k = struct.unpack_from("<BQQ", blob, len(_MAGIC))
    _check(kind_flag in (0, 1), f"{path}: bad kind flag {kind_flag}")
    _check(n > 0, f"{path}: empty matrix")
    need = head + 4 * n * k + 4 * n
    _check(len(blob) == need, f"{path}: expected {need} bytes, found {len(blob)}")
    scores = np.frombuffer(blob, dtype="<f4", count=n * k, offset=head)
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=head + 4 * n * k)
    return ScoreMatrix(
        scores.reshape(n, k).astype(np.float64),
        labels.astype(np.int64),
        "logits" if kind_flag == 0 else "probabilities",
    )
