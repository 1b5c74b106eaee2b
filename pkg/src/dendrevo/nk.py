"""NK landscapes and the regression datasets drawn from them.

An NK landscape assigns a fitness in [0, 1] to every binary genome of
length ``n``. Each gene's contribution depends on its own bit and on the
bits of ``k`` randomly chosen other genes, looked up in a per-gene table
of 2^(k+1) random values; genome fitness is the mean contribution.
Raising ``k`` raises epistasis and therefore task ruggedness, which makes
the landscape a convenient tuneable source of regression data: random
genomes become feature vectors, their fitnesses become targets.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np


class Encoding(Enum):
    """How binary genes are turned into real-valued network inputs.

    SIGN_SPLIT: a one gene becomes a uniform draw from [0, 1], a zero gene
    a uniform draw from [-1, 0), so the bit is recoverable from the sign.
    CENTER_BAND: a one gene becomes a uniform draw from [-0.5, 0.5]; a zero
    gene lands in one of the outer bands [-1, -0.5] or (0.5, 1], chosen by
    a fair coin.
    """

    SIGN_SPLIT = "signsplit"
    CENTER_BAND = "centerband"


@dataclass(frozen=True)
class NKLandscape:
    """A seeded epistatic fitness function over length-``n`` binary genomes.

    ``neighbors[i]`` lists the k other genes that modulate gene i's
    contribution; ``tables[i]`` holds its 2^(k+1) contribution values.
    Reconstructing from (seed, n, k) yields an identical landscape.
    For k=15 each table has 65536 entries, so a landscape at n=1000
    occupies roughly half a gigabyte; drop the reference once datasets
    have been generated if memory is tight.
    """

    n: int
    k: int
    seed: int
    neighbors: np.ndarray  # (n, k) int64, row i excludes i, entries distinct
    tables: np.ndarray  # (n, 2^(k+1)) float64 in [0, 1)

    def table_index(self, bits: np.ndarray, gene: int) -> int:
        """Row into ``tables[gene]``: own bit in the lowest position,
        neighbor bits above it in stored neighbor-list order."""
        idx = int(bits[gene])
        for m, j in enumerate(self.neighbors[gene]):
            idx |= int(bits[j]) << (m + 1)
        return idx


@dataclass(frozen=True)
class Sample:
    """One regression example: encoded features plus the genome's fitness."""

    features: np.ndarray  # (n,) float64 in [-1, 1]
    target: float  # in [0, 1]


@dataclass(frozen=True)
class Dataset:
    """A batch of samples drawn from one landscape.

    Features are stored as one (size, n) matrix and targets as a (size,)
    vector so evaluation code can stay vectorized; ``samples`` exposes the
    per-example view.
    """

    features: np.ndarray  # (size, n) float64
    targets: np.ndarray  # (size,) float64
    encoding: Encoding

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.targets.shape != (self.features.shape[0],):
            raise ValueError("features must be (size, n) with matching targets")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def samples(self) -> tuple[Sample, ...]:
        return tuple(
            Sample(self.features[i], float(self.targets[i])) for i in range(len(self))
        )


def build_landscape(n: int, k: int, seed: int) -> NKLandscape:
    """Construct a seeded NK landscape.

    Each gene's k neighbors are drawn uniformly without replacement from
    the other n-1 genes; table entries are uniform on [0, 1). The rng
    consumption order (all neighbor lists first, then one bulk table draw)
    is fixed so (seed, n, k) always reproduces the same landscape.
    """
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    if not 0 <= k <= n - 1:
        raise ValueError(f"k must satisfy 0 <= k <= n-1, got k={k} for n={n}")
    rng = np.random.default_rng(seed)
    neighbors = np.empty((n, k), dtype=np.int64)
    genes = np.arange(n)
    for i in range(n):
        others = np.delete(genes, i)
        neighbors[i] = rng.choice(others, size=k, replace=False)
    tables = rng.random((n, 2 ** (k + 1)))
    return NKLandscape(n=n, k=k, seed=seed, neighbors=neighbors, tables=tables)


def _table_rows(landscape: NKLandscape, bits: np.ndarray) -> np.ndarray:
    """Table row index per gene for a (batch, n) bit matrix."""
    rows = bits.astype(np.int64, copy=True)
    for m in range(landscape.k):
        rows += bits[:, landscape.neighbors[:, m]].astype(np.int64) << (m + 1)
    return rows


def evaluate_genomes(landscape: NKLandscape, bits: np.ndarray) -> np.ndarray:
    """Fitness of each row of a (batch, n) binary matrix."""
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != landscape.n:
        raise ValueError(
            f"genome matrix must be (batch, {landscape.n}), got {bits.shape}"
        )
    rows = _table_rows(landscape, bits)
    contrib = landscape.tables[np.arange(landscape.n)[None, :], rows]
    return contrib.sum(axis=1) / landscape.n


def evaluate_genome(landscape: NKLandscape, bits: np.ndarray) -> float:
    """Fitness of one binary genome: mean of per-gene table contributions."""
    bits = np.asarray(bits)
    if bits.shape != (landscape.n,):
        raise ValueError(f"genome must have length {landscape.n}, got {bits.shape}")
    return float(evaluate_genomes(landscape, bits[None, :])[0])


def _encode_bits(bits: np.ndarray, encoding: Encoding, rng: np.random.Generator) -> np.ndarray:
    """Encode a (batch, n) bit matrix into feature values in [-1, 1].

    Draw order is fixed: one uniform per gene, then (CENTER_BAND only) one
    coin per gene, so a given rng state always yields the same features.
    """
    u = rng.random(bits.shape)
    if encoding is Encoding.SIGN_SPLIT:
        # one -> [0, 1), zero -> [-1, 0)
        return np.where(bits == 1, u, u - 1.0)
    # CENTER_BAND: one -> [-0.5, 0.5); zero -> [-1, -0.5) or (0.5, 1.0]
    coin = rng.random(bits.shape) < 0.5
    outer = np.where(coin, 0.5 * u - 1.0, 1.0 - 0.5 * u)
    return np.where(bits == 1, u - 0.5, outer)


def encode_features(
    bits: np.ndarray, encoding: Encoding, rng: np.random.Generator
) -> np.ndarray:
    """Encode one binary genome into a real feature vector."""
    bits = np.asarray(bits)
    return _encode_bits(bits[None, :], encoding, rng)[0]


def generate_dataset(
    landscape: NKLandscape,
    size: int,
    encoding: Encoding,
    rng: np.random.Generator,
) -> Dataset:
    """Draw ``size`` uniform genomes, encode them, pair with their fitness."""
    if size < 1:
        raise ValueError(f"dataset size must be >= 1, got {size}")
    bits = rng.integers(0, 2, size=(size, landscape.n), dtype=np.uint8)
    targets = evaluate_genomes(landscape, bits)
    features = _encode_bits(bits, encoding, rng)
    return Dataset(features=features, targets=targets, encoding=encoding)


def save_landscape(landscape: NKLandscape, path: str | Path) -> None:
    """Write the textual landscape export.

    Header ``NKL 1 <n> <k> <seed>``, then one line per gene: the gene
    index, its neighbor indices, a ``|`` separator, and the 2^(k+1) table
    values in row order at 17 significant digits.
    """
    lines = [f"NKL 1 {landscape.n} {landscape.k} {landscape.seed}"]
    for i in range(landscape.n):
        tokens = [str(i)]
        tokens.extend(str(j) for j in landscape.neighbors[i])
        tokens.append("|")
        tokens.extend(f"{v:.17g}" for v in landscape.tables[i])
        lines.append(" ".join(tokens))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
