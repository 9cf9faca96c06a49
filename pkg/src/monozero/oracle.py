"""Noisy operator evaluations with reproducible, keyed random streams.

Every noise draw is addressed by a (master_seed, run_index, stream,
iteration) tuple. Streams are realized as Philox generators keyed through
``numpy.random.SeedSequence``, so draws for distinct runs or streams are
independent and need no shared state. Within a stream, the draw for
iteration k occupies a fixed block of the generator's output, which makes
blocked (vectorized) and one-at-a-time access bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from monozero.operators import OperatorSpec

STREAM_CODES = {"xi": 0, "eta": 1, "brownian": 2}

NOISE_KINDS = ("none", "iid-gaussian", "decaying-direction")


@dataclass(frozen=True)
class SeedSpec:
    """Addresses one random substream of one Monte-Carlo run."""

    master_seed: int
    run_index: int = 0
    stream: str = "xi"

    def __post_init__(self):
        if self.stream not in STREAM_CODES:
            raise ValueError(f"unknown stream {self.stream!r}, expected one of {sorted(STREAM_CODES)}")

    def with_stream(self, stream: str) -> "SeedSpec":
        return replace(self, stream=stream)

    def with_run(self, run_index: int) -> "SeedSpec":
        return replace(self, run_index=run_index)

    def generator(self) -> np.random.Generator:
        """Fresh keyed generator positioned at the start of this substream."""
        ss = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.run_index, STREAM_CODES[self.stream]),
        )
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class NoiseModel:
    """Additive unbiased noise for operator evaluations.

    kinds:
      none               exact evaluations
      iid-gaussian       W = sigma_star/sqrt(n) * g, g standard normal in R^n;
                         E||W||^2 = sigma_star^2 at every iteration
      decaying-direction W = a/(k sqrt(n)) * (1, ..., 1), a ~ N(0, decay_std^2);
                         variance decays like 1/k^2, so k must be >= 1
    """

    kind: str = "none"
    sigma_star: float = 0.0
    decay_std: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}, expected one of {NOISE_KINDS}")
        if self.sigma_star < 0:
            raise ValueError(f"sigma_star must be nonnegative, got {self.sigma_star}")
        if self.decay_std < 0:
            raise ValueError(f"decay_std must be nonnegative, got {self.decay_std}")

    def draw_width(self, dim: int) -> int:
        """Standard-normal values consumed per iteration."""
        if self.kind == "none":
            return 0
        if self.kind == "iid-gaussian":
            return dim
        return 1

    def variance_bound(self) -> float:
        """A valid bound on sup_k E||W_k||^2 for this model."""
        if self.kind == "none":
            return 0.0
        if self.kind == "iid-gaussian":
            return self.sigma_star**2
        return self.decay_std**2  # attained at k = 1

    def apply(self, dim: int, k: int, gauss: np.ndarray) -> np.ndarray:
        """Map a raw standard-normal block to the noise vector at iteration k."""
        if self.kind == "none":
            return np.zeros(dim)
        if self.kind == "iid-gaussian":
            return (self.sigma_star / np.sqrt(dim)) * gauss
        if k < 1:
            raise ValueError(
                f"decaying-direction noise divides by the iteration index; got k = {k} < 1"
            )
        a = self.decay_std * gauss[0]
        return np.full(dim, a / (k * np.sqrt(dim)))


def draw_blocks(seed: SeedSpec, count: int, width: int) -> np.ndarray:
    """First ``count`` standard-normal blocks of a substream, shape (count, width).

    Row k is bitwise identical to the block ``noise_vector`` uses for
    iteration k, so a run may be pre-drawn in one vectorized call.
    """
    if width == 0:
        return np.zeros((count, 0))
    return seed.generator().standard_normal((count, width))


def noise_vector(noise: NoiseModel, dim: int, seed: SeedSpec, k: int) -> np.ndarray:
    """The noise vector W_k, a pure function of (seed, k)."""
    if noise.kind == "none":
        return np.zeros(dim)
    width = noise.draw_width(dim)
    if k < 0:
        raise ValueError(f"iteration index must be nonnegative, got {k}")
    block = seed.generator().standard_normal((k + 1) * width)[-width:]
    return noise.apply(dim, k, block)


def noisy_eval(op: OperatorSpec, x: np.ndarray, noise: NoiseModel,
               seed: SeedSpec, k: int = 0) -> np.ndarray:
    """One unbiased stochastic evaluation M(x) + W_k."""
    return op.eval(x) + noise_vector(noise, op.dim, seed, k)


def variance_estimate(op: OperatorSpec, x: np.ndarray, noise: NoiseModel,
                      N: int, seed: SeedSpec, k: int = 1) -> float:
    """Unbiased sample estimate of E||M(x, xi) - M(x)||^2 from N draws.

    For the decaying model the variance depends on the iteration index, so
    the estimate is taken at a fixed ``k`` (fresh draws, same scaling).
    """
    if N < 2:
        raise ValueError(f"need at least 2 samples, got {N}")
    if noise.kind == "none":
        return 0.0
    dim = op.dim
    width = noise.draw_width(dim)
    blocks = draw_blocks(seed, N, width)
    if noise.kind == "iid-gaussian":
        sq = (noise.sigma_star**2 / dim) * np.einsum("ij,ij->i", blocks, blocks)
    else:
        if k < 1:
            raise ValueError(f"decaying-direction noise requires k >= 1, got {k}")
        # ||W||^2 = a^2 / k^2 regardless of dimension
        sq = (noise.decay_std * blocks[:, 0] / k) ** 2
    return float(np.mean(sq))
