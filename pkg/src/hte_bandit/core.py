"""Shared value types: RNG streams, feature maps, action distributions, epoch schedules.

Every module in the package builds on the contracts here.  Actions are
integers in 1..K throughout the public API; arrays indexed by action use
position a-1.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

# Stream ids for SeededRng.  Each consumer of randomness gets its own stream
# so that e.g. swapping the algorithm never perturbs the context sequence.
STREAM_CONTEXT = 0
STREAM_NOISE = 1
STREAM_ACTION = 2
STREAM_FOLD = 3
STREAM_PARAMS = 4
STREAM_VALIDATION = 5


@dataclass(frozen=True)
class SeededRng:
    """A (seed, stream) pair naming one reproducible random stream.

    Distinct stream ids under the same seed give statistically independent
    generators (SeedSequence spawn keys), identical pairs give identical
    sequences on every platform.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    return SeededRng(seed, stream).generator()


class ActionDistribution:
    """Probability vector over actions 1..K with validated entries."""

    __slots__ = ("probs",)

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probs must be a 1-d vector")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError(f"probabilities outside [0,1]: {p}")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        self.probs = p

    @property
    def num_actions(self) -> int:
        return self.probs.size

    def prob(self, action: int) -> float:
        return float(self.probs[action - 1])

    def sample(self, rng: np.random.Generator) -> int:
        """Inverse-CDF draw; returns an action in 1..K."""
        u = rng.random()
        c = 0.0
        for i, pi in enumerate(self.probs):
            c += pi
            if u < c:
                return i + 1
        return self.probs.size  # guard against c summing to 1 - eps

    def __repr__(self):
        return f"ActionDistribution({self.probs.tolist()})"


# Feature map kinds.
ARM_BLOCK = "arm_block_with_intercept"
SHARED_INTERCEPT = "shared_with_intercept"
CUSTOM = "custom"


@dataclass(frozen=True)
class FeatureMap:
    """Joint context-action embedding phi(x, a) in R^p.

    arm_block_with_intercept
        p = K*(d+1).  Block a (actions 1-indexed) holds [x; 1]; all other
        blocks are zero.  Every coordinate belongs to exactly one action,
        so per-arm intercepts exist and between-arm constants are
        representable.
    shared_with_intercept
        p = K*d + 1.  Block a holds x, the single trailing coordinate is
        an always-on shared intercept.  Score differences between actions
        cannot contain a constant term.
    custom
        User-supplied callable with declared dimension.
    """

    kind: str
    raw_dim: int
    num_actions: int
    feature_dim: int = field(init=False, default=0)
    fn: Optional[Callable[[np.ndarray, int], np.ndarray]] = None
    custom_dim: int = 0
    custom_intercepts: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.num_actions < 2:
            raise ValueError("need at least two actions")
        if self.raw_dim < 1 and self.kind != CUSTOM:
            raise ValueError("raw context dimension must be positive")
        if self.kind == ARM_BLOCK:
            dim = self.num_actions * (self.raw_dim + 1)
        elif self.kind == SHARED_INTERCEPT:
            dim = self.num_actions * self.raw_dim + 1
        elif self.kind == CUSTOM:
            if self.fn is None or self.custom_dim < 1:
                raise ValueError("custom maps need fn and custom_dim")
            dim = self.custom_dim
        else:
            raise ValueError(f"unknown feature map kind {self.kind!r}")
        object.__setattr__(self, "feature_dim", dim)

    def featurize(self, x: np.ndarray, action: int) -> np.ndarray:
        """Embed one (context, action) pair.  Action must lie in 1..K."""
        if not 1 <= action <= self.num_actions:
            raise ValueError(f"action {action} outside 1..{self.num_actions}")
        x = np.asarray(x, dtype=float)
        if self.kind == CUSTOM:
            v = np.asarray(self.fn(x, action), dtype=float)
            if v.shape != (self.feature_dim,):
                raise ValueError("custom map returned wrong dimension")
            return v
        if x.shape != (self.raw_dim,):
            raise ValueError(f"context has shape {x.shape}, expected ({self.raw_dim},)")
        out = np.zeros(self.feature_dim)
        b = action - 1
        if self.kind == ARM_BLOCK:
            w = self.raw_dim + 1
            out[b * w : b * w + self.raw_dim] = x
            out[b * w + self.raw_dim] = 1.0
        else:  # SHARED_INTERCEPT
            out[b * self.raw_dim : (b + 1) * self.raw_dim] = x
            out[-1] = 1.0
        return out

    def all_actions(self, x: np.ndarray) -> np.ndarray:
        """Stack phi(x, a) for a = 1..K into a (K, p) matrix."""
        return np.stack([self.featurize(x, a) for a in range(1, self.num_actions + 1)])

    def scores(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        """All K inner products <theta, phi(x, a)> without materializing phi."""
        x = np.asarray(x, dtype=float)
        K, d = self.num_actions, self.raw_dim
        if self.kind == ARM_BLOCK:
            blocks = theta.reshape(K, d + 1)
            return blocks[:, :d] @ x + blocks[:, d]
        if self.kind == SHARED_INTERCEPT:
            return theta[: K * d].reshape(K, d) @ x + theta[-1]
        return self.all_actions(x) @ theta

    def intercept_indices(self) -> Tuple[int, ...]:
        """Coordinates left unpenalized by the lasso fits."""
        if self.kind == ARM_BLOCK:
            w = self.raw_dim + 1
            return tuple(b * w + self.raw_dim for b in range(self.num_actions))
        if self.kind == SHARED_INTERCEPT:
            return (self.feature_dim - 1,)
        return self.custom_intercepts

    def context_coefficients(self, theta: np.ndarray, tol: float = 1e-10) -> int:
        """Count of active (|theta_j| > tol) non-intercept coordinates."""
        mask = np.ones(self.feature_dim, dtype=bool)
        for j in self.intercept_indices():
            mask[j] = False
        return int(np.sum(np.abs(theta[mask]) > tol))


def arm_block_map(raw_dim: int, num_actions: int) -> FeatureMap:
    return FeatureMap(ARM_BLOCK, raw_dim, num_actions)


def shared_intercept_map(raw_dim: int, num_actions: int) -> FeatureMap:
    return FeatureMap(SHARED_INTERCEPT, raw_dim, num_actions)


def custom_map(fn, feature_dim: int, num_actions: int, raw_dim: int = 0,
               intercepts: Sequence[int] = ()) -> FeatureMap:
    return FeatureMap(CUSTOM, raw_dim, num_actions, fn=fn, custom_dim=feature_dim,
                      custom_intercepts=tuple(intercepts))


@dataclass(frozen=True)
class LoggedSample:
    """One interaction record: context, chosen action, full propensity vector,
    realized reward, and (once cross-fitting has run) the nuisance value."""

    context: np.ndarray
    action: int
    propensities: ActionDistribution
    reward: float
    mu_hat: Optional[float] = None


DOUBLING = "doubling"
FIXED_LENGTH = "fixed_length"
EXPLICIT = "explicit_list"


@dataclass(frozen=True)
class EpochSchedule:
    """Epoch boundaries tau_0 = 0 < tau_1 < tau_2 < ...

    doubling:     tau_m = base * 2^m
    fixed_length: tau_m = base * m
    explicit_list: boundaries given verbatim; rounds past the last boundary
                   are undefined and raise.
    """

    kind: str
    base: int = 1
    boundaries: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind in (DOUBLING, FIXED_LENGTH):
            if self.base < 1:
                raise ValueError("base must be a positive integer")
        elif self.kind == EXPLICIT:
            bs = self.boundaries
            if not bs or any(b2 <= b1 for b1, b2 in zip(bs, bs[1:])) or bs[0] < 1:
                raise ValueError("boundaries must be strictly increasing positive ints")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    def boundary(self, m: int) -> int:
        """tau_m; m = 0 gives 0."""
        if m < 0:
            raise ValueError("epoch index must be nonnegative")
        if m == 0:
            return 0
        if self.kind == DOUBLING:
            return self.base * (1 << m)
        if self.kind == FIXED_LENGTH:
            return self.base * m
        if m > len(self.boundaries):
            raise ValueError(f"schedule has only {len(self.boundaries)} epochs")
        return self.boundaries[m - 1]

    def epoch_of(self, t: int) -> int:
        """The unique m with tau_{m-1} < t <= tau_m."""
        if t < 1:
            raise ValueError("rounds are 1-indexed")
        if self.kind == DOUBLING:
            c = -(-t // self.base)  # ceil(t / base)
            return max(1, (c - 1).bit_length())
        if self.kind == FIXED_LENGTH:
            return -(-t // self.base)
        i = bisect.bisect_left(self.boundaries, t)
        if i == len(self.boundaries):
            raise ValueError(f"round {t} beyond final boundary {self.boundaries[-1]}")
        return i + 1

    def epoch_length(self, m: int) -> int:
        return self.boundary(m) - self.boundary(m - 1)

    def covers(self, horizon: int) -> bool:
        """Whether every round 1..horizon falls inside some epoch."""
        if self.kind != EXPLICIT:
            return True
        return horizon <= self.boundaries[-1]
