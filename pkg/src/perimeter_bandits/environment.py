"""Stochastic ground truth: Poisson arrivals per cell, binomially thinned by detection.

Random streams are Philox (counter-based) generators keyed by a SeedSequence
built from the master seed and a tuple of run coordinates, so every
(instance, rep, policy, purpose) gets its own non-overlapping stream.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .domain import Allocation, Instance, detection_vector

BERNOULLI_CUTOFF = 64


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def seed_sequence(master_seed: int, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(_key_part(p) for p in key))


def make_rng(master_seed: int, *key) -> np.random.Generator:
    """Independent Philox stream for ``(master_seed, *key)``; string parts are hashed."""
    return np.random.Generator(np.random.Philox(seed_sequence(master_seed, *key)))


def stream_seed(master_seed: int, *key) -> int:
    """32-bit digest identifying a stream, for logging."""
    return int(seed_sequence(master_seed, *key).generate_state(1)[0])


@dataclass(frozen=True)
class RoundOutcome:
    X: np.ndarray | None
    Y: np.ndarray


def thin_counts(X: np.ndarray, gamma: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Keep each event independently with its cell's detection probability."""
    Y = np.zeros_like(X)
    for k, (x, p) in enumerate(zip(X, gamma)):
        if p <= 0 or x == 0:
            continue
        if p >= 1:
            Y[k] = x
        elif x < BERNOULLI_CUTOFF:
            Y[k] = int(np.count_nonzero(rng.random(x) < p))
        else:
            Y[k] = rng.binomial(x, p)
    return Y


def env_step(instance: Instance, allocation: Allocation, rng: np.random.Generator,
             fast: bool = False) -> RoundOutcome:
    """One round of arrivals and detections under ``allocation``.

    With ``fast`` the detections are drawn directly as Poisson(lambda * gamma)
    and the latent arrivals are not reported.
    """
    gamma = detection_vector(instance.model, allocation)
    if fast:
        return RoundOutcome(None, rng.poisson(instance.lam * gamma))
    X = rng.poisson(instance.lam)
    return RoundOutcome(X, thin_counts(X, gamma, rng))


@dataclass(frozen=True, eq=False)
class ArrivalStream:
    """Pre-drawn randomness for a whole run, shared by every policy on the same (instance, rep).

    Holds latent counts ``X[t, k]`` plus one uniform per latent event; an event
    is detected when its uniform falls below the cell's detection probability.
    Identical actions therefore give identical observations across policies.
    In fast mode only one uniform per (round, cell) is kept and detections are
    the Poisson(lambda * gamma) quantile at that uniform.
    """

    lam: np.ndarray
    X: np.ndarray
    offsets: np.ndarray
    uniforms: np.ndarray
    fast_u: np.ndarray
    fast: bool

    @property
    def horizon(self) -> int:
        return self.X.shape[0]

    @classmethod
    def generate(cls, lam, horizon: int, rng: np.random.Generator, fast: bool = False) -> "ArrivalStream":
        lam = np.ascontiguousarray(lam, dtype=float)
        K = lam.size
        if fast:
            fast_u = rng.random((horizon, K))
            X = np.zeros((horizon, K), dtype=np.int64)
            return cls(lam, X, np.zeros((horizon, K), dtype=np.int64), np.zeros(0), fast_u, True)
        X = rng.poisson(lam, size=(horizon, K)).astype(np.int64)
        flat = X.ravel()
        offsets = (np.cumsum(flat) - flat).reshape(horizon, K).astype(np.int64)
        uniforms = rng.random(int(flat.sum()))
        return cls(lam, X, offsets, uniforms, np.zeros((1, 1)), False)

    def observe(self, t: int, gamma: np.ndarray) -> np.ndarray:
        """Detections in round ``t`` (1-based) under detection vector ``gamma``."""
        Y = np.zeros(self.lam.size, dtype=np.int64)
        kern.thin(t - 1, np.ascontiguousarray(gamma, dtype=float), self.X, self.offsets,
                  self.uniforms, self.fast, self.fast_u, self.lam, Y)
        return Y

    def latent(self, t: int) -> np.ndarray | None:
        return None if self.fast else self.X[t - 1].copy()
