"""Deterministic derivation of named random streams from one master seed.

Every stochastic component of a run (environment resets, parameter
initialization, action sampling, buffer sampling, evaluation rollouts)
pulls from its own named substream, so adding draws to one component
never perturbs another.  Identical master seeds give identical runs.

Stream name map used by the trainers and the CLI:

    init     -- network parameter initialization
    env      -- environment resets and transition noise
    action   -- behaviour-policy action sampling
    buffer   -- replay-buffer batch sampling
    sampling -- composite-sampling coin flips (mode / behaviour choice)
    eval     -- evaluation rollouts
"""

from __future__ import annotations

import numpy as np

STREAM_NAMES = ("init", "env", "action", "buffer", "sampling", "eval")


def stream(master_seed: int, name: str) -> np.random.Generator:
    """Derive the named substream of ``master_seed``.

    The name is folded into the seed entropy byte by byte, so distinct
    names give statistically independent generators and the association
    is stable across processes and platforms.
    """
    entropy = [int(master_seed) & 0xFFFFFFFF] + [ord(ch) for ch in name]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def stream_map(master_seed: int) -> dict[str, np.random.Generator]:
    """All named substreams for one run, keyed by stream name."""
    return {name: stream(master_seed, name) for name in STREAM_NAMES}
