"""Shared builders: random patterns, synthetic drum corpora, hand-rolled SMF bytes."""

from __future__ import annotations

import numpy as np
import pytest

from groovelab.encoding import MAX_OFFSET, MIN_VELOCITY, GridOnset, Pattern, encode_pattern
from groovelab.midi import DrumClass


def random_pattern(rng: np.random.Generator, p_onset: float = 0.18) -> Pattern:
    """A valid random pattern: velocities in [1/127, 1], offsets in [-1, 1)."""
    onsets = []
    for drum in DrumClass:
        for step in range(32):
            if rng.random() < p_onset:
                onsets.append(
                    GridOnset(
                        drum=drum,
                        step=step,
                        velocity=float(rng.uniform(MIN_VELOCITY, 1.0)),
                        offset=float(rng.uniform(-1.0, MAX_OFFSET)),
                    )
                )
    return Pattern(onsets=onsets)


def synthetic_corpus(n: int = 20, seed: int = 7) -> list[Pattern]:
    """Kick/snare/hat templates with velocity and microtiming jitter.

    Step 0 never pushes early (offset >= 0) so a written file does not
    wrap its downbeat to the loop end and re-ingests as a single window.
    """
    rng = np.random.default_rng(seed)
    patterns = []

    def jitter(step: int, lo: float, hi: float) -> float:
        offset = float(rng.uniform(lo, hi))
        return max(0.0, offset) if step == 0 else offset

    for _ in range(n):
        onsets = []
        for step in range(0, 32, 4):  # four-on-the-floor kick
            onsets.append(
                GridOnset(
                    DrumClass.KICK, step,
                    velocity=float(rng.uniform(0.85, 1.0)),
                    offset=jitter(step, -0.1, 0.1),
                )
            )
        for step in (4, 12, 20, 28):  # backbeat snare
            onsets.append(
                GridOnset(
                    DrumClass.SNARE, step,
                    velocity=float(rng.uniform(0.7, 0.95)),
                    offset=jitter(step, -0.15, 0.15),
                )
            )
        for step in range(0, 32, 2):  # eighth-note hats, occasionally dropped
            if rng.random() < 0.9:
                onsets.append(
                    GridOnset(
                        DrumClass.HIHAT_CLOSED, step,
                        velocity=float(rng.uniform(0.4, 0.8)),
                        offset=jitter(step, -0.2, 0.2),
                    )
                )
        patterns.append(Pattern(onsets=onsets))
    return patterns


def synthetic_tensors(n: int = 20, seed: int = 7):
    return [encode_pattern(p) for p in synthetic_corpus(n, seed)]


def smf_bytes(track_payloads: list[bytes], fmt: int = 0, ppq: int = 480) -> bytes:
    """Assemble raw SMF bytes from already-encoded track event streams."""
    out = bytearray()
    out += b"MThd" + (6).to_bytes(4, "big")
    out += fmt.to_bytes(2, "big") + len(track_payloads).to_bytes(2, "big") + ppq.to_bytes(2, "big")
    for payload in track_payloads:
        out += b"MTrk" + len(payload).to_bytes(4, "big") + payload
    return bytes(out)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
