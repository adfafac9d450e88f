"""Conversion between drum-note lists, step grids, and the 9x32 tensor triple.

A 2-bar pattern in 4/4 is 32 sixteenth-note steps by 9 drum classes.
Each cell carries an onset flag, a velocity in (0, 1], and a microtiming
offset in [-1, 1) measured in 32nd notes (-1.0 = a full 32nd early).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .midi import DrumClass, DrumMap, DrumNote, NUM_DRUM_CLASSES

NUM_STEPS = 32
OFFSET_EPS = 2.0 ** -23
MAX_OFFSET = 1.0 - OFFSET_EPS
MIN_VELOCITY = 1.0 / 127.0


class EncodingError(ValueError):
    """Contract violation in grid/tensor conversion."""


@dataclass(frozen=True)
class GridOnset:
    """One drum hit on the step grid."""

    drum: DrumClass
    step: int
    velocity: float
    offset: float


def _sort_key(onset: GridOnset) -> tuple[int, int]:
    return (onset.step, int(onset.drum))


@dataclass
class Pattern:
    """A 32-step pattern: at most one onset per (drum, step) cell."""

    onsets: list[GridOnset] = field(default_factory=list)
    length_steps: int = NUM_STEPS

    def __post_init__(self) -> None:
        self.onsets = sorted(self.onsets, key=_sort_key)

    def is_empty(self) -> bool:
        return not self.onsets


@dataclass
class RhythmTensor:
    """The three 9x32 matrices a pattern is modeled as."""

    onsets: np.ndarray      # {0, 1}
    velocities: np.ndarray  # [0, 1], zero wherever onsets is 0
    offsets: np.ndarray     # [-1, 1), zero wherever onsets is 0

    def validate(self) -> None:
        shape = (NUM_DRUM_CLASSES, NUM_STEPS)
        for name, m in (("onsets", self.onsets), ("velocities", self.velocities), ("offsets", self.offsets)):
            if m.shape != shape:
                raise EncodingError(f"{name} has shape {m.shape}, expected {shape}")
        if not np.isin(self.onsets, (0.0, 1.0)).all():
            raise EncodingError("onsets must be 0 or 1")
        silent = self.onsets == 0.0
        if np.any(self.velocities[silent] != 0.0) or np.any(self.offsets[silent] != 0.0):
            raise EncodingError("velocity/offset must be zero where onset is zero")
        if np.any(self.velocities < 0.0) or np.any(self.velocities > 1.0):
            raise EncodingError("velocities out of [0, 1]")
        if np.any(self.offsets < -1.0) or np.any(self.offsets >= 1.0):
            raise EncodingError("offsets out of [-1, 1)")

    def flatten(self) -> np.ndarray:
        """Row-major [onsets | velocities | offsets] -> 864 features."""
        return np.concatenate(
            [self.onsets.ravel(), self.velocities.ravel(), self.offsets.ravel()]
        ).astype(np.float64)


@dataclass
class DecoderOutput:
    """Raw model output: onset probabilities plus velocity/offset matrices."""

    onset_probs: np.ndarray
    velocities: np.ndarray
    offsets: np.ndarray


def quantize_notes(notes: list[DrumNote], ppq: int, drum_map: DrumMap) -> list[GridOnset]:
    """Snap note onsets to the 16th grid, keeping absolute (unbounded) steps.

    step = round(tick / sixteenth), ties rounding up; the leftover is the
    microtiming offset in 32nd notes, clamped to [-1, 1). Velocities map
    from 1-127 to (0, 1]. Notes the drum map does not cover are dropped.
    When two notes land on the same (drum, step) cell the louder one wins
    (ties: smaller |offset|, then earlier tick).
    """
    if ppq <= 0:
        raise EncodingError("ppq must be positive")
    sixteenth = ppq / 4.0
    half = sixteenth / 2.0

    best: dict[tuple[DrumClass, int], tuple[float, float, int, GridOnset]] = {}
    for note in notes:
        drum = drum_map.lookup(note.note_number)
        if drum is None:
            continue
        step = math.floor(note.tick / sixteenth + 0.5)
        offset = (note.tick - step * sixteenth) / half
        offset = min(max(offset, -1.0), MAX_OFFSET)
        onset = GridOnset(drum=drum, step=step, velocity=note.velocity / 127.0, offset=offset)
        key = (drum, step)
        rank = (-onset.velocity, abs(onset.offset), note.tick)
        if key not in best or rank < best[key][:3]:
            best[key] = (*rank, onset)

    onsets = [entry[3] for entry in best.values()]
    onsets.sort(key=lambda o: (o.step, int(o.drum)))
    return onsets


def window_patterns(onsets: list[GridOnset]) -> list[Pattern]:
    """Cut absolute-step onsets into consecutive non-overlapping 32-step windows.

    Windows start at step 0; empty windows are skipped and a trailing
    partial window is kept (padded with silence) if it has any onset.
    """
    windows: dict[int, list[GridOnset]] = {}
    for onset in onsets:
        w = onset.step // NUM_STEPS
        rebased = GridOnset(
            drum=onset.drum,
            step=onset.step - w * NUM_STEPS,
            velocity=onset.velocity,
            offset=onset.offset,
        )
        windows.setdefault(w, []).append(rebased)
    return [Pattern(onsets=windows[w]) for w in sorted(windows)]


def encode_pattern(pattern: Pattern) -> RhythmTensor:
    """Spread a pattern's onsets over the three matrices; all other cells zero."""
    onsets = np.zeros((NUM_DRUM_CLASSES, NUM_STEPS))
    velocities = np.zeros((NUM_DRUM_CLASSES, NUM_STEPS))
    offsets = np.zeros((NUM_DRUM_CLASSES, NUM_STEPS))
    for onset in pattern.onsets:
        i, t = int(onset.drum), onset.step
        if not 0 <= t < NUM_STEPS:
            raise EncodingError(f"step {t} out of range 0-{NUM_STEPS - 1}")
        if onsets[i, t] != 0.0:
            raise EncodingError(f"duplicate onset at ({onset.drum.label}, step {t})")
        onsets[i, t] = 1.0
        velocities[i, t] = onset.velocity
        offsets[i, t] = onset.offset
    tensor = RhythmTensor(onsets=onsets, velocities=velocities, offsets=offsets)
    tensor.validate()
    return tensor


def decode_tensor(raw: DecoderOutput, threshold: float = 0.5) -> Pattern:
    """Threshold decoder output into a playable pattern.

    A cell fires iff its onset probability strictly exceeds the threshold.
    Emitted velocities are floored at 1/127 so every onset stays audible;
    offsets are clamped back into [-1, 1).
    """
    onsets: list[GridOnset] = []
    for i in range(NUM_DRUM_CLASSES):
        for t in range(NUM_STEPS):
            if raw.onset_probs[i, t] > threshold:
                onsets.append(
                    GridOnset(
                        drum=DrumClass(i),
                        step=t,
                        velocity=max(float(raw.velocities[i, t]), MIN_VELOCITY),
                        offset=min(max(float(raw.offsets[i, t]), -1.0), MAX_OFFSET),
                    )
                )
    return Pattern(onsets=onsets)


def tensor_as_decoder_output(tensor: RhythmTensor) -> DecoderOutput:
    """View an exact tensor as decoder output (onset flags as probabilities)."""
    return DecoderOutput(
        onset_probs=tensor.onsets,
        velocities=tensor.velocities,
        offsets=tensor.offsets,
    )
