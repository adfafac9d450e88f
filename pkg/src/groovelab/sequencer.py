"""Clock-synchronized pattern playback with microtiming and latent automation.

The sequencer loops the current 2-bar pattern at an internal resolution of
480 ticks per quarter (16th = 120 ticks, 32nd = 60, loop = 3840). Time is
pushed in via tick(now); a wall-clock driver converts tempo to ticks and
pumps it, and tests drive it directly with a mock clock.

Pattern swaps triggered by set_latent land at step boundaries only, so a
step never mixes two patterns.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

from . import vae
from .encoding import Pattern, decode_tensor
from .midi import DrumClass, round_half_away

PPQ = 480
SIXTEENTH = PPQ // 4          # 120
THIRTY_SECOND = SIXTEENTH // 2  # 60
LOOP_TICKS = 32 * SIXTEENTH   # 3840, two bars of 4/4

MIN_TEMPO = 20.0
MAX_TEMPO = 999.0


class SequencerError(RuntimeError):
    pass


@dataclass
class TransportState:
    tempo_bpm: float = 120.0
    playing: bool = False
    song_position: int = 0


@dataclass(frozen=True)
class TimedEvent:
    """A scheduled note-on; its note-off follows one 16th later."""

    fire_at: int  # tick within the loop, relative to loop start
    drum: DrumClass
    velocity_midi: int


@dataclass(frozen=True)
class AutomationClip:
    """Recorded latent path: (song_position, (z1, z2)) with strictly increasing positions."""

    samples: tuple[tuple[int, tuple[float, float]], ...] = ()

    def __post_init__(self) -> None:
        positions = [p for p, _ in self.samples]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise SequencerError("automation sample positions must be strictly increasing")

    def is_empty(self) -> bool:
        return not self.samples

    def value_at(self, position: int) -> tuple[float, float]:
        """Piecewise-linear interpolation, holding the end samples outside the range."""
        if not self.samples:
            raise SequencerError("cannot evaluate an empty automation clip")
        if position <= self.samples[0][0]:
            return self.samples[0][1]
        if position >= self.samples[-1][0]:
            return self.samples[-1][1]
        for (p0, z0), (p1, z1) in zip(self.samples, self.samples[1:]):
            if p0 <= position <= p1:
                u = (position - p0) / (p1 - p0)
                return (z0[0] + u * (z1[0] - z0[0]), z0[1] + u * (z1[1] - z0[1]))
        raise AssertionError("unreachable: samples cover the interior")


def schedule_pattern(pattern: Pattern, loop_start: int = 0) -> list[TimedEvent]:
    """Place a pattern's onsets on the tick grid.

    fire_at = loop_start + step * 120 + round(offset * 60); an early hit at
    the very start of the loop wraps to the end (a looping player has no
    "before start"). Velocities land in 1-127.
    """
    events = []
    for onset in pattern.onsets:
        fire = loop_start + onset.step * SIXTEENTH + round_half_away(onset.offset * THIRTY_SECOND)
        if fire < loop_start:
            fire += LOOP_TICKS
        events.append(
            TimedEvent(
                fire_at=fire,
                drum=onset.drum,
                velocity_midi=max(1, round_half_away(onset.velocity * 127.0)),
            )
        )
    events.sort(key=lambda e: (e.fire_at, int(e.drum)))
    return events


class CaptureSink:
    """Test sink: records (tick, kind, drum, velocity) tuples."""

    def __init__(self) -> None:
        self.events: list[tuple[int, str, DrumClass, int]] = []

    def note_on(self, tick: int, drum: DrumClass, velocity: int) -> None:
        self.events.append((tick, "on", drum, velocity))

    def note_off(self, tick: int, drum: DrumClass) -> None:
        self.events.append((tick, "off", drum, 0))


class CallbackSink:
    """Adapter for a real-time MIDI port: forwards to a (tick, status, drum, velocity) callable."""

    def __init__(self, fn) -> None:
        self._fn = fn

    def note_on(self, tick: int, drum: DrumClass, velocity: int) -> None:
        self._fn(tick, "on", drum, velocity)

    def note_off(self, tick: int, drum: DrumClass) -> None:
        self._fn(tick, "off", drum, 0)


class StepSequencer:
    """Owns the transport, the active pattern schedule, and automation state.

    All mutation happens under one lock; tick() is driven by a single clock
    thread while set_latent and transport changes arrive from the service.
    """

    def __init__(self, sink=None, onset_threshold: float = 0.5):
        self._lock = threading.RLock()
        self.transport = TransportState()
        self.onset_threshold = onset_threshold
        self.sink = sink
        self._model: vae.VaeModel | None = None
        self._latent: tuple[float, float] = (0.0, 0.0)
        self._pattern: Pattern = Pattern()
        self._pending: Pattern | None = None
        self._events: list[TimedEvent] = []
        self._last_now: int = -1
        self._pending_offs: list[tuple[int, DrumClass]] = []
        self._recording: list[tuple[int, tuple[float, float]]] | None = None
        self._playback: AutomationClip | None = None

    # -- model / pattern ------------------------------------------------

    def set_model(self, model: vae.VaeModel | None) -> None:
        with self._lock:
            self._model = model

    @property
    def latent(self) -> tuple[float, float]:
        with self._lock:
            return self._latent

    def current_pattern(self) -> Pattern:
        with self._lock:
            return self._pattern

    def set_pattern(self, pattern: Pattern) -> None:
        """Stage a pattern directly (no model required); swaps at the next step boundary."""
        with self._lock:
            self._stage(pattern)

    def set_latent(self, z: tuple[float, float]) -> Pattern:
        """Regenerate from the decoder at z and stage the result.

        While stopped the new pattern is adopted immediately; while playing
        it is adopted at the next step boundary. Recording captures the
        call at the current song position (same-position calls keep the
        latest value).
        """
        with self._lock:
            if self._model is None:
                raise SequencerError("no trained model available")
            out = vae.decode_latent(self._model, z)
            pattern = decode_tensor(out, self.onset_threshold)
            self._latent = (float(z[0]), float(z[1]))
            if self._recording is not None and self.transport.playing:
                pos = self.transport.song_position
                if self._recording and self._recording[-1][0] == pos:
                    self._recording[-1] = (pos, self._latent)
                else:
                    self._recording.append((pos, self._latent))
            self._stage(pattern)
            return pattern

    def _stage(self, pattern: Pattern) -> None:
        if self.transport.playing:
            self._pending = pattern
        else:
            self._adopt(pattern)

    def _adopt(self, pattern: Pattern) -> None:
        self._pattern = pattern
        self._events = schedule_pattern(pattern, loop_start=0)
        self._pending = None

    # -- transport --------------------------------------------------------

    def set_transport(self, playing: bool | None = None, tempo_bpm: float | None = None) -> TransportState:
        with self._lock:
            if tempo_bpm is not None:
                if not MIN_TEMPO <= tempo_bpm <= MAX_TEMPO:
                    raise SequencerError(f"tempo {tempo_bpm} outside [{MIN_TEMPO}, {MAX_TEMPO}]")
                self.transport.tempo_bpm = float(tempo_bpm)
            if playing is not None and playing != self.transport.playing:
                if playing:
                    self._last_now = self.transport.song_position - 1
                    if self._pending is not None:
                        self._adopt(self._pending)
                self.transport.playing = playing
            return TransportState(**vars(self.transport))

    def rewind(self) -> None:
        with self._lock:
            self.transport.song_position = 0
            self._last_now = -1
            self._pending_offs.clear()

    # -- automation --------------------------------------------------------

    def record_start(self) -> None:
        with self._lock:
            if not self.transport.playing:
                raise SequencerError("automation recording requires a playing transport")
            self._recording = []

    def record_stop(self) -> AutomationClip:
        with self._lock:
            if self._recording is None:
                raise SequencerError("not recording")
            clip = AutomationClip(tuple(self._recording))
            self._recording = None
            return clip

    def play_automation(self, clip: AutomationClip) -> None:
        with self._lock:
            if clip.is_empty():
                raise SequencerError("cannot play an empty automation clip")
            self._playback = clip

    def stop_automation(self) -> None:
        with self._lock:
            self._playback = None

    # -- the clock pump ------------------------------------------------------

    def tick(self, now: int) -> list[TimedEvent]:
        """Deliver every event whose fire time falls in (last_now, now].

        Fired note-ons are returned (and forwarded to the sink, which also
        receives the paired note-offs one 16th later). Step boundaries
        inside the window apply automation playback and adopt any staged
        pattern, in time order relative to the events.
        """
        with self._lock:
            if now < self._last_now:
                raise SequencerError(f"time moved backwards: {now} < {self._last_now}")
            fired: list[TimedEvent] = []
            pos = self._last_now
            while pos < now:
                boundary = (pos // SIXTEENTH + 1) * SIXTEENTH
                if boundary <= now:
                    # The boundary tick itself belongs to the step that starts
                    # there, so swap before delivering it.
                    self._deliver(pos, boundary - 1, fired)
                    self._at_step_boundary(boundary)
                    self._deliver(boundary - 1, boundary, fired)
                    pos = boundary
                else:
                    self._deliver(pos, now, fired)
                    pos = now
            self._last_now = now
            self.transport.song_position = now
            return fired

    def _at_step_boundary(self, position: int) -> None:
        if self._playback is not None:
            z = self._playback.value_at(position)
            if self._model is not None:
                out = vae.decode_latent(self._model, z)
                self._latent = z
                self._pending = decode_tensor(out, self.onset_threshold)
        if self._pending is not None:
            self._adopt(self._pending)

    def _deliver(self, lo: int, hi: int, fired: list[TimedEvent]) -> None:
        """Emit events with absolute fire time in (lo, hi]; loop period LOOP_TICKS."""
        due: list[tuple[int, TimedEvent]] = []
        for event in self._events:
            k = max(0, (lo - event.fire_at) // LOOP_TICKS + 1)
            fire_abs = event.fire_at + k * LOOP_TICKS
            while fire_abs <= hi:
                due.append((fire_abs, event))
                fire_abs += LOOP_TICKS
        due.sort(key=lambda item: (item[0], int(item[1].drum)))
        for fire_abs, event in due:
            fired.append(event)
            if self.sink is not None:
                self.sink.note_on(fire_abs, event.drum, event.velocity_midi)
            self._pending_offs.append((fire_abs + SIXTEENTH, event.drum))
        if self.sink is not None:
            matured = [po for po in self._pending_offs if po[0] <= hi]
            self._pending_offs = [po for po in self._pending_offs if po[0] > hi]
            for off_tick, drum in sorted(matured):
                self.sink.note_off(off_tick, drum)


class ClockDriver:
    """Wall-clock pump: converts tempo to ticks and drives sequencer.tick.

    ticks/sec = PPQ * bpm / 60; the pump runs well above 200 Hz so event
    jitter stays under a few ticks.
    """

    def __init__(self, sequencer: StepSequencer, pump_hz: float = 400.0):
        self.sequencer = sequencer
        self.period = 1.0 / pump_hz
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self._accumulator = 0.0

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="clock-driver", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def _run(self) -> None:
        last = time.monotonic()
        self._accumulator = float(self.sequencer.transport.song_position)
        while not self._stop.wait(self.period):
            now = time.monotonic()
            dt = now - last
            last = now
            transport = self.sequencer.transport
            if not transport.playing:
                self._accumulator = float(transport.song_position)
                continue
            self._accumulator += dt * PPQ * transport.tempo_bpm / 60.0
            self.sequencer.tick(int(self._accumulator))
