"""HTTP + WebSocket control plane for corpus upload, training, and live steering.

One session per process: a request pool mutates shared state through short
lock sections, a training worker pushes per-epoch losses, a latent worker
coalesces bursts of XY-pad moves (latest wins, one regeneration in flight),
and the clock driver owns playback.
"""

from __future__ import annotations

import asyncio
import threading
from dataclasses import asdict, dataclass

from fastapi import FastAPI, File, HTTPException, Request, UploadFile, WebSocket, WebSocketDisconnect
from fastapi.responses import Response
from pydantic import BaseModel

from . import vae
from .encoding import Pattern, encode_pattern, quantize_notes, window_patterns
from .midi import DrumMap, MidiError, extract_drum_notes, parse_smf, write_smf
from .sequencer import AutomationClip, ClockDriver, SequencerError, StepSequencer


@dataclass
class CorpusEntry:
    name: str
    patterns: int = 0
    error: str | None = None


class Broadcaster:
    """Fan-out of JSON events from worker threads to WebSocket subscribers."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._subs: dict[int, tuple[asyncio.AbstractEventLoop, asyncio.Queue]] = {}
        self._next_id = 0

    def subscribe(self, loop: asyncio.AbstractEventLoop, queue: asyncio.Queue) -> int:
        with self._lock:
            sub_id = self._next_id
            self._next_id += 1
            self._subs[sub_id] = (loop, queue)
            return sub_id

    def unsubscribe(self, sub_id: int) -> None:
        with self._lock:
            self._subs.pop(sub_id, None)

    def publish(self, message: dict) -> None:
        with self._lock:
            subs = list(self._subs.values())
        for loop, queue in subs:
            try:
                loop.call_soon_threadsafe(queue.put_nowait, message)
            except RuntimeError:
                pass  # subscriber's loop already closed


def loss_payload(lb: vae.LossBreakdown) -> dict:
    return {
        "total": lb.total,
        "onset_bce": lb.onset_bce,
        "velocity_mse": lb.velocity_mse,
        "offset_mse": lb.offset_mse,
        "kl": lb.kl,
        "beta": lb.beta,
    }


def pattern_payload(pattern: Pattern) -> dict:
    tensor = encode_pattern(pattern)
    return {
        "type": "pattern",
        "onsets": tensor.onsets.astype(int).tolist(),
        "velocities": tensor.velocities.tolist(),
        "offsets": tensor.offsets.tolist(),
    }


class Session:
    """All mutable state behind the API."""

    def __init__(self) -> None:
        self.lock = threading.RLock()
        self.drum_map = DrumMap.default()
        self.corpus: list[CorpusEntry] = []
        self.dataset: list = []  # RhythmTensor
        self.sequencer = StepSequencer()
        self.driver = ClockDriver(self.sequencer)
        self.broadcaster = Broadcaster()
        self.model: vae.VaeModel | None = None
        self.history: list[vae.EpochLosses] = []
        self.status = "idle"
        self.status_epoch = 0
        self.status_total = 0
        self.failure_reason: str | None = None
        self.last_clip: AutomationClip | None = None
        self._train_thread: threading.Thread | None = None
        self._stop_requested = False
        self._latent_cv = threading.Condition()
        self._latent_pending: tuple[float, float] | None = None
        self._latent_busy = False
        self._latent_thread = threading.Thread(
            target=self._latent_worker, name="latent-worker", daemon=True
        )
        self._latent_thread.start()

    # -- corpus ------------------------------------------------------------

    def upload_corpus(self, files: list[tuple[str, bytes]]) -> list[CorpusEntry]:
        reports: list[CorpusEntry] = []
        for name, data in files:
            try:
                midi = parse_smf(data)
                notes = extract_drum_notes(midi)
                onsets = quantize_notes(notes, midi.ppq, self.drum_map)
                patterns = window_patterns(onsets)
                tensors = [encode_pattern(p) for p in patterns]
                entry = CorpusEntry(name=name, patterns=len(tensors))
                with self.lock:
                    self.dataset.extend(tensors)
                    self.corpus.append(entry)
            except (MidiError, ValueError) as exc:
                entry = CorpusEntry(name=name, error=str(exc))
                with self.lock:
                    self.corpus.append(entry)
            reports.append(entry)
        return reports

    # -- training ------------------------------------------------------------

    def start_training(self, cfg: vae.TrainConfig) -> tuple[bool, str | None]:
        with self.lock:
            if self.status == "training":
                return False, "a training run is already active"
            if len(self.dataset) < 2:
                return False, f"need at least 2 patterns in the corpus, have {len(self.dataset)}"
            try:
                cfg.validate()
            except vae.TrainingError as exc:
                return False, str(exc)
            dataset = list(self.dataset)
            self.status = "training"
            self.status_epoch = 0
            self.status_total = cfg.epochs
            self.failure_reason = None
            self.history = []
            self._stop_requested = False
            self._train_thread = threading.Thread(
                target=self._train_worker, args=(dataset, cfg), name="trainer", daemon=True
            )
            self._train_thread.start()
        self.broadcaster.publish(self.status_event())
        return True, None

    def stop_training(self) -> None:
        with self.lock:
            self._stop_requested = True

    def join_training(self, timeout: float | None = None) -> None:
        thread = self._train_thread
        if thread is not None:
            thread.join(timeout)

    def _train_worker(self, dataset: list, cfg: vae.TrainConfig) -> None:
        def on_epoch(entry: vae.EpochLosses) -> None:
            with self.lock:
                self.history.append(entry)
                self.status_epoch = entry.epoch + 1
            self.broadcaster.publish(
                {
                    "type": "loss",
                    "epoch": entry.epoch,
                    "train": loss_payload(entry.train),
                    "val": loss_payload(entry.val),
                }
            )

        def should_stop() -> bool:
            with self.lock:
                return self._stop_requested

        try:
            model, _ = vae.train(dataset, cfg, on_epoch=on_epoch, should_stop=should_stop)
        except Exception as exc:  # surfaced to clients instead of killing the worker
            with self.lock:
                self.status = "failed"
                self.failure_reason = str(exc)
            self.broadcaster.publish(self.status_event())
            return

        snapshot = model.snapshot()
        with self.lock:
            self.model = snapshot
            self.sequencer.onset_threshold = cfg.onset_threshold
            self.sequencer.set_model(snapshot)
            self.status = "done"
        self.broadcaster.publish(self.status_event())
        # Publish an initial pattern at the current latent position.
        self.request_latent(*self.sequencer.latent)

    # -- latent steering -------------------------------------------------------

    def request_latent(self, x: float, y: float) -> None:
        """Queue a regeneration; bursts collapse to the newest coordinate."""
        with self._latent_cv:
            self._latent_pending = (x, y)
            self._latent_cv.notify()

    def _latent_worker(self) -> None:
        while True:
            with self._latent_cv:
                while self._latent_pending is None:
                    self._latent_cv.wait()
                z = self._latent_pending
                self._latent_pending = None
                self._latent_busy = True
            try:
                pattern = self.sequencer.set_latent(z)
                self.broadcaster.publish(pattern_payload(pattern))
            except SequencerError:
                pass  # model disappeared between queueing and decode
            finally:
                with self._latent_cv:
                    self._latent_busy = False
                    self._latent_cv.notify_all()

    def wait_latent_idle(self, timeout: float = 5.0) -> bool:
        """Block until the regeneration queue drains (used by tests)."""
        deadline = threading.TIMEOUT_MAX if timeout is None else timeout
        with self._latent_cv:
            return self._latent_cv.wait_for(
                lambda: self._latent_pending is None and not self._latent_busy, deadline
            )

    # -- snapshots ------------------------------------------------------------

    def status_event(self) -> dict:
        with self.lock:
            transport = self.sequencer.transport
            latent = self.sequencer.latent
            return {
                "type": "status",
                "status": self.status,
                "epoch": self.status_epoch,
                "total_epochs": self.status_total,
                "reason": self.failure_reason,
                "corpus": [asdict(e) for e in self.corpus],
                "dataset_size": len(self.dataset),
                "has_model": self.model is not None,
                "latent": {"x": latent[0], "y": latent[1]},
                "threshold": self.sequencer.onset_threshold,
                "transport": {
                    "playing": transport.playing,
                    "tempo_bpm": transport.tempo_bpm,
                    "song_position": transport.song_position,
                },
                "history": [
                    {
                        "epoch": e.epoch,
                        "train": loss_payload(e.train),
                        "val": loss_payload(e.val),
                    }
                    for e in self.history
                ],
            }

    def adopt_model(self, model: vae.VaeModel) -> None:
        with self.lock:
            self.model = model
            self.sequencer.set_model(model)
            self.status = "done"
            self.failure_reason = None
        self.broadcaster.publish(self.status_event())
        self.request_latent(*self.sequencer.latent)


# ---------------------------------------------------------------------------
# Request bodies
# ---------------------------------------------------------------------------


class TrainRequest(BaseModel):
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    kl_weight_beta: float = 1.0
    kl_warmup_fraction: float = 0.1
    val_fraction: float = 0.1
    seed: int = 0
    onset_threshold: float = 0.5


class LatentRequest(BaseModel):
    x: float
    y: float


class TransportRequest(BaseModel):
    playing: bool | None = None
    tempo_bpm: float | None = None


class ThresholdRequest(BaseModel):
    value: float


class AutomationPlayRequest(BaseModel):
    samples: list[tuple[int, tuple[float, float]]] | None = None


# ---------------------------------------------------------------------------
# App factory
# ---------------------------------------------------------------------------


def create_app(session: Session | None = None) -> FastAPI:
    session = session if session is not None else Session()
    app = FastAPI(title="groovelab")
    app.state.session = session

    @app.post("/corpus")
    async def upload_corpus(files: list[UploadFile] = File(...)):
        payload = [(f.filename or "unnamed.mid", await f.read()) for f in files]
        reports = session.upload_corpus(payload)
        return {"files": [asdict(r) for r in reports]}

    @app.post("/train", status_code=202)
    def start_training(req: TrainRequest):
        cfg = vae.TrainConfig(
            epochs=req.epochs,
            batch_size=req.batch_size,
            lr=req.lr,
            kl_weight_beta=req.kl_weight_beta,
            kl_warmup_fraction=req.kl_warmup_fraction,
            val_fraction=req.val_fraction,
            seed=req.seed,
            onset_threshold=req.onset_threshold,
        )
        accepted, reason = session.start_training(cfg)
        if not accepted:
            raise HTTPException(status_code=409, detail=reason)
        return {"accepted": True, "epochs": cfg.epochs}

    @app.delete("/train")
    def stop_training():
        session.stop_training()
        return {"stopping": True}

    @app.get("/status")
    def get_status():
        return session.status_event()

    @app.post("/latent", status_code=202)
    def set_latent(req: LatentRequest):
        if session.model is None:
            raise HTTPException(status_code=409, detail="no trained model")
        session.request_latent(req.x, req.y)
        return {"accepted": True, "x": req.x, "y": req.y}

    @app.get("/pattern")
    def get_pattern():
        if session.model is None:
            raise HTTPException(status_code=409, detail="no trained model")
        return pattern_payload(session.sequencer.current_pattern())

    @app.post("/transport")
    def set_transport(req: TransportRequest):
        try:
            state = session.sequencer.set_transport(playing=req.playing, tempo_bpm=req.tempo_bpm)
        except SequencerError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"playing": state.playing, "tempo_bpm": state.tempo_bpm, "song_position": state.song_position}

    @app.post("/automation/record")
    def automation_record():
        try:
            session.sequencer.record_start()
        except SequencerError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"recording": True}

    @app.post("/automation/stop")
    def automation_stop():
        try:
            clip = session.sequencer.record_stop()
        except SequencerError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        session.last_clip = clip
        return {"recording": False, "samples": [[p, list(z)] for p, z in clip.samples]}

    @app.post("/automation/play")
    def automation_play(req: AutomationPlayRequest | None = None):
        clip = session.last_clip
        if req is not None and req.samples is not None:
            try:
                clip = AutomationClip(tuple((p, (z[0], z[1])) for p, z in req.samples))
            except SequencerError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        if clip is None or clip.is_empty():
            raise HTTPException(status_code=409, detail="no non-empty automation clip to play")
        session.sequencer.play_automation(clip)
        return {"playing_clip": True, "samples": len(clip.samples)}

    @app.get("/export.mid")
    def export_pattern(tempo: float = 120.0):
        if session.model is None:
            raise HTTPException(status_code=409, detail="nothing to export: no trained model")
        try:
            data = write_smf(session.sequencer.current_pattern(), ppq=480, tempo_bpm=tempo)
        except MidiError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return Response(content=data, media_type="audio/midi")

    @app.get("/model.rvae")
    def download_model():
        if session.model is None:
            raise HTTPException(status_code=409, detail="no trained model")
        return Response(content=vae.save_weights(session.model), media_type="application/octet-stream")

    @app.put("/model.rvae")
    async def upload_model(request: Request):
        data = await request.body()
        try:
            model = vae.load_weights(data)
        except vae.PersistenceError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session.adopt_model(model)
        return {"loaded": True}

    @app.get("/threshold")
    def get_threshold():
        return {"value": session.sequencer.onset_threshold}

    @app.put("/threshold")
    def put_threshold(req: ThresholdRequest):
        if not 0.0 <= req.value <= 1.0:
            raise HTTPException(status_code=422, detail="threshold must be in [0, 1]")
        session.sequencer.onset_threshold = req.value
        if session.model is not None:
            session.request_latent(*session.sequencer.latent)
        return {"value": req.value}

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        loop = asyncio.get_running_loop()
        queue: asyncio.Queue = asyncio.Queue()
        sub_id = session.broadcaster.subscribe(loop, queue)
        await ws.send_json(session.status_event())

        async def sender():
            while True:
                await ws.send_json(await queue.get())

        async def receiver():
            while True:
                message = await ws.receive_json()
                if message.get("type") == "latent" and session.model is not None:
                    session.request_latent(float(message["x"]), float(message["y"]))

        try:
            done, pending = await asyncio.wait(
                (asyncio.ensure_future(sender()), asyncio.ensure_future(receiver())),
                return_when=asyncio.FIRST_EXCEPTION,
            )
            for task in pending:
                task.cancel()
        except WebSocketDisconnect:
            pass
        finally:
            session.broadcaster.unsubscribe(sub_id)

    return app


def run(host: str = "127.0.0.1", port: int = 8765, frontend_dir: str | None = None) -> None:
    """Blocking entry point used by the CLI `serve` command."""
    import uvicorn

    session = Session()
    application = create_app(session)
    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        application.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")
    session.driver.start()
    try:
        uvicorn.run(application, host=host, port=port, log_level="info")
    finally:
        session.driver.stop()
