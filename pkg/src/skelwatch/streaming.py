"""Real-time loop: sliding-window classification and debounced activity events.

Frames stream in one at a time; a classification tick fires every ``hop_frames``
once ``window_frames`` are buffered. Each tick rasterizes the current window,
runs the classifier, and feeds the posterior to a debouncer that turns repeated
confident detections into :class:`ActivityEvent` records.
"""

from __future__ import annotations

import queue
import threading
import time
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional

import numpy as np

from .model import Model
from .rasterize import rasterize_sequence
from .skeleton import (
    ActivityLabel,
    SkeletonFrame,
    SkeletonSequence,
    parse_frame_line,
    parse_sequence_file,
    resample_fps,
)

__all__ = [
    "StreamConfig",
    "TickResult",
    "ActivityEvent",
    "StreamSummary",
    "OutOfOrderWarning",
    "StreamClassifier",
    "EventDebouncer",
    "run_stream",
    "file_frame_source",
    "socket_frame_source",
]


class OutOfOrderWarning(UserWarning):
    """A frame arrived with a non-increasing timestamp and was dropped."""


@dataclass(frozen=True)
class StreamConfig:
    """Windowing and debounce policy for the live loop.

    Defaults assume the 10 fps inference rate: a 20-frame window covers 2 s
    of motion and a 5-frame hop re-classifies every half second.
    """

    window_frames: int = 20
    hop_frames: int = 5
    confidence_threshold: float = 0.7
    consecutive_required: int = 2
    cooldown_seconds: float = 30.0

    def __post_init__(self):
        if self.window_frames < 1:
            raise ValueError(f"window_frames must be positive, got {self.window_frames}")
        if self.hop_frames < 1:
            raise ValueError(f"hop_frames must be positive, got {self.hop_frames}")
        if self.hop_frames > self.window_frames:
            raise ValueError(
                f"hop_frames {self.hop_frames} cannot exceed window_frames {self.window_frames}"
            )
        if not 0.0 < self.confidence_threshold < 1.0:
            raise ValueError(
                f"confidence_threshold must lie in (0, 1), got {self.confidence_threshold}"
            )
        if self.consecutive_required < 1:
            raise ValueError(
                f"consecutive_required must be positive, got {self.consecutive_required}"
            )
        if not self.cooldown_seconds > 0.0:
            raise ValueError(f"cooldown_seconds must be positive, got {self.cooldown_seconds}")


@dataclass(frozen=True)
class TickResult:
    """One classification of the current window."""

    index: int
    posterior: np.ndarray
    window_start: float
    window_end: float
    latency_seconds: float = 0.0

    def __post_init__(self):
        post = np.asarray(self.posterior, dtype=np.float64)
        if post.ndim != 1:
            raise ValueError(f"posterior must be a vector, got shape {post.shape}")
        if not np.all(np.isfinite(post)) or post.min() < 0.0:
            raise ValueError("posterior must be finite and nonnegative")
        if abs(float(post.sum()) - 1.0) > 1e-6:
            raise ValueError(f"posterior must sum to 1, got {post.sum()!r}")
        post.flags.writeable = False
        object.__setattr__(self, "posterior", post)

    @property
    def top_class(self) -> int:
        return int(np.argmax(self.posterior))

    @property
    def top_confidence(self) -> float:
        return float(self.posterior[self.top_class])


@dataclass(frozen=True)
class ActivityEvent:
    label: ActivityLabel
    confidence: float
    window_start: float
    window_end: float
    event_id: int

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(f"confidence must lie in (0, 1), got {self.confidence}")
        if self.event_id < 1:
            raise ValueError(f"event_id must be positive, got {self.event_id}")


@dataclass(frozen=True)
class StreamSummary:
    frames_processed: int
    frames_rejected: int
    ticks: int
    events: int
    p95_latency_seconds: float
    source_error: Optional[str] = None


class StreamClassifier:
    """Buffers frames, fires ticks on the hop cadence, classifies windows.

    Memory is bounded: the buffer never holds more than ``window_frames``.
    """

    def __init__(self, model: Model, config: StreamConfig, fps: float = 10.0):
        if fps <= 0.0:
            raise ValueError(f"fps must be positive, got {fps}")
        self.model = model
        self.config = config
        self.fps = fps
        self._buffer: deque[SkeletonFrame] = deque(maxlen=config.window_frames)
        self._accepted = 0
        self._ticks = 0
        self.rejected_count = 0

    @property
    def frames_accepted(self) -> int:
        return self._accepted

    @property
    def buffered(self) -> int:
        return len(self._buffer)

    def push_frame(self, frame: SkeletonFrame) -> Optional[TickResult]:
        """Accept one frame; returns a tick when the hop cadence fires.

        A frame whose timestamp does not strictly increase is dropped with a
        counted :class:`OutOfOrderWarning`; the stream keeps running.
        """
        if self._buffer and frame.timestamp <= self._buffer[-1].timestamp:
            self.rejected_count += 1
            warnings.warn(
                f"dropped out-of-order frame: timestamp {frame.timestamp} after "
                f"{self._buffer[-1].timestamp}",
                OutOfOrderWarning,
                stacklevel=2,
            )
            return None
        self._buffer.append(frame)
        self._accepted += 1
        window = self.config.window_frames
        if self._accepted < window or (self._accepted - window) % self.config.hop_frames != 0:
            return None
        started = time.perf_counter()
        window_seq = SkeletonSequence(frames=tuple(self._buffer), source_fps=self.fps)
        tensors = rasterize_sequence(window_seq, grid=self.model.config.input_grid)
        posterior = self.model.classify(tensors).data
        self._ticks += 1
        return TickResult(
            index=self._ticks,
            posterior=posterior,
            window_start=self._buffer[0].timestamp,
            window_end=self._buffer[-1].timestamp,
            latency_seconds=time.perf_counter() - started,
        )


class EventDebouncer:
    """Turns tick posteriors into events: repeated confident detections only.

    An event fires when the same argmax class clears the confidence threshold
    on ``consecutive_required`` consecutive ticks and sits outside its
    per-class cooldown. Emission resets the streak; a cooldown block does not,
    so the first eligible tick after expiry emits without re-confirming.
    """

    def __init__(self, config: StreamConfig, labels):
        self.config = config
        self.labels = tuple(labels)
        self._streak_class: Optional[int] = None
        self._streak = 0
        self._last_emit: dict[int, float] = {}
        self._next_id = 1

    def decide_event(self, tick: TickResult) -> Optional[ActivityEvent]:
        if len(tick.posterior) != len(self.labels):
            raise ValueError(
                f"posterior has {len(tick.posterior)} entries for {len(self.labels)} labels"
            )
        cls = tick.top_class
        conf = tick.top_confidence
        if conf < self.config.confidence_threshold:
            self._streak_class, self._streak = None, 0
            return None
        if cls == self._streak_class:
            self._streak += 1
        else:
            self._streak_class, self._streak = cls, 1
        if self._streak < self.config.consecutive_required:
            return None
        now = tick.window_end
        last = self._last_emit.get(cls)
        if last is not None and now - last < self.config.cooldown_seconds:
            return None
        self._last_emit[cls] = now
        self._streak_class, self._streak = None, 0
        event = ActivityEvent(
            label=self.labels[cls],
            # softmax can round to exactly 1.0; nudge below to keep the open interval
            confidence=min(conf, float(np.nextafter(1.0, 0.0))),
            window_start=tick.window_start,
            window_end=tick.window_end,
            event_id=self._next_id,
        )
        self._next_id += 1
        return event


# ---------------------------------------------------------------------------
# Frame sources


def file_frame_source(
    path, *, target_fps: Optional[float] = None, pace: bool = False, speed: float = 1.0
) -> Iterator[SkeletonFrame]:
    """Replay a recorded sequence file frame by frame.

    ``target_fps`` resamples before replay; ``pace`` sleeps between frames so
    wall-clock delivery follows the timestamps (divided by ``speed``).
    """
    if speed <= 0.0:
        raise ValueError(f"speed must be positive, got {speed}")
    seq = parse_sequence_file(path)
    if target_fps is not None:
        seq = resample_fps(seq, target_fps)
    previous = None
    for frame in seq.frames:
        if pace and previous is not None:
            time.sleep(max(0.0, frame.timestamp - previous) / speed)
        previous = frame.timestamp
        yield frame


def socket_frame_source(
    host: str = "127.0.0.1",
    port: int = 0,
    *,
    accept_timeout: Optional[float] = None,
    on_listening: Optional[Callable[[tuple], None]] = None,
) -> Iterator[SkeletonFrame]:
    """Accept one connection and yield the frame records it sends.

    The peer writes the same line-delimited JSON frame records as the file
    format, one per line; closing the connection ends the stream.
    ``on_listening`` receives the bound ``(host, port)`` before accept, so a
    caller can start a peer against an ephemeral port.
    """
    import socket as socketlib

    server = socketlib.create_server((host, port))
    try:
        server.settimeout(accept_timeout)
        if on_listening is not None:
            on_listening(server.getsockname())
        conn, _ = server.accept()
    except BaseException:
        server.close()
        raise
    server.close()
    import json

    with conn, conn.makefile("rb") as reader:
        first = True
        for line_number, raw in enumerate(reader, start=1):
            text = raw.decode("utf-8").strip()
            if not text:
                continue
            if first:
                first = False
                try:
                    obj = json.loads(text)
                except json.JSONDecodeError:
                    obj = None
                if isinstance(obj, dict) and "t" not in obj and "joints" not in obj:
                    # sequence-style metadata header; carries nothing a live link needs
                    continue
            yield parse_frame_line(text, line_number)


# ---------------------------------------------------------------------------
# Orchestration


_SENTINEL = object()


@dataclass
class _ProducerState:
    error: Optional[str] = None


def run_stream(
    source: Iterable[SkeletonFrame],
    model: Model,
    config: StreamConfig,
    sink: Callable[[ActivityEvent], None],
    *,
    labels=None,
    fps: float = 10.0,
    queue_capacity: int = 64,
) -> StreamSummary:
    """Drive a frame source through classification into the event sink.

    One producer thread pulls frames from ``source`` into a bounded queue
    (blocking when full, so a fast source cannot outrun inference); the
    caller's thread consumes, classifies, debounces, and invokes ``sink``
    for every event in emission order. A source failure drains what was
    already queued and is reported in the summary instead of raised.
    """
    from .skeleton import CLASS_CODES, label_from_code

    if labels is None:
        labels = [label_from_code(code) for code in CLASS_CODES]
    classifier = StreamClassifier(model, config, fps=fps)
    debouncer = EventDebouncer(config, labels)
    frame_queue: queue.Queue = queue.Queue(maxsize=queue_capacity)
    state = _ProducerState()

    def produce():
        try:
            for frame in source:
                frame_queue.put((frame, time.perf_counter()))
        except Exception as exc:
            state.error = f"{type(exc).__name__}: {exc}"
        finally:
            frame_queue.put(_SENTINEL)

    producer = threading.Thread(target=produce, name="frame-source", daemon=True)
    producer.start()

    latencies: list[float] = []
    events = 0
    try:
        while True:
            item = frame_queue.get()
            if item is _SENTINEL:
                break
            frame, arrived = item
            tick = classifier.push_frame(frame)
            if tick is None:
                continue
            # arrival-to-posterior, so time spent queued counts against us
            latencies.append(time.perf_counter() - arrived)
            event = debouncer.decide_event(tick)
            if event is not None:
                events += 1
                sink(event)
    finally:
        # unblock a producer stuck on a full queue before joining it
        while True:
            try:
                if frame_queue.get_nowait() is _SENTINEL:
                    break
            except queue.Empty:
                if not producer.is_alive():
                    break
                time.sleep(0.001)
        producer.join()

    p95 = float(np.percentile(latencies, 95)) if latencies else 0.0
    return StreamSummary(
        frames_processed=classifier.frames_accepted,
        frames_rejected=classifier.rejected_count,
        ticks=len(latencies),
        events=events,
        p95_latency_seconds=p95,
        source_error=state.error,
    )
