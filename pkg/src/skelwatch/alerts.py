"""SMS alerting: message formatting, Twilio-style delivery, and dispatch.

The wire contract is the public Twilio message API: POST
``{base}/2010-04-01/Accounts/{sid}/Messages.json`` with basic auth and a
form body of exactly To/From/Body; 201 means accepted. ``base_url`` is
configurable so tests talk to the bundled mock server and deployments can
point at any compatible gateway.
"""

from __future__ import annotations

import json
import logging
import queue
import random
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Iterable, Optional

import requests

from .skeleton import ActivityLabel
from .streaming import ActivityEvent
from .tensor import ContractError

__all__ = [
    "E164_PATTERN",
    "GatewayConfig",
    "SmsRequest",
    "DeliveryResult",
    "format_alert",
    "send_sms",
    "AlertDispatcher",
    "load_accepted_keys",
]

logger = logging.getLogger("skelwatch.alerts")

E164_PATTERN = re.compile(r"^\+[1-9][0-9]{6,14}$")

_MAX_BODY_CHARS = 1600
PARKED_CAPACITY = 100


def _require_e164(number: str, what: str) -> None:
    if not isinstance(number, str) or not E164_PATTERN.match(number):
        raise ValueError(f"{what} must be E.164 (+ and 7-15 digits), got {number!r}")


@dataclass(frozen=True)
class GatewayConfig:
    """Delivery endpoint and retry policy. ``auth_token`` never leaves repr/logs."""

    base_url: str
    account_sid: str
    auth_token: str = field(repr=False)
    from_number: str = ""
    recipients: tuple[str, ...] = ()
    max_retries: int = 3
    backoff_base_seconds: float = 1.0
    timeout_seconds: float = 10.0

    def __post_init__(self):
        if not self.base_url or not isinstance(self.base_url, str):
            raise ValueError("base_url must be a nonempty string")
        if not self.account_sid:
            raise ValueError("account_sid must be nonempty")
        if not self.auth_token:
            raise ValueError("auth_token must be nonempty")
        _require_e164(self.from_number, "from_number")
        object.__setattr__(self, "recipients", tuple(self.recipients))
        if not self.recipients:
            raise ValueError("at least one recipient is required")
        for number in self.recipients:
            _require_e164(number, "recipient")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.backoff_base_seconds <= 0.0:
            raise ValueError("backoff_base_seconds must be positive")
        if self.timeout_seconds <= 0.0:
            raise ValueError("timeout_seconds must be positive")


@dataclass(frozen=True)
class SmsRequest:
    to: str
    from_number: str
    body: str

    def __post_init__(self):
        if not self.body:
            raise ValueError("body must be nonempty")
        if len(self.body) > _MAX_BODY_CHARS:
            raise ValueError(f"body exceeds {_MAX_BODY_CHARS} chars ({len(self.body)})")
        if not self.to or not self.from_number:
            raise ValueError("to and from_number must be nonempty")


@dataclass(frozen=True)
class DeliveryResult:
    """Outcome of one send: accepted, permanent_failure, retries_exhausted,
    or config_error."""

    accepted: bool
    status: str
    message_sid: Optional[str]
    error: Optional[str]
    attempts: int
    latency_seconds: float

    def __post_init__(self):
        if self.status not in {"accepted", "permanent_failure", "retries_exhausted", "config_error"}:
            raise ValueError(f"unknown status {self.status!r}")
        if self.attempts < 0:
            raise ValueError("attempts must be >= 0")


def format_alert(
    event: ActivityEvent,
    patient_label: str,
    when: Optional[datetime] = None,
    *,
    require_critical: bool = True,
) -> str:
    """Single-segment SMS body for a critical event.

    ``when`` is the wall-clock detection time; it defaults to now in the
    local timezone. Stays within 160 chars for patient labels up to 24 chars.
    ``require_critical=False`` is for callers that applied their own
    criticality policy (e.g. a dispatcher with an overridden critical set).
    """
    if require_critical and not event.label.critical:
        raise ContractError(
            f"alert formatting is for critical classes; {event.label.class_code} is not"
        )
    if when is None:
        when = datetime.now().astimezone()
    stamp = when.isoformat(timespec="seconds")
    percent = f"{event.confidence * 100.0:.1f}"
    return (
        f"ALERT [CRITICAL] {patient_label}: {event.label.display_name} "
        f"detected at {stamp} (confidence {percent}%)"
    )


def _provider_message(response) -> str:
    try:
        payload = response.json()
    except ValueError:
        return ""
    if isinstance(payload, dict):
        message = payload.get("message")
        if isinstance(message, str):
            return message
    return ""


def send_sms(
    request: SmsRequest,
    config: GatewayConfig,
    *,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random = random,
) -> DeliveryResult:
    """Deliver one message with retry on 5xx/timeouts, never on 4xx.

    Backoff before retry k (1-based) is base * 2**(k-1), jittered up to +25%.
    Error strings carry status codes and exception class names only, never
    credentials.
    """
    url = (
        f"{config.base_url.rstrip('/')}/2010-04-01/Accounts/"
        f"{config.account_sid}/Messages.json"
    )
    form = {"To": request.to, "From": request.from_number, "Body": request.body}
    started = time.perf_counter()
    last_error = "not attempted"
    attempts = 0
    for attempt in range(config.max_retries + 1):
        if attempt:
            delay = config.backoff_base_seconds * (2 ** (attempt - 1)) * (1.0 + 0.25 * rng.random())
            logger.info("retrying SMS delivery in %.2fs (attempt %d)", delay, attempt + 1)
            sleep(delay)
        attempts += 1
        try:
            response = requests.post(
                url,
                data=form,
                auth=(config.account_sid, config.auth_token),
                timeout=config.timeout_seconds,
            )
        except (
            requests.exceptions.MissingSchema,
            requests.exceptions.InvalidSchema,
            requests.exceptions.InvalidURL,
        ):
            return DeliveryResult(
                accepted=False,
                status="config_error",
                message_sid=None,
                error="base_url is not a usable http(s) URL",
                attempts=attempts,
                latency_seconds=time.perf_counter() - started,
            )
        except (requests.exceptions.Timeout, requests.exceptions.ConnectionError) as exc:
            last_error = f"{type(exc).__name__} contacting gateway"
            logger.warning("SMS attempt %d failed: %s", attempts, last_error)
            continue
        if response.status_code == 201:
            try:
                sid = response.json().get("sid")
            except ValueError:
                sid = None
            return DeliveryResult(
                accepted=True,
                status="accepted",
                message_sid=sid if isinstance(sid, str) else None,
                error=None,
                attempts=attempts,
                latency_seconds=time.perf_counter() - started,
            )
        if 400 <= response.status_code < 500:
            detail = _provider_message(response)
            error = f"HTTP {response.status_code}" + (f": {detail}" if detail else "")
            logger.error("SMS rejected permanently: %s", error)
            return DeliveryResult(
                accepted=False,
                status="permanent_failure",
                message_sid=None,
                error=error,
                attempts=attempts,
                latency_seconds=time.perf_counter() - started,
            )
        last_error = f"HTTP {response.status_code}"
        logger.warning("SMS attempt %d failed: %s", attempts, last_error)
    return DeliveryResult(
        accepted=False,
        status="retries_exhausted",
        message_sid=None,
        error=last_error,
        attempts=attempts,
        latency_seconds=time.perf_counter() - started,
    )


def load_accepted_keys(log_path) -> set[tuple[int, str]]:
    """(event_id, recipient) pairs already accepted, per the delivery log."""
    accepted: set[tuple[int, str]] = set()
    try:
        with open(log_path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if record.get("accepted"):
                    accepted.add((int(record["event_id"]), str(record["to"])))
    except FileNotFoundError:
        pass
    return accepted


class AlertDispatcher:
    """Routes activity events to SMS recipients with an append-only log.

    Critical events fan out to every recipient sequentially (ordering holds
    per recipient); non-critical events are logged and dropped. Unreachable
    deliveries park the event in a bounded queue; when full, the oldest entry
    is dropped loudly. Replaying an event id already accepted in the delivery
    log sends nothing.
    """

    def __init__(
        self,
        config: GatewayConfig,
        patient_label: str,
        log_path=None,
        critical_codes: Optional[Iterable[str]] = None,
        send: Callable[..., DeliveryResult] = send_sms,
        now: Callable[[], datetime] = lambda: datetime.now().astimezone(),
    ):
        self.config = config
        self.patient_label = patient_label
        self.log_path = log_path
        self.critical_codes = None if critical_codes is None else frozenset(critical_codes)
        self._send = send
        self._now = now
        self._accepted: set[tuple[int, str]] = (
            load_accepted_keys(log_path) if log_path is not None else set()
        )
        self._parked: list[tuple[ActivityEvent, tuple[str, ...]]] = []
        self.dropped_count = 0
        self._queue: Optional[queue.Queue] = None
        self._worker: Optional[threading.Thread] = None

    # -- policy ------------------------------------------------------------

    def is_critical(self, label: ActivityLabel) -> bool:
        if self.critical_codes is not None:
            return label.class_code in self.critical_codes
        return label.critical

    @property
    def parked_count(self) -> int:
        return len(self._parked)

    # -- core dispatch -----------------------------------------------------

    def handle_event(self, event: ActivityEvent) -> list[DeliveryResult]:
        """Deliver one event now; returns the per-recipient results."""
        if not self.is_critical(event.label):
            logger.info(
                "non-critical event %d (%s), not alerting", event.event_id, event.label.class_code
            )
            return []
        return self._deliver(event, self.config.recipients)

    def _deliver(self, event: ActivityEvent, recipients: tuple[str, ...]) -> list[DeliveryResult]:
        body = format_alert(
            event, self.patient_label, when=self._now(), require_critical=False
        )
        results = []
        unreachable: list[str] = []
        for to in recipients:
            key = (event.event_id, to)
            if key in self._accepted:
                logger.info("event %d already delivered to %s, skipping", event.event_id, to)
                continue
            result = self._send(SmsRequest(to=to, from_number=self.config.from_number, body=body), self.config)
            results.append(result)
            self._log_result(event, to, result)
            if result.accepted:
                self._accepted.add(key)
            elif result.status == "retries_exhausted":
                unreachable.append(to)
        if unreachable:
            self._park(event, tuple(unreachable))
        return results

    def _park(self, event: ActivityEvent, recipients: tuple[str, ...]) -> None:
        if len(self._parked) >= PARKED_CAPACITY:
            dropped, _ = self._parked.pop(0)
            self.dropped_count += 1
            logger.warning(
                "parked-alert queue full: dropping oldest event %d (%s); %d dropped so far",
                dropped.event_id,
                dropped.label.class_code,
                self.dropped_count,
            )
        self._parked.append((event, recipients))

    def flush_parked(self) -> int:
        """Retry parked events oldest-first; stop at the first still-dead send.

        Returns how many parked events were fully delivered.
        """
        delivered = 0
        while self._parked:
            event, recipients = self._parked.pop(0)
            results = self._deliver(event, recipients)
            if any(r.status == "retries_exhausted" for r in results):
                # _deliver re-parked the failing recipients at the tail; put
                # them back at the head so the queue stays oldest-first, and
                # stop burning retries while the gateway is down
                self._parked.insert(0, self._parked.pop())
                return delivered
            delivered += 1
        return delivered

    def _log_result(self, event: ActivityEvent, to: str, result: DeliveryResult) -> None:
        if self.log_path is None:
            return
        record = {
            "event_id": event.event_id,
            "label": event.label.class_code,
            "to": to,
            "accepted": result.accepted,
            "status": result.status,
            "sid": result.message_sid,
            "error": result.error,
            "attempts": result.attempts,
            "latency_seconds": round(result.latency_seconds, 6),
            "logged_at": self._now().isoformat(timespec="seconds"),
        }
        with open(self.log_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(record) + "\n")

    # -- worker mode (sink for the stream loop) -----------------------------

    def start(self, queue_capacity: int = 256) -> None:
        """Spin up the dispatch worker; ``submit`` becomes usable as a sink."""
        if self._worker is not None:
            raise RuntimeError("dispatcher worker already running")
        self._queue = queue.Queue(maxsize=queue_capacity)

        def run():
            while True:
                item = self._queue.get()
                if item is None:
                    return
                try:
                    self.handle_event(item)
                except Exception:
                    logger.exception("alert dispatch failed for event %d", item.event_id)

        self._worker = threading.Thread(target=run, name="alert-dispatch", daemon=True)
        self._worker.start()

    def submit(self, event: ActivityEvent) -> None:
        if self._queue is None:
            raise RuntimeError("dispatcher worker not running; call start() first")
        self._queue.put(event)

    def stop(self) -> None:
        if self._worker is None:
            return
        self._queue.put(None)
        self._worker.join()
        self._worker = None
        self._queue = None
