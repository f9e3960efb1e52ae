"""Persistent HTTP service for running live trials.

One directory per trial: ``meta.json`` (immutable configuration, seed, and
the pre-drawn initial block sequence) plus ``events.jsonl``, an append-only
log with one enrollment per line, fsynced before the enrollment is
acknowledged. The in-memory state is always reconstructible from the log, so
a crash between enrollments loses nothing; a torn trailing line (a write the
client never saw acknowledged) is dropped on reload, while any other damage
raises ``CorruptLogError``.

Live trials re-standardize covariates against the subjects enrolled so far,
recomputed at every enrollment; a covariate that is still constant maps to
zero until variance appears. Every event stores the computed discrepancy and
the raw random draws (coin, uncertainty radius), so decisions can be
re-verified offline without touching the RNG (:func:`verify_log`).
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import uuid
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, RedirectResponse
from pydantic import BaseModel, Field

from .core import (
    GROUP_ONE,
    Method,
    MethodConfig,
    RngStream,
    Subject,
    TrialState,
    coin_probability,
    discretize_quantiles,
    permuted_block_init,
    standardize_with_fallback,
)
from .errors import (
    CorruptLogError,
    CovadaptError,
    DimensionMismatchError,
    InvalidConfigError,
    TrialFullError,
    TrialNotFoundError,
)
from .methods import allocate_next, block_slot_probability, bkw_discrepancy, mh_discrepancy, nt_discrepancy, ps_discrepancy
from .metrics import build_report

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EnrollmentEvent:
    """One acknowledged enrollment, as persisted in the log."""

    seq: int
    timestamp: str
    subject_id: str
    raw: tuple[float, ...]
    assignment: int
    p_group1: float
    phase: str  # "block" or "adaptive"
    discrepancy: float | None
    coin_draw: float | None
    gamma: float | None
    forced: bool

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["raw"] = list(self.raw)
        payload["schema_version"] = SCHEMA_VERSION
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "EnrollmentEvent":
        return cls(
            seq=int(payload["seq"]),
            timestamp=payload["timestamp"],
            subject_id=payload["subject_id"],
            raw=tuple(float(v) for v in payload["raw"]),
            assignment=int(payload["assignment"]),
            p_group1=float(payload["p_group1"]),
            phase=payload["phase"],
            discrepancy=None if payload["discrepancy"] is None else float(payload["discrepancy"]),
            coin_draw=None if payload["coin_draw"] is None else float(payload["coin_draw"]),
            gamma=None if payload["gamma"] is None else float(payload["gamma"]),
            forced=bool(payload["forced"]),
        )


def _config_to_dict(config: MethodConfig) -> dict:
    return {
        "method": config.method.value,
        "target_n": config.target_n,
        "n0": config.n0,
        "block_size": config.block_size,
        "p0": config.p0,
        "categories": config.categories,
        "rho": config.rho,
        "gamma_range": list(config.gamma_range),
    }


def _config_from_dict(payload: dict) -> MethodConfig:
    return MethodConfig(
        method=payload["method"],
        target_n=int(payload["target_n"]),
        n0=int(payload["n0"]),
        block_size=int(payload["block_size"]),
        p0=float(payload["p0"]),
        categories=int(payload["categories"]),
        rho=float(payload["rho"]),
        gamma_range=tuple(payload["gamma_range"]),
    )


def live_subjects(
    raw_rows: np.ndarray, ids: Sequence[str], config: MethodConfig
) -> list[Subject]:
    """Subjects 1..t on the scale induced by the first t enrollments.

    Standardization (and, for the category-count method, the quantile
    boundaries) is refit against exactly these rows.
    """
    raw_rows = np.atleast_2d(np.asarray(raw_rows, dtype=float))
    std, _ = standardize_with_fallback(raw_rows)
    categories = None
    if config.method is Method.PS:
        cols = [discretize_quantiles(std[:, j], config.categories)[0] for j in range(std.shape[1])]
        categories = np.stack(cols, axis=1)
    subjects = []
    for i in range(raw_rows.shape[0]):
        subjects.append(
            Subject(
                id=ids[i],
                raw=raw_rows[i],
                standardized=std[i],
                categories=tuple(int(c) for c in categories[i]) if categories is not None else None,
            )
        )
    return subjects


def replay_events(
    config: MethodConfig, covariates: Sequence[str], events: Sequence[EnrollmentEvent]
) -> TrialState:
    """Rebuild the current state from the log without re-drawing anything."""
    n_categories = config.categories if config.method is Method.PS else None
    state = TrialState.empty(config.target_n, len(covariates), n_categories)
    if not events:
        return state
    for i, event in enumerate(events):
        if event.seq != i + 1:
            raise CorruptLogError(i + 1, f"found sequence {event.seq}")
        if len(event.raw) != len(covariates):
            raise CorruptLogError(event.seq, "covariate count changed mid-log")
    raws = np.array([event.raw for event in events], dtype=float)
    subjects = live_subjects(raws, [event.subject_id for event in events], config)
    for subject, event in zip(subjects, events):
        state = state.with_assignment(subject, event.assignment)
    return state


def verify_log(
    config: MethodConfig,
    covariates: Sequence[str],
    events: Sequence[EnrollmentEvent],
    blocks: Sequence[int],
) -> None:
    """Re-derive every logged decision from the persisted draws.

    Raises :class:`CorruptLogError` on the first event whose recorded
    discrepancy, probability, or assignment does not reproduce.
    """
    n_categories = config.categories if config.method is Method.PS else None
    raws: list[tuple[float, ...]] = []
    for event in events:
        raws.append(event.raw)
        t = event.seq
        if event.phase == "block":
            if event.assignment != blocks[t - 1]:
                raise CorruptLogError(t, "block assignment differs from the drawn blocks")
            expected_p = block_slot_probability(np.asarray(blocks), t - 1, config.block_size)
            if event.p_group1 != expected_p:
                raise CorruptLogError(t, "block slot probability differs")
            continue
        subjects = live_subjects(np.array(raws), [e.subject_id for e in events[:t]], config)
        state = TrialState.empty(config.target_n, len(covariates), n_categories)
        for subject, past in zip(subjects[:-1], events[: t - 1]):
            state = state.with_assignment(subject, past.assignment)
        if config.method is Method.PS:
            value = ps_discrepancy(state, subjects[-1]).value
        elif config.method is Method.NT:
            value = nt_discrepancy(state, subjects[-1]).value
        elif config.method is Method.MH:
            value = mh_discrepancy(state, subjects[-1]).value
        else:
            value = bkw_discrepancy(state, subjects[-1], config, event.gamma).value
        if value != event.discrepancy:
            raise CorruptLogError(t, f"recomputed discrepancy {value!r} != logged {event.discrepancy!r}")
        if event.forced:
            continue
        p0 = 1.0 if config.method is Method.BKW else config.p0
        expected_p = coin_probability(value, p0)
        if event.p_group1 != expected_p:
            raise CorruptLogError(t, "assignment probability differs")
        expected_group = GROUP_ONE if event.coin_draw < expected_p else 2
        if event.assignment != expected_group:
            raise CorruptLogError(t, "assignment inconsistent with the persisted coin draw")


@dataclass
class TrialRuntime:
    trial_id: str
    config: MethodConfig
    covariates: tuple[str, ...]
    seed: int
    blocks: tuple[int, ...]
    events: list[EnrollmentEvent]
    lock: threading.Lock

    @property
    def status(self) -> str:
        return "full" if len(self.events) >= self.config.target_n else "recruiting"


class TrialStore:
    """All trials under one data directory; one writer lock per trial."""

    def __init__(self, data_dir: str | Path, default_seed: int | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.default_seed = default_seed
        self._trials: dict[str, TrialRuntime] = {}
        self._registry_lock = threading.Lock()

    # -- paths ---------------------------------------------------------

    def _trial_dir(self, trial_id: str) -> Path:
        return self.data_dir / trial_id

    def _meta_path(self, trial_id: str) -> Path:
        return self._trial_dir(trial_id) / "meta.json"

    def _events_path(self, trial_id: str) -> Path:
        return self._trial_dir(trial_id) / "events.jsonl"

    # -- lifecycle -----------------------------------------------------

    def create(
        self,
        config: MethodConfig,
        covariates: Sequence[str],
        seed: int | None = None,
    ) -> TrialRuntime:
        covariates = tuple(covariates)
        problems = {}
        if not covariates:
            problems["covariates"] = "need at least one covariate name"
        if len(set(covariates)) != len(covariates):
            problems["covariates"] = "covariate names must be distinct"
        if config.n0 >= config.target_n:
            problems["n0"] = f"initial cohort {config.n0} must be smaller than target_n {config.target_n}"
        if problems:
            raise InvalidConfigError(problems)
        if seed is None:
            seed = self.default_seed if self.default_seed is not None else secrets.randbits(48)
        trial_id = uuid.uuid4().hex[:12]
        blocks = tuple(int(g) for g in permuted_block_init(config.n0, config.block_size, RngStream(seed).child(1)))
        meta = {
            "schema_version": SCHEMA_VERSION,
            "trial_id": trial_id,
            "created_at": _now(),
            "covariates": list(covariates),
            "config": _config_to_dict(config),
            "seed": seed,
            "blocks": list(blocks),
        }
        trial_dir = self._trial_dir(trial_id)
        trial_dir.mkdir(parents=True)
        _write_fsync(self._meta_path(trial_id), json.dumps(meta, sort_keys=True, indent=2) + "\n")
        self._events_path(trial_id).touch()
        runtime = TrialRuntime(
            trial_id=trial_id,
            config=config,
            covariates=covariates,
            seed=seed,
            blocks=blocks,
            events=[],
            lock=threading.Lock(),
        )
        with self._registry_lock:
            self._trials[trial_id] = runtime
        return runtime

    def _load(self, trial_id: str) -> TrialRuntime:
        meta_path = self._meta_path(trial_id)
        if not meta_path.exists():
            raise TrialNotFoundError(trial_id)
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        events = _read_events(self._events_path(trial_id))
        runtime = TrialRuntime(
            trial_id=trial_id,
            config=_config_from_dict(meta["config"]),
            covariates=tuple(meta["covariates"]),
            seed=int(meta["seed"]),
            blocks=tuple(int(g) for g in meta["blocks"]),
            events=events,
            lock=threading.Lock(),
        )
        # integrity: contiguous sequence numbers
        replay_events(runtime.config, runtime.covariates, events)
        return runtime

    def get(self, trial_id: str) -> TrialRuntime:
        with self._registry_lock:
            runtime = self._trials.get(trial_id)
            if runtime is None:
                runtime = self._load(trial_id)
                self._trials[trial_id] = runtime
            return runtime

    def list_ids(self) -> list[str]:
        on_disk = {p.name for p in self.data_dir.iterdir() if (p / "meta.json").exists()}
        return sorted(on_disk)

    # -- operations ----------------------------------------------------

    def enroll(self, trial_id: str, raw, subject_id: str | None = None) -> EnrollmentEvent:
        runtime = self.get(trial_id)
        raw = tuple(float(v) for v in raw)
        if len(raw) != len(runtime.covariates):
            raise DimensionMismatchError(
                f"expected {len(runtime.covariates)} covariates, got {len(raw)}"
            )
        if not all(np.isfinite(raw)):
            raise DimensionMismatchError("covariate values must be finite")
        with runtime.lock:
            config = runtime.config
            seq = len(runtime.events) + 1
            if seq > config.target_n:
                raise TrialFullError(f"trial {trial_id} already holds {config.target_n} subjects")
            sid = subject_id or f"subject-{seq}"
            if seq <= config.n0:
                group = runtime.blocks[seq - 1]
                event = EnrollmentEvent(
                    seq=seq,
                    timestamp=_now(),
                    subject_id=sid,
                    raw=raw,
                    assignment=group,
                    p_group1=block_slot_probability(np.asarray(runtime.blocks), seq - 1, config.block_size),
                    phase="block",
                    discrepancy=None,
                    coin_draw=None,
                    gamma=None,
                    forced=False,
                )
            else:
                raws = np.array([e.raw for e in runtime.events] + [raw], dtype=float)
                ids = [e.subject_id for e in runtime.events] + [sid]
                subjects = live_subjects(raws, ids, config)
                n_categories = config.categories if config.method is Method.PS else None
                state = TrialState.empty(config.target_n, len(runtime.covariates), n_categories)
                for subject, past in zip(subjects[:-1], runtime.events):
                    state = state.with_assignment(subject, past.assignment)
                record, _ = allocate_next(state, subjects[-1], config, RngStream(runtime.seed).child(2, seq))
                event = EnrollmentEvent(
                    seq=seq,
                    timestamp=_now(),
                    subject_id=sid,
                    raw=raw,
                    assignment=record.group,
                    p_group1=record.p_group1,
                    phase="adaptive",
                    discrepancy=record.discrepancy_value,
                    coin_draw=record.coin_draw,
                    gamma=getattr(record.discrepancy, "gamma", None),
                    forced=record.forced,
                )
            _append_fsync(self._events_path(trial_id), json.dumps(event.to_dict(), sort_keys=True) + "\n")
            runtime.events.append(event)
            return event

    def state_payload(self, trial_id: str) -> dict:
        runtime = self.get(trial_id)
        with runtime.lock:
            events = list(runtime.events)
        config = runtime.config
        state = replay_events(config, runtime.covariates, events)
        records = [e.assignment for e in events]
        report = build_report(
            state.group_values(1),
            state.group_values(2),
            runtime.covariates,
            records=records,
            n0=config.n0,
        )
        return {
            "schema_version": SCHEMA_VERSION,
            "id": runtime.trial_id,
            "status": runtime.status,
            "config": _config_to_dict(config),
            "covariates": list(runtime.covariates),
            "target_n": config.target_n,
            "n0": config.n0,
            "enrolled": len(events),
            "group_sizes": [state.n1, state.n2],
            "metrics": report.to_dict(),
            "last_event": events[-1].to_dict() if events else None,
        }

    def events_payload(self, trial_id: str) -> dict:
        runtime = self.get(trial_id)
        with runtime.lock:
            events = list(runtime.events)
        return {
            "schema_version": SCHEMA_VERSION,
            "id": runtime.trial_id,
            "events": [e.to_dict() for e in events],
        }

    def verify(self, trial_id: str) -> None:
        runtime = self.get(trial_id)
        verify_log(runtime.config, runtime.covariates, runtime.events, runtime.blocks)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_fsync(path: Path, text: str) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())


def _append_fsync(path: Path, line: str) -> None:
    with path.open("a", encoding="utf-8") as fh:
        fh.write(line)
        fh.flush()
        os.fsync(fh.fileno())


def _read_events(path: Path) -> list[EnrollmentEvent]:
    if not path.exists():
        return []
    events: list[EnrollmentEvent] = []
    lines = path.read_text(encoding="utf-8").splitlines()
    for index, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
            events.append(EnrollmentEvent.from_dict(payload))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            if index == len(lines) - 1:
                # torn trailing write: the enrollment was never acknowledged
                break
            raise CorruptLogError(index + 1, "unparseable event line")
    return events


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


class CreateTrialRequest(BaseModel):
    method: str
    covariates: list[str] = Field(min_length=1)
    target_n: int
    n0: int = 8
    block_size: int | None = None
    p0: float = 0.8
    categories: int = 3
    rho: float = 6.0
    gamma_range: tuple[float, float] = (0.5, 4.0)
    seed: int | None = None


class EnrollRequest(BaseModel):
    covariates: list[float] = Field(min_length=1)
    subject_id: str | None = None


def create_app(
    data_dir: str | Path,
    default_seed: int | None = None,
    console_dir: str | Path | None = None,
) -> FastAPI:
    """FastAPI application over a trial store.

    ``console_dir``, when given and existing, is served at ``/ui`` as the
    enrollment console's static assets.
    """
    store = TrialStore(data_dir, default_seed=default_seed)
    app = FastAPI(title="covadapt allocation service", version=str(SCHEMA_VERSION))
    app.state.store = store

    status_by_code = {
        "not_found": 404,
        "trial_full": 409,
        "constant_column": 409,
        "invalid_config": 422,
        "dimension_mismatch": 422,
        "corrupt_log": 500,
    }

    @app.exception_handler(CovadaptError)
    async def domain_error(request: Request, err: CovadaptError):
        body = {"code": err.code, "message": str(err), "detail": getattr(err, "detail", None)}
        return JSONResponse(status_code=status_by_code.get(err.code, 400), content=body)

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, err: RequestValidationError):
        detail = {".".join(str(p) for p in item["loc"]): item["msg"] for item in err.errors()}
        body = {"code": "invalid_request", "message": "request body failed validation", "detail": detail}
        return JSONResponse(status_code=422, content=body)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "trials": len(store.list_ids())}

    @app.post("/trials", status_code=201)
    def create_trial(body: CreateTrialRequest):
        config = MethodConfig(
            method=body.method,
            target_n=body.target_n,
            n0=body.n0,
            block_size=body.block_size,
            p0=body.p0,
            categories=body.categories,
            rho=body.rho,
            gamma_range=body.gamma_range,
        )
        runtime = store.create(config, body.covariates, seed=body.seed)
        return {"id": runtime.trial_id, "status": runtime.status, "seed": runtime.seed}

    @app.post("/trials/{trial_id}/enroll")
    def enroll(trial_id: str, body: EnrollRequest):
        event = store.enroll(trial_id, body.covariates, subject_id=body.subject_id)
        return event.to_dict()

    @app.get("/trials/{trial_id}")
    def get_state(trial_id: str):
        return store.state_payload(trial_id)

    @app.get("/trials/{trial_id}/events")
    def get_events(trial_id: str):
        return store.events_payload(trial_id)

    if console_dir is not None and Path(console_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(console_dir), html=True), name="console")

        @app.get("/")
        def index():
            return RedirectResponse(url="/ui/")

    else:

        @app.get("/")
        def index():
            return {"service": "covadapt", "endpoints": ["/trials", "/healthz"]}

    return app
