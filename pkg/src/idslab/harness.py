"""Orchestration of an incremental-selection run.

Three phases over a finite source: seed a training set with m uniform
draws and train on it; then alternate candidate selection and model
updates until the budget k is reached (each update trains on the freshly
accepted examples plus replayed older ones); finally fine-tune on the
complete selected set. Selection decisions, accuracy curves, and usage
counts are logged throughout for post-hoc analysis.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import LinearSoftmaxModel, evaluate_accuracy, init_model
from .scoring import (
    AcquisitionMethod,
    ClassPrototypes,
    MethodConfig,
    PrototypeSource,
    compute_prototypes,
    score_candidate,
)
from .selection import ScoreCache, SelectionPolicy, decide, on_model_update
from .stream import PoolSource

REPLAY_MODES = ("uniform", "count_inverse")


def auto_delta(data_budget: int, initial_size: int, total_updates: int) -> int:
    """Per-update acceptance quota sized so selection fills half the updates.

    ceil((k - m) / (u / 2)): selecting the k - m post-initialization
    examples then consumes about u/2 model updates.
    """
    if total_updates < 1:
        raise ValueError("total_updates must be >= 1")
    if data_budget <= initial_size:
        raise ValueError("data budget must exceed the initial set size")
    return -(-2 * (data_budget - initial_size) // total_updates)


@dataclass
class IDSConfig:
    """Hyperparameters of one incremental-selection run."""

    data_budget: int
    initial_size: int
    batch_size: int = 32
    selection_increment: int | None = None  # None = derive via auto_delta
    total_updates: int = 400
    init_updates: int = 50
    lr: float = 0.05
    final_lr_decay: float = 1.0
    selection_rate: float = 20.0
    refresh_period: int | None = 20  # None = never refresh
    method: MethodConfig = field(
        default_factory=lambda: MethodConfig(AcquisitionMethod.PEAKS)
    )
    replay_sampling: str = "uniform"
    deferred_merge: bool = False
    candidate_batch_size: int = 1
    eval_every: int | None = None  # None = refresh_period (or 50 if that is None)
    weight_init: str = "zeros"
    seed: int = 0

    @property
    def delta(self) -> int:
        if self.selection_increment is not None:
            return self.selection_increment
        return auto_delta(self.data_budget, self.initial_size, self.total_updates)

    @property
    def selection_rounds(self) -> int:
        return -(-(self.data_budget - self.initial_size) // self.delta)

    @property
    def eval_period(self) -> int:
        if self.eval_every is not None:
            return self.eval_every
        return self.refresh_period if self.refresh_period is not None else 50

    def validate(self) -> None:
        if self.initial_size < 1:
            raise ValueError("initial_size must be >= 1")
        if self.initial_size >= self.data_budget:
            raise ValueError("initial_size must be below the data budget")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (1 <= self.delta <= self.batch_size):
            raise ValueError(
                f"selection increment {self.delta} must lie in [1, batch_size]"
            )
        if not (0.0 < self.selection_rate <= 100.0):
            raise ValueError("selection_rate must be in (0, 100]")
        if self.refresh_period is not None and self.refresh_period < 1:
            raise ValueError("refresh_period must be >= 1 or None")
        if self.deferred_merge and self.refresh_period is None:
            raise ValueError("deferred merge needs a finite refresh period")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.final_lr_decay <= 0.0:
            raise ValueError("final_lr_decay must be positive")
        if self.candidate_batch_size < 1:
            raise ValueError("candidate_batch_size must be >= 1")
        if self.eval_period < 1:
            raise ValueError("eval_every must be >= 1")
        if self.replay_sampling not in REPLAY_MODES:
            raise ValueError(f"replay_sampling must be one of {REPLAY_MODES}")
        if self.weight_init not in ("zeros", "gaussian"):
            raise ValueError("weight_init must be 'zeros' or 'gaussian'")
        budget_updates = self.init_updates + self.selection_rounds
        if self.init_updates < 0 or self.total_updates < budget_updates:
            raise ValueError(
                f"total_updates {self.total_updates} cannot cover init "
                f"({self.init_updates}) plus selection ({self.selection_rounds})"
            )

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["method"] = {
            "method": self.method.method.value,
            "normalize_by_class_count": self.method.normalize_by_class_count,
            "prototype_source": self.method.prototype_source.value,
        }
        return out


@dataclass
class CandidateLog:
    """Columnar per-candidate decision trace."""

    step: list[int] = field(default_factory=list)
    id: list[int] = field(default_factory=list)
    score: list[float] = field(default_factory=list)
    percentile: list[float] = field(default_factory=list)
    accepted: list[bool] = field(default_factory=list)

    def add(self, step: int, cand_id: int, score: float, q: float, ok: bool) -> None:
        self.step.append(step)
        self.id.append(cand_id)
        self.score.append(score)
        self.percentile.append(q)
        self.accepted.append(ok)

    def __len__(self) -> int:
        return len(self.id)


@dataclass
class RunState:
    """Mutable state threaded through the three phases."""

    model: LinearSoftmaxModel
    selected_rows: list[int]
    buffer_rows: list[int]
    selected_ids: set[int]
    selection_steps: dict[int, int]
    class_counts: np.ndarray
    usage_counts: np.ndarray
    cache: ScoreCache
    prototypes: ClassPrototypes | None
    rng_stream: np.random.Generator
    rng_replay: np.random.Generator
    rng_score: np.random.Generator
    step: int = 0  # selection rounds completed
    updates_done: int = 0
    candidate_log: CandidateLog = field(default_factory=CandidateLog)
    accuracy_curve: list[tuple[int, str, float]] = field(default_factory=list)
    row_to_id: dict[int, int] = field(default_factory=dict)

    @property
    def selected_total(self) -> int:
        return len(self.selected_rows) + len(self.buffer_rows)


@dataclass
class RunResult:
    """Everything a finished (or aborted) run leaves behind."""

    config: dict
    final_test_accuracy: float | None
    final_val_accuracy: float | None
    accuracy_curve: list[tuple[int, str, float]]
    selected: list[tuple[int, int]]  # (id, selection step); step 0 = initial set
    class_counts: list[int]
    usage_counts: dict[int, int]
    candidate_log: CandidateLog
    refresh_count: int
    exhausted: bool = False

    @property
    def selected_ids(self) -> list[int]:
        return [i for i, _ in self.selected]

    @property
    def initial_ids(self) -> set[int]:
        return {i for i, step in self.selected if step == 0}


class SourceExhaustedError(RuntimeError):
    """The pool ran dry before the budget was met; carries partial results."""

    def __init__(self, message: str, result: RunResult):
        super().__init__(message)
        self.result = result


def _uniform_rows(rows: list[int], count: int, rng: np.random.Generator) -> np.ndarray:
    pool = np.asarray(rows, dtype=np.int64)
    replace = pool.size < count
    return rng.choice(pool, size=count, replace=replace)


def _count_inverse_rows(
    rows: list[int], count: int, usage: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    pool = np.asarray(rows, dtype=np.int64)
    weights = 1.0 / np.maximum(usage[pool], 1)
    if pool.size < count:
        return rng.choice(pool, size=count, replace=True, p=weights / weights.sum())
    picked = np.empty(count, dtype=np.int64)
    alive = np.ones(pool.size, dtype=bool)
    w = weights.copy()
    for i in range(count):
        p = w / w.sum()
        idx = int(rng.choice(pool.size, p=p))
        picked[i] = pool[idx]
        # draw without replacement: zero out and renormalize on the next pass
        w[idx] = 0.0
    return picked


def _replay_rows(
    state: RunState, count: int, mode: str, rng: np.random.Generator
) -> np.ndarray:
    if count == 0:
        return np.empty(0, dtype=np.int64)
    if mode == "count_inverse":
        return _count_inverse_rows(state.selected_rows, count, state.usage_counts, rng)
    return _uniform_rows(state.selected_rows, count, rng)


def _record_accuracy(state: RunState, source: PoolSource) -> None:
    update = state.updates_done
    if state.accuracy_curve and state.accuracy_curve[-1][0] == update:
        return
    if source.test is not None and len(source.test) > 0:
        acc = evaluate_accuracy(state.model, source.test.features, source.test.labels)
        state.accuracy_curve.append((update, "test", acc))
    if source.validation is not None and len(source.validation) > 0:
        acc = evaluate_accuracy(
            state.model, source.validation.features, source.validation.labels
        )
        state.accuracy_curve.append((update, "val", acc))


def _train_batch(state: RunState, source: PoolSource, rows: np.ndarray, lr: float) -> None:
    feats = source.pool.features[rows]
    labels = source.pool.labels[rows]
    state.model.sgd_batch_update(feats, labels, lr)
    state.updates_done += 1


def _build_result(state: RunState, config: IDSConfig, exhausted: bool) -> RunResult:
    order = sorted(state.selection_steps.items(), key=lambda kv: (kv[1], kv[0]))
    usage = {
        int(sid): int(state.usage_counts[row])
        for row, sid in state.row_to_id.items()
    }
    final_test = final_val = None
    for update, split, acc in reversed(state.accuracy_curve):
        if split == "test" and final_test is None:
            final_test = acc
        if split == "val" and final_val is None:
            final_val = acc
    return RunResult(
        config=config.to_dict(),
        final_test_accuracy=final_test,
        final_val_accuracy=final_val,
        accuracy_curve=list(state.accuracy_curve),
        selected=[(int(i), int(s)) for i, s in order],
        class_counts=[int(c) for c in state.class_counts],
        usage_counts=usage,
        candidate_log=state.candidate_log,
        refresh_count=state.cache.refresh_count,
        exhausted=exhausted,
    )


def phase_initialize(config: IDSConfig, source: PoolSource) -> RunState:
    """Draw the initial set and train on it for ``init_updates`` steps."""
    config.validate()
    pool = source.pool
    if len(pool) < config.initial_size:
        raise ValueError(
            f"pool holds {len(pool)} examples, fewer than initial_size "
            f"{config.initial_size}"
        )
    if config.method.needs_validation() and (
        source.validation is None or len(source.validation) == 0
    ):
        raise ValueError(f"{config.method.method.value} requires a validation set")

    root = np.random.default_rng(config.seed)
    rng_stream, rng_replay, rng_score = root.spawn(3)

    model = init_model(
        pool.num_classes, pool.feature_dim, seed=config.seed, scheme=config.weight_init
    )

    selected_ids: set[int] = set()
    init_rows = source.draw_rows_excluding(selected_ids, rng_stream, config.initial_size)
    if init_rows.size < config.initial_size:
        raise ValueError("pool exhausted while drawing the initial set")
    selected_rows = [int(r) for r in init_rows]
    selection_steps = {int(pool.ids[r]): 0 for r in init_rows}
    selected_ids.update(selection_steps.keys())

    class_counts = np.zeros(pool.num_classes, dtype=np.int64)
    np.add.at(class_counts, pool.labels[init_rows], 1)

    prototypes = None
    if config.method.needs_validation():
        prototypes = compute_prototypes(
            source.validation.features, source.validation.labels
        )

    state = RunState(
        model=model,
        selected_rows=selected_rows,
        buffer_rows=[],
        selected_ids=selected_ids,
        selection_steps=selection_steps,
        class_counts=class_counts,
        usage_counts=np.zeros(len(pool), dtype=np.int64),
        cache=ScoreCache(config.refresh_period),
        prototypes=prototypes,
        rng_stream=rng_stream,
        rng_replay=rng_replay,
        rng_score=rng_score,
        row_to_id={int(r): int(pool.ids[r]) for r in init_rows},
    )

    for _ in range(config.init_updates):
        rows = _uniform_rows(state.selected_rows, config.batch_size, state.rng_replay)
        _train_batch(state, source, rows, config.lr)
    _record_accuracy(state, source)
    return state


def phase_select(state: RunState, source: PoolSource, config: IDSConfig) -> RunState:
    """Alternate candidate acceptance and model updates until |T| = k."""
    pool = source.pool
    policy = SelectionPolicy(config.method.method, config.selection_rate)
    uses_val_prototypes = config.method.needs_validation()

    def recompute():
        state.prototypes = compute_prototypes(
            source.validation.features, source.validation.labels
        )

    refresh_hook = recompute if uses_val_prototypes else None

    while state.selected_total < config.data_budget:
        round_no = state.step + 1
        need = min(config.delta, config.data_budget - state.selected_total)
        new_rows: list[int] = []
        while len(new_rows) < need:
            cand_rows = source.draw_rows_excluding(
                state.selected_ids, state.rng_stream, config.candidate_batch_size
            )
            if cand_rows.size == 0:
                raise SourceExhaustedError(
                    f"source exhausted at {state.selected_total} of "
                    f"{config.data_budget} selected",
                    _build_result(state, config, exhausted=True),
                )
            logits, probs = state.model.forward_batch(pool.features[cand_rows])
            for i, row in enumerate(cand_rows):
                if len(new_rows) == need:
                    break  # quota reached: remaining candidates are discarded
                row = int(row)
                cand_id = int(pool.ids[row])
                label = int(pool.labels[row])
                score = score_candidate(
                    config.method,
                    state.model,
                    pool.features[row],
                    label,
                    probs[i],
                    logits[i],
                    state.prototypes,
                    state.class_counts,
                    state.rng_score,
                )
                accepted, q = decide(score, state.cache, policy)
                state.candidate_log.add(round_no, cand_id, score, q, accepted)
                if accepted:
                    new_rows.append(row)
                    state.selected_ids.add(cand_id)
                    state.row_to_id[row] = cand_id
                    state.selection_steps[cand_id] = round_no
                    state.class_counts[label] += 1

        replay = _replay_rows(
            state, config.batch_size - len(new_rows), config.replay_sampling,
            state.rng_replay,
        )
        batch_rows = np.concatenate([np.asarray(new_rows, dtype=np.int64), replay])
        np.add.at(state.usage_counts, batch_rows, 1)
        _train_batch(state, source, batch_rows, config.lr)
        state.step += 1

        if config.deferred_merge:
            state.buffer_rows.extend(new_rows)
        else:
            state.selected_rows.extend(new_rows)

        refreshed = on_model_update(state.cache, refresh_hook)
        if refreshed and state.buffer_rows:
            state.selected_rows.extend(state.buffer_rows)
            state.buffer_rows.clear()
        if state.updates_done % config.eval_period == 0:
            _record_accuracy(state, source)

    if state.buffer_rows:
        state.selected_rows.extend(state.buffer_rows)
        state.buffer_rows.clear()
    return state


def phase_finetune(state: RunState, source: PoolSource, config: IDSConfig) -> RunState:
    """Spend the remaining update budget on the final selected set."""
    lr = config.lr * config.final_lr_decay
    while state.updates_done < config.total_updates:
        rows = _uniform_rows(state.selected_rows, config.batch_size, state.rng_replay)
        _train_batch(state, source, rows, lr)
        if state.updates_done % config.eval_period == 0:
            _record_accuracy(state, source)
    _record_accuracy(state, source)
    return state


def run(config: IDSConfig, source: PoolSource) -> RunResult:
    """Execute all three phases; deterministic given (config, source seed).

    Raises ``SourceExhaustedError`` (with partial results attached) when
    the pool runs dry before the budget is met.
    """
    state = phase_initialize(config, source)
    state = phase_select(state, source, config)
    state = phase_finetune(state, source, config)
    return _build_result(state, config, exhausted=False)


# ---------------------------------------------------------------------------
# result serialization
# ---------------------------------------------------------------------------


def write_run_result(result: RunResult, out_dir) -> None:
    """Persist a run: result.json + CSV logs, timestamps kept separate.

    Primary outputs are byte-stable for identical (config, seed); wall
    clock and other environment facts live only in meta.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    payload = {
        "config": result.config,
        "final_test_accuracy": result.final_test_accuracy,
        "final_val_accuracy": result.final_val_accuracy,
        "refresh_count": result.refresh_count,
        "exhausted": result.exhausted,
        "class_counts": result.class_counts,
        "selected": [[i, s] for i, s in result.selected],
        "candidates_seen": len(result.candidate_log),
    }
    (out / "result.json").write_text(json.dumps(payload, sort_keys=True, indent=2))

    log = result.candidate_log
    with open(out / "candidates.csv", "w") as fh:
        fh.write("step,id,score,percentile,accepted\n")
        for j in range(len(log)):
            fh.write(
                f"{log.step[j]},{log.id[j]},{log.score[j]!r},"
                f"{log.percentile[j]!r},{int(log.accepted[j])}\n"
            )

    with open(out / "accuracy.csv", "w") as fh:
        fh.write("update,split,accuracy\n")
        for update, split_name, acc in result.accuracy_curve:
            fh.write(f"{update},{split_name},{acc!r}\n")

    with open(out / "usage.csv", "w") as fh:
        fh.write("id,count\n")
        for sid in sorted(result.usage_counts):
            fh.write(f"{sid},{result.usage_counts[sid]}\n")

    meta = {"written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "duration_info": "see caller"}
    (out / "meta.json").write_text(json.dumps(meta, indent=2))


def read_run_result(run_dir) -> RunResult:
    """Load a persisted run back into memory for analysis."""
    run_dir = Path(run_dir)
    payload = json.loads((run_dir / "result.json").read_text())

    log = CandidateLog()
    with open(run_dir / "candidates.csv") as fh:
        next(fh)
        for line in fh:
            step, cand_id, score, q, ok = line.rstrip("\n").split(",")
            log.add(int(step), int(cand_id), float(score), float(q), ok == "1")

    curve: list[tuple[int, str, float]] = []
    with open(run_dir / "accuracy.csv") as fh:
        next(fh)
        for line in fh:
            update, split_name, acc = line.rstrip("\n").split(",")
            curve.append((int(update), split_name, float(acc)))

    usage: dict[int, int] = {}
    with open(run_dir / "usage.csv") as fh:
        next(fh)
        for line in fh:
            sid, count = line.rstrip("\n").split(",")
            usage[int(sid)] = int(count)

    return RunResult(
        config=payload["config"],
        final_test_accuracy=payload["final_test_accuracy"],
        final_val_accuracy=payload["final_val_accuracy"],
        accuracy_curve=curve,
        selected=[(int(i), int(s)) for i, s in payload["selected"]],
        class_counts=[int(c) for c in payload["class_counts"]],
        usage_counts=usage,
        candidate_log=log,
        refresh_count=payload["refresh_count"],
        exhausted=payload["exhausted"],
    )
