"""Canned experiments, result schema, and the CSV emitter.

Every experiment is deterministic given its root seed: repetitions own
derived seed streams, workers return plain records, and rows are sorted on a
fixed key before writing, so thread count never changes the output bytes
(wall-time columns aside).

Result CSV schema (version 1): one row per (repetition, task, checkpoint,
condition). Summary rows use repetition = -1 and condition = "summary"; their
error column is the mean all-data error and their te/fte/bte columns are
ratios of mean errors across repetitions, so te = fte * bte holds exactly.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .config import ConfigError, ExperimentConfig
from .data import DataError, TaskDataset, load_csv, subsample_indices
from .environments import SpiralSpec, XorSpec, generate_spirals, generate_xor, rotate_features, shuffle_labels
from .forest import ForestConfig
from .learner import HonestForestClassifier, OmniLearner, pool_datasets
from .metrics import (
    ALL_DATA,
    SINGLE_TASK,
    UP_TO_TASK,
    ErrorEstimate,
    TaskTransfer,
    build_transfer,
)
from .seeding import SeedStream
from .serialize import learner_to_bytes

__all__ = [
    "RESULT_COLUMNS",
    "SCHEMA_VERSION",
    "ResultRow",
    "ExperimentResult",
    "run_experiment",
    "rows_to_csv",
    "write_rows",
    "read_rows",
    "csv_bodies_equal",
    "fit_loglog_slope",
    "param_str",
    "parse_param",
]

SCHEMA_VERSION = 1
RESULT_COLUMNS = [
    "experiment",
    "repetition",
    "task_id",
    "n_seen",
    "condition",
    "param",
    "error",
    "te",
    "fte",
    "bte",
    "log_te",
    "log_fte",
    "log_bte",
    "wall_time_ms",
    "model_bytes",
]


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    repetition: int
    task_id: int
    n_seen: int
    condition: str
    param: str = ""
    error: Optional[float] = None
    te: Optional[float] = None
    fte: Optional[float] = None
    bte: Optional[float] = None
    log_te: Optional[float] = None
    log_fte: Optional[float] = None
    log_bte: Optional[float] = None
    wall_time_ms: Optional[float] = None
    model_bytes: Optional[int] = None

    def to_list(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [fmt(getattr(self, c)) for c in RESULT_COLUMNS]


_SORT_KEY = lambda r: (r.experiment, r.param, r.repetition, r.task_id, r.n_seen, r.condition)


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in sorted(rows, key=_SORT_KEY):
        writer.writerow(row.to_list())
    return buf.getvalue()


def write_rows(path: str, rows: list[ResultRow]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))


def read_rows(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_COLUMNS:
            raise DataError(f"unexpected result header: {reader.fieldnames}")
        return list(reader)


def csv_bodies_equal(text_a: str, text_b: str) -> bool:
    """Byte comparison with the timing column blanked (it is the one
    legitimately non-deterministic field)."""

    def normalize(text):
        out = []
        idx = RESULT_COLUMNS.index("wall_time_ms")
        for line in csv.reader(io.StringIO(text)):
            if line and len(line) == len(RESULT_COLUMNS) and line[0] != "experiment":
                line[idx] = ""
            out.append(line)
        return out

    return normalize(text_a) == normalize(text_b)


def param_str(**kv) -> str:
    return ";".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in kv.items())


def parse_param(s: str) -> dict[str, str]:
    if not s:
        return {}
    return dict(part.split("=", 1) for part in s.split(";"))


def fit_loglog_slope(xs, ys) -> tuple[float, float, float]:
    """Least-squares slope of log(y) on log(x); returns (slope, intercept, r2)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size < 3:
        raise DataError(f"need at least 3 grid points to fit a slope, got {xs.size}")
    if (xs <= 0).any() or (ys <= 0).any():
        raise DataError("log-log fit needs positive measurements")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


# -- per-repetition records --------------------------------------------------

# (param, rep, task_id, n_seen, condition, n_train, error)
Record = tuple[str, int, int, int, str, int, float]


def _stream_records(
    *,
    param: str,
    rep: int,
    d1: TaskDataset,
    d2: TaskDataset,
    test1: TaskDataset,
    test2: TaskDataset,
    checkpoints1: list[int],
    checkpoints2: list[int],
    forest_cfg: ForestConfig,
    smoothing: float,
    seed: SeedStream,
    baseline: bool,
) -> list[Record]:
    """Errors for one repetition of a two-task stream.

    Task 1's single-task and up-to-task conditions coincide (its data ends
    before task 2 starts), as do task 2's up-to-task and all-data conditions;
    the shared values are emitted under both names so the degenerate ratios
    are exactly 1.
    """
    records: list[Record] = []
    n1 = d1.n_samples
    t1, t2 = d1.task_id, d2.task_id
    if any(not 1 <= m <= n1 for m in checkpoints1):
        raise ConfigError(f"checkpoints1 must lie in [1, {n1}], got {checkpoints1}")
    if any(not 1 <= m <= d2.n_samples for m in checkpoints2):
        raise ConfigError(f"checkpoints2 must lie in [1, {d2.n_samples}], got {checkpoints2}")

    def rec(alg_param, task, n_seen, condition, n_train, error):
        records.append((alg_param, rep, task, n_seen, condition, n_train, error))

    rf_param = param_str(alg="rf") + (";" + param if param else "")
    odif_param = param_str(alg="odif") + (";" + param if param else "")

    base = None
    base_err1 = rf_base_err1 = None
    for m in checkpoints1:
        sub = d1.take(np.arange(m))
        learner = OmniLearner(forest_cfg, smoothing=smoothing, seed=seed.child("odif_t1", m))
        learner.add_task(sub)
        err = learner.error(test1)
        for cond in (SINGLE_TASK, UP_TO_TASK, ALL_DATA):
            rec(odif_param, t1, m, cond, m, err)
        if baseline:
            rf = HonestForestClassifier(forest_cfg, smoothing, seed.child("rf_t1", m)).fit(sub)
            rf_err = rf.error(test1)
            for cond in (SINGLE_TASK, UP_TO_TASK, ALL_DATA):
                rec(rf_param, t1, m, cond, m, rf_err)
            if m == n1:
                rf_base_err1 = rf_err
        if m == n1:
            base = learner
            base_err1 = err

    if base is None:
        raise DataError("checkpoints1 must end with the full task-1 sample size")

    for m2 in checkpoints2:
        sub2 = d2.take(np.arange(m2))
        n_seen = n1 + m2

        full = base.copy().add_task(sub2)
        err_all1 = full.error(test1)
        err_all2 = full.error(test2)
        single2 = OmniLearner(forest_cfg, smoothing=smoothing, seed=seed.child("odif_s2", m2))
        single2.add_task(sub2)
        err_single2 = single2.error(test2)

        rec(odif_param, t1, n_seen, SINGLE_TASK, n1, base_err1)
        rec(odif_param, t1, n_seen, UP_TO_TASK, n1, base_err1)
        rec(odif_param, t1, n_seen, ALL_DATA, n_seen, err_all1)
        rec(odif_param, t2, n_seen, SINGLE_TASK, m2, err_single2)
        rec(odif_param, t2, n_seen, UP_TO_TASK, n_seen, err_all2)
        rec(odif_param, t2, n_seen, ALL_DATA, n_seen, err_all2)

        if baseline:
            pooled = pool_datasets([d1, sub2])
            rf_all = HonestForestClassifier(forest_cfg, smoothing, seed.child("rf_all", m2))
            rf_all.fit(pooled)
            rf_err_all1 = rf_all.error(test1)
            rf_err_all2 = rf_all.error(test2)
            rf_single2 = HonestForestClassifier(forest_cfg, smoothing, seed.child("rf_s2", m2))
            rf_single2.fit(sub2)
            rf_err_single2 = rf_single2.error(test2)

            rec(rf_param, t1, n_seen, SINGLE_TASK, n1, rf_base_err1)
            rec(rf_param, t1, n_seen, UP_TO_TASK, n1, rf_base_err1)
            rec(rf_param, t1, n_seen, ALL_DATA, n_seen, rf_err_all1)
            rec(rf_param, t2, n_seen, SINGLE_TASK, m2, rf_err_single2)
            rec(rf_param, t2, n_seen, UP_TO_TASK, n_seen, rf_err_all2)
            rec(rf_param, t2, n_seen, ALL_DATA, n_seen, rf_err_all2)

    return records


def _records_to_rows(experiment: str, records: list[Record]) -> list[ResultRow]:
    return [
        ResultRow(
            experiment=experiment,
            repetition=rep,
            task_id=task,
            n_seen=n_seen,
            condition=cond,
            param=param,
            error=err,
        )
        for (param, rep, task, n_seen, cond, _n_train, err) in records
    ]


def _transfer_summaries(
    experiment: str, records: list[Record]
) -> tuple[list[ResultRow], dict[tuple[str, int, int], TaskTransfer]]:
    """Aggregate per-repetition errors into ratio-of-means transfer rows."""
    groups: dict[tuple[str, int, int], dict[str, list[tuple[int, int, float]]]] = {}
    for param, rep, task, n_seen, cond, n_train, err in records:
        groups.setdefault((param, task, n_seen), {}).setdefault(cond, []).append(
            (rep, n_train, err)
        )

    rows: list[ResultRow] = []
    transfers: dict[tuple[str, int, int], TaskTransfer] = {}
    for (param, task, n_seen), conds in sorted(groups.items()):
        if set(conds) != {SINGLE_TASK, UP_TO_TASK, ALL_DATA}:
            continue
        ests = {}
        for cond, triples in conds.items():
            triples.sort()
            ests[cond] = ErrorEstimate(
                task_id=task,
                condition=cond,
                errors=tuple(e for _, _, e in triples),
                n_train=triples[-1][1],
            )
        t = build_transfer(ests[SINGLE_TASK], ests[UP_TO_TASK], ests[ALL_DATA])
        transfers[(param, task, n_seen)] = t
        rows.append(
            ResultRow(
                experiment=experiment,
                repetition=-1,
                task_id=task,
                n_seen=n_seen,
                condition="summary",
                param=param,
                error=ests[ALL_DATA].mean,
                te=t.te.value,
                fte=t.fte.value,
                bte=t.bte.value,
                log_te=t.te.log,
                log_fte=t.fte.log,
                log_bte=t.bte.log,
            )
        )
    return rows, transfers


@dataclass
class ExperimentResult:
    experiment: str
    rows: list[ResultRow]
    summary: dict = field(default_factory=dict)
    transfers: dict = field(default_factory=dict)

    def summary_lines(self) -> list[str]:
        lines = [f"experiment: {self.experiment}"]
        for key, transfer in sorted(self.transfers.items()):
            param, task, n_seen = key
            bits = []
            for name in ("te", "fte", "bte"):
                r = getattr(transfer, name)
                bits.append(f"{name}={r.value:.4f}" if r.defined else f"{name}=undefined({r.reason})")
            lines.append(f"  [{param}] task={task} n={n_seen}: " + " ".join(bits))
        for k, v in self.summary.items():
            lines.append(f"  {k}: {v}")
        return lines


def _parallel(n_jobs: int, work, indices):
    if n_jobs == 1:
        return [work(i) for i in indices]
    return Parallel(n_jobs=n_jobs)(delayed(work)(i) for i in indices)


# -- experiment implementations ----------------------------------------------


def _run_xor_xnor(cfg: ExperimentConfig, n_jobs: int) -> ExperimentResult:
    p = cfg.params
    root = SeedStream(cfg.seed)
    test1 = generate_xor(XorSpec(p.n_test, p.variance, seed=root.child("test", 0), task_id=0))
    test2 = generate_xor(
        XorSpec(p.n_test, p.variance, label_flip=True, seed=root.child("test", 1), task_id=1)
    )

    def work(r):
        s = root.child("rep", r)
        d1 = generate_xor(XorSpec(p.n_task1, p.variance, seed=s.child("data", 0), task_id=0))
        d2 = generate_xor(
            XorSpec(p.n_task2, p.variance, label_flip=True, seed=s.child("data", 1), task_id=1)
        )
        return _stream_records(
            param="",
            rep=r,
            d1=d1,
            d2=d2,
            test1=test1,
            test2=test2,
            checkpoints1=list(p.checkpoints1),
            checkpoints2=list(p.checkpoints2),
            forest_cfg=cfg.forest,
            smoothing=cfg.smoothing,
            seed=s,
            baseline=p.baseline,
        )

    records = [rec for chunk in _parallel(n_jobs, work, range(p.reps)) for rec in chunk]
    rows = _records_to_rows("xor_xnor", records)
    summary_rows, transfers = _transfer_summaries("xor_xnor", records)
    return ExperimentResult("xor_xnor", rows + summary_rows, transfers=transfers)


def _two_task_sweep(
    experiment: str,
    cfg: ExperimentConfig,
    n_jobs: int,
    reps: int,
    test1: TaskDataset,
    make_task1,
    variants: list[tuple[str, object]],  # (param, per-variant context)
    make_task2,
    make_test2,
    checkpoints_for=None,
    baseline: bool = False,
) -> ExperimentResult:
    """Shared driver: task 1 is common, task 2 varies over `variants`."""
    root = SeedStream(cfg.seed)
    tests2 = {param: make_test2(ctx, root) for param, ctx in variants}

    def work(r):
        s = root.child("rep", r)
        out = []
        for i, (param, ctx) in enumerate(variants):
            d1 = make_task1(ctx, s)
            d2 = make_task2(ctx, s)
            cps1, cps2 = (
                checkpoints_for(ctx)
                if checkpoints_for
                else ([d1.n_samples], [d2.n_samples])
            )
            out.extend(
                _stream_records(
                    param=param,
                    rep=r,
                    d1=d1,
                    d2=d2,
                    test1=test1,
                    test2=tests2[param],
                    checkpoints1=cps1,
                    checkpoints2=cps2,
                    forest_cfg=cfg.forest,
                    smoothing=cfg.smoothing,
                    seed=s.child("variant", i),
                    baseline=baseline,
                )
            )
        return out

    records = [rec for chunk in _parallel(n_jobs, work, range(reps)) for rec in chunk]
    rows = _records_to_rows(experiment, records)
    summary_rows, transfers = _transfer_summaries(experiment, records)
    return ExperimentResult(experiment, rows + summary_rows, transfers=transfers)


def _run_rxor_sweep(cfg: ExperimentConfig, n_jobs: int) -> ExperimentResult:
    p = cfg.params
    root = SeedStream(cfg.seed)
    test1 = generate_xor(XorSpec(p.n_test, p.variance, seed=root.child("test", 0), task_id=0))
    variants = [(param_str(theta=float(a)), float(a)) for a in p.angles]

    return _two_task_sweep(
        "rxor_sweep",
        cfg,
        n_jobs,
        p.reps,
        test1,
        make_task1=lambda ctx, s: generate_xor(
            XorSpec(p.n_task1, p.variance, seed=s.child("data", 0), task_id=0)
        ),
        variants=variants,
        make_task2=lambda angle, s: generate_xor(
            XorSpec(
                p.n_task2,
                p.variance,
                angle_degrees=angle,
                seed=s.child("data", 1),
                task_id=1,
            )
        ),
        make_test2=lambda angle, root_: generate_xor(
            XorSpec(
                p.n_test,
                p.variance,
                angle_degrees=angle,
                seed=root_.child("test", 1),
                task_id=1,
            )
        ),
        baseline=p.baseline,
    )


def _run_rxor_sample_sweep(cfg: ExperimentConfig, n_jobs: int) -> ExperimentResult:
    # first task is a fixed block; the rotated task's sample size sweeps a
    # geometric grid, mirroring the streaming x-axis of the two-task figures
    p = cfg.params
    root = SeedStream(cfg.seed)
    test1 = generate_xor(XorSpec(p.n_test, p.variance, seed=root.child("test", 0), task_id=0))
    if any(n < 2 for n in p.n2_grid):
        raise ConfigError(f"n2_grid entries must be >= 2, got {p.n2_grid}")
    variants = [(param_str(n2=n), n) for n in sorted(p.n2_grid)]

    return _two_task_sweep(
        "rxor_sample_sweep",
        cfg,
        n_jobs,
        p.reps,
        test1,
        make_task1=lambda n, s: generate_xor(
            XorSpec(p.n_task1, p.variance, seed=s.child("data", 0), task_id=0)
        ),
        variants=variants,
        make_task2=lambda n, s: generate_xor(
            XorSpec(
                n,
                p.variance,
                angle_degrees=p.angle,
                seed=s.child("data", 1),
                task_id=1,
            )
        ),
        make_test2=lambda n, root_: generate_xor(
            XorSpec(
                p.n_test,
                p.variance,
                angle_degrees=p.angle,
                seed=root_.child("test", 1),
                task_id=1,
            )
        ),
    )


def _run_spirals(cfg: ExperimentConfig, n_jobs: int) -> ExperimentResult:
    p = cfg.params
    root = SeedStream(cfg.seed)
    spec1 = lambda n, seed: SpiralSpec(n, p.classes1, p.turns1, p.angle_variance1, seed, 0)
    spec2 = lambda n, seed: SpiralSpec(n, p.classes2, p.turns2, p.angle_variance2, seed, 1)
    test1 = generate_spirals(spec1(p.n_test, root.child("test", 0)))
    test2 = generate_spirals(spec2(p.n_test, root.child("test", 1)))

    def work(r):
        s = root.child("rep", r)
        d1 = generate_spirals(spec1(p.n_task1, s.child("data", 0)))
        d2 = generate_spirals(spec2(p.n_task2, s.child("data", 1)))
        return _stream_records(
            param="",
            rep=r,
            d1=d1,
            d2=d2,
            test1=test1,
            test2=test2,
            checkpoints1=list(p.checkpoints1),
            checkpoints2=list(p.checkpoints2),
            forest_cfg=cfg.forest,
            smoothing=cfg.smoothing,
            seed=s,
            baseline=p.baseline,
        )

    records = [rec for chunk in _parallel(n_jobs, work, range(p.reps)) for rec in chunk]
    rows = _records_to_rows("spirals", records)
    summary_rows, transfers = _transfer_summaries("spirals", records)
    return ExperimentResult("spirals", rows + summary_rows, transfers=transfers)


def _run_label_shuffle(cfg: ExperimentConfig, n_jobs: int) -> ExperimentResult:
    p = cfg.params
    root = SeedStream(cfg.seed)
    test1 = generate_xor(XorSpec(p.n_test, p.variance, seed=root.child("test", 0), task_id=0))
    test2 = generate_xor(XorSpec(p.n_test, p.variance, seed=root.child("test", 1), task_id=1))

    def work(r):
        s = root.child("rep", r)
        d1 = generate_xor(XorSpec(p.n_task1, p.variance, seed=s.child("data", 0), task_id=0))
        d2 = generate_xor(XorSpec(p.n_task2, p.variance, seed=s.child("data", 1), task_id=1))
        # the same permutation seed relabels train and test consistently
        arms = (
            ("control", d2, test2),
            ("shuffled", shuffle_labels(d2, s.child("shuffle")), shuffle_labels(test2, s.child("shuffle"))),
        )
        out = []
        for arm, task2, arm_test2 in arms:
            out.extend(
                _stream_records(
                    param=param_str(arm=arm),
                    rep=r,
                    d1=d1,
                    d2=task2,
                    test1=test1,
                    test2=arm_test2,
                    checkpoints1=[p.n_task1],
                    checkpoints2=[p.n_task2],
                    forest_cfg=cfg.forest,
                    smoothing=cfg.smoothing,
                    seed=s,  # same fit seeds in both arms: fully paired
                    baseline=False,
                )
            )
        return out

    records = [rec for chunk in _parallel(n_jobs, work, range(p.reps)) for rec in chunk]
    rows = _records_to_rows("label_shuffle", records)
    summary_rows, transfers = _transfer_summaries("label_shuffle", records)

    # paired per-repetition BTE difference for task 1
    summary = {}
    per_rep = {}
    for param, rep, task, n_seen, cond, _n, err in records:
        if task == 0 and "alg=odif" in param:
            arm = parse_param(param)["arm"]
            per_rep.setdefault(rep, {}).setdefault(arm, {})[cond] = err
    diffs, control_btes = [], []
    for rep, arms in sorted(per_rep.items()):
        try:
            b_control = arms["control"][UP_TO_TASK] / arms["control"][ALL_DATA]
            b_shuffled = arms["shuffled"][UP_TO_TASK] / arms["shuffled"][ALL_DATA]
        except ZeroDivisionError:
            continue
        control_btes.append(b_control)
        diffs.append(b_shuffled - b_control)
    if diffs:
        diffs = np.array(diffs)
        control_btes = np.array(control_btes)
        summary["bte_paired_diff_mean"] = float(diffs.mean())
        summary["bte_paired_diff_se"] = float(diffs.std(ddof=1) / math.sqrt(diffs.size)) if diffs.size > 1 else 0.0
        summary["bte_control_se"] = (
            float(control_btes.std(ddof=1) / math.sqrt(control_btes.size))
            if control_btes.size > 1
            else 0.0
        )
        summary["paired_reps"] = int(diffs.size)
    return ExperimentResult(
        "label_shuffle", rows + summary_rows, summary=summary, transfers=transfers
    )


def _run_rotation_sweep(cfg: ExperimentConfig, n_jobs: int) -> ExperimentResult:
    p = cfg.params
    root = SeedStream(cfg.seed)
    if p.n < 4 or p.n % 2 != 0:
        raise ConfigError(f"rotation_sweep n must be even and >= 4, got {p.n}")
    half = p.n // 2
    test1 = generate_xor(XorSpec(p.n_test, p.variance, seed=root.child("test", 0), task_id=0))
    variants = [(param_str(theta=float(a)), float(a)) for a in p.angles]

    def make_halves(s):
        full = generate_xor(XorSpec(p.n, p.variance, seed=s.child("data"), task_id=0))
        d1 = full.take(np.arange(half))
        rest = full.take(np.arange(half, p.n))
        d2 = TaskDataset(rest.features, rest.labels, task_id=1, class_count=2)
        return d1, d2

    return _two_task_sweep(
        "rotation_sweep",
        cfg,
        n_jobs,
        p.reps,
        test1,
        make_task1=lambda angle, s: make_halves(s)[0],
        variants=variants,
        make_task2=lambda angle, s: rotate_features(make_halves(s)[1], angle),
        make_test2=lambda angle, root_: rotate_features(
            generate_xor(XorSpec(p.n_test, p.variance, seed=root_.child("test", 1), task_id=1)),
            angle,
        ),
    )


_RECRUIT_ROTATIONS = (0.0, 90.0, 180.0, 270.0)


def _recruit_variant(index: int, rng) -> tuple[float, bool]:
    return _RECRUIT_ROTATIONS[int(rng.integers(0, 4))], bool(rng.integers(0, 2))


def _run_recruitment(cfg: ExperimentConfig, n_jobs: int) -> ExperimentResult:
    p = cfg.params
    if p.n_tasks < 2:
        raise ConfigError("recruitment needs at least 2 tasks")
    root = SeedStream(cfg.seed)
    strategy = cfg.strategy
    forest_cfg = replace(cfg.forest, n_estimators=strategy.trees_per_task)

    # task variants (rotation, label flip) are fixed across repetitions
    vrng = root.child("variants").rng()
    variants = [_recruit_variant(t, vrng) for t in range(p.n_tasks)]
    last = p.n_tasks - 1
    angle_last, flip_last = variants[last]
    test_last = generate_xor(
        XorSpec(
            p.n_test,
            p.variance,
            angle_degrees=angle_last,
            label_flip=flip_last,
            seed=root.child("test", last),
            task_id=last,
        )
    )
    n_seen = p.n_tasks * p.n_per_task

    def make_task(t, s):
        angle, flip = variants[t]
        return generate_xor(
            XorSpec(
                p.n_per_task,
                p.variance,
                angle_degrees=angle,
                label_flip=flip,
                seed=s.child("data", t),
                task_id=t,
            )
        )

    def work(r):
        s = root.child("rep", r)
        prefix = OmniLearner(
            forest_cfg, strategy=strategy, smoothing=cfg.smoothing, seed=s.child("prefix")
        )
        for t in range(last):
            prefix.add_task(make_task(t, s))
        d_last = make_task(last, s)

        out = []

        built = prefix.copy()
        built.add_task(d_last, seed=s.child("arm_build"))
        out.append((param_str(strategy="build"), r, last, n_seen, ALL_DATA, n_seen, built.error(test_last)))

        recruit = prefix.copy()
        recruit.strategy = replace(strategy, mode="recruit")
        recruit.add_task_recruiting(d_last, seed=s.child("arm_recruit"))
        out.append(
            (param_str(strategy="recruit"), r, last, n_seen, ALL_DATA, n_seen, recruit.error(test_last))
        )

        hybrid = prefix.copy()
        hybrid.strategy = replace(strategy, mode="hybrid")
        hybrid.add_task_recruiting(d_last, seed=s.child("arm_hybrid"))
        out.append(
            (param_str(strategy="hybrid"), r, last, n_seen, ALL_DATA, n_seen, hybrid.error(test_last))
        )

        rf = HonestForestClassifier(forest_cfg, cfg.smoothing, s.child("arm_rf")).fit(d_last)
        out.append(
            (param_str(strategy="rf"), r, last, n_seen, ALL_DATA, p.n_per_task, rf.error(test_last))
        )
        return out

    records = [rec for chunk in _parallel(n_jobs, work, range(p.reps)) for rec in chunk]
    rows = _records_to_rows("recruitment", records)

    summary = {}
    summary_rows = []
    for name in ("build", "recruit", "hybrid", "rf"):
        param = param_str(strategy=name)
        errs = np.array(sorted(e for pm, *_rest, e in records if pm == param))
        mean = float(errs.mean())
        se = float(errs.std(ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else 0.0
        summary[f"error_{name}"] = mean
        summary[f"se_{name}"] = se
        summary_rows.append(
            ResultRow(
                experiment="recruitment",
                repetition=-1,
                task_id=last,
                n_seen=n_seen,
                condition="summary",
                param=param,
                error=mean,
            )
        )
    return ExperimentResult("recruitment", rows + summary_rows, summary=summary)


def _run_scaling(cfg: ExperimentConfig, n_jobs: int) -> ExperimentResult:
    p = cfg.params
    if len(p.grid) < 1:
        raise ConfigError("scaling grid is empty")
    for n in p.grid:
        if n < p.per_task or n % p.per_task != 0:
            raise ConfigError(f"grid entries must be positive multiples of per_task, got {n}")
    root = SeedStream(cfg.seed)
    max_tasks = max(p.grid) // p.per_task
    vrng = root.child("variants").rng()
    variants = [_recruit_variant(t, vrng) for t in range(max_tasks)]

    def work(r):
        s = root.child("rep", r)
        out = []
        for n_total in sorted(p.grid):
            n_tasks = n_total // p.per_task
            datasets = []
            for t in range(n_tasks):
                angle, flip = variants[t]
                datasets.append(
                    generate_xor(
                        XorSpec(
                            p.per_task,
                            p.variance,
                            angle_degrees=angle,
                            label_flip=flip,
                            seed=s.child("scale", n_total).child("data", t),
                            task_id=t,
                        )
                    )
                )
            learner = OmniLearner(
                cfg.forest, smoothing=cfg.smoothing, seed=s.child("scale", n_total).child("fit")
            )
            start = time.perf_counter()
            for d in datasets:
                learner.add_task(d)
            elapsed_ms = (time.perf_counter() - start) * 1000.0
            model_bytes = len(learner_to_bytes(learner, include_data=True))
            out.append((r, n_total, n_tasks, elapsed_ms, model_bytes))
        return out

    measures = [m for chunk in _parallel(n_jobs, work, range(p.reps)) for m in chunk]
    rows = [
        ResultRow(
            experiment="scaling",
            repetition=r,
            task_id=-1,
            n_seen=n_total,
            condition="scaling",
            param=param_str(tasks=n_tasks),
            wall_time_ms=elapsed_ms,
            model_bytes=model_bytes,
        )
        for (r, n_total, n_tasks, elapsed_ms, model_bytes) in measures
    ]

    summary = {}
    grid = sorted(p.grid)
    # min over repetitions: the usual noise-robust choice for timings
    times = [float(np.min([m[3] for m in measures if m[1] == n])) for n in grid]
    sizes = [float(np.mean([m[4] for m in measures if m[1] == n])) for n in grid]
    time_slope, _, time_r2 = fit_loglog_slope(grid, times)
    size_slope, _, size_r2 = fit_loglog_slope(grid, sizes)
    summary["time_exponent"] = time_slope
    summary["time_r2"] = time_r2
    summary["size_exponent"] = size_slope
    summary["size_r2"] = size_r2
    summary["grid"] = grid
    summary["wall_time_ms"] = times
    summary["model_bytes"] = sizes
    return ExperimentResult("scaling", rows, summary=summary)


def _run_custom_csv(cfg: ExperimentConfig, n_jobs: int) -> ExperimentResult:
    p = cfg.params
    root = SeedStream(cfg.seed)
    sequence = load_csv(p.path)
    if not 0.0 < p.test_fraction < 1.0:
        raise ConfigError("test_fraction must be in (0, 1)")
    if not 0.0 < p.resample_fraction <= 1.0:
        raise ConfigError("resample_fraction must be in (0, 1]")

    from .data import split_train_test

    splits = []
    for i, d in enumerate(sequence.train):
        train, test = split_train_test(d, p.test_fraction, root.child("split", i))
        splits.append((train, test))
    n_total = sum(t.n_samples for t, _ in splits)

    def resample(d: TaskDataset, s: SeedStream) -> TaskDataset:
        if p.resample_fraction >= 1.0:
            return d
        rows, _ = subsample_indices(d.n_samples, p.resample_fraction, s)
        return d.take(rows)

    def work(r):
        s = root.child("rep", r)
        trains = [resample(train, s.child("resample", i)) for i, (train, _) in enumerate(splits)]
        n_seen = sum(t.n_samples for t in trains)
        out = []
        chain = OmniLearner(cfg.forest, smoothing=cfg.smoothing, seed=s.child("chain"))
        up_to_err = {}
        for i, d in enumerate(trains):
            chain.add_task(d)
            up_to_err[d.task_id] = (chain.error(splits[i][1]), sum(t.n_samples for t in trains[: i + 1]))
        for i, d in enumerate(trains):
            test = splits[i][1]
            err_all = chain.error(test)
            if i == 0:
                err_single, n_single = up_to_err[d.task_id]
            else:
                single = OmniLearner(cfg.forest, smoothing=cfg.smoothing, seed=s.child("single", i))
                single.add_task(d)
                err_single, n_single = single.error(test), d.n_samples
            u_err, u_n = up_to_err[d.task_id]
            if i == len(trains) - 1:
                u_err, u_n = err_all, n_seen
            out.append((param_str(alg="odif"), r, d.task_id, n_seen, SINGLE_TASK, n_single, err_single))
            out.append((param_str(alg="odif"), r, d.task_id, n_seen, UP_TO_TASK, u_n, u_err))
            out.append((param_str(alg="odif"), r, d.task_id, n_seen, ALL_DATA, n_seen, err_all))
        return out

    records = [rec for chunk in _parallel(n_jobs, work, range(p.reps)) for rec in chunk]
    rows = _records_to_rows("custom_csv", records)
    summary_rows, transfers = _transfer_summaries("custom_csv", records)
    return ExperimentResult(
        "custom_csv", rows + summary_rows, summary={"n_total_train": n_total}, transfers=transfers
    )


_RUNNERS = {
    "xor_xnor": _run_xor_xnor,
    "rxor_sweep": _run_rxor_sweep,
    "rxor_sample_sweep": _run_rxor_sample_sweep,
    "spirals": _run_spirals,
    "label_shuffle": _run_label_shuffle,
    "rotation_sweep": _run_rotation_sweep,
    "recruitment": _run_recruitment,
    "scaling": _run_scaling,
    "custom_csv": _run_custom_csv,
}


def run_experiment(cfg: ExperimentConfig, n_jobs: int | None = None) -> ExperimentResult:
    """Execute one canned experiment; deterministic given cfg.seed."""
    if cfg.kind not in _RUNNERS:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")
    result = _RUNNERS[cfg.kind](cfg, n_jobs if n_jobs is not None else cfg.threads)
    if cfg.out:
        write_rows(cfg.out, result.rows)
    return result
