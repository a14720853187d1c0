"""Benchmark harness: RMSE/timing reports, controller comparisons, scaling
studies, CSV export.

Timing protocol: controller evaluation only (reference generation and plant
integration excluded), the first 100 steps discarded as warm-up, and the
headline mean computed as a median of chunk means so stray scheduler pauses
do not skew it. All CSV output is full-precision scientific notation and
every row carries the schema version.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .controllers import HierarchyInput, run_controller
from .model import RobotState, compute_world_kinematics, make_serial_chain
from .numlin import PinvConfig
from .sim import ScenarioConfig, SimResult, run_scenario
from .tasks import MotionTask, PDGains, PosturalTask, RefSample

SCHEMA_METRICS = "metrics-v1"
SCHEMA_TRACE = "trace-v1"
SCHEMA_SCALING = "scaling-v1"

WARMUP_STEPS = 100

_UNITS = {"motion": "m", "force": "N", "posture": "rad"}


def median_of_means(values: np.ndarray, chunks: int = 10) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan")
    chunks = max(1, min(chunks, values.size))
    return float(np.median([c.mean() for c in np.array_split(values, chunks)]))


@dataclass(frozen=True)
class TaskMetric:
    name: str
    kind: str
    unit: str
    rmse: float


@dataclass(frozen=True)
class MetricsReport:
    scenario: str
    controller: str
    tasks: tuple[TaskMetric, ...]
    steps: int
    time_mean: float
    time_median: float
    time_p95: float

    def task_rmse(self, name: str) -> float:
        for t in self.tasks:
            if t.name == name:
                return t.rmse
        raise KeyError(name)


@dataclass(frozen=True)
class ScalingReport:
    sizes: tuple[int, ...]
    controllers: tuple[str, ...]
    mean_times: dict[str, tuple[float, ...]]
    exponents: dict[str, float]


def compute_metrics(result: SimResult) -> MetricsReport:
    """Pure reduction of a simulation result to RMSE and timing statistics.

    RMSE is computed from per-step error norms, the exact quantity stored in
    trace.csv, so re-deriving the report from a saved trace is bitwise
    reproducible.
    """
    times = result.controller_times
    kept = times[WARMUP_STEPS:] if times.size > WARMUP_STEPS + 10 else times
    task_metrics = []
    for trace in result.tasks:
        if trace.achieved.shape[0]:
            norms = np.array([
                float(np.linalg.norm(trace.achieved[k] - trace.reference[k]))
                for k in range(trace.achieved.shape[0])
            ])
            value = float(np.sqrt(np.mean(norms**2)))
        else:
            value = 0.0
        task_metrics.append(
            TaskMetric(trace.name, trace.kind, _UNITS.get(trace.kind, ""), value)
        )
    task_metrics = tuple(task_metrics)
    return MetricsReport(
        scenario=result.scenario,
        controller=result.controller,
        tasks=task_metrics,
        steps=int(times.size),
        time_mean=median_of_means(kept),
        time_median=float(np.median(kept)) if kept.size else float("nan"),
        time_p95=float(np.percentile(kept, 95)) if kept.size else float("nan"),
    )


# ---------------------------------------------------------------------------
# CSV output


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_metrics_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["schema", "scenario", "controller", "task", "kind", "unit",
                    "rmse", "steps", "time_mean", "time_median", "time_p95"])
        for rep in reports:
            for t in rep.tasks:
                w.writerow([
                    SCHEMA_METRICS, rep.scenario, rep.controller, t.name, t.kind,
                    t.unit, _fmt(t.rmse), rep.steps, _fmt(rep.time_mean),
                    _fmt(rep.time_median), _fmt(rep.time_p95),
                ])


def write_trace_csv(result: SimResult, path) -> None:
    names = [t.name for t in result.tasks]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["schema", "t"] + [f"err_{n}" for n in names]
                   + ["contact_force_norm", "controller_time"])
        for k in range(result.t.size):
            errs = [
                _fmt(float(np.linalg.norm(tr.achieved[k] - tr.reference[k])))
                for tr in result.tasks
            ]
            w.writerow(
                [SCHEMA_TRACE, _fmt(float(result.t[k]))]
                + errs
                + [_fmt(float(np.linalg.norm(result.contact_forces[k]))),
                   _fmt(float(result.controller_times[k]))]
            )


def metrics_from_trace(path, scenario: str, controller: str,
                       kinds: dict[str, str]) -> MetricsReport:
    """Re-derive a MetricsReport from a saved trace.csv (exactly)."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    err_cols = [(i, h[4:]) for i, h in enumerate(header) if h.startswith("err_")]
    time_col = header.index("controller_time")
    times = np.array([float(r[time_col]) for r in rows])
    kept = times[WARMUP_STEPS:] if times.size > WARMUP_STEPS + 10 else times
    task_metrics = []
    for col, name in err_cols:
        errs = np.array([float(r[col]) for r in rows])
        kind = kinds.get(name, "motion")
        val = float(np.sqrt(np.mean(errs**2))) if errs.size else 0.0
        task_metrics.append(TaskMetric(name, kind, _UNITS.get(kind, ""), val))
    return MetricsReport(
        scenario=scenario,
        controller=controller,
        tasks=tuple(task_metrics),
        steps=int(times.size),
        time_mean=median_of_means(kept),
        time_median=float(np.median(kept)) if kept.size else float("nan"),
        time_p95=float(np.percentile(kept, 95)) if kept.size else float("nan"),
    )


def write_scaling_csv(report: ScalingReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["schema", "controller", "n", "mean_time", "exponent"])
        for ctrl in report.controllers:
            for n, t in zip(report.sizes, report.mean_times[ctrl]):
                w.writerow([SCHEMA_SCALING, ctrl, n, _fmt(t), _fmt(report.exponents[ctrl])])


# ---------------------------------------------------------------------------
# commands


def cmd_run(cfg: ScenarioConfig, out_dir=None) -> MetricsReport:
    # BLAS pinned to one thread: per-step controller timings are otherwise
    # dominated by thread-pool contention noise
    with threadpool_limits(limits=1):
        result = run_scenario(cfg)
    report = compute_metrics(result)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv([report], out / "metrics.csv")
        write_trace_csv(result, out / "trace.csv")
    return report


def cmd_compare(cfg: ScenarioConfig, controllers, out_dir=None) -> list[MetricsReport]:
    if len(controllers) < 2:
        raise ValueError("need at least two controllers to compare")
    reports = []
    for ctrl in controllers:
        run_cfg = ScenarioConfig(**{**cfg.__dict__, "controller": ctrl})
        with threadpool_limits(limits=1):
            result = run_scenario(run_cfg)
        reports.append(compute_metrics(result))
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            write_trace_csv(result, out / f"trace_{ctrl}.csv")
    if out_dir is not None:
        write_metrics_csv(reports, Path(out_dir) / "metrics.csv")
    return reports


def scaling_tasks(model, rng: np.random.Generator):
    """Fixed-dimension task stack used for scaling runs: two 3-DoF point
    tasks (tip and mid-chain) plus the postural level."""
    n = model.dof_count
    q = 0.3 * rng.standard_normal(n)
    qd = 0.2 * rng.standard_normal(n)
    state = RobotState(q, qd)
    kin = compute_world_kinematics(model, q)
    tip, mid = n - 1, n // 2
    tip_pt = np.array([0.1, 0.0, 0.0])
    mid_pt = np.array([0.1, 0.0, 0.0])

    def hold_ref(body, pt):
        x = kin.rotations[body] @ pt + kin.translations[body]
        return RefSample.hold(x + 0.02)

    tasks = (
        MotionTask(body=tip, point=tip_pt, priority=2, ref=hold_ref(tip, tip_pt), name="tip"),
        MotionTask(body=mid, point=mid_pt, priority=1, ref=hold_ref(mid, mid_pt), name="mid"),
        PosturalTask(q_p=np.zeros(n), gains=PDGains(), priority=0),
    )
    return state, tasks


def cmd_scaling(sizes, controllers, reps: int = 200, warmup: int = 50,
                pinv: PinvConfig = PinvConfig(), out_dir=None, seed: int = 0) -> ScalingReport:
    """Time controller evaluation (no integration) over generated chains and
    fit a log-log exponent per controller."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 3:
        raise ValueError("need >=3 sizes for a scaling fit")
    if any(s < 2 for s in sizes):
        raise ValueError("sizes must be >= 2")
    mean_times: dict[str, list[float]] = {c: [] for c in controllers}
    with threadpool_limits(limits=1):
        for n in sizes:
            model = make_serial_chain(n)
            rng = np.random.default_rng(seed)
            state, tasks = scaling_tasks(model, rng)
            for ctrl in controllers:
                hierarchy = HierarchyInput(model, state, tasks, pinv)
                samples = np.empty(reps)
                for _ in range(warmup):
                    run_controller(ctrl, hierarchy)
                for r in range(reps):
                    samples[r] = run_controller(ctrl, hierarchy).eval_time
                mean_times[ctrl].append(median_of_means(samples))
    exponents = {}
    log_n = np.log(np.array(sizes, dtype=float))
    for ctrl in controllers:
        log_t = np.log(np.array(mean_times[ctrl]))
        exponents[ctrl] = float(np.polyfit(log_n, log_t, 1)[0])
    report = ScalingReport(
        sizes=sizes,
        controllers=tuple(controllers),
        mean_times={c: tuple(v) for c, v in mean_times.items()},
        exponents=exponents,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_scaling_csv(report, out / "scaling.csv")
    return report


# ---------------------------------------------------------------------------
# assertion files (CI hook)


def check_assertions(reports, criteria: dict) -> list[str]:
    """Evaluate a criteria dict against controller reports.

    Supported keys:
      max_rmse:        {"controller:task": bound}
      rmse_ratio_min:  [{"task": t, "numerator": c1, "denominator": c2, "min": r}]
      time_less:       [[faster, slower], ...]
    Returns a list of violation messages (empty means all criteria hold).
    """
    by_ctrl = {r.controller: r for r in reports}
    violations = []
    for key, bound in criteria.get("max_rmse", {}).items():
        ctrl, task = key.split(":")
        try:
            val = by_ctrl[ctrl].task_rmse(task)
        except KeyError:
            violations.append(f"max_rmse: unknown {key}")
            continue
        if not val <= bound:
            violations.append(f"max_rmse {key}: {val:.6g} > {bound:.6g}")
    for item in criteria.get("rmse_ratio_min", []):
        try:
            num = by_ctrl[item["numerator"]].task_rmse(item["task"])
            den = by_ctrl[item["denominator"]].task_rmse(item["task"])
        except KeyError as exc:
            violations.append(f"rmse_ratio_min: unknown {exc}")
            continue
        ratio = math.inf if den == 0.0 else num / den
        if not ratio >= item["min"]:
            violations.append(
                f"rmse_ratio_min {item['task']}: {item['numerator']}/{item['denominator']} "
                f"= {ratio:.4g} < {item['min']:.4g}"
            )
    for faster, slower in criteria.get("time_less", []):
        try:
            tf, ts = by_ctrl[faster].time_mean, by_ctrl[slower].time_mean
        except KeyError as exc:
            violations.append(f"time_less: unknown {exc}")
            continue
        if not tf < ts:
            violations.append(f"time_less: {faster} ({tf:.3e}s) >= {slower} ({ts:.3e}s)")
    return violations


def load_criteria(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
