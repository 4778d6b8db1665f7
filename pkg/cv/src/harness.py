"""Seeded, parallel Monte Carlo estimation of rejection probabilities."""
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cv.src.bootstrap import bootstrap_test
from cv.src.generators import generate, regression_sample
from utils.config import CELL_FAILURE_BUDGET, DEFAULT_ALPHAS, DEFAULT_N_LIST, TABLE1_C_VALUES
from utils.errors import CellFailure, CvTestError
from utils.models import (
    BootstrapConfig,
    CellReport,
    McCell,
    McPlan,
    McReport,
    ModelSpec,
    SmoothingConfig,
)

logger = logging.getLogger(__name__)

REPORT_FORMATS = ['text-table', 'json', 'csv']


@dataclass(frozen=True)
class RunResult:
    cell_index: int
    run: int
    rejections: Optional[Tuple[bool, ...]]
    c2_hat: Optional[float]

    @property
    def failed(self) -> bool:
        return self.rejections is None


def run_seeds(master_seed: int, cell_index: int, run: int) -> Tuple[np.random.Generator, int]:
    """Data generator and bootstrap seed for one run, both derived from (master, cell, run)."""
    data_rng = np.random.default_rng([master_seed, cell_index, run, 0])
    sequence = np.random.SeedSequence([master_seed, cell_index, run, 1])
    return data_rng, int(sequence.generate_state(1, dtype=np.uint64)[0])


def _execute_run(task) -> RunResult:
    plan, cell_index, run = task
    cell = plan.cells[cell_index]
    data_rng, bootstrap_seed = run_seeds(plan.master_seed, cell_index, run)
    cfg = BootstrapConfig(
        replicates=plan.bootstrap.replicates,
        smoothing_v=plan.bootstrap.smoothing_v,
        alphas=cell.alphas,
        seed=bootstrap_seed,
        max_redraws=plan.bootstrap.max_redraws,
    )
    try:
        sample = regression_sample(generate(cell.spec, data_rng))
        outcome = bootstrap_test(sample, cfg, plan.smoothing, weighted=plan.weighted)
    except CvTestError as exc:
        logger.debug("Run %d of cell %d aborted: %s", run, cell_index, exc)
        return RunResult(cell_index, run, None, None)
    return RunResult(cell_index, run,
                     tuple(outcome.rejections[a] for a in cfg.alphas), outcome.c2_hat)


def _aggregate(plan: McPlan, cell_index: int, results: List[RunResult]) -> CellReport:
    cell = plan.cells[cell_index]
    results = sorted(results, key=lambda r: r.run)
    completed = [r for r in results if not r.failed]
    failures = len(results) - len(completed)
    if failures > CELL_FAILURE_BUDGET * plan.runs:
        raise CellFailure(
            f"{failures} of {plan.runs} runs aborted in cell {cell_index} ({cell.spec.label()})"
        )
    counts = [sum(int(r.rejections[i]) for r in completed) for i in range(len(cell.alphas))]
    mean_c2 = math.fsum(r.c2_hat for r in completed) / len(completed) if completed else None
    return CellReport(cell_index=cell_index, spec=cell.spec, alphas=cell.alphas, runs=plan.runs,
                      rejection_counts=tuple(counts), failures=failures, mean_c2=mean_c2)


def run_plan(plan: McPlan) -> McReport:
    tasks = [(plan, c, r) for c in range(len(plan.cells)) for r in range(plan.runs)]
    logger.info("Running %d cells x %d runs with parallelism %d",
                len(plan.cells), plan.runs, plan.parallelism)
    if plan.parallelism == 1 or len(tasks) <= 1:
        results = [_execute_run(task) for task in tasks]
    else:
        chunk = max(1, len(tasks) // (4 * plan.parallelism))
        with ProcessPoolExecutor(max_workers=plan.parallelism) as executor:
            results = list(executor.map(_execute_run, tasks, chunksize=chunk))

    cells = []
    for cell_index in range(len(plan.cells)):
        report = _aggregate(plan, cell_index, [r for r in results if r.cell_index == cell_index])
        logger.info("Cell %d (%s, n=%d): frequencies %s, %d failures", cell_index,
                    report.spec.label(), report.spec.n, report.frequencies, report.failures)
        cells.append(report)
    return McReport(cells=tuple(cells), master_seed=plan.master_seed, bootstrap=plan.bootstrap,
                    runs=plan.runs, weighted=plan.weighted, smoothing=plan.smoothing)


def table1_plan(runs: int, bootstrap: BootstrapConfig, n_list: Sequence[int] = DEFAULT_N_LIST,
                master_seed: int = 0, parallelism: int = 1,
                alphas: Sequence[float] = DEFAULT_ALPHAS) -> McPlan:
    cells = [McCell(ModelSpec(model, n, c=c), tuple(alphas))
             for model in ('S6', 'S7', 'S8') for c in TABLE1_C_VALUES for n in n_list]
    return McPlan(cells=tuple(cells), runs=runs, bootstrap=bootstrap, master_seed=master_seed,
                  parallelism=parallelism)


def table2_plan(runs: int, bootstrap: BootstrapConfig, n_list: Sequence[int] = DEFAULT_N_LIST,
                master_seed: int = 0, parallelism: int = 1,
                alphas: Sequence[float] = DEFAULT_ALPHAS) -> McPlan:
    cells = [McCell(ModelSpec(model, n), tuple(alphas))
             for model in ('STA1', 'STA2', 'STA3', 'STA4') for n in n_list]
    return McPlan(cells=tuple(cells), runs=runs, bootstrap=bootstrap, master_seed=master_seed,
                  parallelism=parallelism)


def simulate_plan(model_id: str, runs: int, bootstrap: BootstrapConfig,
                  n_list: Sequence[int] = DEFAULT_N_LIST, master_seed: int = 0,
                  parallelism: int = 1, smoothing: Optional[SmoothingConfig] = None,
                  weighted: bool = False, **model_params) -> McPlan:
    """One cell per sample size for a single model; model_params go to ModelSpec."""
    cells = [McCell(ModelSpec(model_id, n, **model_params), bootstrap.alphas) for n in n_list]
    return McPlan(cells=tuple(cells), runs=runs, bootstrap=bootstrap, master_seed=master_seed,
                  parallelism=parallelism, smoothing=smoothing or SmoothingConfig(),
                  weighted=weighted)


def _long_frame(report: McReport) -> pd.DataFrame:
    rows = []
    for cell in report.cells:
        for alpha, count, freq, se in zip(cell.alphas, cell.rejection_counts,
                                          cell.frequencies, cell.std_errors):
            rows.append({
                "model": cell.spec.model_id,
                "c": cell.spec.c,
                "theta0": cell.spec.theta0,
                "theta1": cell.spec.theta1,
                "n": cell.spec.n,
                "alpha": alpha,
                "runs": cell.runs,
                "failures": cell.failures,
                "rejections": count,
                "frequency": freq,
                "std_error": se,
                "mean_c2": cell.mean_c2,
            })
    columns = ["model", "c", "theta0", "theta1", "n", "alpha", "runs", "failures",
               "rejections", "frequency", "std_error", "mean_c2"]
    return pd.DataFrame(rows, columns=columns)


def _text_table(report: McReport) -> str:
    """Rows per model (and c), column blocks per n and alpha, one "freq (se)" entry per cell."""
    if not report.cells:
        return "(no cells)\n"
    frame = _long_frame(report)
    frame["row"] = [
        f"{m} c={c:g}" if pd.notna(c) else
        (f"{m} theta=({t0:g},{t1:g})" if pd.notna(t0) else m)
        for m, c, t0, t1 in zip(frame["model"], frame["c"], frame["theta0"], frame["theta1"])
    ]
    frame["level"] = [f"{100 * a:g}%" for a in frame["alpha"]]
    frame["cell"] = [f"{f:.3f} ({se:.3f})" for f, se in zip(frame["frequency"], frame["std_error"])]
    row_order = list(dict.fromkeys(frame["row"]))
    table = frame.pivot_table(index="row", columns=["n", "level"], values="cell",
                              aggfunc="first", sort=False)
    table = table.reindex(row_order)
    table.index.name = None
    header = (f"Rejection frequencies (MC standard errors), runs={report.runs}, "
              f"B={report.bootstrap.replicates}, v={report.bootstrap.smoothing_v:g}, "
              f"kernel={report.smoothing.kernel.family}, seed={report.master_seed}\n")
    return header + table.to_string(na_rep="-") + "\n"


def emit_report(report: McReport, fmt: str = 'text-table') -> str:
    if fmt == 'json':
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == 'csv':
        return _long_frame(report).to_csv(index=False)
    if fmt == 'text-table':
        return _text_table(report)
    raise ValueError(f"Invalid report format '{fmt}'. Must be one of: {REPORT_FORMATS}")


def report_from_json(text: str) -> McReport:
    return McReport.from_dict(json.loads(text))
