"""
Completion Engine - Runs completions and sweeps with progress and cancellation
"""

import logging
import threading
import time
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from latentknn.errors import RunCancelled, UndefinedMetricError
from latentknn.estimator import EstimateMatrix, EstimatorConfig, Target, complete_matrix
from latentknn.evalbound import Scope, matrix_corollary_parameters, mse
from latentknn.obsdata import ObservationMatrix, ObservationTensor
from latentknn.synthgen import LatentModelSpec, sample_instance
from latentknn.tensorize import FlatteningPlan, TensorEstimate, tensor_complete

logger = logging.getLogger(__name__)

# (current, total, label, status, extra)
ProgressCallback = Callable[[int, int, str, str, dict], None]


class CompletionEngine:
    """Manages completion runs for one estimator configuration"""

    def __init__(self, cfg: EstimatorConfig, workers: int = 1):
        self.cfg = cfg
        self.workers = workers
        self._lock = threading.Lock()  # guards _cancelled
        self._cancelled = False

    def cancel(self):
        """Cancel the ongoing run. Thread-safe."""
        with self._lock:
            self._cancelled = True

    @property
    def cancelled(self) -> bool:
        with self._lock:
            return self._cancelled

    def _reset(self):
        with self._lock:
            self._cancelled = False

    def _row_progress(self, label: str, started: float, progress_callback: Optional[ProgressCallback]):
        if not progress_callback:
            return None

        def report(current: int, total: int):
            progress_callback(current, total, label, "Estimating", {
                "elapsed_seconds": time.perf_counter() - started,
            })
        return report

    def _summary(self, estimate: EstimateMatrix, started: float) -> Dict:
        summary = estimate.counts()
        summary["cells"] = int(estimate.values.size)
        summary["cancelled"] = self.cancelled
        summary["duration_seconds"] = time.perf_counter() - started
        return summary

    def complete(
        self,
        obs: ObservationMatrix,
        target: Target = Target.MISSING_ONLY,
        progress_callback: Optional[ProgressCallback] = None,
    ) -> Tuple[EstimateMatrix, Dict]:
        """
        Complete a matrix.
        Progress callback receives: (current_row, total_rows, label, status, extra_info)
        Returns (estimate, summary dict).
        """
        self._reset()
        started = time.perf_counter()
        estimate = complete_matrix(
            obs,
            self.cfg,
            target,
            workers=self.workers,
            progress=self._row_progress("rows", started, progress_callback),
            should_stop=lambda: self.cancelled,
        )
        summary = self._summary(estimate, started)
        logger.info(
            f"Completed {summary['estimated']} cells, {summary['fallback']} by fallback "
            f"in {summary['duration_seconds']:.2f}s"
        )
        return estimate, summary

    def complete_tensor(
        self,
        tobs: ObservationTensor,
        plan: FlatteningPlan,
        exact_exclusion: bool = False,
        target: Target = Target.MISSING_ONLY,
        progress_callback: Optional[ProgressCallback] = None,
    ) -> Tuple[TensorEstimate, Dict]:
        self._reset()
        started = time.perf_counter()
        result = tensor_complete(
            tobs,
            plan,
            self.cfg,
            exact_exclusion=exact_exclusion,
            target=target,
            workers=self.workers,
            progress=self._row_progress("flattened rows", started, progress_callback),
            should_stop=lambda: self.cancelled,
        )
        summary = self._summary(result.matrix, started)
        summary["partition"] = plan.describe()
        return result, summary

    def sweep(
        self,
        template: LatentModelSpec,
        sizes: Sequence[int],
        seeds: Sequence[int],
        lambdas: Optional[Sequence[float]] = None,
        auto_beta: bool = False,
        auto_k: bool = False,
        progress_callback: Optional[ProgressCallback] = None,
    ) -> Tuple[List[Dict], Dict]:
        """
        Draw an m = n instance per (size, seed), complete it and score it.
        Returns (one row per run, summary dict). A cancelled sweep keeps the
        rows finished so far.
        """
        self._reset()
        started = time.perf_counter()
        grid = [(size, seed, lam) for size in sizes for seed in seeds for lam in (lambdas or [None])]
        rows: List[Dict] = []

        for current, (size, seed, lam) in enumerate(grid, start=1):
            if self.cancelled:
                break
            label = f"size={size} seed={seed}" + (f" lambda={lam}" if lam is not None else "")
            if progress_callback:
                progress_callback(current, len(grid), label, "Running", {
                    "elapsed_seconds": time.perf_counter() - started,
                })
            try:
                rows.append(self._sweep_cell(template, size, seed, lam, auto_beta, auto_k))
            except RunCancelled:
                break

        summary = {
            "runs": len(rows),
            "planned": len(grid),
            "cancelled": self.cancelled,
            "duration_seconds": time.perf_counter() - started,
        }
        return rows, summary

    def _sweep_cell(
        self,
        template: LatentModelSpec,
        size: int,
        seed: int,
        lam: Optional[float],
        auto_beta: bool,
        auto_k: bool,
    ) -> Dict:
        instance = sample_instance(replace(template, shape=(size, size), seed=seed))
        corollary = matrix_corollary_parameters(size, size, template.p)
        cfg = self.cfg
        if auto_beta:
            cfg = replace(cfg, beta_low=corollary.beta_int)
        if auto_k:
            cfg = replace(cfg, k=corollary.k_int)
        if lam is not None:
            cfg = replace(cfg, lam=lam)

        estimate = complete_matrix(
            instance.observed, cfg, Target.MISSING_ONLY, workers=self.workers,
            should_stop=lambda: self.cancelled,
        )
        try:
            mse_estimated = mse(estimate, instance.truth, Scope.ESTIMATED_ONLY)
        except UndefinedMetricError:
            mse_estimated = float("nan")

        row = {"size": size, "seed": seed}
        if lam is not None:
            row["lambda"] = lam
        row.update({
            "beta": cfg.beta_low,
            "k": cfg.k,
            "mse_estimated": mse_estimated,
            "mse_all": mse(estimate, instance.truth, Scope.ALL),
        })
        counts = estimate.counts()
        row["estimated"] = counts["estimated"]
        row["fallback"] = counts["fallback"]
        row["observed"] = counts["observed-passthrough"]
        return row


def mean_by_size(rows: Sequence[Dict], column: str = "mse_estimated") -> Dict[int, float]:
    """Average a sweep column over seeds (and lambdas) for every size"""
    sizes = sorted({row["size"] for row in rows})
    return {size: float(np.nanmean([row[column] for row in rows if row["size"] == size])) for size in sizes}
