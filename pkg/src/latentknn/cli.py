"""
CLI - Batch driver for synthesis, completion, evaluation and bounds

Usage:
    latentknn synth --spec model.json --seed 3 --out-dir runs/synth
    latentknn complete --input observed.csv --variant user-user --k 5 --beta 2 --out-dir runs/est
    latentknn tensor-complete --input tensor.csv --partition auto-user --out-dir runs/tensor
    latentknn evaluate --estimate estimate.csv --truth truth.csv --metrics mse,rmse,rse
    latentknn bound --kind matrix --m 10000 --n 10000 --p 0.1 --beta auto --k auto
    latentknn sweep --spec model.json --sizes 100,200,400 --seeds 10 --out-dir runs/sweep
    latentknn split --input ratings.dat --format movielens-dat --fraction 0.1 --seed 0 --out-dir runs/split

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric error (undefined metric, bound outside its domain).
"""

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from tqdm import tqdm

from latentknn import __version__
from latentknn.config_manager import ConfigManager
from latentknn.engine import CompletionEngine, mean_by_size
from latentknn.errors import ConfigError, DataError, LatentKnnError
from latentknn.estimator import EstimatorConfig, Target, Variant
from latentknn.evalbound import (
    BoundParams,
    TensorBoundParams,
    default_zeta,
    item_item_params,
    matrix_corollary_parameters,
    matrix_mse_bound,
    matrix_tail_bound,
    mse,
    rmse,
    rse,
    tensor_mse_bound,
)
from latentknn.obsdata import (
    FileFormat,
    ObservationMatrix,
    ObservationTensor,
    load_observations,
    load_tensor,
    save_dense,
    save_observations,
    save_tensor,
    split_holdout,
)
from latentknn.run_manifest import RunManifest, dumps
from latentknn.synthgen import LatentModelSpec, sample_instance
from latentknn.tensorize import (
    FlatteningPlan,
    corollary_tensor_parameters,
    optimal_partition,
    parse_partition,
)

logger = logging.getLogger("latentknn")

METRICS = ("mse", "rmse", "rse")
AUTO = "auto"


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _int_list(text: str) -> List[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma separated list of integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma separated list of numbers, got {text!r}")


def _number_or_auto(text: str):
    if text == AUTO:
        return AUTO
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or '{AUTO}', got {text!r}")
    return int(value) if value.is_integer() else value


def _load_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}")


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit(text: str, output: Optional[str]):
    if output:
        _write(Path(output), text)
    else:
        sys.stdout.write(text)


def _csv_cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    return value


def _rows_to_csv(rows: Sequence[Dict]) -> str:
    frame = pd.DataFrame([{key: _csv_cell(value) for key, value in row.items()} for row in rows])
    return frame.to_csv(index=False, lineterminator="\n")


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


class TqdmProgress:
    """Adapts the engine's progress callback to a tqdm bar on standard error"""

    def __init__(self, quiet: bool):
        self.quiet = quiet
        self._bar = None

    def __call__(self, current: int, total: int, label: str, status: str, extra: dict):
        if self._bar is None or self._bar.total != total:
            self.close()
            self._bar = tqdm(total=total, desc=label, file=sys.stderr, disable=self.quiet, leave=False)
        self._bar.set_postfix_str(status, refresh=False)
        self._bar.update(current - self._bar.n)

    def close(self):
        if self._bar is not None:
            self._bar.close()
            self._bar = None


# ---------------------------------------------------------------------------
# Estimator configuration
# ---------------------------------------------------------------------------

def _estimated_p(obs: ObservationMatrix) -> float:
    cells = obs.m * obs.n
    return len(obs) / cells if cells else 0.0


def _estimator_config(args, config: ConfigManager, m: int = None, n: int = None, p: float = None) -> EstimatorConfig:
    """Merge flags over the stored defaults; 'auto' beta/k use the corollary choices"""
    overrides = {
        "variant": args.variant,
        "k": args.k,
        "beta": args.beta,
        "beta_high": args.beta_high,
        "lambda": args.lam,
        "include_self": True if args.include_self else None,
        "fallback": args.fallback,
    }
    if AUTO in (args.beta, args.k):
        if m is None or p is None or p <= 0:
            raise ConfigError("'auto' beta/k needs a matrix with observed entries")
        corollary = matrix_corollary_parameters(m, n, p)
        if args.beta == AUTO:
            overrides["beta"] = corollary.beta_int
        if args.k == AUTO:
            overrides["k"] = corollary.k_int
    return config.estimator_config(overrides)


def _target(args, config: ConfigManager) -> Target:
    try:
        return Target(args.target or config.get("target"))
    except ValueError:
        raise ConfigError(f"invalid target {args.target!r}")


def _workers(args, config: ConfigManager) -> int:
    workers = args.threads if args.threads is not None else config.get("threads")
    if int(workers) < 1:
        raise ConfigError(f"--threads must be at least 1, got {workers}")
    return int(workers)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args, config: ConfigManager) -> int:
    spec = LatentModelSpec.from_dict(_load_json(args.spec), seed=args.seed)
    manifest = RunManifest("synth", {"spec": spec.to_dict()}, seed=spec.seed)
    manifest.add_input("spec", args.spec)
    started = time.perf_counter()

    instance = sample_instance(spec)
    out_dir = Path(args.out_dir)
    if isinstance(instance.observed, ObservationMatrix):
        save_observations(instance.observed, out_dir / "observed.csv", FileFormat.TRIPLET_CSV)
        save_dense(instance.truth, out_dir / "truth.csv")
    else:
        save_tensor(instance.observed, out_dir / "observed.csv")
        save_tensor(ObservationTensor.from_dense(instance.truth), out_dir / "truth.csv")

    _write(out_dir / "spec.json", manifest.report(instance.summary()))
    manifest.set_duration(time.perf_counter() - started)
    manifest.save(out_dir)
    logger.info(f"Wrote synthetic instance to {out_dir}")
    return 0


def cmd_complete(args, config: ConfigManager) -> int:
    obs = load_observations(args.input, args.format)
    cfg = _estimator_config(args, config, obs.m, obs.n, _estimated_p(obs))
    target = _target(args, config)
    manifest = RunManifest("complete", {"estimator": cfg.to_dict(), "target": target.value, "format": args.format})
    manifest.add_input("input", args.input)

    progress = TqdmProgress(args.quiet)
    engine = CompletionEngine(cfg, _workers(args, config))
    try:
        estimate, summary = engine.complete(obs, target, progress)
    finally:
        progress.close()

    out_dir = Path(args.out_dir)
    save_dense(estimate.values, out_dir / "estimate.csv")
    duration = summary.pop("duration_seconds")
    report = {"shape": [obs.m, obs.n], "observed_entries": len(obs), "summary": summary}
    _write(out_dir / "report.json", manifest.report(report))
    manifest.set_duration(duration)
    manifest.save(out_dir)
    return 0


def _plan_for(args, tobs: ObservationTensor) -> FlatteningPlan:
    partition = args.partition
    if partition == "auto-user":
        return optimal_partition(tobs.shape, "user")
    if partition == "auto-item":
        return optimal_partition(tobs.shape, "item")
    if partition.startswith("explicit:"):
        return parse_partition(partition[len("explicit:"):], tobs.shape)
    raise ConfigError(f"invalid partition {partition!r} (auto-user, auto-item or explicit:<rows>|<cols>)")


def cmd_tensor_complete(args, config: ConfigManager) -> int:
    tobs = load_tensor(args.input)
    plan = _plan_for(args, tobs)
    cells = math.prod(tobs.shape)
    p = len(tobs) / cells
    if AUTO in (args.beta, args.k):
        if p <= 0:
            raise ConfigError("'auto' beta/k needs a tensor with observed entries")
        chosen = corollary_tensor_parameters(plan, p)
        if args.beta == AUTO:
            args.beta = chosen.beta_low
            if args.beta_high is None:
                args.beta_high = chosen.beta_high
        if args.k == AUTO:
            args.k = chosen.k
    cfg = _estimator_config(args, config)
    target = _target(args, config)
    manifest = RunManifest("tensor-complete", {
        "estimator": cfg.to_dict(),
        "target": target.value,
        "partition": plan.describe(),
        "exact_exclusion": bool(args.exact_exclusion),
    })
    manifest.add_input("input", args.input)

    progress = TqdmProgress(args.quiet)
    engine = CompletionEngine(cfg, _workers(args, config))
    try:
        result, summary = engine.complete_tensor(tobs, plan, args.exact_exclusion, target, progress)
    finally:
        progress.close()

    out_dir = Path(args.out_dir)
    save_tensor(ObservationTensor.from_dense(result.tensor), out_dir / "estimate.csv")
    save_dense(result.matrix.values, out_dir / "estimate_flat.csv")
    duration = summary.pop("duration_seconds")
    report = {
        "shape": list(tobs.shape),
        "flattened": [plan.m, plan.n],
        "n_prime": plan.n_prime,
        "observed_entries": len(tobs),
        "summary": summary,
    }
    _write(out_dir / "report.json", manifest.report(report))
    manifest.set_duration(duration)
    manifest.save(out_dir)
    return 0


def cmd_evaluate(args, config: ConfigManager) -> int:
    metrics = [name.strip() for name in args.metrics.split(",") if name.strip()]
    unknown = sorted(set(metrics) - set(METRICS))
    if unknown or not metrics:
        raise ConfigError(f"unknown metrics {unknown} (choose from {', '.join(METRICS)})")

    estimate = load_observations(args.estimate, FileFormat.DENSE_CSV)
    truth = load_observations(args.truth, FileFormat.DENSE_CSV)
    if estimate.shape != truth.shape:
        raise DataError(f"estimate is {estimate.m}x{estimate.n} but truth is {truth.m}x{truth.n}")
    if args.test:
        test = load_observations(args.test, args.test_format)
        if test.shape != truth.shape:
            raise DataError(f"test entries are {test.m}x{test.n} but truth is {truth.m}x{truth.n}")
        if args.score_against == "holdout":
            truth_values = None
        else:
            uncovered = int((test.mask & ~truth.mask).sum())
            if uncovered:
                raise DataError(f"truth has no value for {uncovered} test cell(s)")
            truth_values = truth.dense
        scope = "test-set"
    else:
        test = truth
        truth_values = truth.dense
        scope = "observed-truth"

    against = args.score_against if args.test else "truth"
    manifest = RunManifest("evaluate", {"metrics": metrics, "scope": scope, "against": against})
    manifest.add_input("estimate", args.estimate)
    manifest.add_input("truth", args.truth)
    if args.test:
        manifest.add_input("test", args.test)

    functions = {
        "mse": lambda: mse(estimate.dense, truth_values, "test-set", test),
        "rmse": lambda: rmse(estimate.dense, truth_values, test),
        "rse": lambda: rse(estimate.dense, truth_values, test),
    }
    results = {name: _finite_or_none(functions[name]()) for name in metrics}
    results["cells"] = len(test)
    _emit(manifest.report(results), args.output)
    return 0


def _matrix_params(args) -> BoundParams:
    m, n, p = args.m, args.n, args.p
    corollary = matrix_corollary_parameters(m, n, p)
    beta = corollary.beta if args.beta in (None, AUTO) else args.beta
    k = corollary.k if args.k in (None, AUTO) else args.k
    if args.zeta in (None, AUTO):
        zeta = default_zeta(args.measure, m, p, beta, L=args.L, d=args.d)
    else:
        zeta = args.zeta
    B0 = args.B0 if args.B0 is not None else args.L + 2 * args.B_e
    params = BoundParams(
        m=m, n=n, p=p, beta=beta, k=k, zeta=zeta, B0=B0,
        gamma_sq=args.gamma_sq, L=args.L, phi=args.phi,
        c_phi=args.c_phi, c_k=args.c_k, c_beta=args.c_beta,
        delta=args.delta, delta_prime=args.delta_prime,
    )
    return item_item_params(params) if args.item_item else params


def _tensor_params(args) -> TensorBoundParams:
    if not args.shape:
        raise ConfigError("--shape is required for the tensor bound")
    shape = tuple(_int_list(args.shape))
    if args.partition in ("auto-user", "auto-item"):
        plan = optimal_partition(shape, args.partition[len("auto-"):])
    elif args.partition.startswith("explicit:"):
        plan = parse_partition(args.partition[len("explicit:"):], shape)
    else:
        raise ConfigError(f"invalid partition {args.partition!r}")
    n_prime = plan.n_prime
    beta_low = 0.5 * min(n_prime * args.p ** 2, math.sqrt(n_prime)) if args.beta_low in (None, AUTO) else args.beta_low
    beta_high = 2 * max(n_prime * args.p ** 2, math.sqrt(n_prime)) if args.beta_high in (None, AUTO) else args.beta_high
    k = math.sqrt(plan.m * args.p) / 8 if args.k in (None, AUTO) else args.k
    if args.zeta in (None, AUTO):
        zeta = default_zeta(args.measure, plan.m, args.p, beta_low, L=args.L, d=args.d)
    else:
        zeta = args.zeta
    return TensorBoundParams(
        shape=shape, row_dims=plan.row_dims, p=args.p,
        beta_low=beta_low, beta_high=beta_high, k=k, zeta=zeta,
        gamma_sq=args.gamma_sq, L=args.L, D=args.D, B_e=args.B_e,
        c_l=args.c_l, c_h=args.c_h, c_q=args.c_q, delta=args.delta,
    )


def cmd_bound(args, config: ConfigManager) -> int:
    if args.kind == "tensor":
        params = _tensor_params(args)
        body = tensor_mse_bound(params).to_dict()
    else:
        for name in ("m", "n", "p"):
            if getattr(args, name) is None:
                raise ConfigError(f"--{name} is required for the {args.kind} bound")
        params = _matrix_params(args)
        if args.kind == "matrix":
            body = matrix_mse_bound(params).to_dict()
        else:
            if args.eps is None:
                raise ConfigError("--eps is required for the tail bound")
            body = matrix_tail_bound(params, args.eps).to_dict()
            body["params"] = matrix_mse_bound(params).params
    body["kind"] = args.kind
    manifest = RunManifest("bound", {"kind": args.kind, "params": body["params"]})
    _emit(manifest.report(body), args.output)
    return 0


def cmd_sweep(args, config: ConfigManager) -> int:
    template_doc = _load_json(args.spec)
    template_doc.setdefault("m", 2)
    template_doc.setdefault("n", 2)
    template = LatentModelSpec.from_dict(template_doc)
    sizes = _int_list(args.sizes)
    if not sizes or min(sizes) < 2:
        raise ConfigError("--sizes needs integers >= 2")
    if args.seeds < 1:
        raise ConfigError("--seeds must be at least 1")
    seeds = list(range(args.seed_base, args.seed_base + args.seeds))
    lambdas = _float_list(args.lambdas) if args.lambdas else None

    auto_beta, auto_k = args.beta == AUTO, args.k == AUTO
    if auto_beta:
        args.beta = None
    if auto_k:
        args.k = None
    cfg = _estimator_config(args, config)

    manifest = RunManifest("sweep", {
        "estimator": cfg.to_dict(),
        "beta": AUTO if auto_beta else cfg.beta_low,
        "k": AUTO if auto_k else cfg.k,
        "sizes": sizes,
        "seeds": seeds,
        "lambdas": lambdas,
        "spec": template.to_dict(),
    })
    manifest.add_input("spec", args.spec)

    progress = TqdmProgress(args.quiet)
    engine = CompletionEngine(cfg, _workers(args, config))
    try:
        rows, summary = engine.sweep(template, sizes, seeds, lambdas, auto_beta, auto_k, progress)
    finally:
        progress.close()

    out_dir = Path(args.out_dir)
    _write(out_dir / "sweep.csv", _rows_to_csv(rows))
    duration = summary.pop("duration_seconds")
    means = {str(size): _finite_or_none(value) for size, value in mean_by_size(rows).items()} if rows else {}
    _write(out_dir / "report.json", manifest.report({"summary": summary, "mean_mse_estimated": means}))
    manifest.set_duration(duration)
    manifest.save(out_dir)
    return 0


def cmd_split(args, config: ConfigManager) -> int:
    obs = load_observations(args.input, args.format)
    fraction = args.fraction if args.fraction is not None else config.get("holdout_fraction")
    split = split_holdout(obs, fraction, args.seed)
    manifest = RunManifest("split", {"fraction": fraction, "format": args.format}, seed=args.seed)
    manifest.add_input("input", args.input)

    out_dir = Path(args.out_dir)
    save_observations(split.train, out_dir / "train.csv", FileFormat.TRIPLET_CSV)
    save_observations(split.test, out_dir / "test.csv", FileFormat.TRIPLET_CSV)
    report = {"train_entries": len(split.train), "test_entries": len(split.test)}
    _write(out_dir / "report.json", manifest.report(report))
    manifest.set_duration(0.0)
    manifest.save(out_dir)
    return 0


def _parse_setting(text: str):
    if "=" not in text:
        raise ConfigError(f"expected KEY=VALUE, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def cmd_config(args, config: ConfigManager) -> int:
    if args.reset:
        config.reset()
    for setting in args.set or []:
        key, value = _parse_setting(setting)
        config.set(key, value)
    sys.stdout.write(dumps(config.get_all()))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_estimator_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("estimator")
    group.add_argument("--variant", choices=[v.value for v in Variant])
    group.add_argument("--k", type=_number_or_auto, help="neighbors per estimate, or 'auto'")
    group.add_argument("--beta", type=_number_or_auto, help="minimum overlap (>= 2), or 'auto'")
    group.add_argument("--beta-high", type=int, help="maximum overlap (default unbounded)")
    group.add_argument("--lambda", dest="lam", type=float, help="Gaussian kernel bandwidth")
    group.add_argument("--include-self", action="store_true")
    group.add_argument("--fallback", choices=["zero", "global-mean"])
    group.add_argument("--target", choices=[t.value for t in Target])


def _add_bound_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--kind", choices=["matrix", "tail", "tensor"], default="matrix")
    parser.add_argument("--m", type=int)
    parser.add_argument("--n", type=int)
    parser.add_argument("--p", type=float, required=True)
    parser.add_argument("--beta", type=_number_or_auto)
    parser.add_argument("--k", type=_number_or_auto)
    parser.add_argument("--zeta", type=_number_or_auto)
    parser.add_argument("--measure", choices=["uniform-cube", "finite-support"], default="uniform-cube")
    parser.add_argument("--d", type=int, default=1, help="latent dimension of the uniform cube")
    parser.add_argument("--L", type=float, default=1.0, help="Lipschitz constant")
    parser.add_argument("--B0", type=float, help="difference bound (default L + 2 B_e)")
    parser.add_argument("--B-e", dest="B_e", type=float, default=0.0, help="noise bound")
    parser.add_argument("--gamma-sq", type=float, default=0.0, help="noise variance")
    parser.add_argument("--phi", type=float, help="underestimator at sqrt(zeta / L^2), for the flags")
    parser.add_argument("--c-phi", type=float, default=1.0)
    parser.add_argument("--c-k", type=float, default=0.5)
    parser.add_argument("--c-beta", type=float)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--delta-prime", type=float)
    parser.add_argument("--item-item", action="store_true", help="bound the item-item variant")
    parser.add_argument("--eps", type=float, help="deviation for the tail bound")
    tensor = parser.add_argument_group("tensor bound")
    tensor.add_argument("--shape", help="tensor shape, e.g. 8,8,8")
    tensor.add_argument("--partition", default="auto-user")
    tensor.add_argument("--beta-low", type=_number_or_auto)
    tensor.add_argument("--beta-high", type=_number_or_auto)
    tensor.add_argument("--D", type=float, default=1.0, help="latent diameter")
    tensor.add_argument("--c-l", type=float, default=0.5)
    tensor.add_argument("--c-h", type=float, default=2.0)
    tensor.add_argument("--c-q", type=float, default=1.0)
    parser.add_argument("--output", help="write the JSON report here instead of standard output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentknn",
        description="Variance-similarity nearest-neighbor matrix and tensor completion",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="settings file (default: user config directory)")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--quiet", action="store_true", help="hide progress bars")
    parser.add_argument("--threads", type=int, help="worker threads (never changes results)")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="draw a synthetic latent variable instance")
    synth.add_argument("--spec", required=True, help="model spec JSON")
    synth.add_argument("--seed", type=int)
    synth.add_argument("--out-dir", required=True)
    synth.set_defaults(func=cmd_synth)

    complete = commands.add_parser("complete", help="complete a matrix")
    complete.add_argument("--input", required=True)
    complete.add_argument("--format", choices=[f.value for f in FileFormat], default=FileFormat.TRIPLET_CSV.value)
    complete.add_argument("--out-dir", required=True)
    _add_estimator_flags(complete)
    complete.set_defaults(func=cmd_complete)

    tensor = commands.add_parser("tensor-complete", help="complete a tensor through a flattening")
    tensor.add_argument("--input", required=True)
    tensor.add_argument("--partition", default="auto-user", help="auto-user, auto-item or explicit:<rows>|<cols>")
    tensor.add_argument("--exact-exclusion", action="store_true")
    tensor.add_argument("--out-dir", required=True)
    _add_estimator_flags(tensor)
    tensor.set_defaults(func=cmd_tensor_complete)

    evaluate = commands.add_parser("evaluate", help="score an estimate against the truth")
    evaluate.add_argument("--estimate", required=True, help="dense-csv estimate")
    evaluate.add_argument("--truth", required=True, help="dense-csv truth")
    evaluate.add_argument("--test", help="test entries: scoring is restricted to these cells")
    evaluate.add_argument(
        "--score-against",
        choices=["truth", "holdout"],
        default="truth",
        help="with --test, compare to the truth file (default) or to the held-out values themselves",
    )
    evaluate.add_argument("--test-format", choices=[f.value for f in FileFormat], default=FileFormat.TRIPLET_CSV.value)
    evaluate.add_argument("--metrics", default="mse,rmse,rse")
    evaluate.add_argument("--output")
    evaluate.set_defaults(func=cmd_evaluate)

    bound = commands.add_parser("bound", help="evaluate a theoretical MSE bound")
    _add_bound_flags(bound)
    bound.set_defaults(func=cmd_bound)

    sweep = commands.add_parser("sweep", help="MSE over a grid of sizes and seeds")
    sweep.add_argument("--spec", required=True, help="model spec JSON (its m and n are replaced)")
    sweep.add_argument("--sizes", default="100,200,400")
    sweep.add_argument("--seeds", type=int, default=10, help="number of seeds")
    sweep.add_argument("--seed-base", type=int, default=0)
    sweep.add_argument("--lambdas", help="comma separated lambda grid (Gaussian variant)")
    sweep.add_argument("--out-dir", required=True)
    _add_estimator_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    split = commands.add_parser("split", help="withhold a random test set")
    split.add_argument("--input", required=True)
    split.add_argument("--format", choices=[f.value for f in FileFormat], default=FileFormat.TRIPLET_CSV.value)
    split.add_argument("--fraction", type=float)
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--out-dir", required=True)
    split.set_defaults(func=cmd_split)

    settings = commands.add_parser("config", help="show or change stored defaults")
    settings.add_argument("--set", action="append", metavar="KEY=VALUE")
    settings.add_argument("--reset", action="store_true")
    settings.set_defaults(func=cmd_config)

    return parser


def _configure_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = ConfigManager(config_path=args.config) if args.config else ConfigManager()
        _configure_logging(args.log_level or config.get("log_level"))
        return args.func(args, config)
    except LatentKnnError as e:
        logger.error(str(e))
        return e.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        logger.error(f"cannot read {e.filename}: {e.strerror}")
        return DataError.exit_code
    except UnicodeDecodeError as e:
        logger.error(f"input is not UTF-8 text: {e}")
        return DataError.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
