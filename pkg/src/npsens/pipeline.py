"""End-to-end analyses driven by a hashed JSON configuration."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .dataset import ColumnMapping, DatasetError, ObservationalDataset, impute_conservative, load_csv
from .learners import DEFAULT_LIBRARY, EnsembleFailure, FitFailure, LearnerSpec
from .npsem import GroundTruth, NpsemConfig, ground_truth, simulate
from .sensitivity import SensitivitySpec, causal_gap_bound, sens_test, sensitivity_curve
from .tmle import DEFAULT_TRUNC, InestimableNuisanceError, TargetingError, TmleResult, fit_nuisances, tmle_iterate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FIT = 3
EXIT_NONCONVERGED = 4


class AnalysisError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``exit_code`` maps it to the CLI."""

    def __init__(self, stage: str, message: str, exit_code: int):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = exit_code


@dataclass(frozen=True)
class AnalysisConfig:
    data_path: Optional[Path]
    columns: ColumnMapping
    learner_library: tuple[LearnerSpec, ...] = DEFAULT_LIBRARY
    folds: int = 10
    fold_seed: int = 1
    truncation: float = DEFAULT_TRUNC
    tol: float = 1e-8
    max_iter: int = 100
    sensitivity: SensitivitySpec = field(default_factory=SensitivitySpec)
    conjectured_rates: tuple[float, ...] = ()
    nuisance_libraries: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)
    sha256: str = ""

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None, sha256: str = "") -> "AnalysisConfig":
        data = d.get("data", {})
        path = data.get("path")
        if path is not None:
            path = Path(path)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
        lib = tuple(LearnerSpec.from_dict(s) for s in d["learner_library"]) if "learner_library" in d else DEFAULT_LIBRARY
        folds = d.get("folds", {})
        tm = d.get("tmle", {})
        sens = d.get("sensitivity", {})
        overrides = {
            key: tuple(LearnerSpec.from_dict(s) for s in specs)
            for key, specs in d.get("nuisance_libraries", {}).items()
        }
        unknown = set(overrides) - {"qbar", "g", "phi"}
        if unknown:
            raise ValueError(f"unknown nuisance_libraries keys: {sorted(unknown)}")
        return cls(
            data_path=path,
            columns=ColumnMapping.from_dict(data.get("columns", {})),
            learner_library=lib,
            folds=int(folds.get("S", 10)),
            fold_seed=int(folds.get("seed", 1)),
            truncation=float(d.get("truncation", DEFAULT_TRUNC)),
            tol=float(tm.get("tol", 1e-8)),
            max_iter=int(tm.get("max_iter", 100)),
            sensitivity=SensitivitySpec.from_dict(sens),
            conjectured_rates=tuple(float(r) for r in sens.get("conjectured_spontaneous_rates", ())),
            nuisance_libraries=overrides,
            raw=d,
            sha256=sha256,
        )

    @classmethod
    def from_file(cls, path) -> "AnalysisConfig":
        path = Path(path)
        try:
            blob = path.read_bytes()
        except OSError as exc:
            raise AnalysisError("config", f"cannot read {path}: {exc}", EXIT_INPUT) from exc
        try:
            d = json.loads(blob.decode("utf-8"))
            return cls.from_dict(d, base_dir=path.parent, sha256=hashlib.sha256(blob).hexdigest())
        except (ValueError, KeyError, TypeError) as exc:
            raise AnalysisError("config", f"invalid config {path}: {exc}", EXIT_INPUT) from exc


@dataclass
class AnalysisReport:
    body: dict
    curve_csv: str
    ic_csv: str
    result: Optional[TmleResult] = None

    @property
    def converged(self) -> bool:
        return bool(self.body["tmle"]["converged"])

    def to_json(self, timings: bool = True) -> str:
        body = dict(self.body)
        if not timings:
            body.pop("timings", None)
        return json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json(), encoding="utf-8")
        (out / "curve.csv").write_text(self.curve_csv, encoding="utf-8")
        (out / "ic.csv").write_text(self.ic_csv, encoding="utf-8")


def _ic_csv(result: TmleResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "ic"])
    for i, v in enumerate(result.ic_values):
        writer.writerow([i, repr(float(v))])
    return buf.getvalue()


def estimate(data: ObservationalDataset, config: AnalysisConfig) -> TmleResult:
    """Impute, fit nuisances and target; errors carry a stage label."""
    imputed = impute_conservative(data)
    lib = config.nuisance_libraries
    try:
        nuis = fit_nuisances(
            imputed,
            config.learner_library,
            folds=config.folds,
            seed=config.fold_seed,
            trunc=config.truncation,
            q_library=lib.get("qbar"),
            g_library=lib.get("g"),
            c_library=lib.get("phi"),
        )
    except InestimableNuisanceError as exc:
        raise AnalysisError("nuisance", str(exc), EXIT_FIT) from exc
    except (FitFailure, EnsembleFailure) as exc:
        raise AnalysisError("nuisance", str(exc), EXIT_FIT) from exc
    try:
        return tmle_iterate(imputed, nuis, config.tol, config.max_iter)
    except TargetingError as exc:
        raise AnalysisError("targeting", str(exc), EXIT_FIT) from exc


def analyze_dataset(data: ObservationalDataset, config: AnalysisConfig, timings: Optional[dict] = None) -> AnalysisReport:
    timings = {} if timings is None else timings
    t0 = time.perf_counter()
    result = estimate(data, config)
    timings["estimation_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        curve = sensitivity_curve(result, config.sensitivity)
    except ValueError as exc:
        raise AnalysisError("sensitivity", str(exc), EXIT_FIT) from exc
    timings["sensitivity_seconds"] = time.perf_counter() - t0

    body = {
        "software": {"name": "npsens", "version": __version__},
        "config": config.raw,
        "config_sha256": config.sha256,
        "dataset_summary": data.summary(),
        "tmle": result.to_dict(),
        "sensitivity": {"spec": config.sensitivity.to_dict(), **curve.to_dict()},
        "timings": timings,
    }
    if config.conjectured_rates:
        body["gap_bounds"] = [
            {"conjectured_rate": r, **vars(causal_gap_bound(result.phi_n, r))} for r in config.conjectured_rates
        ]
    if not result.converged:
        body["warnings"] = [f"TMLE did not converge within {config.max_iter} iterations"]
    return AnalysisReport(body, curve.to_csv(), _ic_csv(result), result)


def run_analysis(config: AnalysisConfig) -> AnalysisReport:
    """load -> impute -> fit nuisances -> target -> sensitivity curve -> report."""
    if config.data_path is None:
        raise AnalysisError("input", "config has no data.path", EXIT_INPUT)
    t0 = time.perf_counter()
    try:
        data = load_csv(config.data_path, config.columns)
    except FileNotFoundError as exc:
        raise AnalysisError("input", f"data file not found: {config.data_path}", EXIT_INPUT) from exc
    except (DatasetError, OSError) as exc:
        raise AnalysisError("input", str(exc), EXIT_INPUT) from exc
    timings = {"load_seconds": time.perf_counter() - t0}
    return analyze_dataset(data, config, timings)


# -- simulation study ---------------------------------------------------------


def replicate_seed(master: int, rep: int) -> int:
    return int(np.random.SeedSequence([master, rep]).generate_state(1)[0])


@dataclass(frozen=True)
class _Replicate:
    psi: float
    se: float
    converged: bool
    reject_zero: bool
    reject_true: bool


def _one_replicate(args) -> Optional[_Replicate]:
    sim, analysis, n, seed, delta_true = args
    data = simulate(sim, n, seed)
    try:
        res = estimate(data, analysis)
    except AnalysisError:
        return None
    if not res.se > 0:
        return None
    spec = analysis.sensitivity
    return _Replicate(
        psi=res.psi_n,
        se=res.se,
        converged=res.converged,
        reject_zero=sens_test(res.psi_n, res.se, 0.0, spec).reject,
        reject_true=sens_test(res.psi_n, res.se, delta_true, spec).reject,
    )


def run_simulation_study(
    sim_config: NpsemConfig,
    analysis_config: AnalysisConfig,
    reps: int,
    n: int = 2000,
    threads: int = 1,
    truth: Optional[GroundTruth] = None,
    mc_reps: int = 200_000,
) -> dict:
    """Repeat simulate -> estimate and summarize calibration against the oracle.

    Replicate ``r`` uses seed ``SeedSequence([sim_config.seed, r])``, so
    results do not depend on ``threads``. Failed replicates are counted and
    skipped. The sensitivity test is evaluated both at ``delta0 = 0`` and at
    the oracle bias ``max(delta0_true, 0)``.
    """
    truth = truth or ground_truth(sim_config, mc_reps)
    delta_true = max(truth.delta0_true, 0.0)
    jobs = [(sim_config, analysis_config, n, replicate_seed(sim_config.seed, r), delta_true) for r in range(reps)]
    if threads > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(_one_replicate, jobs))
    else:
        out = [_one_replicate(j) for j in jobs]
    ok = [r for r in out if r is not None]
    report = {
        "reps": reps,
        "n": n,
        "failures": reps - len(ok),
        "truth": truth.to_dict(),
        "null_true": truth.psi_causal <= 0.0,
        "delta0_tested": delta_true,
        "alpha": analysis_config.sensitivity.alpha,
        "sidedness": analysis_config.sensitivity.sidedness,
    }
    if not ok:
        report.update(dict.fromkeys(
            ["nonconverged", "mean_psi", "bias", "sd_psi", "mean_se", "se_sd_ratio", "coverage",
             "reject_rate_delta0_zero", "reject_rate_delta0_true"]))
        return report
    psi = np.array([r.psi for r in ok])
    se = np.array([r.se for r in ok])
    target = truth.psi_statistical
    sd = float(np.std(psi, ddof=1)) if len(ok) > 1 else math.nan
    report.update(
        nonconverged=sum(not r.converged for r in ok),
        mean_psi=float(psi.mean()),
        bias=float(psi.mean() - target),
        sd_psi=sd,
        mean_se=float(se.mean()),
        se_sd_ratio=float(se.mean() / sd) if sd > 0 else None,
        coverage=float(np.mean(np.abs(psi - target) <= 1.96 * se)),
        reject_rate_delta0_zero=float(np.mean([r.reject_zero for r in ok])),
        reject_rate_delta0_true=float(np.mean([r.reject_true for r in ok])),
        replicates=[{"psi_n": r.psi, "se": r.se, "converged": r.converged} for r in ok],
    )
    if math.isnan(report["sd_psi"]):
        report["sd_psi"] = None
    return report

