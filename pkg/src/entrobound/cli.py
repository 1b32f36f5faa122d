"""Experiment driver and command-line interface.

Subcommands: ``simulate``, ``predict``, ``bound``, ``diagnose``,
``report``.  Every experiment is described by a single JSON config with a
mandatory seed; all estimator defaults are echoed into ``meta.json`` so
runs are self-describing, and no output file contains wall-clock data, so
re-running a config reproduces every artifact byte for byte.

Exit codes: 0 success, 2 config/I-O error, 3 bound violation (soundness
failure is loud), 4 degenerate or singular inputs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds, catalog, diagnostics, infotheory, predict, procgen, spectral
from .errors import (
    BoundViolationError,
    ConfigError,
    DegenerateProcessError,
    DegenerateSeriesError,
    DimensionError,
    DivergenceError,
    EntroboundError,
    SampleSizeError,
    SingularSpectrumError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VIOLATION = 3
EXIT_DEGENERATE = 4

LOG2 = math.log(2.0)

ESTIMATOR_DEFAULTS = {
    "k": 4,
    "p": 16,
    "n_freq": 4096,
    "alpha": 0.05,
    "max_points": 20_000,
    "tail_fraction": 0.5,
    "n_lags": 20,
    "embed": 2,
    "mi_threshold_bits": 0.02,
    "calibration_bits_per_dim": 0.05,
}

DEFAULT_BOUNDS = ["spectral", "prediction_1step", "nongaussian", "mstep",
                  "entropy_power_cap"]


@dataclass
class ExperimentConfig:
    """Validated experiment description (one model or recursive system)."""

    seed: int
    paths: int = 50
    length: int = 10_000
    burn_in: int | None = None
    model: procgen.ProcessModel | None = None
    recursive: procgen.RecursiveSpec | None = None
    learning: dict | None = None
    predictors: list = field(default_factory=lambda: [{"kind": "zero"}])
    horizons: list = field(default_factory=lambda: [1])
    estimators: dict = field(default_factory=dict)
    bounds: list = field(default_factory=lambda: list(DEFAULT_BOUNDS))
    paper_literal_mstep: bool = False
    workers: int = 1
    name: str = ""

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        samples = raw.get("samples", {})
        if "seed" not in samples:
            raise ConfigError("config.samples.seed is mandatory (no ambient randomness)")
        model = None
        recursive = None
        if "model" in raw:
            spec = raw["model"]
            model = (catalog.get_model(spec["catalog"]) if "catalog" in spec
                     else procgen.ProcessModel.from_dict(spec))
        if "recursive" in raw:
            spec = raw["recursive"]
            recursive = (catalog.get_recursive(spec["catalog"]) if "catalog" in spec
                         else procgen.RecursiveSpec.from_dict(spec))
        if model is None and recursive is None and "learning" not in raw:
            raise ConfigError("config needs a 'model', 'recursive', or 'learning' entry")
        estimators = dict(ESTIMATOR_DEFAULTS)
        estimators.update(raw.get("estimators", {}))
        horizons = list(raw.get("horizons", [1]))
        if any(int(m) < 1 for m in horizons):
            raise ConfigError("horizons must be >= 1")
        return cls(
            seed=int(samples["seed"]),
            paths=int(samples.get("paths", 50)),
            length=int(samples.get("length", 10_000)),
            burn_in=samples.get("burn_in"),
            model=model,
            recursive=recursive,
            learning=raw.get("learning"),
            predictors=list(raw.get("predictors", [{"kind": "zero"}])),
            horizons=[int(m) for m in horizons],
            estimators=estimators,
            bounds=list(raw.get("bounds", DEFAULT_BOUNDS)),
            paper_literal_mstep=bool(raw.get("paper_literal_mstep", False)),
            workers=int(raw.get("workers", 1)),
            name=raw.get("name", ""),
        )

    def meta(self) -> dict:
        return {
            "name": self.name,
            "model": self.model.to_dict() if self.model else None,
            "model_hash": bounds.model_hash(self.model) if self.model else None,
            "recursive": self.recursive.to_dict() if self.recursive else None,
            "learning": self.learning,
            "samples": {"paths": self.paths, "length": self.length,
                        "burn_in": self.burn_in, "seed": self.seed},
            "predictors": self.predictors,
            "horizons": self.horizons,
            "estimators": self.estimators,
            "bounds": self.bounds,
            "paper_literal_mstep": self.paper_literal_mstep,
        }


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# pipeline pieces

def _build_predictor(spec: dict, cfg: ExperimentConfig, m: int,
                     samples: procgen.SampleSet):
    kind = spec.get("kind", "zero")
    order = int(spec.get("order", 1))
    fit = spec.get("fit", "oracle")
    if kind == "zero":
        return predict.zero_predictor(horizon=m)
    if kind == "model_mstep":
        if cfg.model is None:
            raise ConfigError("model_mstep predictor needs a model")
        return predict.model_mstep_predictor(cfg.model, m)
    if m != 1:
        return None  # FIR predictors are 1-step
    if fit == "oracle":
        if cfg.model is None:
            raise ConfigError("oracle fit needs a model")
        acov = procgen.theoretical_autocov(cfg.model, order + 1)
    else:
        acov = spectral.estimate_autocov(samples, order + 1)
    if kind in ("levinson", "truncated"):
        return predict.fit_levinson_predictor(acov, order, kind=kind)
    if kind == "multichannel_levinson":
        return predict.fit_multichannel_predictor(acov, order)
    raise ConfigError(f"unknown predictor kind {kind!r}")


def _innovation_gate(report: predict.PredictorReport, samples: procgen.SampleSet,
                     m: int, est: dict, seed: int):
    """Equality-condition gate: full Gaussianizing-whitening check for
    1-step prediction; Gaussianity plus the colored-order check for m-step
    (whose innovations are legitimately MA(m-1) colored)."""
    if m == 1:
        return diagnostics.gaussian_whitening_check(
            report, samples, alpha=est["alpha"], n_lags=est["n_lags"],
            embed=est["embed"], k=est["k"], max_points=est["max_points"],
            seed=seed)
    return diagnostics.ConjunctionVerdict(verdicts=(
        diagnostics.jarque_bera(report.innovations, alpha=est["alpha"]),
        diagnostics.colored_order_check(report.innovations, m, k=est["k"],
                                        embed=est["embed"],
                                        max_points=est["max_points"],
                                        seed=seed),
    ))


def _knn_bias_tolerance(est: dict, joint_dim: int) -> float:
    """Relative error budget for a bound routed through a k-NN entropy:
    2 ln2 times the calibrated per-dimension bias allowance."""
    return 2.0 * LOG2 * est["calibration_bits_per_dim"] * joint_dim


def evaluate_model(cfg: ExperimentConfig) -> tuple[list, dict]:
    """Run the full bound pipeline for one process model."""
    model = cfg.model
    est = cfg.estimators
    n = model.dim
    reports: list[bounds.BoundReport] = []
    extras: dict = {}
    samples = procgen.simulate(model, cfg.length, cfg.paths, cfg.seed,
                               burn_in=cfg.burn_in, workers=cfg.workers)
    spec = procgen.theoretical_spectrum(model, est["n_freq"])
    spectral_kind = "ks" if n == 1 else "wm"
    spectral_bound = bounds.spectral_one_step_bound(spec)
    base_inputs = {"model": model.name, "model_hash": bounds.model_hash(model),
                   "seed": cfg.seed, "paths": cfg.paths, "length": cfg.length}

    want = set(cfg.bounds)
    h_rate = None
    if want & {"prediction_1step", "nongaussian"}:
        h_rate = infotheory.empirical_entropy_rate(
            samples, depth=est["p"], k=est["k"], max_points=est["max_points"],
            se_seed=cfg.seed)
        gauss_rate = infotheory.gaussian_entropy_rate(spec)
        j_val = gauss_rate.value - h_rate.value
        j_flags = [f for f in h_rate.flags if f != "clamped"]
        if j_val < 0.0:
            j_val = 0.0
            j_flags.append("clamped")
        j_rate = infotheory.InfoEstimate(
            value=j_val, quantity="negentropy_rate",
            estimator=h_rate.estimator, n_samples=h_rate.n_samples,
            embedding_depth=h_rate.embedding_depth,
            std_error=h_rate.std_error, flags=tuple(j_flags))
        extras["entropy_rate_bits"] = h_rate.to_dict()
        extras["gaussian_entropy_rate_bits"] = gauss_rate.value
        extras["negentropy_rate_bits"] = j_rate.to_dict()

    cap = None
    if "entropy_power_cap" in want:
        h_routes = {}
        if model.innovation.family == "gaussian":
            r0 = procgen.theoretical_autocov(model, 0).values[0]
            h_routes["gaussian_closed_form"] = infotheory.gaussian_entropy_bits(r0)
        pooled = samples.pooled()
        if pooled.shape[0] > est["max_points"]:
            idx = np.random.Generator(np.random.Philox(key=cfg.seed)).choice(
                pooled.shape[0], size=est["max_points"], replace=False)
            pooled = pooled[np.sort(idx)]
        h_routes["knn"] = infotheory.knn_entropy(pooled, k=est["k"],
                                                 se_seed=cfg.seed).value
        route = ("gaussian_closed_form" if "gaussian_closed_form" in h_routes
                 else "knn")
        h_marginal = infotheory.InfoEstimate(
            value=h_routes[route], quantity="entropy", estimator=route,
            n_samples=pooled.shape[0])
        cap = bounds.entropy_power_cap(h_marginal, n)
        disagree = (len(h_routes) == 2
                    and abs(h_routes["knn"] - h_routes["gaussian_closed_form"]) > 0.1)
        extras["marginal_entropy_routes_bits"] = h_routes
        extras["marginal_entropy_route_disagreement"] = disagree

    mstep_values = {}
    for m in sorted(set(cfg.horizons)):
        if "mstep" not in want:
            break
        mi = bounds.gaussian_mstep_mi(model, m)
        value = bounds.mstep_bound(model, m, mi, n_freq=est["n_freq"])
        mstep_values[m] = (value, mi)
        if cap is not None:
            inputs = dict(base_inputs)
            inputs["m"] = m
            reports.append(bounds.cap_report(cap, value, inputs=inputs))
    if 1 in mstep_values:
        extras["mstep_m1_equals_spectral"] = mstep_values[1][0] == spectral_bound

    for m in sorted(set(cfg.horizons)):
        for pred_spec in cfg.predictors:
            pred = _build_predictor(pred_spec, cfg, m, samples)
            if pred is None:
                continue
            report = predict.run_predictor(pred, samples,
                                           tail_fraction=est["tail_fraction"])
            gate = _innovation_gate(report, samples, m, est, cfg.seed)
            inputs = dict(base_inputs)
            inputs["predictor_spec"] = pred_spec
            if m == 1:
                if "spectral" in want:
                    reports.append(bounds.gap_report(
                        spectral_bound, report, gate, bound_kind=spectral_kind,
                        inputs={**inputs, "route": "theoretical_spectrum"}))
                if "prediction_1step" in want:
                    p1 = bounds.estimation_bound(h_rate, n)
                    se_rel = (2.0 * LOG2 * h_rate.std_error
                              if math.isfinite(h_rate.std_error) else 0.0)
                    dim_joint = (h_rate.embedding_depth + 1) * n
                    reports.append(bounds.gap_report(
                        p1, report, gate, bound_kind="prediction_1step",
                        extra_se=se_rel,
                        bias_tolerance=_knn_bias_tolerance(est, dim_joint),
                        inputs={**inputs, "route": "knn_entropy_rate",
                                "h_rate_bits": h_rate.value}))
                if "nongaussian" in want:
                    ng = bounds.nongaussian_bound(spec, j_rate)
                    se_rel = (2.0 * LOG2 * j_rate.std_error
                              if math.isfinite(j_rate.std_error) else 0.0)
                    dim_joint = (j_rate.embedding_depth + 1) * n
                    reports.append(bounds.gap_report(
                        ng, report, gate, bound_kind="nongaussian",
                        extra_se=se_rel,
                        bias_tolerance=_knn_bias_tolerance(est, dim_joint),
                        inputs={**inputs, "route": "spectral+negentropy",
                                "negentropy_bits": j_rate.value,
                                "j_flags": list(j_rate.flags)}))
            if m in mstep_values:
                value, mi = mstep_values[m]
                ms_inputs = {**inputs, "route": "spectral*2^(2I)",
                             "mi_route": mi.estimator, "mi_bits": mi.value}
                if cfg.paper_literal_mstep:
                    ms_inputs["paper_literal_additive_suspected_typo"] = \
                        bounds.mstep_bound_paper_literal(model, m, mi,
                                                         n_freq=est["n_freq"])
                reports.append(bounds.gap_report(
                    value, report, gate, bound_kind=f"prediction_mstep({m})",
                    inputs=ms_inputs))
    return reports, extras


def evaluate_recursive(cfg: ExperimentConfig) -> tuple[list, dict]:
    """Bound pipeline for a recursive system: the g-stream covariance is
    bounded by the entropy power of the (white) driving noise."""
    spec = cfg.recursive
    est = cfg.estimators
    states, gvals = procgen.simulate_recursive(spec, cfg.length, cfg.paths,
                                               cfg.seed)
    report = predict.summarize_stream(gvals, kind=f"recursive_g({spec.g_form})",
                                      tail_fraction=est["tail_fraction"])
    h_noise = infotheory.InfoEstimate(
        value=infotheory.iid_entropy_bits(spec.noise),
        quantity="entropy_rate", estimator="family_closed_form",
        std_error=0.0, params={"family": spec.noise.family})
    bound = bounds.recursive_bound(h_noise, spec.dim)
    gate = diagnostics.gaussian_whitening_check(
        report, gvals, alpha=est["alpha"], n_lags=est["n_lags"],
        embed=est["embed"], k=est["k"], max_points=est["max_points"],
        seed=cfg.seed)
    inputs = {"recursive": spec.name or spec.to_dict(),
              "spec_hash": bounds.model_hash(spec),
              "seed": cfg.seed, "noise_entropy_bits": h_noise.value,
              "route": "family_closed_form"}
    rep = bounds.gap_report(bound, report, gate, bound_kind="recursive",
                            inputs=inputs)
    return [rep], {"g_stream_cov": report.error_cov.tolist()}


def evaluate_learning(cfg: ExperimentConfig) -> tuple[list, dict]:
    params = dict(cfg.learning or {})
    params.setdefault("seed", cfg.seed)
    res = bounds.conjugate_gaussian_demo(**params)
    rep = bounds.compare_bound(
        res.bound, res.achieved, res.achieved_se, bound_kind="learning",
        inputs={"demo": "conjugate_gaussian", **params,
                "posterior_var": res.posterior_var,
                "route": "gaussian_closed_form"})
    return [rep], {"learning_demo": {"bound": res.bound,
                                     "achieved": res.achieved,
                                     "achieved_se": res.achieved_se}}


def run_experiment(cfg: ExperimentConfig) -> dict:
    reports: list[bounds.BoundReport] = []
    extras: dict = {}
    if cfg.model is not None:
        r, e = evaluate_model(cfg)
        reports += r
        extras.update(e)
    if cfg.recursive is not None:
        r, e = evaluate_recursive(cfg)
        reports += r
        extras.update(e)
    if cfg.learning is not None:
        r, e = evaluate_learning(cfg)
        reports += r
        extras.update(e)
    return {"meta": {**cfg.meta(), "extras": extras},
            "reports": [r.to_dict() for r in reports]}


def run_catalog_sweep(paths: int = 24, length: int = 4096, seed: int = 1234,
                      horizons=(1, 3), estimators: dict | None = None) -> list:
    """Soundness sweep: every catalog model x baseline predictors x bound
    kinds, plus the recursive specs.  Returns BoundReport dicts; any
    genuine violation raises BoundViolationError from inside gap_report.
    """
    est = dict(ESTIMATOR_DEFAULTS)
    est.update(estimators or {})
    all_reports: list = []
    for name, model in catalog.process_models().items():
        preds = [{"kind": "zero"}, {"kind": "model_mstep"}]
        if model.dim == 1:
            order = model.p if (model.q == 0 and model.p > 0) else \
                (2 if model.p + model.q == 0 else 12)
            preds.append({"kind": "levinson", "order": order})
            if model.p + model.q >= 2:
                preds.append({"kind": "truncated", "order": 1})
        else:
            preds.append({"kind": "multichannel_levinson", "order": max(model.p, 4)})
        cfg = ExperimentConfig(
            seed=seed + hash(name) % 100_000, paths=paths, length=length,
            model=model, predictors=preds, horizons=list(horizons),
            estimators=est)
        r, _ = evaluate_model(cfg)
        all_reports += [x.to_dict() for x in r]
    for name, spec in catalog.recursive_specs().items():
        cfg = ExperimentConfig(
            seed=seed + hash(name) % 100_000, paths=paths, length=length,
            recursive=spec, estimators=est)
        r, _ = evaluate_recursive(cfg)
        all_reports += [x.to_dict() for x in r]
    return all_reports


# ---------------------------------------------------------------------------
# commands

def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    if cfg.model is not None:
        samples = procgen.simulate(cfg.model, cfg.length, cfg.paths, cfg.seed,
                                   burn_in=cfg.burn_in, workers=cfg.workers)
        samples.to_csv(out / "samples.csv")
    elif cfg.recursive is not None:
        states, gvals = procgen.simulate_recursive(cfg.recursive, cfg.length,
                                                   cfg.paths, cfg.seed)
        states.to_csv(out / "samples.csv")
        gvals.to_csv(out / "g_values.csv")
    else:
        raise ConfigError("simulate needs a 'model' or 'recursive' entry")
    _dump_json(cfg.meta(), out / "meta.json")
    return EXIT_OK


def cmd_predict(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.model is None:
        raise ConfigError("predict needs a 'model' entry")
    out.mkdir(parents=True, exist_ok=True)
    est = cfg.estimators
    samples = procgen.simulate(cfg.model, cfg.length, cfg.paths, cfg.seed,
                               burn_in=cfg.burn_in, workers=cfg.workers)
    results = []
    for m in sorted(set(cfg.horizons)):
        for pred_spec in cfg.predictors:
            pred = _build_predictor(pred_spec, cfg, m, samples)
            if pred is None:
                continue
            report = predict.run_predictor(pred, samples,
                                           tail_fraction=est["tail_fraction"])
            results.append(report.to_dict())
    _dump_json({"meta": cfg.meta(), "predictor_reports": results},
               out / "predictor_reports.json")
    _dump_json(cfg.meta(), out / "meta.json")
    return EXIT_OK


def cmd_bound(cfg: ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(cfg)
    _dump_json(result, out / "bound_reports.json")
    _dump_json(result["meta"], out / "meta.json")
    worst = min((r["gap_ratio"] for r in result["reports"]), default=float("inf"))
    print(f"{len(result['reports'])} bound reports written to "
          f"{out / 'bound_reports.json'} (min gap ratio {worst:.4f})")
    return EXIT_OK


def cmd_diagnose(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.model is None:
        raise ConfigError("diagnose needs a 'model' entry")
    out.mkdir(parents=True, exist_ok=True)
    est = cfg.estimators
    samples = procgen.simulate(cfg.model, cfg.length, cfg.paths, cfg.seed,
                               burn_in=cfg.burn_in, workers=cfg.workers)
    verdicts = []
    for m in sorted(set(cfg.horizons)):
        for pred_spec in cfg.predictors:
            pred = _build_predictor(pred_spec, cfg, m, samples)
            if pred is None:
                continue
            report = predict.run_predictor(pred, samples,
                                           tail_fraction=est["tail_fraction"])
            gate = _innovation_gate(report, samples, m, est, cfg.seed)
            verdicts.append({"predictor": pred_spec, "m": m,
                             "verdict": gate.to_dict()})
    _dump_json(verdicts, out / "diagnostics.json")
    _dump_json(cfg.meta(), out / "meta.json")
    return EXIT_OK


def cmd_report(run_dir: Path, out: Path | None = None) -> int:
    src = run_dir / "bound_reports.json"
    if not src.exists():
        raise ConfigError(f"no bound_reports.json in {run_dir}")
    result = json.loads(src.read_text())
    rows = []
    meta = result.get("meta", {})
    model_name = (meta.get("model") or {}).get("name") or \
        ((meta.get("recursive") or {}).get("name")) or meta.get("name", "")
    for r in result["reports"]:
        rows.append([
            model_name or r["inputs"].get("model", ""),
            r["inputs"].get("predictor", ""),
            str(r["inputs"].get("m", "")),
            r["bound_kind"],
            f"{r['bound_value']:.10g}",
            f"{r['achieved_value']:.10g}",
            f"{r['gap_ratio']:.10g}",
            r["verdict"],
            f"{r['eps_mc']:.6g}",
        ])
    header = "model,predictor,m,bound_kind,bound,achieved,gap_ratio,verdict,eps_mc"
    text = header + "\n" + "\n".join(",".join(row) for row in rows) + "\n"
    dest = (out or run_dir) / "report.csv"
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(text)
    print(f"{len(rows)} rows written to {dest}")
    return EXIT_OK


def _classify_error(exc: Exception) -> int:
    if isinstance(exc, BoundViolationError):
        return EXIT_VIOLATION
    if isinstance(exc, (SingularSpectrumError, DegenerateProcessError,
                        DegenerateSeriesError, DivergenceError,
                        SampleSizeError, DimensionError)):
        return EXIT_DEGENERATE
    if isinstance(exc, (ConfigError, OSError, KeyError)):
        return EXIT_CONFIG
    if isinstance(exc, EntroboundError):
        return EXIT_CONFIG
    raise exc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="entrobound",
        description="Entropy-based variance bounds on time-series prediction: "
                    "simulate, predict, bound, diagnose, report.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "predict", "bound", "diagnose"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override config.samples.seed")
        p.add_argument("--workers", type=int, default=None,
                       help="simulation worker threads (output-invariant)")
    p = sub.add_parser("report")
    p.add_argument("--run", required=True, help="directory of a completed bound run")
    p.add_argument("--out", default=None, help="output directory (default: run dir)")
    args = parser.parse_args(argv)

    try:
        if args.command == "report":
            return cmd_report(Path(args.run), Path(args.out) if args.out else None)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.workers is not None:
            cfg.workers = args.workers
        out = Path(args.out)
        dispatch = {"simulate": cmd_simulate, "predict": cmd_predict,
                    "bound": cmd_bound, "diagnose": cmd_diagnose}
        return dispatch[args.command](cfg, out)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = _classify_error(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
