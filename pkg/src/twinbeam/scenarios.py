"""Scenario runner: one scenario per reproduced figure, plus trace analysis.

Each run returns a :class:`NoiseReport` holding a JSON-ready tree and flat
plot tables.  Every measured point carries the matching oracle prediction.
Nothing in a report depends on wall-clock time or file paths, so identical
configs give byte-identical output.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig
from .errors import ConfigError, InsufficientSelectionError, TwinBeamError
from .oracle import conditional_variance, predict, predicted_success_rate
from .selection import (
    ConditionalResult,
    SelectionBand,
    check_disjoint,
    multi_select,
    partition,
    select,
    sweep_bandwidth,
)
from .source import (
    CovarianceMatrix,
    TwinBeamModel,
    add_dark_noise,
    default_full_scale,
    quantize,
    sample_trace,
    shot_calibration_trace,
)
from .stats import NoiseLevel, Trace, TraceMeta, fano, from_db, gemellity, histogram, to_db, variance
from .traceio import atomic_write_text

DEFAULT_SWEEP = (0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
TABLE_FORMATS = ("csv", "json")


@dataclass
class NoiseReport:
    data: dict
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)

    def to_json(self) -> str:
        body = dict(self.data)
        body["tables"] = {name: {"columns": cols, "rows": rows} for name, (cols, rows) in self.tables.items()}
        return json.dumps(_clean(body), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def table_csv(self, name: str) -> str:
        cols, rows = self.tables[name]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in row])
        return buf.getvalue()

    def table_json(self, name: str) -> str:
        cols, rows = self.tables[name]
        records = [dict(zip(cols, row)) for row in rows]
        return json.dumps(_clean(records), indent=2, allow_nan=False) + "\n"

    def write(self, out_dir, fmt: str = "csv") -> list[Path]:
        if fmt not in TABLE_FORMATS:
            raise ConfigError(f"format must be csv or json, got {fmt!r}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "report.json"]
        atomic_write_text(written[0], self.to_json())
        for name in self.tables:
            path = out / f"{name}.{fmt}"
            atomic_write_text(path, self.table_csv(name) if fmt == "csv" else self.table_json(name))
            written.append(path)
        return written


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def derived_seed(base: int, *path: int) -> int:
    """Independent per-point seed, stable across runs and platforms."""
    return int(np.random.SeedSequence(base, spawn_key=path).generate_state(1)[0])


def _db(x: float) -> float | None:
    return to_db(x) if x > 0 else None


# --- acquisition -----------------------------------------------------------


def effective_covariance(cfg: ScenarioConfig, cov: CovarianceMatrix) -> CovarianceMatrix:
    """Covariance of the recorded samples: dark noise and quantizer noise add to the diagonal."""
    extra = cfg.model.dark_variance
    if cfg.quantizer is not None:
        step = 2.0 * full_scale_for(cfg, cov) / 2**cfg.quantizer.bits
        extra += step * step / 12.0
    return CovarianceMatrix(cov.v_s + extra, cov.v_i + extra, cov.cov)


def full_scale_for(cfg: ScenarioConfig, cov: CovarianceMatrix) -> float:
    q = cfg.quantizer
    return q.full_scale if q.full_scale is not None else default_full_scale(cov, q.headroom)


def acquire(cfg: ScenarioConfig, cov: CovarianceMatrix, trace_seed: int, dark_seed: int, n: int | None = None) -> Trace:
    """Sample -> dark noise -> quantizer, as configured."""
    trace = sample_trace(cov, cfg.n if n is None else n, trace_seed, cfg.sample_rate_hz, cfg.demod_frequency_hz)
    trace = add_dark_noise(trace, cfg.model.dark_variance, dark_seed)
    if cfg.quantizer is not None:
        trace = quantize(trace, cfg.quantizer.bits, full_scale_for(cfg, cov))
    return trace


@dataclass(frozen=True)
class ShotReference:
    variance: float
    expected: float
    dark: float
    samples: Trace | None = None

    def to_dict(self) -> dict:
        return {
            "shot_variance": self.variance,
            "expected_shot_variance": self.expected,
            "dark_variance_subtracted": self.dark,
            "calibration_samples": None if self.samples is None else self.samples.length,
        }


def calibration_trace(cfg: ScenarioConfig) -> Trace:
    """Balanced-splitter reference: two independent shot-noise records plus detector dark noise."""
    base = cfg.seeds.calibration
    s = shot_calibration_trace(cfg.n_calibration, derived_seed(base, 0))
    i = shot_calibration_trace(cfg.n_calibration, derived_seed(base, 1))
    trace = Trace(s, i, TraceMeta(cfg.sample_rate_hz, cfg.demod_frequency_hz, base))
    return add_dark_noise(trace, cfg.model.dark_variance, derived_seed(cfg.seeds.dark, 99))


def shot_reference(cfg: ScenarioConfig) -> ShotReference:
    expected = 1.0 + cfg.model.dark_variance
    dark = cfg.model.dark_variance if cfg.subtract_dark else 0.0
    if cfg.shot_reference == "ideal":
        return ShotReference(expected, expected, dark)
    cal = calibration_trace(cfg)
    return ShotReference(variance(cal.signal), expected, dark, cal)


def _predicted_fano(var: float, shot: ShotReference) -> float:
    return (var - shot.dark) / (shot.expected - shot.dark)


# --- point records ----------------------------------------------------------


def point_record(
    params: dict,
    outcome: ConditionalResult | InsufficientSelectionError,
    cov: CovarianceMatrix,
    band: SelectionBand,
    shot: ShotReference,
    min_accepted: int,
) -> dict:
    pred = predict(cov, band)
    predicted_linear = _predicted_fano(pred.selected_variance, shot)
    record = {
        "parameters": params,
        "band": band.to_dict(),
        "predicted": {
            "linear": predicted_linear,
            "db": _db(predicted_linear),
            "success_rate": pred.success_rate,
            "narrow_limit_db": _db(_predicted_fano(pred.narrow_limit_variance, shot)),
            "regression_slope": pred.regression_slope,
        },
    }
    if isinstance(outcome, InsufficientSelectionError):
        record.update(
            error="insufficient_selection",
            accepted_count=outcome.accepted_count,
            success_rate=outcome.success_rate,
            measured=None,
            compared=False,
        )
        return record
    lo, hi = outcome.interval(0.95)
    se = outcome.standard_error
    # the standard error is taken at the predicted level so it does not fluctuate with the estimate
    se_pred = predicted_linear * math.sqrt(2.0 / (outcome.accepted_count - 1))
    deviation = (outcome.noise.linear - predicted_linear) / se_pred if se_pred > 0 else None
    record.update(
        measured=outcome.noise.to_dict(),
        accepted_count=outcome.accepted_count,
        success_rate=outcome.success_rate,
        standard_error=se,
        interval_95={"linear": [lo, hi], "db": [_db(lo), _db(hi)]},
        deviation_in_se=deviation,
        compared=outcome.accepted_count >= min_accepted,
        within_3se=None if deviation is None else abs(deviation) <= 3.0,
    )
    return record


def _measured_db(record: dict):
    m = record.get("measured")
    if not m or m["db"] == "below_floor":
        return None
    return m["db"]


def _provenance(cfg: ScenarioConfig) -> dict:
    return {
        "config_sha256": cfg.digest(),
        "seeds": {"trace": cfg.seeds.trace, "dark": cfg.seeds.dark, "calibration": cfg.seeds.calibration},
        "version": __version__,
        "scenario": cfg.scenario,
    }


def unconditioned_stats(trace: Trace, shot: ShotReference) -> dict:
    return {
        "signal": fano(trace.signal, shot.variance, shot.dark).to_dict(),
        "idler": fano(trace.idler, shot.variance, shot.dark).to_dict(),
        "gemellity": gemellity(trace.signal, trace.idler, shot.dark).to_dict(),
    }


def _base_report(cfg: ScenarioConfig, cov: CovarianceMatrix, shot: ShotReference) -> dict:
    return {
        "provenance": _provenance(cfg),
        "config": cfg.to_dict(),
        "covariance": cov.to_dict(),
        "recorded_covariance": effective_covariance(cfg, cov).to_dict(),
        "calibration": shot.to_dict(),
    }


# --- scenarios --------------------------------------------------------------


def _bandwidth_sweep(cfg: ScenarioConfig) -> NoiseReport:
    cov = cfg.model.covariance()
    eff = effective_covariance(cfg, cov)
    shot = shot_reference(cfg)
    trace = acquire(cfg, cov, cfg.seeds.trace, cfg.seeds.dark)
    widths = [cfg.half_width_of(w) for w in cfg.half_widths]
    points, rows = [], []
    for (w, outcome), raw in zip(sweep_bandwidth(trace, cfg.center, widths, shot.variance, shot.dark), cfg.half_widths):
        band = SelectionBand(cfg.center, w)
        rec = point_record({"width": raw, "half_width": w}, outcome, eff, band, shot, cfg.min_accepted)
        points.append(rec)
        rows.append([w, _measured_db(rec), rec["predicted"]["db"], rec["success_rate"], rec["accepted_count"]])
    data = _base_report(cfg, cov, shot)
    data["unconditioned"] = unconditioned_stats(trace, shot)
    data["points"] = points
    cols = ["half_width_sigma0", "measured_db", "predicted_db", "success_rate", "accepted_count"]
    return NoiseReport(data, {"bandwidth_sweep": (cols, rows)})


def _gemellity_grid(cfg: ScenarioConfig) -> list[tuple[dict, TwinBeamModel]]:
    m = cfg.model
    if cfg.loss_grid:
        return [({"loss": L}, replace(m, loss_signal=L, loss_idler=L)) for L in cfg.loss_grid]
    out = []
    for g_db in cfg.gemellity_db_grid:
        try:
            out.append(({"loss": m.loss_signal, "gemellity_db": g_db}, replace(m, gemellity=from_db(g_db))))
        except TwinBeamError as err:
            raise ConfigError(f"gemellity_db_grid value {g_db}: {err}") from err
    return out


def _gemellity_sweep(cfg: ScenarioConfig) -> NoiseReport:
    shot = shot_reference(cfg)
    band = SelectionBand(cfg.center, cfg.half_width_of(cfg.half_width))
    points, rows = [], []
    for k, (params, model) in enumerate(_gemellity_grid(cfg)):
        cov = model.covariance()
        eff = effective_covariance(cfg, cov)
        trace = acquire(cfg, cov, derived_seed(cfg.seeds.trace, k), derived_seed(cfg.seeds.dark, k))
        try:
            outcome = select(trace, band, shot.variance, shot.dark)
        except InsufficientSelectionError as err:
            outcome = err
        rec = point_record(params, outcome, eff, band, shot, cfg.min_accepted)
        g_measured = gemellity(trace.signal, trace.idler, shot.dark)
        rec["gemellity"] = {
            "configured": NoiseLevel(cov.gemellity).to_dict(),
            "measured": g_measured.to_dict(),
        }
        rec["covariance"] = cov.to_dict()
        rec["sub_poissonian"] = None if rec["measured"] is None else rec["measured"]["linear"] < 1.0
        points.append(rec)
        g_db = g_measured.db
        rows.append([params["loss"], g_db, _measured_db(rec), rec["predicted"]["db"]])
    data = _base_report(cfg, cfg.model.covariance(), shot)
    data["points"] = points
    cols = ["loss", "gemellity_db", "measured_db", "predicted_db"]
    return NoiseReport(data, {"gemellity_sweep": (cols, rows)})


def _multiband(cfg: ScenarioConfig) -> NoiseReport:
    cov = cfg.model.covariance()
    eff = effective_covariance(cfg, cov)
    shot = shot_reference(cfg)
    trace = acquire(cfg, cov, cfg.seeds.trace, cfg.seeds.dark)
    hw = cfg.half_width_of(cfg.half_width)
    bands = [SelectionBand(c, hw) for c in cfg.centers]
    try:
        check_disjoint(bands)
    except TwinBeamError as err:
        raise ConfigError(f"multiband centers: {err}") from err
    sigma_i = math.sqrt(eff.v_i)
    n = trace.length
    points, rows = [], []
    for band, outcome in zip(bands, multi_select(trace, bands, shot.variance, shot.dark, strict=False)):
        rec = point_record({"center": band.center}, outcome, eff, band, shot, cfg.min_accepted)
        p = rec["predicted"]["success_rate"]
        rate_se = math.sqrt(p * (1 - p) / n)
        rec["rate_standard_error"] = rate_se
        rec["rate_deviation_in_se"] = (rec["success_rate"] - p) / rate_se if rate_se > 0 else None
        points.append(rec)
        rows.append([band.center, _measured_db(rec), rec["success_rate"], p])

    # a full tiling of the idler range shows how much of the record multi-band selection keeps
    span = cfg.partition_range * sigma_i
    tiles = partition(cfg.center - span, cfg.center + span, cfg.partition_count)
    kept = 0
    for outcome in multi_select(trace, tiles, shot.variance, shot.dark, strict=False):
        kept += outcome.accepted_count
    in_range = int(np.count_nonzero((trace.idler >= tiles[0].low) & (trace.idler <= tiles[-1].high)))
    data = _base_report(cfg, cov, shot)
    data["unconditioned"] = unconditioned_stats(trace, shot)
    data["points"] = points
    data["partition"] = {
        "range_sigma_idler": cfg.partition_range,
        "band_count": cfg.partition_count,
        "accepted": kept,
        "in_range": in_range,
        "out_of_range": n - kept,
        "accepted_fraction": kept / n,
        "predicted_fraction": predicted_success_rate(sigma_i, SelectionBand(cfg.center, span)),
    }
    cols = ["center_sigma0", "measured_db", "success_rate", "predicted_rate"]
    return NoiseReport(data, {"multiband": (cols, rows)})


def gaussian_fit(samples) -> dict:
    """Maximum-likelihood Gaussian (mean and standard deviation)."""
    x = np.asarray(samples, dtype=np.float64)
    return {"mean": float(x.mean()), "std": float(x.std())}


def _histogram_table(samples, bin_width: float, shot_variance: float) -> tuple[list[str], list[list], dict]:
    fit = gaussian_fit(samples)
    rows = []
    for center, prob in histogram(samples, bin_width):
        if fit["std"] > 0:
            z = (center - fit["mean"]) / fit["std"]
            model = bin_width * math.exp(-0.5 * z * z) / (fit["std"] * math.sqrt(2 * math.pi))
        else:
            model = 1.0 if center == round(fit["mean"] / bin_width) * bin_width else 0.0
        rows.append([center, prob, model])
    fit["fano"] = fit["std"] ** 2 / shot_variance
    return ["bin_center", "probability", "gaussian_fit"], rows, fit


def _histograms(cfg: ScenarioConfig) -> NoiseReport:
    cov = cfg.model.covariance()
    eff = effective_covariance(cfg, cov)
    shot = shot_reference(cfg)
    trace = acquire(cfg, cov, cfg.seeds.trace, cfg.seeds.dark)
    band = SelectionBand(cfg.center, cfg.half_width_of(cfg.half_width))
    try:
        outcome = select(trace, band, shot.variance, shot.dark)
    except InsufficientSelectionError as err:
        outcome = err
    rec = point_record({"center": band.center, "half_width": band.half_width}, outcome, eff, band, shot, cfg.min_accepted)
    tables, fits = {}, {}
    cols, rows, fits["idler"] = _histogram_table(trace.idler, cfg.bin_width, shot.variance)
    tables["histogram_idler"] = (cols, rows)
    if not isinstance(outcome, InsufficientSelectionError):
        cols, rows, fits["conditioned_signal"] = _histogram_table(
            outcome.selected_signal, cfg.conditioned_bin_width, shot.variance
        )
        tables["histogram_conditioned"] = (cols, rows)
    shot_samples = shot.samples.signal if shot.samples is not None else shot_calibration_trace(
        cfg.n_calibration, derived_seed(cfg.seeds.calibration, 0)
    )
    cols, rows, fits["shot"] = _histogram_table(shot_samples, cfg.conditioned_bin_width, shot.variance)
    tables["histogram_shot"] = (cols, rows)
    data = _base_report(cfg, cov, shot)
    data["unconditioned"] = unconditioned_stats(trace, shot)
    data["points"] = [rec]
    data["gaussian_fits"] = fits
    return NoiseReport(data, tables)


def _calibrate(cfg: ScenarioConfig) -> NoiseReport:
    cal = calibration_trace(cfg)
    shot_var = variance(cal.signal)
    expected = 1.0 + cfg.model.dark_variance
    cross = float(np.corrcoef(cal.signal, cal.idler)[0, 1])
    cols, rows, fit = _histogram_table(cal.signal, cfg.bin_width, shot_var)
    data = {
        "provenance": _provenance(cfg),
        "config": cfg.to_dict(),
        "calibration": {
            "shot_variance": shot_var,
            "expected_shot_variance": expected,
            "second_channel_variance": variance(cal.idler),
            "self_fano": fano(cal.signal, shot_var).to_dict(),
            "fano_vs_expected": fano(cal.signal, expected).to_dict(),
            "channel_correlation": cross,
            "calibration_samples": cal.length,
        },
        "gaussian_fits": {"shot": fit},
    }
    return NoiseReport(data, {"histogram_shot": (cols, rows)})


_RUNNERS = {
    "bandwidth_sweep": _bandwidth_sweep,
    "gemellity_sweep": _gemellity_sweep,
    "multiband": _multiband,
    "histograms": _histograms,
    "calibrate": _calibrate,
}


def run_scenario(cfg: ScenarioConfig, out_dir=None, fmt: str = "csv") -> NoiseReport:
    """Run the configured scenario; write report.json and plot tables when ``out_dir`` is given."""
    report = _RUNNERS[cfg.scenario](cfg)
    if out_dir is not None:
        report.write(out_dir, fmt)
    return report


# --- external traces --------------------------------------------------------


def sample_covariance(trace: Trace) -> CovarianceMatrix:
    c = np.cov(np.vstack([trace.signal, trace.idler]), ddof=1)
    v_s, v_i, cv = float(c[0, 0]), float(c[1, 1]), float(c[0, 1])
    bound = math.sqrt(v_s * v_i)
    return CovarianceMatrix(v_s, v_i, math.copysign(min(abs(cv), bound), cv))


def analyze_trace(
    trace: Trace,
    shot_variance: float = 1.0,
    center: float = 0.0,
    half_width: float = 0.1,
    half_widths=DEFAULT_SWEEP,
    dark_variance: float = 0.0,
    min_accepted: int = 500,
) -> NoiseReport:
    """Full report for a recorded trace, with predictions from its own sample covariance."""
    shot = ShotReference(shot_variance, shot_variance, dark_variance)
    cov = sample_covariance(trace)
    band = SelectionBand(center, half_width)
    try:
        outcome = select(trace, band, shot_variance, dark_variance)
    except InsufficientSelectionError as err:
        outcome = err
    main = point_record({"center": center, "half_width": half_width}, outcome, cov, band, shot, min_accepted)
    points, rows = [], []
    for w, res in sweep_bandwidth(trace, center, sorted(half_widths), shot_variance, dark_variance):
        rec = point_record({"half_width": w}, res, cov, SelectionBand(center, w), shot, min_accepted)
        points.append(rec)
        rows.append([w, _measured_db(rec), rec["predicted"]["db"], rec["success_rate"], rec["accepted_count"]])
    data = {
        "provenance": {"version": __version__, "trace_seed": trace.meta.seed, "samples": trace.length},
        "trace_meta": {
            "sample_rate_hz": trace.meta.sample_rate_hz,
            "demod_frequency_hz": trace.meta.demod_frequency_hz,
            "seed": trace.meta.seed,
        },
        "calibration": shot.to_dict(),
        "sample_covariance": cov.to_dict(),
        "unconditioned": unconditioned_stats(trace, shot),
        "conditional_variance_db": _db(_predicted_fano(conditional_variance(cov), shot)),
        "selection": main,
        "points": points,
    }
    cols = ["half_width_sigma0", "measured_db", "predicted_db", "success_rate", "accepted_count"]
    return NoiseReport(data, {"bandwidth_sweep": (cols, rows)})
