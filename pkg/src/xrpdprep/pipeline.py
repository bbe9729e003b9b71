"""Stage orchestration: denoise, background, fit, deblur, reconvolution check."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .core import Pattern, Stage, StageRecord, check_same_grid, load_pattern, save_pattern, save_record
from .deblur import deblur_full_pattern, reconvolve_check
from .exceptions import DomainError, StageError
from .hlsvd import hlsvd_fit, reconstruct
from . import morphology
from .morphology import background_details, disk_se, reshape_to_image
from .wavelet import daubechies_filter, default_levels, denoise

__all__ = [
    "PipelineConfig",
    "run_pipeline",
    "emit_figure_tables",
    "parse_config_text",
    "STAGE_ORDER",
]

STAGE_ORDER = ("denoise", "background", "fit", "deblur", "reconvolve")


def _parse_k(value):
    if isinstance(value, str):
        v = value.strip().lower()
        if v == "auto":
            return "auto"
        value = int(v)
    if int(value) != value or value < 1:
        raise DomainError(f"K must be 'auto' or a positive integer, got {value!r}")
    return int(value)


def _parse_range(value):
    if value in (None, "", "none"):
        return None
    if isinstance(value, str):
        lo, hi = (float(v) for v in value.split(":"))
    else:
        lo, hi = (float(v) for v in value)
    if not lo < hi:
        raise DomainError(f"fit range needs lo < hi, got {value!r}")
    return (lo, hi)


def _parse_bool(value):
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise DomainError(f"not a boolean: {value!r}")


@dataclass
class PipelineConfig:
    input: str
    standard: str
    output_dir: str
    wavelet_order: int = 2
    levels: int | None = None
    bg_radius: int = 3
    K: int | str = "auto"
    lr_iterations: int = 5
    damping_threshold: float = 0.0
    prominence: float = 0.05
    deblur_input: str = "signal"
    fit_range: tuple | None = None
    fit_method: str = "real"
    skip_denoise: bool = False
    skip_background: bool = False
    skip_fit: bool = False

    def __post_init__(self):
        self.wavelet_order = int(self.wavelet_order)
        if not 1 <= self.wavelet_order <= 6:
            raise DomainError("wavelet_order must be in 1..6")
        if self.levels in ("", "auto", "none"):
            self.levels = None
        if self.levels is not None:
            self.levels = int(self.levels)
            if self.levels < 1:
                raise DomainError("levels must be >= 1")
        self.bg_radius = int(self.bg_radius)
        if self.bg_radius < 1:
            raise DomainError("bg_radius must be >= 1")
        self.K = _parse_k(self.K)
        self.lr_iterations = int(self.lr_iterations)
        if self.lr_iterations < 1:
            raise DomainError("lr_iterations must be >= 1")
        self.damping_threshold = float(self.damping_threshold)
        if self.damping_threshold < 0:
            raise DomainError("damping_threshold must be >= 0")
        self.prominence = float(self.prominence)
        if not 0 <= self.prominence <= 1:
            raise DomainError("prominence must be in [0, 1]")
        if self.deblur_input not in ("signal", "model"):
            raise DomainError("deblur_input must be 'signal' or 'model'")
        if self.fit_method not in ("real", "analytic"):
            raise DomainError("fit_method must be 'real' or 'analytic'")
        self.fit_range = _parse_range(self.fit_range)
        for name in ("skip_denoise", "skip_background", "skip_fit"):
            setattr(self, name, _parse_bool(getattr(self, name)))
        if self.skip_fit and self.deblur_input == "model":
            raise DomainError("deblur_input=model needs the fit stage")

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**mapping)

    @classmethod
    def from_file(cls, path, **overrides):
        with open(path) as fh:
            values = parse_config_text(fh.read())
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                v = "auto" if f.name == "levels" else "none"
            elif f.name == "fit_range":
                v = f"{v[0]!r}:{v[1]!r}"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def parse_config_text(text):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise DomainError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in s.split("=", 1))
        values[key] = value
    return values


class _Run:
    def __init__(self, out):
        self.out = out
        self.timing = {}
        self.stages = []

    def stage(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except StageError:
            raise
        except Exception as exc:  # tag with the failing stage
            raise StageError(name, exc) from exc
        self.timing[name] = time.perf_counter() - t0
        self.stages.append(name)
        return result

    def record(self, stage, pattern, filename=None, **meta):
        save_record(StageRecord(stage, pattern, meta), self.out / (filename or f"{Stage(stage).value}.xy"))


def _process_input(run, raw, cfg, basis, levels, tag):
    if cfg.skip_denoise:
        den, noise = raw, raw.with_intensity(np.zeros(len(raw)))
    else:
        den, noise = run.stage(f"denoise{tag}", denoise, raw, basis, levels)
    if cfg.skip_background:
        bg = raw.with_intensity(np.zeros(len(raw)))
        clipped = np.maximum(den.intensity, 0.0)
        free = den.with_intensity(clipped)
        n_clamped = int(np.count_nonzero(den.intensity < 0))
        layout = None
    else:
        res = run.stage(f"background{tag}", background_details, den, cfg.bg_radius)
        bg, free, n_clamped, layout = res.background, res.corrected, res.n_clamped, res.layout
    return den, noise, bg, free, n_clamped, layout


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every stage, write the stage files and ``report.json``; return the report."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(out)
    report = {
        "config": {k: v for k, v in asdict(config).items()},
        "config_text": config.to_text(),
        "stage_order": list(STAGE_ORDER),
        "skipped": [s for s, flag in (("denoise", config.skip_denoise),
                                      ("background", config.skip_background),
                                      ("fit", config.skip_fit)) if flag],
    }
    try:
        raw = run.stage("load", load_pattern, config.input)
        std_raw = run.stage("load_standard", load_pattern, config.standard)
        run.stage("check_grid", check_same_grid, raw, std_raw)
        basis = daubechies_filter(config.wavelet_order)
        levels = config.levels if config.levels is not None else default_levels(len(raw))
        meta = {"source": config.input, "wavelet_order": config.wavelet_order, "levels": levels,
                "bg_radius": config.bg_radius}
        run.record(Stage.RAW, raw, **meta)

        den, noise, bg, free, n_clamped, layout = _process_input(run, raw, config, basis, levels, "")
        _, _, std_bg, std_free, _, _ = _process_input(run, std_raw, config, basis, levels, "_standard")
        run.record(Stage.DENOISED, den, **meta)
        save_pattern(noise, out / "noise.xy", {"stage": "noise", **meta})
        run.record(Stage.BACKGROUND, bg, **meta)
        run.record(Stage.BACKGROUND_FREE, free, **meta, n_clamped=n_clamped)
        save_pattern(std_free, out / "standard_background_free.xy", {"stage": "standard_background_free"})

        unclamped = den.intensity - bg.intensity
        identity = unclamped + bg.intensity + noise.intensity - raw.intensity
        report["reconstruction_identity_max_abs"] = float(np.abs(identity).max())
        report["n_clamped"] = n_clamped
        report["reshape"] = None if layout is None else {"length": layout.length, "width": layout.width}

        deblur_source = free
        if not config.skip_fit:
            target = free if config.fit_range is None else free.window(*config.fit_range)
            model = run.stage("fit", hlsvd_fit, target, config.K, method=config.fit_method)
            recon = target.with_intensity(reconstruct(model, target.theta))
            with open(out / "model.json", "w") as fh:
                json.dump(model.to_dict(), fh, indent=2, sort_keys=True)
            save_pattern(recon, out / "recon.xy", {"stage": "fit_reconstruction"})
            report["fit"] = {
                k: model.metadata[k]
                for k in ("K", "K_requested", "rank_used", "relative_residual", "residual_norm",
                          "singular_values", "gap_ratios", "growing_modes", "method")
            }
            if config.deblur_input == "model":
                y = free.intensity.copy()
                i0, i1 = (0, len(free) - 1) if config.fit_range is None else free.index_range(*config.fit_range)
                y[i0 : i1 + 1] = np.maximum(recon.intensity, 0.0)
                deblur_source = free.with_intensity(y)
        report["deblur_input"] = config.deblur_input

        deblurred, ranges = run.stage(
            "deblur", deblur_full_pattern, deblur_source, std_free,
            config.lr_iterations, config.damping_threshold, config.prominence,
        )
        run.record(Stage.DEBLURRED, deblurred, **meta, psf_mode="per-range")
        with open(out / "ranges.json", "w") as fh:
            json.dump([r.to_dict() for r in ranges], fh, indent=2)

        check = run.stage(
            "reconvolve", reconvolve_check, deblurred, std_free, bg, noise, raw, ranges=ranges
        )
        run.record(Stage.RECONVOLVED, check.reconvolved, **meta)
        save_pattern(check.residue, out / "residue.xy", {"stage": "residue"})
        report["ranges"] = [r.to_dict() for r in ranges]
        report["residue"] = check.stats
        report["stages_run"] = run.stages
        report["status"] = "ok"
    except StageError as exc:
        report["status"] = "failed"
        report["failed_stage"] = exc.stage
        report["error"] = str(exc.cause)
        raise
    finally:
        report["timing"] = run.timing
        with open(out / "report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True, default=str)
    return report


_FIG_SOURCES = {
    "raw": "raw.xy",
    "denoised": "denoised.xy",
    "background": "background.xy",
    "background_free": "background_free.xy",
    "deblurred": "deblurred.xy",
    "residue": "residue.xy",
}


def _write_series(path, pattern: Pattern, name="intensity"):
    with open(path, "w") as fh:
        fh.write(f"theta,{name}\n")
        for t, y in zip(pattern.theta.tolist(), pattern.intensity.tolist()):
            fh.write(f"{t:.17g},{y:.17g}\n")


def _write_image(path, pixels):
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        rows, cols = pixels.shape
        for r in range(rows):
            for c in range(cols):
                fh.write(f"{r},{c},{pixels[r, c]:.17g}\n")


def emit_figure_tables(run_dir, out_dir=None) -> list:
    """Write the background-procedure and final-result panels as CSV tables."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = run_dir / "report.json"
    if not report_path.exists():
        raise StageError("figures", FileNotFoundError(f"missing run report {report_path}"))
    with open(report_path) as fh:
        report = json.load(fh)
    if report.get("status") != "ok":
        raise StageError("figures", DomainError("run did not complete"))
    stages = {}
    for stage, name in _FIG_SOURCES.items():
        path = run_dir / name
        if not path.exists():
            raise StageError("figures", FileNotFoundError(f"missing artifact for stage '{stage}': {path}"))
        stages[stage] = load_pattern(path, allow_negative=True)
    radius = int(report["config"]["bg_radius"])
    image, _ = reshape_to_image(stages["denoised"].intensity)
    opened = morphology.open(image, disk_se(radius))

    written = []

    def emit(name, writer, *args):
        path = out_dir / name
        writer(path, *args)
        written.append(path)

    emit("fig2_original.csv", _write_series, stages["raw"])
    emit("fig2_reshaped.csv", _write_image, image.pixels)
    emit("fig2_opened.csv", _write_image, opened.pixels)
    emit("fig2_background.csv", _write_series, stages["background"])
    emit("fig3_original.csv", _write_series, stages["raw"])
    emit("fig3_cleaned.csv", _write_series, stages["background_free"])
    emit("fig3_deblurred.csv", _write_series, stages["deblurred"])
    emit("fig3_residue.csv", _write_series, stages["residue"], "residue")
    return written
