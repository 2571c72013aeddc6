"""Command-line orchestration of the pipeline.

Commands: ``synth``, ``ingest-check``, ``sweep``, ``evaluate``, ``train``,
``predict``. Every command reads one strict JSON config (unknown keys are
rejected) plus ``--seed``/``--out``/``--jobs`` overrides, and is
deterministic given (config, seed): reruns produce byte-identical outputs.
Output files are written atomically (temp file + rename).

Config keys (all sections optional unless a command needs them):

    {
      "seed": 7,
      "out": "runs/demo",
      "dataset": "data/manifest.json",
      "model": "joint",                    # face | body | joint | late
      "folds": 5,
      "window": {"short_s": 0.5, "long_face_s": 32.0, "long_body_s": 2.0,
                 "success_fraction": 0.9, "max_long_s": 64.0},
      "train": {"epochs": 5, "class_weight_fussy": 9.0, ...},
      "synth": {"n_infants": 26, "session_s": 600.0, ...,
                "effects": {...}, "face_occlusion": {...}, "body_occlusion": {...}},
      "sweep": {"long_face_s": [1, 2, 4], "long_body_s": [1, 2]},
      "predict_session": "session000",     # optional filter for `predict`
      "model_path": "runs/demo/model.bin"  # for `predict`
    }
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AffectPipeError, ConfigError
from .evaluate import (
    render_curves_csv,
    render_metrics_csv,
    render_trace_csv,
    run_cv,
    run_cv_multi,
    train_on_sessions,
    tsat_curve,
    tspt_curve,
)
from .ingest import load_dataset, load_manifest
from .model import TrainConfig, load_model, save_model
from .synth import EffectSizes, OcclusionConfig, SynthConfig, generate_dataset
from .windows import LONG_WINDOW_SWEEP_S, WindowConfig, build_samples

logger = logging.getLogger(__name__)

_MODEL_CHOICES = ("face", "body", "joint", "late")


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "out"
    dataset: str | None = None
    model: str = "joint"
    folds: int = 5
    window: WindowConfig = field(default_factory=WindowConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig | None = None
    sweep_long_face_s: tuple[float, ...] = LONG_WINDOW_SWEEP_S
    sweep_long_body_s: tuple[float, ...] = LONG_WINDOW_SWEEP_S
    predict_session: str | None = None
    model_path: str | None = None


def _build_strict(cls, data: dict, where: str, defaults=None):
    """Instantiate a dataclass from a dict, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = dict(defaults or {})
    kwargs.update(data)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _build_synth(data: dict) -> SynthConfig:
    data = dict(data)
    nested = {}
    if "effects" in data:
        val = data.pop("effects")
        nested["effects"] = (EffectSizes(**{
            "face_distances": val, "face_aus": val,
            "body_distances": val, "body_speeds": val})
            if isinstance(val, (int, float))
            else _build_strict(EffectSizes, val, "synth.effects"))
    for key in ("face_occlusion", "body_occlusion"):
        if key in data:
            nested[key] = _build_strict(OcclusionConfig, data.pop(key), f"synth.{key}")
    if "face_fps_range" in data:
        data["face_fps_range"] = tuple(data["face_fps_range"])
    cfg = _build_strict(SynthConfig, data, "synth")
    return dataclasses.replace(cfg, **nested)


def load_run_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    known = {"seed", "out", "dataset", "model", "folds", "window", "train",
             "synth", "sweep", "predict_session", "model_path"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    if raw.get("model", "joint") not in _MODEL_CHOICES:
        raise ConfigError(f"model must be one of {_MODEL_CHOICES}")

    cfg = RunConfig(
        seed=int(raw.get("seed", 0)),
        out=raw.get("out", "out"),
        dataset=raw.get("dataset"),
        model=raw.get("model", "joint"),
        folds=int(raw.get("folds", 5)),
        predict_session=raw.get("predict_session"),
        model_path=raw.get("model_path"),
    )
    if "window" in raw:
        cfg.window = _build_strict(WindowConfig, raw["window"], "window")
    # The training seed follows the run seed unless the config pins it.
    train_defaults = {"seed": cfg.seed}
    cfg.train = _build_strict(TrainConfig, raw.get("train", {}), "train",
                              defaults=train_defaults)
    if "synth" in raw:
        cfg.synth = _build_synth(raw["synth"])
    if "sweep" in raw:
        sweep = raw["sweep"]
        extra = set(sweep) - {"long_face_s", "long_body_s"}
        if extra:
            raise ConfigError(f"sweep: unknown keys {sorted(extra)}")
        cfg.sweep_long_face_s = tuple(float(v) for v in sweep.get(
            "long_face_s", LONG_WINDOW_SWEEP_S))
        cfg.sweep_long_body_s = tuple(float(v) for v in sweep.get(
            "long_body_s", LONG_WINDOW_SWEEP_S))
    return cfg


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_sessions(cfg: RunConfig):
    if not cfg.dataset:
        raise ConfigError("this command needs a 'dataset' manifest path in the config")
    manifest = load_manifest(cfg.dataset)
    sessions, exclusions = load_dataset(manifest)
    for sid, reason in exclusions:
        print(f"excluded {sid}: {reason}", file=sys.stderr)
    return sessions


def cmd_synth(cfg: RunConfig) -> int:
    if cfg.synth is None:
        raise ConfigError("synth command needs a 'synth' section")
    synth_cfg = dataclasses.replace(cfg.synth, seed=cfg.seed)
    manifest, truths = generate_dataset(synth_cfg, cfg.out)
    n_bins = sum(len(t.bin_states) for t in truths)
    print(f"wrote {len(manifest.entries)} sessions ({n_bins} bins) under {cfg.out}")
    return 0


def cmd_ingest_check(cfg: RunConfig) -> int:
    sessions = _load_sessions(cfg)
    for s in sessions:
        face_ok = np.mean([b.face_valid for b in s.bins]) if s.bins else 0.0
        body_ok = np.mean([b.body_valid for b in s.bins]) if s.bins else 0.0
        print(f"{s.session_id} infant={s.infant_id} bins={s.n_bins} "
              f"face_valid={face_ok:.3f} body_valid={body_ok:.3f}")
    print(f"loaded {len(sessions)} sessions")
    return 0


def _sweep_cell(sessions, cfg: RunConfig, long_face_s: float, long_body_s: float):
    try:
        window = dataclasses.replace(cfg.window, long_face_s=long_face_s,
                                     long_body_s=long_body_s)
        result = run_cv(sessions, cfg.model, window, cfg.train,
                        k=cfg.folds, seed=cfg.seed)
        return (long_face_s, long_body_s, result.mean_auc_confident,
                result.mean_auc_total, "ok")
    except (AffectPipeError, ValueError) as exc:
        logger.warning("sweep cell (%s, %s) failed: %s", long_face_s, long_body_s, exc)
        reason = str(exc).replace(",", ";").replace("\n", " ")
        return (long_face_s, long_body_s, float("nan"), float("nan"),
                f"failed: {reason}")


def cmd_sweep(cfg: RunConfig, jobs: int = 1) -> int:
    sessions = _load_sessions(cfg)
    cells = sorted(itertools.product(cfg.sweep_long_face_s, cfg.sweep_long_body_s))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(
                lambda c: _sweep_cell(sessions, cfg, *c), cells))
    else:
        rows = [_sweep_cell(sessions, cfg, *c) for c in cells]
    rows.sort(key=lambda r: (r[0], r[1]))
    lines = ["model,long_face_s,long_body_s,mean_auc_confident,mean_auc_total,status"]
    for lf, lb, auc_c, auc_t, status in rows:
        lines.append(f"{cfg.model},{lf:.17g},{lb:.17g},{auc_c:.17g},{auc_t:.17g},{status}")
    _atomic_write(Path(cfg.out) / "sweep.csv", "\n".join(lines) + "\n")
    print(f"wrote {Path(cfg.out) / 'sweep.csv'} ({len(rows)} cells)")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    sessions = _load_sessions(cfg)
    results = run_cv_multi(sessions, [cfg.model], cfg.window, cfg.train,
                           k=cfg.folds, seed=cfg.seed)
    session_labels = {s.session_id: s.labels() for s in sessions}
    curves_tsat = {spec: tsat_curve(r.trace, session_labels)
                   for spec, r in results.items()}
    curves_tspt = {spec: tspt_curve(r.trace) for spec, r in results.items()}
    out = Path(cfg.out)
    _atomic_write(out / "metrics.csv", render_metrics_csv(results))
    _atomic_write(out / "trace.csv", render_trace_csv(results))
    _atomic_write(out / "tsat.csv", render_curves_csv(curves_tsat))
    _atomic_write(out / "tspt.csv", render_curves_csv(curves_tspt))
    for spec, r in results.items():
        print(f"{spec}: mean AUC confident={r.mean_auc_confident:.4f} "
              f"total={r.mean_auc_total:.4f}")
    print(f"wrote metrics.csv, trace.csv, tsat.csv, tspt.csv under {out}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    if cfg.model == "late":
        raise ConfigError("train saves a single network; use face, body, or joint")
    sessions = _load_sessions(cfg)
    model = train_on_sessions(sessions, cfg.model, cfg.window, cfg.train)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "model.bin"
    save_model(model, path)
    print(f"trained {cfg.model} model -> {path}")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    if not cfg.model_path:
        raise ConfigError("predict needs 'model_path' in the config")
    model = load_model(cfg.model_path)
    sessions = _load_sessions(cfg)
    if cfg.predict_session is not None:
        sessions = [s for s in sessions if s.session_id == cfg.predict_session]
        if not sessions:
            raise ConfigError(f"session {cfg.predict_session!r} not in dataset")
    lines = ["infant_id,session_id,end_bin,true_label,prob,pred_label,in_confident"]
    for s in sessions:
        for sample in build_samples(s, config=cfg.window):
            prob = model.predict(sample.groups)
            lines.append(
                f"{s.infant_id},{s.session_id},{sample.end_bin},{sample.label.value},"
                f"{prob:.17g},{int(prob >= 0.5)},"
                f"{int(sample.face_confident and sample.body_confident)}")
    _atomic_write(Path(cfg.out) / "predictions.csv", "\n".join(lines) + "\n")
    print(f"wrote {Path(cfg.out) / 'predictions.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affectpipe",
        description="Continuous infant affect classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("synth", "generate a synthetic dataset"),
        ("ingest-check", "load a dataset and report per-session health"),
        ("sweep", "cross-validate over a grid of long window lengths"),
        ("evaluate", "cross-validate one model and emit metrics and curves"),
        ("train", "train one model on all confident samples and save it"),
        ("predict", "emit per-sample predictions from a saved model"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        if args.seed is not None:
            pinned = cfg.train.seed != cfg.seed  # config pinned train.seed explicitly
            cfg.seed = args.seed
            if not pinned:
                cfg.train = dataclasses.replace(cfg.train, seed=args.seed)
        if args.out is not None:
            cfg.out = args.out
        handlers = {
            "synth": cmd_synth,
            "ingest-check": cmd_ingest_check,
            "evaluate": cmd_evaluate,
            "train": cmd_train,
            "predict": cmd_predict,
        }
        if args.command == "sweep":
            return cmd_sweep(cfg, jobs=args.jobs)
        return handlers[args.command](cfg)
    except AffectPipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
