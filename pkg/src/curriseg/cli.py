"""Command-line front end: dataset generation, curriculum training,
prediction, evaluation, and SVG reports.

Exit codes: 0 success, 1 runtime failure (bad data, missing files,
diverged training), 2 usage errors (unknown flags, malformed values).

Training is driven by a JSON config file whose keys mirror the library
dataclasses; every key is optional and unknown keys are rejected. The
fully-resolved config is echoed into the run directory so later
`predict`/`report` calls see the exact settings that trained the run.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backbone import BackboneSpec, OptimizerConfig
from .errors import CorruptManifest, CurrisegError, LengthMismatch
from .evaluation import evaluate_set
from .geometry import GaussianKernel
from .losses import LossConfig
from .predictor import PredictConfig, predict
from .rng import derive_seed
from .storage import load_phase, save_mask, save_phase
from .svg import line_chart
from .synthdata import GenConfig, generate
from .trainer import PhaseConfig, history_from_json, load_cache, run_full
from . import trainer

_STAGE_FILES = {"I": "phase1", "II": "phase2", "III": "phase3", "seg": "segmentation"}

DEFAULT_CONFIG: dict = {
    "backbone": {"depth": 2, "base_channels": 8},
    "loss": {
        "eps_log": 1e-7,
        "eps_div": 1e-7,
        "normalize_bce": False,
        "kernel_sigma": 1.0,
        "kernel_radius": 3,
    },
    "run": {
        "alpha": 0.99,
        "switch_mode": "momentum",
        "crop_margin": 12,
        "d2_fallback": "whole_image",
        "seed": 0,
        "phase1": {"algorithm": "adam", "learning_rate": 3e-3, "batch_size": 8, "epochs": 4, "seed": None},
        "phase2": {"algorithm": "adam", "learning_rate": 2e-3, "batch_size": 8, "epochs": 3, "seed": None},
        "phase3": {"algorithm": "adam", "learning_rate": 2e-3, "batch_size": 8, "epochs": 17, "seed": None},
        "segmentation": {"algorithm": "adam", "learning_rate": 2e-3, "batch_size": 8, "epochs": 10, "seed": None},
    },
    "predict": {
        "crop_threshold": 0.5,
        "final_threshold": 0.5,
        "margin": 12,
        "d_t": None,
        "max_iters": 10,
    },
}


def _merge_config(defaults: dict, user: dict, prefix: str = "") -> dict:
    """Overlay a user document onto the defaults, rejecting unknown keys."""
    for key in user:
        if key not in defaults:
            raise CorruptManifest(f"unknown config key {prefix + key!r}")
    merged = {}
    for key, dval in defaults.items():
        if isinstance(dval, dict):
            uval = user.get(key, {})
            if not isinstance(uval, dict):
                raise CorruptManifest(f"config key {prefix + key!r} must be an object")
            merged[key] = _merge_config(dval, uval, prefix=f"{prefix}{key}.")
        else:
            merged[key] = user.get(key, dval)
    return merged


def load_config(path: str | None) -> dict:
    """Read and resolve a config file; None means all defaults."""
    user: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CorruptManifest(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise CorruptManifest(f"{path}: config must be a JSON object")
    cfg = _merge_config(DEFAULT_CONFIG, user)
    # unset per-stage seeds follow from the run seed, so one knob moves all
    for i, stage in enumerate(("phase1", "phase2", "phase3", "segmentation"), start=1):
        if cfg["run"][stage]["seed"] is None:
            cfg["run"][stage]["seed"] = derive_seed(cfg["run"]["seed"], 100 + i)
    return cfg


def _build_spec(cfg: dict) -> BackboneSpec:
    return BackboneSpec(**cfg["backbone"])


def _build_loss(cfg: dict) -> LossConfig:
    d = cfg["loss"]
    kernel = GaussianKernel(sigma=d["kernel_sigma"], radius=d["kernel_radius"])
    return LossConfig(
        eps_log=d["eps_log"], eps_div=d["eps_div"], kernel=kernel, normalize_bce=d["normalize_bce"]
    )


def _build_phase_config(cfg: dict) -> PhaseConfig:
    r = cfg["run"]
    opts = {name: OptimizerConfig(**r[name]) for name in ("phase1", "phase2", "phase3", "segmentation")}
    return PhaseConfig(
        phase1=opts["phase1"],
        phase2=opts["phase2"],
        phase3=opts["phase3"],
        segmentation=opts["segmentation"],
        alpha=r["alpha"],
        switch_mode=r["switch_mode"],
        crop_margin=r["crop_margin"],
        d2_fallback=r["d2_fallback"],
        seed=r["seed"],
    )


def _build_predict_config(cfg: dict, d_t=None, max_iters=None) -> PredictConfig:
    d = dict(cfg["predict"])
    if d_t is not None:
        d["d_t"] = d_t
    if max_iters is not None:
        d["max_iters"] = max_iters
    return PredictConfig(**d)


# ------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    h, w = args.size
    cfg = GenConfig(
        count=args.count,
        height=h,
        width=w,
        fg_ratio_range=(args.fg_lo, args.fg_hi),
        blob_irregularity=args.irregularity,
        noise_sigma=args.noise_sigma,
        empty_slice_fraction=args.empty_frac,
        seed=args.seed,
    )
    phase = generate(cfg)
    meta = {
        "count": cfg.count,
        "height": cfg.height,
        "width": cfg.width,
        "fg_ratio_range": list(cfg.fg_ratio_range),
        "blob_irregularity": cfg.blob_irregularity,
        "noise_sigma": cfg.noise_sigma,
        "empty_slice_fraction": cfg.empty_slice_fraction,
        "seed": cfg.seed,
    }
    save_phase(args.out, phase, meta)
    print(f"wrote {len(phase.items)} items to {args.out}")
    return 0


def _write_stage_logs(run_dir: Path, history) -> None:
    logs = run_dir / "logs"
    logs.mkdir(exist_ok=True)
    by_stage: dict[str, list] = {}
    for rec in history:
        by_stage.setdefault(rec.phase, []).append(rec)
    for label, recs in by_stage.items():
        lines = []
        for r in recs:
            val = "" if r.val_dsc is None else f"  val_dsc={r.val_dsc:.4f}"
            lines.append(
                f"epoch {r.epoch:3d}  l_iou={r.loss.l_iou:.6f}  l_bce={r.loss.l_bce:.6f}  "
                f"l_s={r.loss.l_s:.6f}  l_total={r.loss.l_total:.6f}{val}"
            )
        (logs / f"{_STAGE_FILES[label]}.log").write_text("\n".join(lines) + "\n")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    spec = _build_spec(cfg)
    loss_cfg = _build_loss(cfg)
    phase_cfg = _build_phase_config(cfg)

    raw_train, _ = load_phase(args.data)
    raw_val, _ = load_phase(args.val)

    phases = set(trainer.DETECTION_PHASES)
    ablated: list[str] = []
    if args.ablate_phases:
        ablated = [p.strip() for p in args.ablate_phases.split(",") if p.strip()]
        for p in ablated:
            if p not in trainer.DETECTION_PHASES:
                raise CorruptManifest(f"--ablate-phases: unknown phase {p!r}")
        phases -= set(ablated)

    run_dir = Path(args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    echo = dict(cfg)
    echo["ablate_phases"] = ablated
    (run_dir / "run_config.json").write_text(json.dumps(echo, indent=2) + "\n")

    state = run_full(
        raw_train,
        raw_val,
        phase_cfg,
        spec=spec,
        loss_cfg=loss_cfg,
        out_dir=run_dir,
        phases=phases,
        resume=args.resume,
    )
    _write_stage_logs(run_dir, state.history)

    for label in ("I", "II", "III", "seg"):
        recs = [r for r in state.history if r.phase == label]
        if recs:
            last = recs[-1]
            val = "n/a" if last.val_dsc is None else f"{last.val_dsc:.4f}"
            print(
                f"stage {label}: {len(recs)} epochs, final l_total={last.loss.l_total:.6f}, "
                f"val_dsc={val}"
            )
    print(f"run artifacts in {run_dir}")
    return 0


def cmd_predict(args) -> int:
    run_dir = Path(args.run)
    cfg = DEFAULT_CONFIG
    cfg_path = run_dir / "run_config.json"
    if cfg_path.exists():
        base = json.loads(cfg_path.read_text())
        base.pop("ablate_phases", None)
        base.pop("gen", None)
        cfg = _merge_config(DEFAULT_CONFIG, base)
    spec = _build_spec(cfg)
    pcfg = _build_predict_config(cfg, d_t=args.dt, max_iters=args.max_iters)

    det = load_cache(run_dir / "detection_cache.ckpt")
    seg = load_cache(run_dir / "segmentation_cache.ckpt")

    phase, _ = load_phase(args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, item in enumerate(phase.items):
        item_id = item.item_id or f"img_{i:05d}"
        mask, _, trace = predict(item.image, det, seg, spec, pcfg)
        save_mask(out / f"{item_id}.pgm", mask)
        (out / f"{item_id}.trace.json").write_text(json.dumps(trace.as_dict(), indent=2) + "\n")
    print(f"wrote {len(phase.items)} masks to {out}")
    return 0


def _mask_files(dir_path: Path) -> dict[str, Path]:
    if (dir_path / "manifest.json").exists():
        phase, _ = load_phase(dir_path)
        root = dir_path
        out = {}
        for i, item in enumerate(phase.items):
            item_id = item.item_id or f"img_{i:05d}"
            out[item_id] = root / "masks" / f"{item_id}.pgm"
        return out
    return {p.stem: p for p in sorted(dir_path.glob("*.pgm"))}


def cmd_eval(args) -> int:
    from .storage import load_mask

    pred_files = _mask_files(Path(args.pred))
    truth_files = _mask_files(Path(args.truth))
    if len(pred_files) != len(truth_files):
        raise LengthMismatch(
            f"{len(pred_files)} predictions in {args.pred} vs {len(truth_files)} references in {args.truth}"
        )
    if set(pred_files) != set(truth_files):
        missing = sorted(set(truth_files) - set(pred_files))[:5]
        raise LengthMismatch(f"prediction ids do not match references (e.g. missing {missing})")

    ids = sorted(pred_files)
    preds = [load_mask(pred_files[i]) for i in ids]
    refs = [load_mask(truth_files[i]) for i in ids]
    report = evaluate_set(preds, refs, ids=ids)
    doc = {"version": 1}
    doc.update(report.as_dict())
    Path(args.report).write_text(json.dumps(doc, indent=2) + "\n")
    print(f"mean_dsc={report.mean:.4f} std={report.std:.4f} count={report.count}")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    hist_path = run_dir / "history.json"
    if not hist_path.exists():
        raise CorruptManifest(f"no history.json in {run_dir}")
    history = history_from_json(json.loads(hist_path.read_text()))
    plots = Path(args.plots)
    plots.mkdir(parents=True, exist_ok=True)

    written = []
    for label in ("I", "II", "III", "seg"):
        recs = [r for r in history if r.phase == label]
        if not recs:
            continue
        xs = [float(r.epoch) for r in recs]
        series = [
            ("l_total", xs, [r.loss.l_total for r in recs]),
            ("l_iou", xs, [r.loss.l_iou for r in recs]),
            ("l_bce", xs, [r.loss.l_bce for r in recs]),
            ("l_s", xs, [r.loss.l_s for r in recs]),
        ]
        name = f"loss_{_STAGE_FILES[label]}.svg"
        line_chart(
            plots / name,
            series,
            title=f"training loss, stage {label}",
            x_label="epoch",
            y_label="loss",
        )
        written.append(name)

    dsc_series = []
    offset = 0
    for label in ("I", "II", "III", "seg"):
        recs = [r for r in history if r.phase == label]
        pts = [(offset + i, r.val_dsc) for i, r in enumerate(recs) if r.val_dsc is not None]
        offset += len(recs)
        if pts:
            dsc_series.append(
                (f"stage {label}", [float(x) for x, _ in pts], [y for _, y in pts])
            )
    if dsc_series:
        line_chart(
            plots / "dsc_progression.svg",
            dsc_series,
            title="validation DSC across the curriculum",
            x_label="cumulative epoch",
            y_label="DSC",
        )
        written.append("dsc_progression.svg")

    print(f"wrote {len(written)} plots to {plots}: {', '.join(written)}")
    return 0


# --------------------------------------------------------------- parser


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curriseg",
        description="curriculum-trained small-object segmentation on synthetic data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", type=int, required=True, help="number of items")
    p.add_argument("--size", type=_size, default=(64, 64), help="image size HxW (default 64x64)")
    p.add_argument("--fg-lo", type=float, default=0.008, help="min foreground ratio")
    p.add_argument("--fg-hi", type=float, default=0.02, help="max foreground ratio")
    p.add_argument("--empty-frac", type=float, default=0.0, help="fraction of empty-mask items")
    p.add_argument("--irregularity", type=float, default=0.5, help="blob shape irregularity in [0,1]")
    p.add_argument("--noise-sigma", type=float, default=1.0, help="background noise scale")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="run the full curriculum")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--val", required=True, help="validation dataset directory")
    p.add_argument("--out", required=True, help="run directory for checkpoints/history")
    p.add_argument("--config", default=None, help="JSON config file (defaults apply)")
    p.add_argument(
        "--ablate-phases",
        default="",
        help='comma list of detection phases to skip, e.g. "1,2"',
    )
    p.add_argument("--resume", action="store_true", help="resume an interrupted run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict masks with a trained run")
    p.add_argument("--run", required=True, help="run directory from `train`")
    p.add_argument("--input", required=True, help="input dataset directory")
    p.add_argument("--out", required=True, help="output directory for masks + traces")
    p.add_argument("--dt", type=float, default=None, help="refinement overlap threshold in (0,1]")
    p.add_argument("--max-iters", type=int, default=None, help="max refinement passes")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predicted masks against references")
    p.add_argument("--pred", required=True, help="directory of predicted masks")
    p.add_argument("--truth", required=True, help="dataset directory or directory of masks")
    p.add_argument("--report", required=True, help="output JSON report file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render training curves as SVG")
    p.add_argument("--run", required=True, help="run directory from `train`")
    p.add_argument("--plots", required=True, help="output directory for SVG files")
    p.set_defaults(func=cmd_report)

    return parser


def entry(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CurrisegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(entry())
