"""Command-line front end: ``phasecode <subcommand> [options]``.

Settings come from built-in defaults, then an optional ``--config`` JSON file,
then command-line flags (flag > file > default).  Every run writes
``config.resolved.json`` and ``summary.json`` to its output directory.
Exit status: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import io as pio
from .codeopt import OptimizerConfig, optimize_schedule
from .dataset import (TimingSetup, discover_scenes, ingest_scene, reproduce_sample, scene_seed,
                      synthesize_dataset, synthesize_vfi, write_manifest)
from .imaging import crf, point_trace
from .metrics import SSIM3D_WINDOW, SweepSpec, noise_sweep, psnr, ssim, ssim3d, write_sweep_csv
from .optics import OpticalConfig, PhaseMask, psf_stack
from .reconstruction import DecoderConfig, estimate_motion, reconstruct_video
from .scenes import random_scenes

CONFIG_KEYS = ("optics", "mask", "schedule", "decoder", "output", "workers", "seed")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def default_config() -> dict:
    return {
        "optics": OpticalConfig().to_dict(),
        "mask": PhaseMask.default().to_list(),
        "schedule": "linear:-4:4",
        "decoder": DecoderConfig().to_dict(),
        "output": "out",
        "workers": 1,
        "seed": 0,
    }


def _merge_section(name, base: dict, override) -> dict:
    if not isinstance(override, dict):
        raise UsageError(f"config section {name!r} must be an object")
    unknown = sorted(set(override) - set(base))
    if unknown:
        raise UsageError(f"unknown keys in config section {name!r}: {', '.join(unknown)}")
    out = dict(base)
    out.update(override)
    return out


def load_config(path: str | None) -> dict:
    """Defaults overlaid with the JSON file at ``path``; unknown keys are rejected."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise UsageError("config file must contain a JSON object")
    unknown = sorted(set(user) - set(CONFIG_KEYS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for key, val in user.items():
        if key in ("optics", "decoder"):
            cfg[key] = _merge_section(key, cfg[key], val)
        else:
            cfg[key] = val
    return cfg


def build_objects(cfg: dict):
    try:
        optics = OpticalConfig(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in cfg["optics"].items()})
        mask = PhaseMask(tuple(tuple(r) for r in cfg["mask"]))
        decoder = DecoderConfig(**cfg["decoder"])
        if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
            raise ValueError("workers must be a positive integer")
        if not isinstance(cfg["seed"], int):
            raise ValueError("seed must be an integer")
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    return optics, mask, decoder


def config_checksum(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode("utf-8")).hexdigest()


def _velocity(text: str):
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"velocity must be 'vx,vy', got {text!r}")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"velocity must be 'vx,vy', got {text!r}")
    return tuple(parts)


def _floats(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phasecode", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(sp, out_help="output directory"):
        sp.add_argument("--config", help="JSON config with keys " + ", ".join(CONFIG_KEYS))
        sp.add_argument("--psi", help="schedule: a file with one value per line, or linear:a:b, constant:c, "
                        "periodic:amplitude:cycles, random:low:high[:seed]")
        sp.add_argument("--out", help=out_help + " (overrides the config 'output')")
        sp.add_argument("--seed", type=int, help="global seed (overrides the config)")
        sp.add_argument("--workers", type=int, help="worker threads (overrides the config)")

    sp = sub.add_parser("psf", help="export the time-varying RGB kernel stack")
    common(sp)

    sp = sub.add_parser("trace", help="render the image of a moving point source")
    common(sp, out_help="output PNG path")
    sp.add_argument("--velocity", type=_velocity, required=True,
                    help="vx,vy in pixels per exposure (write --velocity=-3,0 for negative values)")

    sp = sub.add_parser("synth", help="synthesize blurred samples from PNG frame directories")
    common(sp)
    sp.add_argument("--scenes", help="root directory with one sub-directory of PNG frames per scene")
    sp.add_argument("--sigma", type=float, default=0.01, help="AWGN level as a fraction of [0, 1]")
    sp.add_argument("--uncoded", action="store_true", help="plain temporal average instead of coded blur")
    sp.add_argument("--timing", help="VFI mode with a timing preset, e.g. 48-8 or 32-16")
    sp.add_argument("--manifest", help="reproduce the sample described by this manifest (needs --scene-dir)")
    sp.add_argument("--scene-dir", help="frames directory for --manifest")

    sp = sub.add_parser("estimate", help="estimate the global motion of a coded image")
    common(sp)
    sp.add_argument("--image", required=True, help="coded image (PFM, signal space)")

    sp = sub.add_parser("reconstruct", help="recover a sharp frame sequence from a coded image")
    common(sp)
    sp.add_argument("--image", required=True, help="coded image (PFM, signal space)")
    sp.add_argument("--frames", type=int, default=25, help="number of output frames")
    sp.add_argument("--velocity", type=_velocity, help="skip estimation and use this vx,vy (write --velocity=-3,0 for negative values)")

    sp = sub.add_parser("optimize", help="optimize the defocus schedule")
    common(sp)
    sp.add_argument("--iters", type=int, default=200)
    sp.add_argument("--step", type=float, default=OptimizerConfig.step)

    sp = sub.add_parser("eval", help="score predicted frames against ground truth")
    common(sp, out_help="output JSON path")
    sp.add_argument("--pred", required=True, help="directory of predicted PFM frames")
    sp.add_argument("--gt", required=True, help="directory of ground-truth PFM frames")

    sp = sub.add_parser("sweep-noise", help="PSNR/SSIM/direction accuracy versus noise and exposure")
    common(sp, out_help="output CSV path")
    sp.add_argument("--sigmas", type=_floats, default=[0.0, 0.01, 0.02, 0.03, 0.05])
    sp.add_argument("--ratios", type=_floats, default=[1.0, 2.0 / 3.0])
    sp.add_argument("--num-scenes", type=int, default=20)
    sp.add_argument("--size", type=int, default=96, help="side of the synthetic scenes")
    sp.add_argument("--decoding", choices=("coded", "identity", "uncoded"), default="coded")
    return p


class _Run:
    def __init__(self, args, out_is_file: bool):
        self.args = args
        cfg = load_config(args.config)
        if args.psi is not None:
            cfg["schedule"] = args.psi
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.workers is not None:
            cfg["workers"] = args.workers
        self.out_path = args.out if args.out is not None else None
        if out_is_file:
            if self.out_path is None:
                raise UsageError("--out is required")
            cfg["output"] = os.path.dirname(self.out_path) or "."
        elif self.out_path is not None:
            cfg["output"] = self.out_path
        self.cfg = cfg
        self.optics, self.mask, self.decoder = build_objects(cfg)
        self.out_dir = cfg["output"]
        self.inputs = {}
        self.outputs = []
        self.extra = {}
        self.t0 = time.perf_counter()

    def schedule(self, n=None):
        spec = self.cfg["schedule"]
        if not isinstance(spec, str):
            raise UsageError("config 'schedule' must be a string")
        if os.path.exists(spec):
            self.input(spec)
        try:
            return pio.parse_schedule(spec, n or self.optics.time_samples)
        except FileNotFoundError as exc:
            raise DataError(str(exc)) from exc

    def stack(self):
        return psf_stack(self.mask, self.optics, self.schedule())

    def input(self, path):
        if not os.path.exists(path):
            raise DataError(f"input not found: {path}")
        if os.path.isfile(path):
            self.inputs[path] = pio.file_sha256(path)

    def path(self, name):
        os.makedirs(self.out_dir, exist_ok=True)
        p = os.path.join(self.out_dir, name)
        self.outputs.append(os.path.relpath(p, self.out_dir))
        return p

    def out_file(self):
        """The ``--out`` path of a single-file command, with its directory created."""
        os.makedirs(self.out_dir, exist_ok=True)
        self.outputs.append(os.path.relpath(self.out_path, self.out_dir))
        return self.out_path

    def finish(self, command):
        os.makedirs(self.out_dir, exist_ok=True)
        with open(os.path.join(self.out_dir, "config.resolved.json"), "w", encoding="utf-8") as fh:
            json.dump(self.cfg, fh, indent=2, sort_keys=True)
            fh.write("\n")
        summary = {
            "command": command,
            "config_sha256": config_checksum(self.cfg),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": sorted(self.outputs),
            **self.extra,
            "wall_time_s": time.perf_counter() - self.t0,
        }
        with open(os.path.join(self.out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")


def _read_image(run, path):
    run.input(path)
    try:
        img = pio.read_pfm(path).astype(float)
    except pio.FormatError as exc:
        raise DataError(str(exc)) from exc
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"{path}: expected a 3-channel image")
    return img


def cmd_psf(args):
    run = _Run(args, False)
    stack = run.stack()
    pio.write_pfm(run.path("kernels.pfm"), pio.stack_to_image(stack.kernels))
    pio.write_png(run.path("contact_sheet.png"), pio.contact_sheet(stack.kernels))
    pio.write_schedule(run.path("schedule.txt"), stack.psi)
    np.savetxt(run.path("energy_fraction.csv"), stack.energy_fraction, delimiter=",", fmt="%.17g",
               header="R,G,B", comments="")
    run.finish("psf")


def cmd_trace(args):
    run = _Run(args, True)
    tr = point_trace(run.stack(), args.velocity)
    pio.write_png(run.out_file(), crf(tr / tr.max()))
    run.extra["velocity_px"] = list(args.velocity)
    run.finish("trace")


def cmd_synth(args):
    run = _Run(args, False)
    stack = run.stack()
    seed = run.cfg["seed"]
    try:
        if args.manifest:
            if not args.scene_dir:
                raise UsageError("--manifest needs --scene-dir")
            run.input(args.manifest)
            m = reproduce_sample(args.manifest, args.scene_dir, stack, run.out_dir)
            run.outputs += m["files"] + ["manifest.json"]
        elif args.timing:
            if not args.scenes:
                raise UsageError("--timing needs --scenes")
            timing = TimingSetup.preset(args.timing)
            for sid in discover_scenes(args.scenes):
                frames = ingest_scene(os.path.join(args.scenes, sid), timing.cycle)
                b, gt, m = synthesize_vfi(frames, stack, timing, args.sigma, scene_seed(seed, sid), sid)
                d = os.path.join(run.out_dir, sid)
                os.makedirs(d, exist_ok=True)
                for c, img in enumerate(b):
                    pio.write_pfm(os.path.join(d, m["files"][c]), img)
                    for k, g in enumerate(gt[c]):
                        pio.write_pfm(os.path.join(d, f"gt_{c:03d}_{k:02d}.pfm"), g)
                m["files"] = m["files"] + [f"gt_{c:03d}_{k:02d}.pfm" for c in range(len(b)) for k in range(gt.shape[1])]
                write_manifest(os.path.join(d, "manifest.json"), m)
                run.outputs += [os.path.join(sid, f) for f in m["files"] + ["manifest.json"]]
        else:
            if not args.scenes:
                raise UsageError("synth needs --scenes or --manifest")
            ms = synthesize_dataset(args.scenes, run.out_dir, stack, args.sigma, seed, args.uncoded,
                                    run.cfg["workers"])
            for m in ms:
                run.outputs += [os.path.join(m["scene"], f) for f in m["files"] + ["manifest.json"]]
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    run.finish("synth")


def _motion_json(hyp):
    return {"vx": hyp.velocity_px[0], "vy": hyp.velocity_px[1], "speed": hyp.speed}


def cmd_estimate(args):
    run = _Run(args, False)
    img = _read_image(run, args.image)
    hyp, table = estimate_motion(img, run.stack(), decoder=run.decoder)
    table.write_csv(run.path("scores.csv"))
    with open(run.path("motion.json"), "w", encoding="utf-8") as fh:
        json.dump(_motion_json(hyp), fh, indent=2)
        fh.write("\n")
    run.finish("estimate")


def cmd_reconstruct(args):
    run = _Run(args, False)
    if args.frames < 1:
        raise UsageError("--frames must be positive")
    img = _read_image(run, args.image)
    frames, hyp, table = reconstruct_video(img, run.stack(), m=args.frames, decoder=run.decoder,
                                           velocity=args.velocity)
    for i, f in enumerate(frames):
        pio.write_pfm(run.path(f"frame_{i:03d}.pfm"), f)
        pio.write_png(run.path(f"frame_{i:03d}.png"), crf(f))
    if table is not None:
        table.write_csv(run.path("scores.csv"))
    with open(run.path("motion.json"), "w", encoding="utf-8") as fh:
        json.dump(_motion_json(hyp), fh, indent=2)
        fh.write("\n")
    run.finish("reconstruct")


def cmd_optimize(args):
    run = _Run(args, False)
    try:
        opt = OptimizerConfig(max_iters=args.iters, step=args.step)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sched, hist = optimize_schedule(run.schedule(), run.mask, run.optics, opt=opt)
    pio.write_schedule(run.path("schedule.txt"), sched)
    hist.write_csv(run.path("history.csv"))
    stack = psf_stack(run.mask, run.optics, sched)
    pio.write_png(run.path("contact_sheet.png"), pio.contact_sheet(stack.kernels))
    run.extra["stop_reason"] = hist.stop_reason
    run.finish("optimize")


def _pfm_dir(run, d):
    if not os.path.isdir(d):
        raise DataError(f"not a directory: {d}")
    names = sorted(f for f in os.listdir(d) if f.endswith(".pfm"))
    if not names:
        raise DataError(f"{d}: no PFM frames")
    out = []
    for n in names:
        out.append(_read_image(run, os.path.join(d, n)))
    return out


def cmd_eval(args):
    run = _Run(args, True)
    pred, gt = _pfm_dir(run, args.pred), _pfm_dir(run, args.gt)
    if len(pred) != len(gt):
        raise DataError(f"{len(pred)} predicted frames but {len(gt)} ground-truth frames")
    try:
        p = [psnr(a, b) for a, b in zip(pred, gt)]
        s = [ssim(a, b) for a, b in zip(pred, gt)]
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    res = {"frames": len(pred), "psnr": [x if np.isfinite(x) else "inf" for x in p],
           "ssim": s, "psnr_mean": float(np.mean(p)) if np.all(np.isfinite(p)) else "inf",
           "ssim_mean": float(np.mean(s))}
    if len(pred) >= SSIM3D_WINDOW["temporal_size"]:
        res["ssim3d"] = ssim3d(np.stack(pred), np.stack(gt))
        res["ssim3d_window"] = SSIM3D_WINDOW
    with open(run.out_file(), "w", encoding="utf-8") as fh:
        json.dump(res, fh, indent=2)
        fh.write("\n")
    run.finish("eval")


def cmd_sweep(args):
    run = _Run(args, True)
    if args.num_scenes < 1:
        raise UsageError("--num-scenes must be positive")
    try:
        scenes = random_scenes(args.num_scenes, args.size, seed=run.cfg["seed"])
        spec = SweepSpec(args.sigmas, args.ratios, scenes, run.decoder, args.decoding, seed=run.cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = noise_sweep(spec, run.stack(), workers=run.cfg["workers"])
    write_sweep_csv(run.out_file(), rows)
    run.finish("sweep-noise")


COMMANDS = {"psf": cmd_psf, "trace": cmd_trace, "synth": cmd_synth, "estimate": cmd_estimate,
            "reconstruct": cmd_reconstruct, "optimize": cmd_optimize, "eval": cmd_eval, "sweep-noise": cmd_sweep}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"phasecode: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, ValueError) as exc:
        print(f"phasecode: data error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    return 0


def main() -> None:
    sys.exit(run())
