"""``tipose`` command line: synth, label-sbp, train, infer, eval, export-terrain, calibrate.

Exit codes: 0 ok, 2 usage, 3 data format, 4 numeric failure.  Errors are
reported as a single ``error: code=<n> kind=<Class> msg=<text>`` line.
"""
import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from tipose import __version__, imu, io, motions, sbp, training
from tipose._backend import backend_name
from tipose.errors import FormatError, TiposeError
from tipose.evaluation import evaluate
from tipose.kinematics import Pose, get_skeleton
from tipose.model import ModelConfig, TipModel, load_checkpoint, save_checkpoint
from tipose.pipeline import PoserConfig, Poser, run_batch

# tunables accepted from the command line or a config file, with their defaults
DEFAULTS = {
    "seed": 0,
    "skeleton": "tip19",
    "noise": 0.0,
    "script": None,
    "frames": 600,
    "epochs": 200,
    "batch_size": 256,
    "lr": 1e-4,
    "max_window": 39,
    "dropout": 0.8,
    "embed_dim": 256,
    "n_layers": 4,
    "n_heads": 4,
    "ff_dim": 1024,
    "summarizer_width": 256,
    "k": 0.2,
    "w": None,
    "ema_q": 0.8,
    "ema_root": 0.9,
    "grid": 0.1,
    "gate_frames": 50,
    "soft_ik": True,
    "root_correction": True,
}
TYPES = {"seed": int, "frames": int, "epochs": int, "batch_size": int, "max_window": int, "embed_dim": int,
         "n_layers": int, "n_heads": int, "ff_dim": int, "summarizer_width": int, "gate_frames": int,
         "skeleton": str, "script": str, "soft_ik": "bool", "root_correction": "bool"}


class UsageError(Exception):
    exit_code = 2


def _convert(key, value):
    kind = TYPES.get(key, float)
    if value is None:
        return None
    if kind == "bool":
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("1", "true", "yes", "on"):
            return True
        if str(value).lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key} expects a boolean, got {value!r}")
    try:
        return kind(value)
    except ValueError:
        raise UsageError(f"{key} expects {kind.__name__}, got {value!r}") from None


def read_config(path):
    """``key = value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def resolve(args):
    """Defaults, then config file, then explicit command-line values."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = _convert(key, v)
    return cfg


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command, cfg, inputs, outputs):
    manifest = {
        "tool": "tipose", "version": __version__, "backend": backend_name(), "command": command,
        "config": cfg, "inputs": {str(p): sha256(p) for p in inputs if p and os.path.isfile(p)},
        "outputs": [str(p) for p in outputs],
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _seed(cfg):
    torch.manual_seed(cfg["seed"])
    return np.random.default_rng(cfg["seed"])


# -- subcommands ----------------------------------------------------------------


def cmd_synth(args, cfg, outputs):
    sk = get_skeleton(cfg["skeleton"])
    rng = _seed(cfg)
    if args.motion:
        motion = io.load_motion(args.motion)
    elif cfg["script"]:
        try:
            motion = motions.scripted(cfg["script"], cfg["frames"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        raise UsageError("synth needs a motion file or --script")
    if args.motion_out:
        outputs.append(args.motion_out)
        io.save_motion(args.motion_out, motion)
    stream = imu.add_noise(imu.synthesize_imu(sk, motion), cfg["noise"], rng)
    outputs.append(args.output)
    io.save_imu(args.output, stream)
    return [args.motion]


def cmd_label(args, cfg, outputs):
    motion = io.load_motion(args.motion)
    active, offsets = sbp.label_motion(get_skeleton(cfg["skeleton"]), motion)
    outputs.append(args.output)
    io.save_sbp(args.output, active, offsets)
    return [args.motion]


def _dataset_sequences(directory, sk, cfg, rng):
    files = sorted(Path(directory).glob("*.motion"))
    if not files:
        raise FormatError(f"no *.motion files in {directory}")
    seqs, inputs = [], []
    for f in files:
        motion = io.load_motion(f)
        labels = None
        sbp_file = f.with_suffix(".sbp")
        if sbp_file.exists():
            labels = io.load_sbp(sbp_file)
            inputs.append(sbp_file)
        seqs.append(training.prepare_sequence(motion, sk, cfg["noise"], rng, labels))
        inputs.append(f)
    return seqs, inputs


def _model_config(cfg):
    return ModelConfig(max_window=cfg["max_window"], embed_dim=cfg["embed_dim"], n_layers=cfg["n_layers"],
                       n_heads=cfg["n_heads"], ff_dim=cfg["ff_dim"], summarizer_width=cfg["summarizer_width"],
                       history_dropout=cfg["dropout"])


def cmd_train(args, cfg, outputs):
    rng = _seed(cfg)
    sk = get_skeleton(cfg["skeleton"])
    seqs, inputs = _dataset_sequences(args.dataset, sk, cfg, rng)
    model = TipModel(_model_config(cfg))
    data = training.WindowDataset(seqs, cfg["max_window"])
    log_path = args.output + ".loss.txt"
    outputs.extend([args.output, log_path])
    with open(log_path, "w") as log:
        log.write(f"# parameters={model.n_params()} windows={len(data)}\n")
        res = training.train(model, data, cfg["epochs"], cfg["batch_size"], cfg["lr"], seed=cfg["seed"],
                             log=lambda e, l: log.write(f"{e} {l:.9g}\n"))
    save_checkpoint(args.output, model, {"epochs": len(res.losses), "final_loss": res.losses[-1]})
    return inputs


def cmd_infer(args, cfg, outputs):
    _seed(cfg)
    sk = get_skeleton(cfg["skeleton"])
    stream = io.load_imu(args.imu)
    model, _ = load_checkpoint(args.checkpoint)
    inputs = [args.imu, args.checkpoint]
    if args.initial_pose:
        init = io.load_motion(args.initial_pose)[0]
        inputs.append(args.initial_pose)
    else:
        init = Pose.identity()
    init_c = None
    if args.initial_sbp:
        a, o = io.load_sbp(args.initial_sbp)
        init_c = sbp.contact_vectors(a[0], o[0])
        inputs.append(args.initial_sbp)
    pcfg = PoserConfig(ema_q=cfg["ema_q"], ema_root=cfg["ema_root"], k=cfg["k"], w=cfg["w"], grid=cfg["grid"],
                       gate_frames=cfg["gate_frames"], soft_ik=cfg["soft_ik"],
                       root_correction=cfg["root_correction"])
    res = run_batch(Poser(model, init, init_c, sk, pcfg), stream)
    prefix = args.output
    paths = {k: f"{prefix}.{k}" for k in ("motion", "sbp", "terrain", "conf", "state")}
    outputs.extend(paths.values())
    io.save_motion(paths["motion"], res.motion)
    active, offsets = sbp.split_contacts(res.contacts)
    io.save_sbp(paths["sbp"], active > sbp.ACTIVE, offsets)
    io.save_terrain(paths["terrain"], res.terrain)
    io.save_terrain(paths["conf"], res.terrain, which="conf")
    io.save_terrain_state(paths["state"], res.terrain)
    return inputs


def cmd_eval(args, cfg, outputs):
    pred, gt = io.load_motion(args.pred), io.load_motion(args.gt)
    report = evaluate(pred, gt, get_skeleton(cfg["skeleton"]))
    text = report.to_text()
    if args.output:
        outputs.append(args.output)
        Path(args.output).write_text(text)
    if args.table:
        outputs.append(args.table)
        Path(args.table).write_text(report.to_table())
    sys.stdout.write(text)
    return [args.pred, args.gt]


def cmd_export_terrain(args, cfg, outputs):
    state = io.load_terrain_state(args.state)
    outputs.append(args.output)
    io.save_terrain(args.output, state, which=args.map)
    return [args.state]


def cmd_calibrate(args, cfg, outputs):
    still = io.load_imu(args.still)
    tpose = io.load_imu(args.tpose)
    bones = None
    inputs = [args.still, args.tpose]
    if args.tpose_motion:
        from tipose.kinematics import motion_fk
        m = io.load_motion(args.tpose_motion)
        sk = get_skeleton(cfg["skeleton"])
        _, rot = motion_fk(sk, m[:1])
        bones = rot[0, list(sk.imu_bodies)]
        inputs.append(args.tpose_motion)
    calib = imu.calibrate(still.orientations, tpose.orientations, bones, still.accelerations)
    outputs.append(args.output)
    io.save_calibration(args.output, calib)
    return inputs


COMMANDS = {
    "synth": cmd_synth, "label-sbp": cmd_label, "train": cmd_train, "infer": cmd_infer, "eval": cmd_eval,
    "export-terrain": cmd_export_terrain, "calibrate": cmd_calibrate,
}


def build_parser():
    p = argparse.ArgumentParser(prog="tipose", description="IMU motion reconstruction with terrain generation")
    p.add_argument("--version", action="version", version=f"tipose {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; command-line values take precedence")
    common.add_argument("--seed", type=int)
    common.add_argument("--skeleton")
    common.add_argument("--manifest", help="manifest path (default: <output>.manifest.json)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="synthesize an IMU stream from a motion")
    s.add_argument("motion", nargs="?", help="input motion file")
    s.add_argument("-o", "--output", required=True, help="IMU file to write")
    s.add_argument("--script", help=f"scripted motion instead of a file: {', '.join(motions.SCRIPTS)}")
    s.add_argument("--frames", type=int)
    s.add_argument("--noise", type=float, help="std of high-frequency acceleration noise (m/s^2)")
    s.add_argument("--motion-out", help="also write the (scripted) motion")

    s = sub.add_parser("label-sbp", parents=[common], help="label stationary body points of a motion")
    s.add_argument("motion")
    s.add_argument("-o", "--output", required=True)

    s = sub.add_parser("train", parents=[common], help="train a model on a directory of *.motion files")
    s.add_argument("dataset")
    s.add_argument("-o", "--output", required=True, help="checkpoint path")
    for opt, typ in (("--epochs", int), ("--batch-size", int), ("--lr", float), ("--max-window", int),
                     ("--dropout", float), ("--embed-dim", int), ("--n-layers", int), ("--n-heads", int),
                     ("--ff-dim", int), ("--summarizer-width", int), ("--noise", float)):
        s.add_argument(opt, type=typ)

    s = sub.add_parser("infer", parents=[common], help="reconstruct motion and terrain from an IMU file")
    s.add_argument("imu")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--initial-pose", help="motion file whose first frame is the initial pose")
    s.add_argument("--initial-sbp", help="SBP file whose first frame seeds the contact history")
    s.add_argument("-o", "--output", required=True, help="output prefix")
    for opt in ("--k", "--w", "--ema-q", "--ema-root", "--grid"):
        s.add_argument(opt, type=float)
    s.add_argument("--gate-frames", type=int)
    s.add_argument("--soft-ik")
    s.add_argument("--root-correction")

    s = sub.add_parser("eval", parents=[common], help="compare a predicted motion with ground truth")
    s.add_argument("pred")
    s.add_argument("gt")
    s.add_argument("-o", "--output", help="write the key = value report here")
    s.add_argument("--table", help="write a tab-separated metric table here")

    s = sub.add_parser("export-terrain", parents=[common], help="terrain state dump to a text grid")
    s.add_argument("state")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--map", choices=("height", "conf"), default="height")

    s = sub.add_parser("calibrate", parents=[common], help="two-step calibration from raw still and T-pose files")
    s.add_argument("still")
    s.add_argument("tpose")
    s.add_argument("--tpose-motion", help="motion file with the T-pose (default: identity bones)")
    s.add_argument("-o", "--output", required=True)
    return p


def _fail(code, exc):
    msg = " ".join(str(exc).split())
    print(f"error: code={code} kind={type(exc).__name__} msg={msg}", file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    outputs = []
    try:
        cfg = resolve(args)
        inputs = COMMANDS[args.command](args, cfg, outputs)
        primary = args.output or args.pred
        manifest = args.manifest or (str(primary) + ".manifest.json")
        write_manifest(manifest, list(argv if argv is not None else sys.argv[1:]), cfg, inputs, outputs)
        return 0
    except UsageError as exc:
        code = _fail(2, exc)
    except TiposeError as exc:
        code = _fail(exc.exit_code, exc)
    except FloatingPointError as exc:
        code = _fail(4, exc)
    for path in outputs:
        io.remove_quietly(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
