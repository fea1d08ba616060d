"""tunnelnav command line: worlds, datasets, training, evaluation and closed-loop runs.

Every subcommand accepts ``--config FILE`` (JSON or YAML mapping). Config
keys are the long flag names with dashes or underscores; explicit flags
override the file. Unknown keys are rejected before anything runs.

Exit codes: 0 success, 2 validation error, 3 collision or failure to
complete, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__, control, dataset, lidar, nnet, sim, yaw
from .errors import CorruptFile, TunnelNavError, VersionMismatch
from .geometry import Attitude
from .tunnel import KINDS, PROFILES, TunnelSpec, build, load_spec, save_spec

EXIT_OK, EXIT_INVALID, EXIT_FAILED, EXIT_IO = 0, 2, 3, 4
MA_WINDOW = 5


class CliError(Exception):
    def __init__(self, msg: str, code: int = EXIT_INVALID):
        super().__init__(msg)
        self.code = code


# -- config and manifests ---------------------------------------------------


def read_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from exc
    try:
        data = yaml.safe_load(text)  # JSON is a YAML subset
    except yaml.YAMLError as exc:
        raise CliError(f"config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise CliError(f"config {path}: expected a mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def settings_hash(settings: dict) -> str:
    blob = json.dumps(settings, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(out, command: str, settings: dict, extra: dict | None = None) -> Path:
    """Sidecar ``<out>.run.json`` recording everything needed to redo the command."""
    data = {
        "command": command,
        "version": __version__,
        "settings": settings,
        "config_sha256": settings_hash(settings),
    }
    if extra:
        data.update(extra)
    path = Path(str(out) + ".run.json")
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _settings(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "command")}


def _model(path):
    if not path:
        raise CliError("the learned estimator needs --model")
    try:
        return nnet.load_model(path)
    except FileNotFoundError as exc:
        raise CliError(f"model not found: {path}", EXIT_IO) from exc
    except (CorruptFile, VersionMismatch) as exc:
        raise CliError(f"{path}: {exc}", EXIT_IO) from exc


def _load_dataset(path) -> dataset.Dataset:
    try:
        return dataset.load(path)
    except FileNotFoundError as exc:
        raise CliError(f"dataset not found: {path}", EXIT_IO) from exc
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read dataset {path}: {exc}", EXIT_IO) from exc


def _spec(path) -> TunnelSpec:
    try:
        return load_spec(path)
    except FileNotFoundError as exc:
        raise CliError(f"tunnel spec not found: {path}", EXIT_IO) from exc


def write_pgm(img: np.ndarray, path) -> None:
    """Binary greyscale PGM of a [0, 1] image."""
    g = np.clip(np.rint(np.asarray(img) * 255), 0, 255).astype(np.uint8)
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (g.shape[1], g.shape[0]) + g.tobytes())


def write_ppm(img: np.ndarray, path) -> None:
    """Binary colour PPM of a (3, H, W) [0, 1] raster."""
    g = np.clip(np.rint(np.moveaxis(img, 0, -1) * 255), 0, 255).astype(np.uint8)
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (g.shape[1], g.shape[0]) + g.tobytes())


def moving_average(x, window: int = MA_WINDOW) -> np.ndarray:
    """Trailing mean over up to ``window`` samples (shorter at the start)."""
    x = np.asarray(x, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(1, len(x) + 1)
    lo = np.maximum(i - window, 0)
    return (c[i] - c[lo]) / (i - lo)


# -- subcommands ------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.kind == "random":
        if args.seed is None:
            raise CliError("random mode needs --seed")
        rng = np.random.default_rng(args.seed)
        cfg = dataset.DatasetConfig(length_m=args.length)
        spec = dataset.random_tunnel(rng, cfg)
    else:
        wp = tuple(tuple(w) for w in json.loads(args.waypoints)) if args.waypoints else ()
        spec = TunnelSpec(
            kind=args.kind, radius_m=args.radius, profile=args.profile, roughness=args.roughness,
            seed=args.seed or 0, length_m=args.length, waypoints=wp,
        )
    build(spec)  # catches centrelines that cannot be built
    save_spec(spec, args.out)
    print(json.dumps(spec.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_dataset(args) -> int:
    if args.n < 1:
        raise CliError("--n must be at least 1")
    try:
        cfg = dataset.DatasetConfig(
            n=args.n, seed=args.seed, per_tunnel=args.per_tunnel, psi_range_deg=args.psi_range,
            rp_range_deg=args.rp_range, max_offset=args.max_offset,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    specs = [_spec(p) for p in args.tunnel] if args.tunnel else None
    ds = dataset.generate(cfg, lidar.LidarConfig(noise_sigma=args.lidar_noise), specs=specs)
    dataset.save(ds, args.out, cfg)
    if args.export_images:
        d = Path(args.export_images)
        d.mkdir(parents=True, exist_ok=True)
        for i in range(min(args.export_count, len(ds))):
            write_pgm(ds.images[i, 0], d / f"sample_{i:05d}_depth.pgm")
            write_ppm(ds.images[i], d / f"sample_{i:05d}.ppm")
    write_manifest(args.out, "dataset", _settings(args), {"n": len(ds), "tunnels": len(ds.tunnels)})
    print(json.dumps({"n": len(ds), "tunnels": len(ds.tunnels), "out": str(args.out)}))
    return EXIT_OK


def cmd_train(args) -> int:
    ds = _load_dataset(args.data)
    res = nnet.train(
        ds.images, ds.labels, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed,
        augment=args.augment, cosine=args.cosine, max_shift=args.max_shift, log=args.log,
        progress=(lambda r: print(f"epoch {r.epoch} train {r.train_loss:.5f} val {r.val_loss:.5f} "
                                  f"mae {r.val_mae_deg:.2f} deg", file=sys.stderr)) if args.verbose else None,
    )
    nnet.save_model(res.model, args.out)
    best = res.history[res.best_epoch - 1]
    summary = {"best_epoch": res.best_epoch, "val_loss": best.val_loss, "val_mae_deg": best.val_mae_deg}
    write_manifest(args.out, "train", _settings(args), summary)
    print(json.dumps(summary))
    return EXIT_OK


def _geometric_estimates(ds: dataset.Dataset) -> np.ndarray:
    # rescan each recorded pose noise-free; the raster is not needed
    if not ds.tunnels:
        raise CliError("geometric evaluation needs the dataset manifest (tunnel specs)", EXIT_IO)
    cfg = lidar.LidarConfig()
    tunnels = {}
    out = np.zeros(len(ds))
    for i, (x, y, z, roll, pitch, heading, k) in enumerate(ds.poses):
        k = int(k)
        if k not in tunnels:
            tunnels[k] = build(ds.tunnels[k])
        tun = tunnels[k]
        cloud = lidar.fuse(*lidar.scan_pair(tun, (x, y, z), Attitude(roll, pitch, heading), cfg))
        out[i] = yaw.estimate_yaw_geometric(yaw.stabilize(cloud, (roll, pitch))).psi
    return out


def cmd_eval(args) -> int:
    if args.data:
        ds = _load_dataset(args.data)
    elif args.tunnel:
        cfg = dataset.DatasetConfig(n=args.n, seed=args.seed, per_tunnel=args.n)
        ds = dataset.generate(cfg, specs=[_spec(args.tunnel)])
    else:
        raise CliError("eval needs --data or --tunnel")
    if args.estimator == control.LEARNED:
        est = nnet.predict(_model(args.model), ds.images)
        est = np.clip(est, -yaw.YAW_RANGE, yaw.YAW_RANGE)
    else:
        est = _geometric_estimates(ds)
    err = np.degrees(np.abs(est - ds.labels))
    ma = moving_average(est)
    result = {
        "estimator": args.estimator, "n": len(ds),
        "mae_deg": float(err.mean()), "max_deg": float(err.max()),
        "mae_ma5_deg": float(np.degrees(np.abs(ma - ds.labels)).mean()),
    }
    if args.series:
        with open(args.series, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "psi_d_true", "psi_d_est", "psi_d_est_ma5", "roll", "pitch", "y"])
            for i in range(len(ds)):
                w.writerow([i, repr(float(ds.labels[i])), repr(float(est[i])), repr(float(ma[i])),
                            repr(float(ds.poses[i, 3])), repr(float(ds.poses[i, 4])), repr(float(ds.poses[i, 1]))])
        write_manifest(args.series, "eval", _settings(args), result)
    print(json.dumps(result))
    return EXIT_OK


def cmd_navigate(args) -> int:
    spec = _spec(args.tunnel)
    try:
        gains = control.ControlGains(v_max=args.speed, v_min=args.v_min, r_sc=args.r_sc)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    cfg = sim.SimConfig(
        spec, estimator=args.estimator, model_path=args.model, gains=gains, duration=args.duration,
        laps=args.laps, lidar_seed=args.lidar_seed, inclinometer_seed=args.inclinometer_seed,
        start_s=args.start_s, start_y=args.start_y, start_z=args.start_z, start_psi=math.radians(args.start_psi),
    )
    model = _model(args.model) if args.estimator == control.LEARNED else None
    trace, metrics = sim.run(cfg, model)
    if args.trace:
        sim.write_trace(trace, args.trace)
    extra = {"settings": _settings(args), "config_sha256": settings_hash(_settings(args)),
             "tunnel_spec": spec.to_dict()}
    if args.metrics:
        sim.write_metrics(metrics, args.metrics, extra)
    print(json.dumps(metrics.to_dict()))
    if metrics.collision or not metrics.completed:
        print("run did not complete" + (" (collision)" if metrics.collision else ""), file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_plotdata(args) -> int:
    try:
        rows = sim.read_trace(args.trace)
    except FileNotFoundError as exc:
        raise CliError(f"trace not found: {args.trace}", EXIT_IO) from exc
    if not rows:
        raise CliError("trace has no records")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t = np.array([r["t"] for r in rows])
    err = np.array([r["psi_d_est"] - r["psi_d_true"] for r in rows])
    err = (err + math.pi) % (2 * math.pi) - math.pi
    xyz = np.array([[r["x"], r["y"], r["z"]] for r in rows])
    # finite-difference ground speed; the first row repeats the second
    sp = np.linalg.norm(np.diff(xyz, axis=0), axis=1) / np.maximum(np.diff(t), 1e-12)
    sp = np.concatenate([sp[:1], sp]) if len(sp) else np.zeros(1)
    tables = {
        "heading_error.csv": (["t", "psi_d_true", "psi_d_est", "error"],
                              [[r["t"], r["psi_d_true"], r["psi_d_est"], e] for r, e in zip(rows, err)]),
        "path_speed.csv": (["t", "x", "y", "z", "speed", "vx_cmd"],
                           [[r["t"], r["x"], r["y"], r["z"], v, r["vx_cmd"]] for r, v in zip(rows, sp)]),
        "brush.csv": (["t", "x", "y", "z", "diameter"],
                      [[r["t"], r["x"], r["y"], r["z"], 2 * r["r_c"]] for r in rows]),
    }
    for name, (head, data) in tables.items():
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            w.writerows([[repr(float(v)) for v in row] for row in data])
    print(json.dumps({"rows": len(rows), "files": sorted(tables)}))
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tunnelnav", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="JSON or YAML file with default values for the flags below")
        sp.set_defaults(func=func)
        return sp

    g = add("generate", cmd_generate, "write a tunnel spec file")
    g.add_argument("--kind", choices=KINDS + ("random",), default="straight")
    g.add_argument("--radius", type=float, default=2.0)
    g.add_argument("--profile", choices=PROFILES, default="circle")
    g.add_argument("--roughness", type=float, default=0.0)
    g.add_argument("--length", type=float, default=100.0)
    g.add_argument("--seed", type=int, help="noise seed; required with --kind random")
    g.add_argument("--waypoints", help='JSON list of [x, y, z] for waypoint-spline')
    g.add_argument("--out", required=True)

    d = add("dataset", cmd_dataset, "generate a labelled raster dataset")
    d.add_argument("--n", type=int, default=10000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--per-tunnel", type=int, default=400)
    d.add_argument("--psi-range", type=float, default=40.0, help="degrees")
    d.add_argument("--rp-range", type=float, default=20.0, help="degrees")
    d.add_argument("--max-offset", type=float, default=2.0, help="metres")
    d.add_argument("--lidar-noise", type=float, default=0.0, help="range noise sigma, metres")
    d.add_argument("--tunnel", action="append", help="fixed tunnel spec(s) instead of random ones")
    d.add_argument("--export-images", help="directory for PGM/PPM copies of the first rasters")
    d.add_argument("--export-count", type=int, default=16)
    d.add_argument("--out", required=True)

    t = add("train", cmd_train, "train the yaw network")
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=60)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=3e-4)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--augment", action=argparse.BooleanOptionalAction, default=True,
                   help="random left-right mirroring of training batches")
    t.add_argument("--cosine", action=argparse.BooleanOptionalAction, default=True,
                   help="cosine step-size annealing")
    t.add_argument("--max-shift", type=int, default=3, help="random translation of training images, pixels")
    t.add_argument("--log", help="per-epoch CSV")
    t.add_argument("--verbose", action="store_true")
    t.add_argument("--out", required=True)

    e = add("eval", cmd_eval, "yaw estimator accuracy on a dataset or a tunnel sweep")
    e.add_argument("--data")
    e.add_argument("--tunnel", help="tunnel spec to sweep instead of a dataset")
    e.add_argument("--n", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--estimator", choices=(control.GEOMETRIC, control.LEARNED), default=control.GEOMETRIC)
    e.add_argument("--model")
    e.add_argument("--series", help="CSV of truth, raw and moving-average estimates")

    n = add("navigate", cmd_navigate, "fly a closed-loop run")
    n.add_argument("--tunnel", required=True)
    n.add_argument("--estimator", choices=(control.GEOMETRIC, control.LEARNED), default=control.GEOMETRIC)
    n.add_argument("--model")
    n.add_argument("--speed", type=float, default=3.0, help="v_max, m/s")
    n.add_argument("--v-min", type=float, default=1.0)
    n.add_argument("--r-sc", type=float, default=0.7, help="safety radius, metres")
    n.add_argument("--duration", type=float)
    n.add_argument("--laps", type=int)
    n.add_argument("--lidar-seed", type=int, default=0)
    n.add_argument("--inclinometer-seed", type=int, default=1)
    n.add_argument("--start-s", type=float, default=2.0)
    n.add_argument("--start-y", type=float, default=0.0)
    n.add_argument("--start-z", type=float, default=0.0)
    n.add_argument("--start-psi", type=float, default=0.0, help="degrees")
    n.add_argument("--trace")
    n.add_argument("--metrics")

    pd = add("plotdata", cmd_plotdata, "reduce a trace to plot-ready tables")
    pd.add_argument("--trace", required=True)
    pd.add_argument("--out", required=True, help="output directory")
    return p


def parse(argv=None) -> argparse.Namespace:
    parser = build_parser()
    # locate --config first so the file can supply flags marked required
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subs = parser._subparsers._group_actions[0].choices
    if known.config and known.command in subs:
        cfg = read_config(known.config)
        sp = subs[known.command]
        dests = {a.dest for a in sp._actions} - {"help", "config", "func"}
        unknown = sorted(set(cfg) - dests)
        if unknown:
            raise CliError(f"unknown config keys: {unknown}")
        sp.set_defaults(**cfg)
        # required flags may now come from the file
        for a in sp._actions:
            if a.dest in cfg:
                a.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SystemExit as exc:  # argparse usage errors
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TunnelNavError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
