"""Command line entry point: ``gazevol {analyze,align,synth,report}``.

Configuration precedence is flags > ``--config`` TOML file > built-in defaults.
Exit codes: 0 success, 1 input error, 2 alignment failure, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import GazeVolError, InputError

log = logging.getLogger("gazevol")

DEFAULTS = {
    "theta": 1.5,
    "distance_cm": 60.0,
    "ppc": 38.4,
    "scale": 0.2667,
    "jump_k": 1.0,
    "ransac_px": 3.0,
    "seed": 0,
    "scenario": "both",
    "bandwidth": None,
    "windows": None,
    "coverage_point_only": False,
    "classify": None,
    "jobs": 1,
    "out": "out",
    "svg": True,
}


def _parse_windows(text: str) -> list[tuple[float, float]]:
    out = []
    for part in text.split(","):
        a, _, b = part.partition(":")
        try:
            out.append((float(a), float(b)))
        except ValueError:
            raise InputError(f"bad window {part!r}; expected start:end") from None
    return out


def _slice_arg(text: str):
    if text == "auto":
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("slice must be an integer or 'auto'") from None


def _merged(args: argparse.Namespace, keys) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            cfg = tomllib.loads(path.read_text())
        except FileNotFoundError:
            raise InputError(f"{path}: config file not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise InputError(f"{path}: invalid config ({exc})") from None
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        out[k] = v if v is not None else cfg.get(k, DEFAULTS.get(k))
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML file of key = value defaults")
    p.add_argument("--seed", type=int, help="seed for all randomness (default 0)")
    p.add_argument("--ransac-px", dest="ransac_px", type=float, help="RANSAC reprojection threshold in px (default 3)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazevol", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="per-case visit statistics, coverage and density reports")
    _add_common(a)
    a.add_argument("--manifest", help="synth-style manifest listing cases")
    a.add_argument("--gaze")
    a.add_argument("--trace")
    a.add_argument("--volume")
    a.add_argument("--mask")
    a.add_argument("--homography", help="JSON from `align` (image -> scene)")
    a.add_argument("--scene", help="scene image to align when no homography is given")
    a.add_argument("--scene-slice", dest="scene_slice", type=_slice_arg, default="auto")
    a.add_argument("--case", default="case")
    a.add_argument("--reader", default="")
    a.add_argument("--out")
    a.add_argument("--theta", type=float, help="foveal visual angle, degrees (default 1.5)")
    a.add_argument("--distance-cm", dest="distance_cm", type=float, help="viewing distance (default 60)")
    a.add_argument("--ppc", type=float, help="screen px per cm (default 38.4)")
    a.add_argument("--scale", type=float, help="screen-to-image scale factor (default 0.2667)")
    a.add_argument("--jump-k", dest="jump_k", type=float, help="threshold multiplier on the gap std (default 1)")
    a.add_argument("--scenario", choices=["1", "2", "both"])
    a.add_argument("--bandwidth", type=float, help="density bandwidth in slices (default Silverman)")
    a.add_argument("--windows", help="explicit density windows, e.g. 0:5,10:20")
    a.add_argument("--coverage-point-only", dest="coverage_point_only", action="store_true", default=None)
    a.add_argument("--classify", type=float, metavar="THRESHOLD", help="label drill_index > THRESHOLD as driller")
    a.add_argument("--jobs", type=int)
    a.add_argument("--no-svg", dest="svg", action="store_false", default=None)

    g = sub.add_parser("align", help="estimate the image -> scene homography")
    _add_common(g)
    g.add_argument("--scene", required=True)
    g.add_argument("--volume", required=True)
    g.add_argument("--slice", type=_slice_arg, default=None, help="slice index or 'auto' (default auto)")
    g.add_argument("--out")

    s = sub.add_parser("synth", help="generate synthetic sessions with ground truth")
    s.add_argument("--config")
    s.add_argument("--archetype", default="driller", choices=["driller", "scanner", "hybrid", "mixed"])
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--cases", type=int, default=1)
    s.add_argument("--reader", default="synthetic")
    s.add_argument("--full-coverage", dest="full_coverage", action="store_true")

    r = sub.add_parser("report", help="aggregate per-case stats JSON files")
    r.add_argument("stats", nargs="+")
    r.add_argument("--out")
    return parser


def cmd_analyze(args) -> int:
    from .pipeline import CaseInput, RunConfig, cases_from_manifest, run_analyze

    keys = ["theta", "distance_cm", "ppc", "scale", "jump_k", "ransac_px", "seed", "scenario", "bandwidth",
            "windows", "coverage_point_only", "classify", "jobs", "out", "svg"]
    o = _merged(args, keys)
    if args.manifest:
        cases = cases_from_manifest(args.manifest)
    else:
        missing = [k for k in ("gaze", "trace", "volume", "mask") if getattr(args, k) is None]
        if missing:
            raise InputError("missing required input(s): " + ", ".join("--" + m for m in missing))
        cases = [CaseInput(args.case, args.gaze, args.trace, args.volume, args.mask, args.reader,
                           args.homography, args.scene, args.scene_slice)]
    windows = o["windows"]
    if isinstance(windows, str):
        windows = _parse_windows(windows)
    scen = {"1": (1,), "2": (2,), "both": (1, 2)}[str(o["scenario"])]
    cfg = RunConfig(
        cases=cases, out_dir=o["out"], theta=o["theta"], distance_cm=o["distance_cm"], ppc=o["ppc"],
        scale=o["scale"], jump_k=o["jump_k"], ransac_px=o["ransac_px"], seed=o["seed"], scenarios=scen,
        bandwidth=o["bandwidth"], windows=windows, coverage_point_only=bool(o["coverage_point_only"]),
        classify_threshold=o["classify"], jobs=int(o["jobs"]), svg=bool(o["svg"]),
    )
    res = run_analyze(cfg)
    for f in res["files"]:
        log.info("wrote %s", f)
    print(Path(cfg.out_dir) / "table.csv")
    return 0


def cmd_align(args) -> int:
    from .alignment import align_images, infer_slice
    from .pipeline import read_gray
    from .volume_io import load_volume

    o = _merged(args, ["seed", "ransac_px"])
    scene = read_gray(args.scene)
    vol = load_volume(args.volume)
    if args.slice is None:
        z, _, h = infer_slice(scene, vol, ransac_threshold=o["ransac_px"], seed=o["seed"])
    else:
        z = args.slice
        h = align_images(vol.slice_image(z), scene, o["ransac_px"], o["seed"])
    text = json.dumps(h.to_json() | {"slice": z}, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(args) -> int:
    from .synth import generate_batch

    o = _merged(args, ["seed"])
    manifest = generate_batch(args.out, args.archetype, o["seed"], args.cases, reader=args.reader,
                              full_coverage=args.full_coverage)
    print(Path(args.out) / "manifest.json")
    log.info("generated %d case(s)", len(manifest["cases"]))
    return 0


def cmd_report(args) -> int:
    from .pipeline import run_report

    text = json.dumps(run_report(args.stats), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"analyze": cmd_analyze, "align": cmd_align, "synth": cmd_synth, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except GazeVolError as exc:
        print(f"gazevol {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"gazevol {args.command}: internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
