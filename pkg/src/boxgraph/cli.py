"""``boxgraph`` command-line interface.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import graph as bxg
from . import mapdb
from .clustering import cluster_by_class
from .config import Config, ConfigError, load_config
from .evaluation import ProtocolError, build_pairs, metrics_report, score_pairs
from .graph import FormatError, build_graph
from .scoring import ROW_FIELDS, match_graphs
from .skitti_io import (MalformedFileError, PoseRecord, load_scan, read_calibration,
                        read_point_cloud, read_poses, write_poses)
from .synth import synth_loop

log = logging.getLogger("boxgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> Config:
    overrides = {}
    for kv in args.set or []:
        key, sep, value = kv.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {kv!r}")
        overrides[key.strip()] = value.strip()
    if getattr(args, "tau", None) is not None:
        overrides["tau"] = str(args.tau)
    return load_config(args.config, overrides)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_rows(fh, fields, rows, fmt: str):
    if fmt == "json":
        for r in rows:
            fh.write(json.dumps({k: r[k] for k in fields}) + "\n")
        return
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in fields])


# --- extract ----------------------------------------------------------------

def cmd_extract(args) -> int:
    cfg = _config(args)
    scan_dir, label_dir, out_dir = Path(args.scan_dir), Path(args.label_dir), Path(args.out_dir)
    for d in (scan_dir, label_dir):
        if not d.is_dir():
            raise DataError(f"not a directory: {d}")
    calib = read_calibration(args.calib) if args.calib else None
    poses = {p.index: p.transform for p in read_poses(args.poses, calib)} if args.poses else {}
    out_dir.mkdir(parents=True, exist_ok=True)

    entries, sizes, counts, failed = [], [], [], 0
    for scan in sorted(scan_dir.glob("*.bin")):
        stem = scan.stem
        label = label_dir / f"{stem}.label"
        try:
            if not label.exists():
                raise DataError(f"no label file for scan {stem}")
            cloud = load_scan(scan, label, cfg.allowlist)
            g = build_graph(cluster_by_class(cloud, cfg.clustering()), stem)
        except (DataError, MalformedFileError, ValueError, OSError) as exc:
            log.error("%s: %s", scan.name, exc)
            failed += 1
            continue
        if len(g) == 0:
            log.warning("%s: no clusters from allowlisted points; writing an empty graph", scan.name)
        sizes.append(bxg.save(g, out_dir / f"{stem}.bxg"))
        counts.append(len(g))
        pose = poses.get(int(stem)) if stem.isdigit() else None
        entries.append(mapdb.IndexEntry(stem, f"{stem}.bxg", pose))
    mapdb.write_index(out_dir, entries)
    if counts:
        print(f"scans {len(counts)}  vertices mean {np.mean(counts):.1f} max {max(counts)}  "
              f"bytes/scan mean {np.mean(sizes):.1f}")
    else:
        print("scans 0")
    if failed:
        print(f"{failed} scan(s) failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


# --- match ------------------------------------------------------------------

def cmd_match(args) -> int:
    cfg = _config(args)
    graphs = []
    for p in (args.graph_a, args.graph_b):
        try:
            graphs.append(bxg.load(p))
        except (OSError, FormatError) as exc:
            raise DataError(f"{p}: {exc}") from None
    g_s, g_m = graphs
    res = match_graphs(g_s, g_m, cfg.ransac(args.seed), tau=cfg.tau)
    row = res.row(g_s.scan_id or Path(args.graph_a).stem, g_m.scan_id or Path(args.graph_b).stem)
    _write_rows(sys.stdout, ROW_FIELDS, [row], args.format)
    return EXIT_OK


# --- evaluate ---------------------------------------------------------------

PAIR_FIELDS = ("scan_s", "scan_m", "label", "score", "rte", "rre")


def _resolve(db: Path, args):
    entries = mapdb.read_index(db)
    by_id = {}
    for e in entries:
        if not e.scan_id.isdigit():
            raise DataError(f"scan id {e.scan_id!r} is not a frame number")
        by_id[int(e.scan_id)] = e
    if args.poses:
        calib = read_calibration(args.calib) if args.calib else None
        poses = read_poses(args.poses, calib)
    else:
        poses = [PoseRecord(k, e.pose) for k, e in sorted(by_id.items()) if e.pose is not None]
    if not poses:
        raise DataError("no poses: pass --poses or store poses in the map index")
    return by_id, poses


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    place = args.mode in ("place", "both")
    pose = args.mode in ("pose", "both")
    if place and args.beta is None:
        raise UsageError("--beta is required for place-recognition metrics")
    out_dir = Path(args.out or cfg.out_dir or ".")
    db = Path(args.db)

    by_id, poses = _resolve(db, args)
    if place:
        pairs = build_pairs(poses, cfg.pos_radius, cfg.neg_radius, cfg.frame_gap,
                            cfg.neg_ratio, args.seed)
    else:
        pairs = build_pairs(poses, cfg.pos_radius, cfg.neg_radius, cfg.pose_frame_gap, 0, args.seed)
    if not any(p.is_positive for p in pairs):
        raise DataError("no positive pairs under the protocol")
    needed = {i for p in pairs for i in (p.scan_s, p.scan_m)}
    missing = sorted(needed - set(by_id))
    if missing:
        raise DataError(f"{len(missing)} pair scan ids missing from the map, e.g. {missing[:5]}")

    graphs = {i: bxg.load(db / by_id[i].file_name) for i in sorted(needed)}
    pose_of = {p.index: p.transform for p in poses}
    scored = score_pairs(pairs, graphs, pose_of, cfg.ransac(args.seed), args.seed, args.jobs)
    report = metrics_report(scored, args.beta, place=place, pose=pose, tau=cfg.tau)

    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [{"scan_s": p.scan_s, "scan_m": p.scan_m, "label": p.label, "score": p.score,
             "rte": p.rte, "rre": p.rre} for p in scored]
    ext = "jsonl" if args.format == "json" else "csv"
    with open(out_dir / f"pairs.{ext}", "w", newline="") as fh:
        _write_rows(fh, PAIR_FIELDS, rows, args.format)
    text = json.dumps(report, indent=2) + "\n"
    (out_dir / "metrics.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# --- synth ------------------------------------------------------------------

def cmd_synth(args) -> int:
    params = dict(n_scans=args.n_scans, first_lap=args.first_lap, step=args.step,
                  lateral_offset=args.lateral_offset, sensor_range=args.sensor_range,
                  density=args.density, noise_centroid=args.noise_centroid,
                  noise_feature=args.noise_feature, dropout=args.dropout,
                  distractors=args.distractors)
    try:
        ds = synth_loop(args.seed, **params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out_dir)
    mapdb.save_database(out, ds.graphs, ds.poses)
    write_poses(out / "poses.txt", ds.poses)
    (out / "synth.json").write_text(json.dumps({"seed": args.seed, **params}, indent=2) + "\n")
    print(f"wrote {len(ds.graphs)} graphs to {out}")
    return EXIT_OK


# --- stats ------------------------------------------------------------------

def cmd_stats(args) -> int:
    db = Path(args.db)
    entries = mapdb.read_index(db)
    if not entries:
        raise DataError("empty map database")
    counts, payload, files = [], [], []
    for e in entries:
        data = (db / e.file_name).read_bytes()
        counts.append(len(bxg.deserialize(data)))
        payload.append(bxg.payload_size(data))
        files.append(len(data))
    kb = 1024.0
    rows = [("scans", f"{len(entries)}"),
            ("vertices / graph (mean)", f"{np.mean(counts):.1f}"),
            ("vertices / graph (max)", f"{max(counts)}"),
            ("values / vertex", f"{bxg.VALUES_PER_VERTEX}"),
            ("descriptor size (mean)", f"{np.mean(payload) / kb:.2f} kB"),
            ("file size incl. header (mean)", f"{np.mean(files) / kb:.2f} kB"),
            ("map database total", f"{sum(files) / kb:.2f} kB")]
    if args.scans:
        raw = []
        for e in entries:
            p = Path(args.scans) / f"{e.scan_id}.bin"
            if p.exists():
                raw.append(len(read_point_cloud(p)))
        if raw:
            mean_raw = np.mean(raw) * 12 / kb
            rows += [("raw points / scan (mean)", f"{np.mean(raw):.0f}"),
                     ("raw scan size (mean)", f"{mean_raw:.2f} kB"),
                     ("compression factor", f"{mean_raw / (np.mean(payload) / kb):.1f}x")]
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--seed", type=int, default=0, help="root random seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="boxgraph", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("extract", parents=[common], help="build a map database from labelled scans")
    e.add_argument("scan_dir")
    e.add_argument("label_dir")
    e.add_argument("out_dir")
    e.add_argument("--poses", help="KITTI poses file to store in the index")
    e.add_argument("--calib", help="KITTI calib.txt; poses are moved to the sensor frame")
    e.set_defaults(func=cmd_extract)

    m = sub.add_parser("match", parents=[common], help="match two .bxg graphs")
    m.add_argument("graph_a", help="query graph (scan s)")
    m.add_argument("graph_b", help="map graph (scan m)")
    m.add_argument("--tau", type=float)
    m.add_argument("--format", choices=("csv", "json"), default="csv")
    m.set_defaults(func=cmd_match)

    v = sub.add_parser("evaluate", parents=[common], help="place recognition / pose evaluation")
    v.add_argument("db", help="map database directory")
    v.add_argument("--poses", help="KITTI poses file (default: poses in the index)")
    v.add_argument("--calib")
    v.add_argument("--mode", choices=("place", "pose", "both"), default="both")
    v.add_argument("--beta", type=float, help="F-beta weight (required for place metrics)")
    v.add_argument("--tau", type=float)
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--out", help="output directory for pairs and metrics")
    v.add_argument("--format", choices=("csv", "json"), default="csv")
    v.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic loop dataset")
    s.add_argument("out_dir")
    s.add_argument("--n-scans", type=int, default=200)
    s.add_argument("--first-lap", type=int, default=170)
    s.add_argument("--step", type=float, default=2.0)
    s.add_argument("--lateral-offset", type=float, default=0.5)
    s.add_argument("--sensor-range", type=float, default=10.0)
    s.add_argument("--density", type=float, default=0.2)
    s.add_argument("--noise-centroid", type=float, default=0.1)
    s.add_argument("--noise-feature", type=float, default=0.05)
    s.add_argument("--dropout", type=float, default=0.2)
    s.add_argument("--distractors", type=float, default=0.2)
    s.set_defaults(func=cmd_synth)

    st = sub.add_parser("stats", parents=[common], help="map database size accounting")
    st.add_argument("db")
    st.add_argument("--scans", help="velodyne directory for raw-size comparison")
    st.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("boxgraph: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"boxgraph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, MalformedFileError, ProtocolError, OSError) as exc:
        print(f"boxgraph: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"boxgraph: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
