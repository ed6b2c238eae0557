"""Command-line entry point: ``tomomatch <command> ...``.

Exit codes: 0 on success, 2 when no consensus transform exists, 3 on bad
input (unreadable files, invalid parameters, protocol errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .consensus import ConsensusParams, MatchConfig, match_maps
from .errors import NoConsensus, RemoteError, TomoError
from .geometry import load_cloud, save_cloud, voxel_filter
from .rigid2d import RansacParams

EXIT_OK = 0
EXIT_NO_CONSENSUS = 2
EXIT_INPUT = 3

log = logging.getLogger("tomomatch")


def _positive(kind):
    def conv(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _add_match_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", type=_positive(float), default=0.05, help="voxel/pixel size in metres")
    p.add_argument("--seed", type=int, default=0, help="global RANSAC seed")
    p.add_argument("--k", type=_positive(int), default=1000, help="max keypoints per slice")
    p.add_argument("--max-hamming", type=int, default=40)
    p.add_argument("--t-xy", type=_positive(float), default=None, help="cluster translation tolerance (default 2*grid)")
    p.add_argument("--t-theta", type=_positive(float), default=0.05, help="cluster yaw tolerance in radians")
    p.add_argument("--min-cluster", type=_positive(int), default=3)
    p.add_argument("--inlier-threshold", type=_positive(float), default=None, help="RANSAC threshold (default 2*grid)")
    p.add_argument("--workers", type=_positive(int), default=1)


def _match_config(a) -> MatchConfig:
    g = a.grid
    ransac = RansacParams.for_grid(g)
    if a.inlier_threshold is not None:
        ransac = RansacParams.for_grid(g, inlier_threshold=a.inlier_threshold)
    cons = ConsensusParams(t_xy=a.t_xy if a.t_xy is not None else 2.0 * g, t_theta=a.t_theta,
                           min_cluster=a.min_cluster)
    return MatchConfig(grid=g, seed=a.seed, max_features=a.k, max_hamming=a.max_hamming,
                       ransac=ransac, consensus=cons, workers=a.workers)


def _emit(text: str, path) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_gen(a) -> int:
    from .synthetic import gen_environment, indoor_scene, single_room

    build = single_room if a.scene == "room" else indoor_scene
    cloud = gen_environment(build(a.seed, density=a.density))
    if a.grid:
        cloud = voxel_filter(cloud, a.grid)
    save_cloud(cloud, a.output, format=a.format)
    log.info("wrote %d points to %s", len(cloud), a.output)
    return EXIT_OK


def cmd_slice(a) -> int:
    from .tomography import slice_map, write_slice_index

    cloud = voxel_filter(load_cloud(a.map), a.grid)
    sset = slice_map(cloud, a.grid, max_features=a.k)
    index = write_slice_index(sset, a.output)
    log.info("wrote %d slices, index at %s", len(sset), index)
    return EXIT_OK


def cmd_match(a) -> int:
    cfg = _match_config(a)
    res = match_maps(load_cloud(a.map_c), load_cloud(a.map_d), cfg)
    _emit(res.to_json(include_diagnostics=a.diagnostics), a.output)
    return EXIT_OK


def cmd_eval(a) -> int:
    from .harness import load_config, run_benchmark, success_rate

    cfg = load_config(a.config)
    out = a.output or cfg.output
    records = run_benchmark(cfg, out)
    summary = {"pairs": len(records), "success_rate": success_rate(records), "output": out}
    print(json.dumps(summary))
    return EXIT_OK


def cmd_serve(a) -> int:
    from .exchange import serve

    cfg = _match_config(a)

    def ready(server):
        host, port = server.address
        print(f"listening on {host}:{port}", flush=True)

    serve(a.bind, load_cloud(a.map), cfg, agent_id=a.agent_id, ready=ready)
    return EXIT_OK


def cmd_send(a) -> int:
    from .exchange import send

    cfg = _match_config(a)
    res = send(a.peer, load_cloud(a.map), cfg, timeout=a.timeout, agent_id=a.agent_id)
    _emit(res.to_json(include_diagnostics=a.diagnostics), a.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tomomatch", description="Register gravity-aligned point-cloud maps by slicing.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic indoor environment")
    g.add_argument("output", help="output file (.ply or .xyz)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scene", choices=("indoor", "room"), default="indoor",
                   help="two rooms and a corridor, or a single room")
    g.add_argument("--density", type=_positive(float), default=3000.0, help="points per square metre")
    g.add_argument("--grid", type=_positive(float), default=None, help="voxel-filter before writing")
    g.add_argument("--format", choices=("ply", "xyz"), default="ply")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("slice", help="slice a cloud into PGM images with a JSON index")
    s.add_argument("map")
    s.add_argument("output", help="output directory")
    s.add_argument("--grid", type=_positive(float), default=0.05)
    s.add_argument("--k", type=_positive(int), default=1000)
    s.set_defaults(func=cmd_slice)

    m = sub.add_parser("match", help="estimate the transform taking map D into map C")
    m.add_argument("map_c")
    m.add_argument("map_d")
    _add_match_flags(m)
    m.add_argument("-o", "--output", default=None, help="write JSON here instead of stdout")
    m.add_argument("--diagnostics", action="store_true")
    m.set_defaults(func=cmd_match)

    e = sub.add_parser("eval", help="run a planted-transform benchmark from a config file")
    e.add_argument("config")
    e.add_argument("-o", "--output", default=None, help="CSV path (overrides the config)")
    e.set_defaults(func=cmd_eval)

    sv = sub.add_parser("serve", help="answer match requests against a local map")
    sv.add_argument("--bind", required=True, help="HOST:PORT")
    sv.add_argument("--map", required=True)
    sv.add_argument("--agent-id", type=int, default=0)
    _add_match_flags(sv)
    sv.set_defaults(func=cmd_serve)

    sd = sub.add_parser("send", help="send local slices to a serving peer and print its result")
    sd.add_argument("--peer", required=True, help="HOST:PORT")
    sd.add_argument("--map", required=True)
    sd.add_argument("--agent-id", type=int, default=1)
    sd.add_argument("--timeout", type=_positive(float), default=300.0)
    sd.add_argument("-o", "--output", default=None)
    sd.add_argument("--diagnostics", action="store_true")
    _add_match_flags(sd)
    sd.set_defaults(func=cmd_send)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NoConsensus as exc:
        print(f"no consensus: {exc}", file=sys.stderr)
        return EXIT_NO_CONSENSUS
    except RemoteError as exc:
        msg = str(exc)
        print(f"peer error: {msg}", file=sys.stderr)
        return EXIT_NO_CONSENSUS if msg.startswith("no-consensus") else EXIT_INPUT
    except (TomoError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
