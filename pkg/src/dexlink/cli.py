"""Command-line entry points.

Exit codes, used consistently across subcommands:

  0  success
  2  configuration or parse failure (bad flags, unreadable files,
     port unavailable)
  3  pairing rejected by the server
  4  server unreachable or connection lost mid-stream
  5  verification failure (replay divergence, digest mismatch,
     demo integrity)

Commands:

  serve     run the teleoperation server until interrupted
  synth     scripted synthetic client; prints a one-line metrics summary
  replay    re-run a demo against a fresh scene and compare bit-for-bit
  validate  structural integrity check of a demo file
  export    flatten demos into a columnar dataset
"""

from __future__ import annotations

import argparse
import os
import socket
import sys

DEFAULT_PORT = 8123


def _port_default() -> int:
    env = os.environ.get("DEXLINK_PORT")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            print(f"error: DEXLINK_PORT is not a number: {env!r}", file=sys.stderr)
            raise SystemExit(2)
    return DEFAULT_PORT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dexlink", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the teleoperation server")
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--scene", default="ms_pick", help="scene file or bundled scene name")
    serve.add_argument("--arm", default=None, help="override arm model file")
    serve.add_argument("--hand", default=None, help="override hand model file")
    serve.add_argument("--profile", default=None, help="override hand profile file")
    serve.add_argument("--rate", type=int, default=100, help="control rate in Hz")
    serve.add_argument("--record", default=None, metavar="PATH",
                       help="record the first paired session to this demo file")
    serve.add_argument("--demo-dir", default=None,
                       help="directory for button-initiated recordings")
    serve.add_argument("--console-dir", default=None,
                       help="static console assets (default: autodetect frontend/dist)")
    serve.add_argument("--seed", type=int, default=None, help="pairing-code RNG seed")

    synth = sub.add_parser("synth", help="run a scripted synthetic client")
    synth.add_argument("--port", type=int, default=None)
    synth.add_argument("--host", default="127.0.0.1")
    synth.add_argument("--code", default=None,
                       help="pairing code (default: fetch from the server's /pair)")
    synth.add_argument("--script", default="hold",
                       help="hold | circle:radius=0.1,period=4 | lissajous:... | "
                            "grasp | hand_wave")
    synth.add_argument("--rate", type=float, default=60.0, help="send rate in Hz")
    synth.add_argument("--duration", type=float, default=5.0, help="stream time in s")
    synth.add_argument("--scene", default=None,
                       help="scene file providing waypoints for the grasp script")
    synth.add_argument("--seed", type=int, default=None, help="reserved for randomized scripts")

    rep = sub.add_parser("replay", help="verify a demo replays bit-identically")
    rep.add_argument("demo")
    rep.add_argument("--scene", required=True, help="scene file or bundled scene name")
    rep.add_argument("--arm", default=None)
    rep.add_argument("--hand", default=None)
    rep.add_argument("--profile", default=None)

    val = sub.add_parser("validate", help="check a demo file's integrity")
    val.add_argument("demo")

    exp = sub.add_parser("export", help="flatten demos into a columnar dataset")
    exp.add_argument("demos", nargs="+")
    exp.add_argument("--out", required=True)

    return ap


# ---------------------------------------------------------------------------


def cmd_serve(args) -> int:
    from .server import ServerSettings, build_scene, create_app

    port = args.port if args.port is not None else _port_default()
    try:
        scene = build_scene(args.scene, args.arm, args.hand, args.profile)
    except Exception as exc:
        print(f"error: scene {args.scene!r}: {exc}", file=sys.stderr)
        return 2

    console_dir = args.console_dir
    if console_dir is None:
        from pathlib import Path

        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        if candidate.is_dir():
            console_dir = str(candidate)

    # proto must be IPPROTO_TCP, not 0: accepted sockets inherit it, and
    # asyncio only sets TCP_NODELAY when proto says TCP. With Nagle left
    # on, small reply frames sit behind delayed ACKs and per-message
    # latency snaps to the client's send period.
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM, socket.IPPROTO_TCP)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((args.host, port))
    except OSError as exc:
        print(f"error: cannot bind port {port}: {exc}", file=sys.stderr)
        sock.close()
        return 2
    sock.listen(128)

    settings = ServerSettings(
        scene_ref=args.scene,
        arm=args.arm,
        hand=args.hand,
        profile=args.profile,
        control_rate_hz=args.rate,
        record_path=args.record,
        demo_dir=args.demo_dir,
        console_dir=console_dir,
        seed=args.seed,
    )
    try:
        app = create_app(settings, scene=scene)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        sock.close()
        return 2

    pc = app.state.dex.pairing_code()
    print(f"pairing code: {pc.code}")
    print(f"listening on {args.host}:{port} scene={scene.name}")
    sys.stdout.flush()

    import uvicorn

    config = uvicorn.Config(app, log_level="warning", lifespan="on")
    server = uvicorn.Server(config)
    server.run(sockets=[sock])
    return 0


def cmd_synth(args) -> int:
    from .synth import format_metrics, load_scene_script, parse_script, run_synth_sync

    port = args.port if args.port is not None else _port_default()
    try:
        script = parse_script(args.script, rate=args.rate, duration=args.duration)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    scene_script = None
    if script.kind == "grasp":
        if args.scene is None:
            print("error: the grasp script needs --scene for its waypoints", file=sys.stderr)
            return 2
        from .server import resolve_scene_path

        try:
            scene_script = load_scene_script(resolve_scene_path(args.scene))
        except Exception as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2

    code = args.code
    if code is None:
        import httpx

        try:
            r = httpx.get(f"http://{args.host}:{port}/pair", timeout=5.0)
            r.raise_for_status()
            code = r.json()["code"]
        except Exception as exc:
            print(f"error: cannot fetch pairing code: {exc}", file=sys.stderr)
            return 4
    from .protocol import CODE_LENGTH

    if len(code) != CODE_LENGTH:
        print(f"error: pairing code must be {CODE_LENGTH} characters: {code!r}", file=sys.stderr)
        return 2

    res = run_synth_sync(args.host, port, code, script, scene_script=scene_script)
    print(format_metrics(res))
    if res.exit_code != 0:
        print(f"error: {res.message}", file=sys.stderr)
    return res.exit_code


def cmd_replay(args) -> int:
    from .recorder import DigestMismatch, RecorderError, load_demo, replay
    from .server import build_scene

    try:
        demo = load_demo(args.demo)
    except (OSError, RecorderError) as exc:
        print(f"error: {args.demo}: {exc}", file=sys.stderr)
        return 2
    try:
        scene = build_scene(args.scene, args.arm, args.hand, args.profile)
    except Exception as exc:
        print(f"error: scene {args.scene!r}: {exc}", file=sys.stderr)
        return 2

    try:
        verdict = replay(demo, scene)
    except DigestMismatch as exc:
        print(f"digest mismatch: {exc}")
        return 5
    print(str(verdict))
    return 0 if verdict.identical else 5


def cmd_validate(args) -> int:
    from .recorder import validate_demo

    try:
        ok, detail = validate_demo(args.demo)
    except OSError as exc:
        print(f"error: {args.demo}: {exc}", file=sys.stderr)
        return 2
    print(f"{args.demo}: {detail}")
    return 0 if ok else 5


def cmd_export(args) -> int:
    from .recorder import IncompatibleHeaders, RecorderError, export_dataset, load_demo

    try:
        demos = [load_demo(p) for p in args.demos]
    except (OSError, RecorderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        rows = export_dataset(demos, args.out)
    except (IncompatibleHeaders, RecorderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {rows} rows to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "serve": cmd_serve,
        "synth": cmd_synth,
        "replay": cmd_replay,
        "validate": cmd_validate,
        "export": cmd_export,
    }[args.command]
    try:
        return handler(args)
    except KeyboardInterrupt:
        return 0


if __name__ == "__main__":
    sys.exit(main())
