"""CLI exit codes and messages, mostly in-process via main(argv)."""

import json
import socket
import subprocess
import sys
import time

import pytest

from dexlink.canonical import dumps as canonical_dumps, fnv1a64
from dexlink.cli import main
from dexlink.recorder import DemoWriter, make_header
from dexlink.server import build_scene
from dexlink.session import ServerCore
from dexlink.protocol import CodeRegistry

from .test_session import Driver


def record_demo(path, scene_ref="ms_pick", ticks=40):
    """Record a short session against a bundled scene via the core."""
    core = ServerCore(scene=build_scene(scene_ref), registry=CodeRegistry())
    d = Driver(core)
    header = make_header(core.scene, d.session.mapping, core.control_rate_hz, 0)
    core.begin_recording(d.conn, DemoWriter(path, header))
    d.send_pose((0.0, 0.0, 0.0))
    d.press("engage_reset")
    d.tick()
    for i in range(ticks):
        d.send_pose((0.001 * i, 0.0005 * i, 0.0))
        d.tick()
    core.disconnect(d.conn, d.now)
    return path


def rewrite_frame(path, tick, mutate):
    """Change one frame's payload, recomputing the line checksum."""
    lines = path.read_bytes().splitlines()
    out = []
    for ln in lines:
        payload = ln.rsplit(b"\t", 1)[0]
        doc = json.loads(payload)
        if doc.get("tick") == tick and "inputs" in doc:
            mutate(doc)
            payload = canonical_dumps(doc).encode("utf-8")
        out.append(payload + b"\t" + f"{fnv1a64(payload):016x}".encode())
    path.write_bytes(b"\n".join(out) + b"\n")


# ---------------------------------------------------------------------------
# argument handling


def test_no_command_exits_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_bad_env_port_exits_2(monkeypatch):
    monkeypatch.setenv("DEXLINK_PORT", "not-a-number")
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--script", "hold"])
    assert exc.value.code == 2


def test_unknown_script_kind_exits_2(capsys):
    assert main(["synth", "--script", "spiral", "--port", "1"]) == 2
    assert "unknown script kind" in capsys.readouterr().err


def test_grasp_requires_scene(capsys):
    assert main(["synth", "--script", "grasp", "--port", "1"]) == 2
    assert "--scene" in capsys.readouterr().err


def test_synth_unreachable_server_exits_4(capsys):
    assert main(["synth", "--script", "hold", "--port", "1"]) == 4
    assert "pairing code" in capsys.readouterr().err


def test_synth_malformed_code_exits_2(capsys):
    assert main(["synth", "--script", "hold", "--port", "1", "--code", "SHORT"]) == 2
    assert "6 characters" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# serve


def test_serve_bad_scene_exits_2(capsys):
    assert main(["serve", "--scene", "/nonexistent/scene.yaml", "--port", "1"]) == 2
    assert "scene" in capsys.readouterr().err


def test_serve_port_in_use_exits_2(capsys):
    holder = socket.socket(socket.AF_INET, socket.SOCK_STREAM, socket.IPPROTO_TCP)
    holder.bind(("127.0.0.1", 0))
    holder.listen(1)
    port = holder.getsockname()[1]
    try:
        assert main(["serve", "--scene", "ms_pick", "--port", str(port)]) == 2
        assert "port" in capsys.readouterr().err
    finally:
        holder.close()


def test_serve_prints_pairing_code_promptly():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    t0 = time.monotonic()
    p = subprocess.Popen(
        [sys.executable, "-m", "dexlink", "serve", "--port", str(port), "--scene", "ms_open"],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
    )
    try:
        line = p.stdout.readline()
        elapsed = time.monotonic() - t0
        assert line.startswith("pairing code: ")
        assert len(line.split(": ")[1].strip()) == 6
        assert elapsed < 1.0, f"took {elapsed:.2f}s"
    finally:
        p.terminate()
        p.wait(timeout=10)


# ---------------------------------------------------------------------------
# validate


def test_validate_ok(tmp_path, capsys):
    demo = record_demo(tmp_path / "ok.demo")
    assert main(["validate", str(demo)]) == 0
    assert "valid" in capsys.readouterr().out


def test_validate_flipped_bit_exits_5(tmp_path, capsys):
    demo = record_demo(tmp_path / "bad.demo")
    data = bytearray(demo.read_bytes())
    data[len(data) // 2] ^= 0x01
    demo.write_bytes(bytes(data))
    assert main(["validate", str(demo)]) == 5


def test_validate_missing_file_exits_2(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.demo")]) == 2


# ---------------------------------------------------------------------------
# replay


def test_replay_identical_exits_0(tmp_path, capsys):
    demo = record_demo(tmp_path / "a.demo")
    assert main(["replay", str(demo), "--scene", "ms_pick"]) == 0
    assert "identical" in capsys.readouterr().out


def test_replay_divergent_exits_5_and_names_tick(tmp_path, capsys):
    demo = record_demo(tmp_path / "b.demo")

    def bump(doc):
        doc["inputs"]["pose"]["pose"][4] += 0.001

    rewrite_frame(demo, tick=20, mutate=bump)
    assert main(["replay", str(demo), "--scene", "ms_pick"]) == 5
    out = capsys.readouterr().out
    assert "divergent at tick 20" in out


def test_replay_wrong_scene_exits_5_with_digest(tmp_path, capsys):
    demo = record_demo(tmp_path / "c.demo", scene_ref="ms_pick")
    assert main(["replay", str(demo), "--scene", "ms_open"]) == 5
    assert "digest" in capsys.readouterr().out


def test_replay_unreadable_demo_exits_2(tmp_path, capsys):
    p = tmp_path / "junk.demo"
    p.write_bytes(b"not a demo\n")
    assert main(["replay", str(p), "--scene", "ms_pick"]) == 2


# ---------------------------------------------------------------------------
# export


def test_export_writes_csv(tmp_path, capsys):
    a = record_demo(tmp_path / "a.demo")
    b = record_demo(tmp_path / "b.demo")
    out = tmp_path / "data.csv"
    assert main(["export", str(a), str(b), "--out", str(out)]) == 0
    assert out.exists()
    header = out.read_text().splitlines()[0]
    assert header.startswith("demo,tick,arm_q0")
    assert "rows" in capsys.readouterr().out


def test_export_incompatible_demos_exit_2(tmp_path, capsys):
    a = record_demo(tmp_path / "a.demo", scene_ref="ms_pick")

    from .test_simworld import gantry_scene

    core = ServerCore(scene=gantry_scene(), registry=CodeRegistry())
    d = Driver(core)
    header = make_header(core.scene, d.session.mapping, core.control_rate_hz, 0)
    b = tmp_path / "b.demo"
    core.begin_recording(d.conn, DemoWriter(b, header))
    d.engage_at((0, 0, 0))
    d.tick()
    core.disconnect(d.conn, d.now)

    assert main(["export", str(a), str(b), "--out", str(tmp_path / "x.csv")]) == 2
    assert "arm" in capsys.readouterr().err


def test_export_missing_input_exits_2(tmp_path):
    assert main(["export", str(tmp_path / "no.demo"), "--out", str(tmp_path / "x.csv")]) == 2
