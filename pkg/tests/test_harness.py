import json
import os

import pytest

from navrad import cli, config
from navrad.attack import AttackConfig
from navrad.harness import RunConfig, batch, report_json, run_experiment
from navrad.simulator import randomized_scenario

SHORT_NONE = RunConfig(attack=AttackConfig(kind="none", start_time=5.0),
                       attack_window=20.0)


def test_report_is_deterministic_across_runs():
    sc = randomized_scenario(5, "dos")
    cfg = RunConfig(attack=AttackConfig(kind="dos", start_time=55.0),
                    attack_window=15.0)
    first = report_json(run_experiment(sc, cfg))
    second = report_json(run_experiment(sc, cfg))
    assert first == second


def test_detector_does_not_touch_the_picture():
    sc = randomized_scenario(6, "dos")
    base = RunConfig(attack=AttackConfig(kind="dos", start_time=55.0),
                     attack_window=10.0, frames_every=5)
    with_det = run_experiment(sc, base)
    without = run_experiment(sc, RunConfig(
        attack=base.attack, detect=False,
        attack_window=base.attack_window, frames_every=5))
    assert with_det["frame_hashes"] == without["frame_hashes"]
    assert len(with_det["frame_hashes"]) >= 4


def test_injections_never_precede_their_trigger():
    sc = randomized_scenario(7, "dos")
    cfg = RunConfig(attack=AttackConfig(kind="dos", start_time=55.0),
                    attack_window=15.0, detect=False)
    report = run_experiment(sc, cfg)
    stats = report["injection_latency_s"]
    assert stats["n"] > 0
    assert stats["min"] > 0.0
    assert report["eps_budget_ok"]


def test_run_writes_artifacts(tmp_path):
    sc = randomized_scenario(8, "none")
    out = tmp_path / "artifacts"
    cfg = RunConfig(attack=AttackConfig(kind="none", start_time=5.0),
                    attack_window=10.0, frames_every=4, out_dir=str(out),
                    anomaly_log=str(out / "anomalies.jsonl"),
                    capture_path=str(out / "traffic.cap"))
    os.makedirs(out)
    run_experiment(sc, cfg)
    frames = sorted(out.glob("frame_*.ppm"))
    assert frames
    assert frames[0].read_bytes().startswith(b"P6\n")
    assert (out / "traffic.cap").stat().st_size > 1000


def test_batch_aggregates(tmp_path):
    cfg = RunConfig(attack=AttackConfig(kind="dos", start_time=55.0),
                    attack_window=30.0)
    agg = batch("dos", 2, base_seed=3, cfg=cfg)
    assert agg["success_rate"] == 1.0
    assert agg["packets"]["attack"] > 0
    assert len(agg["runs"]) == 2
    assert agg["detection"]["per_policy"]["P3"]["attack_pct"] == 100.0


def test_batch_needs_a_seed():
    with pytest.raises(ValueError):
        batch("dos", 0)


SCENARIO_TOML = """
[scenario]
seed = 12
duration = 60.0

[victim]
name = "VICTIM"
mmsi = 247000000
lat = 44.05
lon = 8.60
course = 0.0
sog = 10.0

[[ship]]
name = "CARGO"
mmsi = 247000007
lat = 44.12
lon = 8.60
course = 10.0
sog = 4.0
dims = [100, 20, 15, 15]

[antenna]
rotation_period = 2.5
sac = 1
sic = 1

[attack]
kind = "dos"
start_time = 55.0
k = 10

[detection]
enabled = true
window = 20
"""


def test_scenario_file_roundtrip(tmp_path):
    path = tmp_path / "scenario.toml"
    path.write_text(SCENARIO_TOML)
    scenario, extras = config.load_scenario(path)
    assert scenario.seed == 12
    assert scenario.victim.sog == 10.0
    assert scenario.ships[0].bbox == (30, 120)
    assert extras["attack"]["kind"] == "dos"
    atk = config.attack_config(extras["attack"])
    assert atk.k == 10 and atk.start_time == 55.0


def test_scenario_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[victim]\nname='X'\nmmsi=1\nlat=0.0\nlon=0.0\n"
                    "course=0.0\nsog=1.0\nwarp_drive=9\n")
    with pytest.raises(config.ConfigError):
        config.load_scenario(path)


def test_cli_run_and_check(tmp_path, capsys):
    out = tmp_path / "run"
    rc = cli.main(["run", "--attack", "dos", "--seed", "3",
                   "--duration", "30", "--out", str(out), "--check"])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["success"] is True
    assert report["detection"]["tp_rate"] == 1.0


def test_cli_policies(capsys):
    assert cli.main(["policies", "list"]) == 0
    assert capsys.readouterr().out.split() == ["P1", "P2", "P3", "P4", "P5", "P6"]
    assert cli.main(["policies", "describe"]) == 0
    assert "span" in capsys.readouterr().out


def test_cli_render_frames(tmp_path, capsys):
    out = tmp_path / "run"
    cli.main(["run", "--attack", "none", "--seed", "4", "--duration", "10",
              "--out", str(out)])
    frames_dir = tmp_path / "frames"
    rc = cli.main(["render-frames", "--capture", str(out / "traffic.cap"),
                   "--out", str(frames_dir), "--trails"])
    assert rc == 0
    assert list(frames_dir.glob("frame_*.ppm"))


def test_cli_replay_inproc(tmp_path, capsys):
    out = tmp_path / "run"
    cli.main(["run", "--attack", "none", "--seed", "4", "--duration", "6",
              "--out", str(out)])
    rc = cli.main(["replay", "--capture", str(out / "traffic.cap"),
                   "--bus", "inproc"])
    assert rc == 0
    assert "replayed" in capsys.readouterr().out


def test_hijack_spoofed_ais_outpaces_real_reports():
    """Injected reports arrive faster than one per two seconds, so they
    dominate the real transponder's six-second cadence."""
    from navrad.bus import TOPIC_NMEA
    sc = randomized_scenario(2, "hijack")
    cfg = RunConfig(attack=AttackConfig(kind="hijack"), attack_window=150.0,
                    detect=False)
    import navrad.harness as H
    import navrad.attack as A
    import navrad.bus as B
    import navrad.simulator as S
    loop = B.EventLoop()
    bus = B.InProcBus(loop)
    world = S.World(sc)
    S.AntennaEmitter(world, sc.antenna, bus, loop).start()
    S.SensorEmitter(world, sc.emission, bus, loop).start()
    console = H.RadarConsole(sc, bus, loop, cfg.arpa, True)
    console.attach()
    import random
    eng = A.AttackEngine(cfg.attack, bus, loop, random.Random("x"),
                         spoof_source=sc.antenna.source)
    eng.attach()
    loop.run_until(220.0)
    start = next(t for t, e in eng.events if e.startswith("hijack-start"))
    ais_times = [i.t_trigger for i in eng.injections
                 if i.topic == TOPIC_NMEA and i.label == "hijack-ais"
                 and start <= i.t_trigger <= start + 60.0]
    assert len(ais_times) >= 40
    gaps = [b - a for a, b in zip(ais_times, ais_times[1:])]
    assert max(gaps) < 2.0


def test_dos_frames_saturate_and_anomalies_highlight(tmp_path):
    """Replayed DoS captures render a saturated scope; the anomaly log
    paints its sectors over the frames."""
    out = tmp_path / "run"
    rc = cli.main(["run", "--attack", "dos", "--seed", "2",
                   "--duration", "20", "--out", str(out)])
    assert rc == 0
    frames_dir = tmp_path / "frames"
    rc = cli.main(["render-frames", "--capture", str(out / "traffic.cap"),
                   "--out", str(frames_dir),
                   "--anomalies", str(out / "anomalies.jsonl")])
    assert rc == 0
    import numpy as np
    frames = sorted(frames_dir.glob("frame_*.ppm"))
    last = frames[-1].read_bytes()
    _, _, rest = last.partition(b"255\n")
    px = np.frombuffer(rest, np.uint8).reshape(512, 512, 3)
    assert (px[..., 1] > 200).sum() > 1000   # flooded scope
    first = frames[0].read_bytes()
    _, _, rest0 = first.partition(b"255\n")
    px0 = np.frombuffer(rest0, np.uint8).reshape(512, 512, 3)
    assert (px[..., 1] > 200).sum() > 5 * (px0[..., 1] > 200).sum()
    assert any((np.frombuffer(f.read_bytes().partition(b'255\n')[2],
                              np.uint8).reshape(512, 512, 3)[..., 0] >= 170).any()
               for f in frames)


def test_perf_figures_only_on_request():
    sc = randomized_scenario(9, "none")
    plain = run_experiment(sc, SHORT_NONE)
    assert "perf" not in plain
    with_perf = run_experiment(sc, RunConfig(
        attack=SHORT_NONE.attack, attack_window=SHORT_NONE.attack_window,
        perf=True))
    assert with_perf["perf"]["wall_s"] > 0.0
