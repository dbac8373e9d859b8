"""Command line front end.

Subcommands:
  run            one scenario end to end; report to stdout or --out
  batch          n seeded randomized scenarios of one attack kind
  render-frames  replay a capture file through the display, write PPM frames
  replay         re-publish a capture onto a bus (UDP for real equipment)
  policies       list/describe the built-in detection policies
  detect         standalone detector on a UDP multicast group

`--check` makes run/batch exit non-zero when the run misses its acceptance
bounds (attack success, detection rates, latency budget).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import config
from .attack import AttackConfig
from .bus import (TOPIC_ASTERIX, EventLoop, UdpMulticastBus, read_capture,
                  replay_capture)
from .detect import (AnomalySink, DetectionParams, DetectionPipeline,
                     builtin_candidates)
from .harness import ATTACK_WINDOWS, RunConfig, batch, report_json, run_experiment
from .simulator import randomized_scenario


def _add_common(p):
    p.add_argument("--attack", choices=["none", "dos", "ghost", "hijack"],
                   default=None, help="attack kind (overrides the scenario file)")
    p.add_argument("--detect", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--quirk", action=argparse.BooleanOptionalAction, default=True,
                   help="display replaces traces on cell-geometry changes")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--duration", type=float, default=None,
                   help="attack window length in simulated seconds")
    p.add_argument("--frames-every", type=int, default=None, metavar="N",
                   help="render a PPM frame every N revolutions")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--bus", choices=["inproc", "udp"], default="inproc")
    p.add_argument("--check", action="store_true",
                   help="exit non-zero if the run misses its bounds")
    p.add_argument("--perf", action="store_true",
                   help="append wall-clock/allocation figures (not gated)")


def _run_config(args, extras: dict) -> RunConfig:
    kind = args.attack if args.attack is not None else \
        extras.get("attack", {}).get("kind", "none")
    atk = config.attack_config(extras.get("attack", {}), kind)
    det = extras.get("detection", {})
    out = args.out
    return RunConfig(
        attack=atk,
        detect=args.detect and det.get("enabled", True),
        quirk_replace=args.quirk,
        attack_window=args.duration,
        frames_every=args.frames_every,
        out_dir=out,
        anomaly_log=os.path.join(out, "anomalies.jsonl") if out else None,
        capture_path=os.path.join(out, "traffic.cap") if out else None,
        detection_params=config.detection_params(det),
        perf=args.perf,
    )


def _check_run(report: dict) -> list[str]:
    problems = []
    if report["success"] is False:
        problems.append(f"attack did not meet its success criteria: "
                        f"{report['success_detail']}")
    if not report["eps_budget_ok"]:
        problems.append("injection latency exceeded the budget")
    det = report["detection"]
    if det is not None:
        if det["tp_rate"] is not None and det["tp_rate"] < 0.99:
            problems.append(f"true-positive rate {det['tp_rate']} < 0.99")
        if det["fp_rate"] is not None and det["fp_rate"] > 0.005:
            problems.append(f"false-positive rate {det['fp_rate']} > 0.005")
    return problems


def cmd_run(args) -> int:
    if args.scenario:
        scenario, extras = config.load_scenario(args.scenario)
    else:
        kind = args.attack or "none"
        scenario = randomized_scenario(args.seed, kind)
        extras = {}
    cfg = _run_config(args, extras)
    mirror = None
    if args.bus == "udp":
        # the experiment stays deterministic in-process; its traffic is
        # mirrored onto the multicast groups for external listeners
        mirror = UdpMulticastBus()
    report = run_experiment(scenario, cfg, udp_mirror=mirror)
    if mirror is not None:
        mirror.close()
    _emit_report(report, args.out, "report.json")
    if args.check:
        problems = _check_run(report)
        for p in problems:
            print(f"CHECK FAIL: {p}", file=sys.stderr)
        return 1 if problems else 0
    return 0


def cmd_batch(args) -> int:
    kind = args.attack or "none"
    cfg = RunConfig(
        attack=AttackConfig(kind=kind),
        detect=args.detect, quirk_replace=args.quirk,
        attack_window=args.duration, perf=args.perf,
    )
    agg = batch(kind, args.seeds, base_seed=args.seed, cfg=cfg)
    _emit_report(agg, args.out, f"batch_{kind}.json")
    print(f"{kind}: success rate {agg['success_rate'] * 100:.1f}% over "
          f"{args.seeds} runs; attack packets {agg['packets']['attack']}, "
          f"tp rate {agg['detection']['tp_rate']}, fp rate {agg['detection']['fp_rate']}")
    if args.check:
        ok = agg["success_rate"] == 1.0
        if agg["detection"]["tp_rate"] is not None:
            ok = ok and agg["detection"]["tp_rate"] >= 0.99
        if agg["detection"]["fp_rate"] is not None:
            ok = ok and agg["detection"]["fp_rate"] <= 0.005
        if not ok:
            print("CHECK FAIL: batch outside its bounds", file=sys.stderr)
            return 1
    return 0


def cmd_render_frames(args) -> int:
    from . import asterix
    from .ppi import PpiImage, render
    from .sectors import AnnulusSector

    anomalies = []
    if args.anomalies:
        with open(args.anomalies, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                if rec.get("sector"):
                    a0, a1, d0, d1 = rec["sector"]
                    anomalies.append((rec["time"], AnnulusSector(
                        a0, a1, d0, d1 if d1 is not None else float("inf"))))

    img = None
    period = None
    next_frame = None
    count = 0
    os.makedirs(args.out, exist_ok=True)
    for d in read_capture(args.capture):
        if d.topic != TOPIC_ASTERIX:
            continue
        try:
            msg = asterix.decode(d.payload)
        except asterix.DecodeError:
            continue
        if img is None:
            img = PpiImage(quirk_replace=args.quirk)
            img.trails_enabled = args.trails
            period = img.rotation_period
            next_frame = d.time + period
        img.apply(msg, d.time)
        if d.time >= next_frame:
            img.revolution_tick()
            next_frame += period
            overlays = tuple(sec for t, sec in anomalies if abs(t - d.time) < 5.0)
            frame = render(img, mode=args.mode, trails=args.trails,
                           overlays=overlays)
            count += 1
            with open(os.path.join(args.out, f"frame_{count:05d}.ppm"), "wb") as fh:
                fh.write(frame)
    print(f"rendered {count} frames from {args.capture}")
    return 0


def cmd_replay(args) -> int:
    if args.bus == "udp":
        bus = UdpMulticastBus()
        t0 = time.monotonic()
        n = 0
        for d in read_capture(args.capture):
            delay = d.time / args.speed - (time.monotonic() - t0)
            if delay > 0:
                time.sleep(delay)
            bus.publish(d.topic, d.payload)
            n += 1
        bus.close()
    else:
        loop = EventLoop()
        from .bus import InProcBus
        bus = InProcBus(loop)
        n = replay_capture(args.capture, bus, loop)
        loop.run_until(float("inf"))
    print(f"replayed {n} records")
    return 0


def cmd_policies(args) -> int:
    cands = builtin_candidates(DetectionParams())
    if args.action == "list":
        for c in cands:
            print(c.policy_id)
        return 0
    blurbs = {
        "P1": "categorical: center_bias holds one value across the traffic",
        "P2": "categorical: n_cells holds one value across the traffic",
        "P3": "statistical: azimuthal span within 3 sigma of its mean",
        "P4": "statistical: message_id monotone modulo its 24-bit wrap",
        "P5": "statistical: one sweep entry per azimuth step per revolution",
        "P6": "statistical: constant revolutions per fixed period",
    }
    for c in cands:
        print(f"{c.policy_id}: {blurbs[c.policy_id]}")
        print(f"    {type(c).__doc__.strip().splitlines()[0]}")
    return 0


def cmd_detect(args) -> int:
    from .asterix import AntennaId
    antennas = []
    for spec in args.antenna:
        sac, sic, source = spec.split(",", 2)
        antennas.append(AntennaId(int(sac), int(sic), source))
    sink = AnomalySink(args.out, keep=False)
    pipeline = DetectionPipeline(antennas, sink)
    bus = UdpMulticastBus()
    bus.subscribe(TOPIC_ASTERIX, pipeline.on_delivery)
    print("observing; ctrl-c to stop")
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    bus.close()
    sink.close()
    return 0


def _emit_report(report: dict, out_dir: str | None, name: str) -> None:
    text = report_json(report)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote {os.path.join(out_dir, name)}")
    else:
        print(text)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="navrad", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--scenario", default=None, help="scenario TOML file")
    _add_common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("batch", help="run seeded scenario batches")
    p.add_argument("--seeds", type=int, default=25)
    _add_common(p)
    p.set_defaults(fn=cmd_batch)

    p = sub.add_parser("render-frames", help="render PPM frames from a capture")
    p.add_argument("--capture", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["head-up", "north-up"], default="head-up")
    p.add_argument("--trails", action="store_true")
    p.add_argument("--quirk", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--anomalies", default=None, help="anomaly JSONL to overlay")
    p.set_defaults(fn=cmd_render_frames)

    p = sub.add_parser("replay", help="re-publish a capture onto a bus")
    p.add_argument("--capture", required=True)
    p.add_argument("--bus", choices=["inproc", "udp"], default="udp")
    p.add_argument("--speed", type=float, default=1.0)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("policies", help="built-in detection policies")
    p.add_argument("action", choices=["list", "describe"])
    p.set_defaults(fn=cmd_policies)

    p = sub.add_parser("detect", help="standalone detector on UDP multicast")
    p.add_argument("--antenna", action="append", default=[],
                   metavar="SAC,SIC,ADDR:PORT", required=False)
    p.add_argument("--out", default=None, help="anomaly JSONL path")
    p.set_defaults(fn=cmd_detect)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
