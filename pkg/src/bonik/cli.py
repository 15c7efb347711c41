"""Console entry points: bonik-gateway (serve HTTP) and bonik-bench
(workload runner). Both accept a JSON config file; the gateway lets
flags override the file, the bench runner treats the file as
authoritative over flags."""
from __future__ import annotations

import argparse
import json
from typing import Optional

from .bench import (
    WORKLOADS,
    BenchReport,
    MatrixResult,
    WorkloadConfig,
    emit_csv,
    run_matrix,
    run_workload,
)
from .gateway import GatewayConfig, create_app
from .network import BatchPolicy, LatencyProfile


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise SystemExit(f"config {path} must hold a JSON object")
    return obj


def _latency_from(obj: dict) -> Optional[LatencyProfile]:
    return LatencyProfile.from_dict(obj["latency_ms"]) if "latency_ms" in obj else None


def _batch_from(obj: dict) -> Optional[BatchPolicy]:
    return BatchPolicy.from_dict(obj["batch"]) if "batch" in obj else None


def gateway_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bonik-gateway", description="Serve the chat/ledger gateway over HTTP."
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--mode", choices=("interactive", "bench"))
    parser.add_argument("--listen", help="addr:port to bind (default 127.0.0.1:8080)")
    parser.add_argument("--ledger-path", help="append-only JSONL block log")
    parser.add_argument("--topology", help="topology preset, e.g. 2O2P")
    parser.add_argument("--static-dir", help="directory of built chat client to serve at /")
    parser.add_argument("--seed", help="deterministic key derivation seed (testing only)")
    parser.add_argument(
        "--nlu-http", action="store_true", help="also expose the language service on /internal/nlu"
    )
    args = parser.parse_args(argv)

    file_cfg = _load_json(args.config) if args.config else {}
    kwargs = {
        "mode": args.mode or file_cfg.get("mode", "interactive"),
        "topology": args.topology or file_cfg.get("topology", "2O2P"),
        "latency": _latency_from(file_cfg),
        "batch": _batch_from(file_cfg),
        "endorsement_scheme": file_cfg.get("endorsement_scheme", "ecdsa"),
        "ledger_path": args.ledger_path or file_cfg.get("ledger_path"),
        "listen": args.listen or file_cfg.get("listen", "127.0.0.1:8080"),
        "nlu_secret": file_cfg.get("nlu_secret"),
        "user_dataset": file_cfg.get("user_dataset"),
        "bot_dataset": file_cfg.get("bot_dataset"),
        "static_dir": args.static_dir or file_cfg.get("static_dir"),
        "seed": args.seed or file_cfg.get("seed"),
        "nlu_http": args.nlu_http or bool(file_cfg.get("nlu_http", False)),
    }
    config = GatewayConfig(**kwargs)
    app = create_app(config)

    host, _, port = config.listen.rpartition(":")
    try:
        import uvicorn
    except ImportError:
        raise SystemExit("uvicorn is required to serve the gateway")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080), log_level="info")
    return 0


def _print_report(report: BenchReport) -> None:
    if report.error:
        print(f"FAILED {report.workload:9s} users={report.users:2d} {report.topology}: {report.error}")
        return
    print(
        f"{report.workload:9s} users={report.users:2d} {report.topology} "
        f"mean_tps={report.mean_tps:9.3f} committed={report.committed_count:7d} "
        f"aborted={report.aborted_count:5d}"
    )


def _print_matrix_summary(matrix: MatrixResult) -> None:
    print("\ntrend checks:")
    for name, passed in matrix.verdicts.items():
        print(f"  {'PASS' if passed else 'FAIL'}  {name}")
    print("\ncalibration against reference TPS (soft, +-30%):")
    for row in matrix.calibration:
        measured = row["measured_tps"]
        got = f"{measured:8.2f}" if measured is not None else "     n/a"
        dev = f"{row['deviation']:+7.1%}" if row["deviation"] is not None else "    n/a"
        mark = "within" if row["within_tolerance"] else "OUTSIDE"
        print(
            f"  {row['workload']:9s} users={row['users']:2d} {row['topology']} "
            f"ref={row['reference_tps']:7.2f} got={got} dev={dev}  {mark}"
        )


def bench_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bonik-bench", description="Closed-loop TPS benchmark on the simulated network."
    )
    parser.add_argument("--matrix", action="store_true", help="run the full workload grid")
    parser.add_argument("--workload", choices=WORKLOADS)
    parser.add_argument("--users", type=int, default=10)
    parser.add_argument("--topology", default="2O2P")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--duration", type=float, default=60.0, help="virtual seconds per repetition")
    parser.add_argument("--repetitions", type=int, default=5)
    parser.add_argument("--rate", type=float, default=20.0, help="per-user send rate (tx/s)")
    parser.add_argument("--out", help="write per-repetition results CSV here")
    parser.add_argument("--config", help="JSON config file; its values override flags")
    args = parser.parse_args(argv)

    cfg = _load_json(args.config) if args.config else {}
    matrix_mode = cfg.get("matrix", args.matrix)
    seed = cfg.get("seed", args.seed)
    duration = cfg.get("duration_s", args.duration)
    repetitions = cfg.get("repetitions", args.repetitions)
    rate = cfg.get("send_rate_per_user_tps", args.rate)
    out = cfg.get("out", args.out)
    latency = _latency_from(cfg)
    batch = _batch_from(cfg)

    if matrix_mode:
        matrix = run_matrix(
            seed=seed,
            duration_s=duration,
            repetitions=repetitions,
            latency=latency,
            batch=batch,
            progress=_print_report,
        )
        _print_matrix_summary(matrix)
        if out:
            emit_csv(matrix.reports, out)
            print(f"\nwrote {out}")
        return 0 if matrix.all_trends_hold else 1

    workload = cfg.get("workload", args.workload)
    if not workload:
        parser.error("provide --matrix or --workload")
    config = WorkloadConfig(
        workload=workload,
        users=cfg.get("users", args.users),
        topology=cfg.get("topology", args.topology),
        send_rate_per_user_tps=rate,
        duration_s=duration,
        repetitions=repetitions,
        seed=seed,
        latency=latency,
        batch=batch,
    )
    report = run_workload(config)
    _print_report(report)
    for rep in report.repetitions:
        print(
            f"  rep {rep.repetition}: committed={rep.committed} aborted={rep.aborted} "
            f"tps={rep.tps:.3f}"
        )
    if out:
        emit_csv([report], out)
        print(f"wrote {out}")
    return 0
