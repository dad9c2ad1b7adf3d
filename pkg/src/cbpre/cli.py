"""``cbpre`` command line: key utilities, scenario runner and benchmarks.

Exit codes: 0 ok, 2 key validation failure, 3 scenario stalled,
4 plaintext mismatch.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .actors import ScenarioConfig, ScenarioStalled, Scenario
from .bench import bench_impact, bench_scale, metrics_rows, rows_to_csv
from .group import SECP256K1, DecodeError
from .scheme import (
    MasterSecret,
    PublicParams,
    ValidationFailed,
    ca_issue,
    cert_request,
    decode_certificate,
    derive_public_key,
    encode_certificate,
    finalize_key,
    setup,
)

EXIT_OK = 0
EXIT_KEY_INVALID = 2
EXIT_STALLED = 3
EXIT_MISMATCH = 4

CA_FILE = "ca.json"


def _load_or_create_ca(out: Path, rng: Optional[random.Random]):
    path = out / CA_FILE
    if path.exists():
        data = json.loads(path.read_text())
        return PublicParams.from_bytes(bytes.fromhex(data["params"])), MasterSecret(int(data["alpha"], 16))
    params, msk = setup(SECP256K1, rng)
    out.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"params": params.to_bytes().hex(), "alpha": f"{msk.alpha:064x}"}, indent=2))
    return params, msk


def _key_path(out: Path, identity: int) -> Path:
    return out / f"{identity:08x}.key.json"


def cmd_keygen(args) -> int:
    out = Path(args.out)
    rng = random.Random(args.seed) if args.seed is not None else None
    params, msk = _load_or_create_ca(out, rng)
    identity = args.id
    r_u, req = cert_request(params, identity, rng)
    try:
        kp = finalize_key(params, r_u, ca_issue(params, msk, req, rng), identity)
    except ValidationFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_KEY_INVALID
    group = params.group
    _key_path(out, identity).write_text(json.dumps({
        "id": f"{identity:08x}",
        "d": f"{kp.d:064x}",
        "cert": encode_certificate(group, kp.cert).hex(),
    }, indent=2))
    print(f"id      {identity:08x}")
    print(f"cert    {encode_certificate(group, kp.cert).hex()}")
    print(f"public  {group.encode_point(kp.public).hex()}")
    print("validation OK")
    return EXIT_OK


def cmd_verify_key(args) -> int:
    out = Path(args.out)
    try:
        data = json.loads((out / CA_FILE).read_text())
        params = PublicParams.from_bytes(bytes.fromhex(data["params"]))
        key = json.loads(_key_path(out, args.id).read_text())
        cert = decode_certificate(params.group, bytes.fromhex(key["cert"]))
        d = int(key["d"], 16)
        identity = int(key["id"], 16)
    except (OSError, DecodeError, ValueError, KeyError) as exc:
        print(f"invalid key material: {exc}", file=sys.stderr)
        return EXIT_KEY_INVALID
    if identity != args.id or params.group.base_mul(d) != derive_public_key(params, cert, identity):
        print("validation FAILED", file=sys.stderr)
        return EXIT_KEY_INVALID
    print("validation OK")
    return EXIT_OK


def cmd_run(args) -> int:
    config = ScenarioConfig.from_file(Path(args.config)) if args.config else ScenarioConfig()
    if args.seed is not None:
        config.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario = Scenario(config, store_dir=out / "store", realtime=args.realtime)
    code = EXIT_OK
    try:
        trace = scenario.run()
    except ScenarioStalled as exc:
        print(f"stalled: {exc}", file=sys.stderr)
        trace = exc.trace
        code = EXIT_STALLED
    (out / "trace.jsonl").write_text(trace.to_jsonl())
    scenario.ledger.export_events(out / "events.jsonl")
    # a stalled run still reports the requests that finished
    done = replace(trace, requests={k: r for k, r in trace.requests.items() if r.verified is not None})
    (out / "metrics.csv").write_text(rows_to_csv(metrics_rows(done, "run")))
    if code == EXIT_OK and trace.mismatches:
        print(f"{trace.mismatches} request(s) received data that did not match the sensor", file=sys.stderr)
        code = EXIT_MISMATCH
    if code == EXIT_OK:
        lat = trace.latencies()
        print(f"{len(lat)} request(s) completed and verified; mean latency {sum(lat) / len(lat):.2f} s")
    return code


def cmd_bench_impact(args) -> int:
    config = ScenarioConfig.from_file(Path(args.config)) if args.config else ScenarioConfig()
    if args.seed is not None:
        config.seed = args.seed
    result = bench_impact(args.reps, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "impact.csv").write_text(result.to_csv())
    print(f"PRE mean {result.pre_mean:.2f} s, baseline mean {result.baseline_mean:.2f} s, "
          f"overhead {100 * result.overhead:.1f}%")
    return EXIT_OK


def cmd_bench_scale(args) -> int:
    config = ScenarioConfig.from_file(Path(args.config)) if args.config else ScenarioConfig(readings_per_sensor=1)
    if args.seed is not None:
        config.seed = args.seed
    result = bench_scale(args.reps, config=config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scale.csv").write_text(result.to_csv())
    for n in result.loads:
        print(f"n={n:3d}  mean latency {result.mean_latency[n]:7.2f} s  mean block hops {result.mean_block_hops[n]:.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbpre", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, config=False, reps=None):
        sp.add_argument("--seed", type=int, default=None, help="RNG seed (u64)")
        sp.add_argument("--out", default="out", help="output directory")
        if config:
            sp.add_argument("--config", default=None, help="scenario config JSON")
        if reps is not None:
            sp.add_argument("--reps", type=int, default=reps, help="repetitions")

    sp = sub.add_parser("keygen", help="issue a certified key pair (creates the CA on first use)")
    common(sp)
    sp.add_argument("--id", type=lambda s: int(s, 0), required=True, help="32-bit identity")
    sp.set_defaults(func=cmd_keygen)

    sp = sub.add_parser("verify-key", help="re-check a key file against its certificate")
    common(sp)
    sp.add_argument("--id", type=lambda s: int(s, 0), required=True)
    sp.set_defaults(func=cmd_verify_key)

    sp = sub.add_parser("run", help="run one marketplace scenario")
    common(sp, config=True)
    sp.add_argument("--realtime", type=float, default=None,
                    help="sleep this many wall seconds per simulated second")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("bench-impact", help="PRE versus baseline sharing latency")
    common(sp, config=True, reps=30)
    sp.set_defaults(func=cmd_bench_impact)

    sp = sub.add_parser("bench-scale", help="latency under 1, 5, ..., 50 concurrent requests")
    common(sp, config=True, reps=10)
    sp.set_defaults(func=cmd_bench_scale)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
