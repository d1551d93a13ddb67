"""Command-line interface.

Exit codes: 0 ok, 2 usage, 3 I/O failure, 4 domain failure (abort, too few
samples, nothing precomputed), 5 network failure.

QBER is a fraction for ``simulate-keys`` and a percentage everywhere else.
Any subcommand accepts ``--config FILE`` with ``key = value`` lines using the
long flag names; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path

from . import codec, harness, qkd_sim
from .protocol import Role, SessionAborted, SessionConfig, TransportError, connect, listen, run_session
from .tpm import StructureError, TpmParams

log = logging.getLogger("tpm_reconcile")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DOMAIN, EXIT_NETWORK = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 0.5:
        raise argparse.ArgumentTypeError(f"QBER fraction must lie in [0, 0.5], got {text}")
    return value


def _percent(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 50.0:
        raise argparse.ArgumentTypeError(f"QBER percent must lie in [0, 50], got {text}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _list_of(conv):
    def parse(text: str):
        try:
            return [conv(part) for part in text.split(",") if part.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    parse.__name__ = f"list of {conv.__name__}"
    return parse


def _structures(text: str):
    if text in ("all", "table"):
        return text
    pairs = []
    for part in text.split(","):
        try:
            n, k = part.lower().split("x")
            pairs.append((_positive(n), _positive(k)))
        except (ValueError, argparse.ArgumentTypeError):
            raise argparse.ArgumentTypeError(f"bad structure {part!r}; expected NxK") from None
    return pairs


def _address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpm-reconcile", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="key = value defaults file")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        return p

    p = add("simulate-keys", "write a correlated key pair with a given error rate")
    p.add_argument("--length-bits", type=_positive, required=True)
    p.add_argument("--qber", type=_fraction, required=True, help="error rate as a fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-a", type=Path, required=True)
    p.add_argument("--out-b", type=Path, required=True)

    p = add("sync", "reconcile a key with a peer over TCP")
    p.add_argument("--role", choices=[r.value for r in Role], required=True)
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--listen", type=_address, metavar="HOST:PORT")
    where.add_argument("--connect", type=_address, metavar="HOST:PORT")
    p.add_argument("--key-file", type=Path, required=True)
    p.add_argument("--key-bits", type=_positive, help="key length when not a multiple of 8")
    p.add_argument("-K", type=_positive, required=True)
    p.add_argument("-N", type=_positive, required=True)
    p.add_argument("-L", type=_positive, required=True)
    p.add_argument("--max-iterations", type=_positive, default=1000)
    p.add_argument("--max-retries", type=_positive, default=10)
    p.add_argument("--digest-period", type=_positive, default=1)
    p.add_argument("--seed", type=int, help="input-vector seed (initiator only)")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--out", type=Path, help="write the final key here instead of stdout")

    p = add("experiment", "Monte-Carlo trials and recommended iteration counts")
    p.add_argument("--key-bits", type=_positive, required=True)
    p.add_argument("--L", dest="L", type=_list_of(_positive), required=True, help="comma list")
    p.add_argument("--qber", type=_list_of(_percent), required=True, help="comma list, percent")
    p.add_argument("--structures", type=_structures, default="all", help="all | table | NxK,...")
    p.add_argument("--trials", type=_positive, default=400)
    p.add_argument("--max-iterations", type=_positive, default=1000)
    p.add_argument("--max-retries", type=_positive, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive)
    p.add_argument("--json-out", type=Path, help="stats JSON (stdout if omitted)")
    p.add_argument("--csv-out", type=Path, help="histogram CSV")
    p.add_argument("--trend-axis", choices=harness.AXES)
    p.add_argument("--trend-out", type=Path, help="trend CSV for --trend-axis")

    p = add("recommend", "list structures and recommended iteration counts")
    p.add_argument("--key-bits", type=_positive, required=True)
    p.add_argument("--L", dest="L", type=_positive, required=True)
    p.add_argument("--qber", type=_percent, help="percent")
    p.add_argument("--compute", action="store_true", help="run trials for missing entries")
    p.add_argument("--trials", type=_positive, default=400)
    p.add_argument("--seed", type=int, default=0)

    p = add("attack-sim", "passive eavesdropper trials")
    p.add_argument("--key-bits", type=_positive, required=True)
    p.add_argument("-K", type=_positive, required=True)
    p.add_argument("-N", type=_positive, required=True)
    p.add_argument("-L", type=_positive, required=True)
    p.add_argument("--qber", type=_percent, required=True, help="percent")
    p.add_argument("--trials", type=_positive, default=200)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config_defaults(path: Path) -> dict:
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{lineno}: expected key = value", EXIT_USAGE)
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip().strip('"')
    return values


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config is None or command is None:
        return parser.parse_args(argv)
    try:
        values = _config_defaults(known.config)
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_IO) from None
    subparser = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            parser.error(f"unknown config key {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = value
        # a value from the file satisfies a required flag
        action.required = False
    for group in subparser._mutually_exclusive_groups:
        if any(a.dest in defaults for a in group._group_actions):
            group.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def cmd_simulate_keys(args) -> int:
    pair = qkd_sim.generate_pair(args.length_bits, args.qber, args.seed)
    codec.write_key_file(args.out_a, [pair.key_a])
    codec.write_key_file(args.out_b, [pair.key_b])
    print(f"true_error_count {pair.true_error_count}")
    return EXIT_OK


def _connect_retrying(host: str, port: int, timeout: float):
    # the peer may not be listening yet; keep trying until the timeout
    deadline = time.monotonic() + timeout
    while True:
        try:
            return connect(host, port, timeout=timeout)
        except TransportError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.1)


def cmd_sync(args) -> int:
    try:
        keys = codec.read_key_file(args.key_file, args.key_bits)
    except ValueError as exc:
        raise CliError(f"{args.key_file}: {exc}", EXIT_IO) from None
    if len(keys) != 1:
        raise CliError(f"{args.key_file} must hold exactly one key, found {len(keys)}", EXIT_USAGE)
    key = keys[0]
    try:
        params = TpmParams(args.K, args.N, args.L)
        config = SessionConfig(
            params=params,
            key_length_bits=key.length_bits,
            role=Role(args.role),
            max_iterations=args.max_iterations,
            max_retries_per_iteration=args.max_retries,
            digest_check_period=args.digest_period,
            rng_seed=args.seed,
        )
    except (StructureError, ValueError) as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    if args.K == 1:
        log.warning("K=1: the public output equals the single hidden unit's output")
    try:
        if args.listen:
            stream = listen(*args.listen, timeout=args.timeout)
        else:
            stream = _connect_retrying(*args.connect, timeout=args.timeout)
        with stream:
            result = run_session(key, config, stream, timeout=args.timeout)
    except SessionAborted as exc:
        raise CliError(f"session aborted: {exc.reason.name}", EXIT_DOMAIN) from None
    except codec.EmptyKeyError as exc:
        raise CliError(str(exc), EXIT_DOMAIN) from None
    except (TransportError, OSError) as exc:
        raise CliError(f"connection failed: {exc}", EXIT_NETWORK) from None
    text = result.final_key.to_hex() + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    print(
        f"iterations_used={result.iterations_used} retries_total={result.retries_total} "
        f"Z={result.leakage_Z:.6f} final_bits={result.final_key.length_bits}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        spec = harness.SweepSpec(
            key_length_bits=args.key_bits,
            L_values=args.L,
            qber_percents=args.qber,
            structures=args.structures,
            trials=args.trials,
            max_iterations=args.max_iterations,
            max_retries=args.max_retries,
            base_seed=args.seed,
        )
        spec.configs()
    except (ValueError, StructureError) as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    if args.trend_out and not args.trend_axis:
        raise CliError("--trend-out needs --trend-axis", EXIT_USAGE)
    results = harness.run_trials(spec, workers=args.workers)
    if args.json_out:
        harness.write_stats_json(results, args.json_out)
    else:
        json.dump([harness.stats_to_dict(r) for r in results], sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    if args.csv_out:
        harness.write_histogram_csv(results, args.csv_out)
    if args.trend_axis:
        try:
            points = harness.trend_from_results(args.trend_axis, results)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_USAGE) from None
        if args.trend_out:
            harness.write_trend_csv(points, args.trend_out)
    for r in results:
        s = r.stats
        rec = s.recommended if s.usable else "TooFewSamples"
        print(f"{r.config.config_id}: {s.success_count}/{s.trial_count} ok, recommended {rec}",
              file=sys.stderr)
    if not any(r.stats.usable for r in results):
        raise CliError(
            f"recommendation refused (TooFewSamples): need {harness.MIN_SAMPLES} successful trials",
            EXIT_DOMAIN,
        )
    return EXIT_OK


def load_precomputed() -> dict:
    text = resources.files("tpm_reconcile").joinpath("data/recommended.json").read_text()
    table = {}
    for row in json.loads(text):
        if row.get("recommended") is None:
            continue
        key = (row["key_length_bits"], row["L"], float(row["qber_percent"]), row["N"], row["K"])
        table[key] = row["recommended"]
    return table


def cmd_recommend(args) -> int:
    try:
        structures = codec.enumerate_structures(args.key_bits, args.L)
    except StructureError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    if args.qber is None:
        print("N\tK")
        for n, k in structures:
            print(f"{n}\t{k}")
        return EXIT_OK
    table = load_precomputed()
    found = {}
    for n, k in structures:
        rec = table.get((args.key_bits, args.L, float(args.qber), n, k))
        if rec is not None:
            found[(n, k)] = rec
    if args.compute:
        missing = [s for s in structures if s not in found]
        if missing:
            spec = harness.SweepSpec(args.key_bits, (args.L,), (args.qber,), structures=missing,
                                     trials=args.trials, base_seed=args.seed)
            for r in harness.run_trials(spec):
                if r.stats.usable:
                    found[(r.config.N, r.config.K)] = r.stats.recommended
    print("N\tK\trecommended")
    for n, k in structures:
        print(f"{n}\t{k}\t{found.get((n, k), 'n/a')}")
        if k == 1:
            log.warning("N=%d, K=1: the public output reveals the single hidden unit", n)
    if not found:
        qualifier = "could not be computed" if args.compute else "not precomputed (use --compute)"
        raise CliError(
            f"key_bits={args.key_bits} L={args.L} qber={args.qber:g}%: {qualifier}", EXIT_DOMAIN
        )
    return EXIT_OK


def cmd_attack_sim(args) -> int:
    try:
        config = harness.TrialConfig(args.key_bits, args.L, args.qber, args.N, args.K)
        needed = codec.weight_count(args.key_bits, args.L)
        if config.params.weight_count != needed:
            raise StructureError(f"{args.key_bits}-bit key at L={args.L} needs K*N={needed}")
    except StructureError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    s = harness.eve_batch(config, args.trials, args.seed)
    print(json.dumps({
        "config_id": config.config_id,
        "trials": s.trials,
        "completed": s.completed,
        "eve_convergence_rate": s.eve_convergence_rate,
        "mean_match_fraction": s.mean_match_fraction,
        "uniform_baseline": 1.0 / (2 * args.L + 1),
        "mean_ab_iterations": s.mean_ab_iterations,
    }, indent=2))
    if s.completed == 0:
        raise CliError("no A-B session completed", EXIT_DOMAIN)
    return EXIT_OK


COMMANDS = {
    "simulate-keys": cmd_simulate_keys,
    "sync": cmd_sync,
    "experiment": cmd_experiment,
    "recommend": cmd_recommend,
    "attack-sim": cmd_attack_sim,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except StructureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
