"""Command-line front end.

Exit codes: 0 success, 2 validation or ingestion error, 3 numerical failure,
4 protocol error (for example evaluating a concluded test on an extended log).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import FotvalError, ValidationError
from .frequentist import FieldTest
from .ingest import ingest_event_log_csv
from .report import FORMATS, Table, render_all
from . import study as st


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, type=Path, help="study config (YAML)")
    p.add_argument("--out", type=Path, help="write the report here instead of stdout")
    p.add_argument("--format", choices=FORMATS, default="table")
    p.add_argument("--digits", type=int, default=6, help="significant digits (default 6)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fotval",
        description="Driving requirements for residual-risk validation and their reduction approaches.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", help="benchmark and acceptance criterion A_H")
    _add_common(p)

    p = sub.add_parser("target", help="base-model driving requirement tau, optional evaluation")
    _add_common(p)
    p.add_argument("--log", type=Path, help="event-log CSV to evaluate against tau")
    p.add_argument("--record", type=Path, help="JSON file holding the test's state between evaluations")

    p = sub.add_parser("sensitivity", help="tau over a grid of alpha and k")
    _add_common(p)

    for name, text in (("sprt", "sequential probability ratio test"), ("bayes", "gamma-Poisson required distance")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--log", type=Path, help="event-log CSV to evaluate")

    p = sub.add_parser("decompose", help="criterion budget, precursor decomposition, redundancy")
    _add_common(p)

    p = sub.add_parser("eva", help="peaks-over-threshold rate estimate from PM data")
    _add_common(p)
    p.add_argument("--log", type=Path, help="event-log CSV with a pm_value column")

    p = sub.add_parser("simulate", help="Monte Carlo verification of the configured methods")
    _add_common(p)
    p.add_argument("--seed", type=int, help="64-bit campaign seed (overrides config)")
    p.add_argument("--replications", type=int, help="replications per method (overrides config)")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")

    p = sub.add_parser("compare", help="reduction factor of every enabled approach vs the base model")
    _add_common(p)
    return parser


def _log(args, study):
    path = getattr(args, "log", None) or study.log_path
    return None if path is None else ingest_event_log_csv(path)


def _target(args, study) -> list[Table]:
    tables = [st.target_table(study)]
    log = _log(args, study)
    if log is None:
        return tables
    target = study.base_target
    test = FieldTest(target)
    if args.record is not None and args.record.exists():
        rec = json.loads(args.record.read_text(encoding="utf-8"))
        test = FieldTest.from_record(rec)
        if test.target != target:
            raise ValidationError(f"{args.record}: record belongs to a different validation target")
    verdict = test.evaluate(log)
    if args.record is not None:
        args.record.write_text(json.dumps(test.to_record(), indent=2) + "\n", encoding="utf-8")
    t = Table("Evaluation", ("distance_km", "events", "tau_km", "k", "verdict"))
    t.add(log.total_distance, log.n_events, target.distance_tau, target.params.k, verdict.value)
    tables.append(t)
    return tables


def run(args) -> str:
    study = st.StudyConfig.load(args.config)
    cmd = args.command
    if cmd == "derive":
        tables = [st.derive_table(study)]
    elif cmd == "target":
        tables = _target(args, study)
    elif cmd == "sensitivity":
        tables = [st.sensitivity_tables(study)]
    elif cmd == "sprt":
        tables = st.sprt_table(study, _log(args, study))
    elif cmd == "bayes":
        tables = st.bayes_table(study, _log(args, study))
    elif cmd == "decompose":
        tables = [st.decompose_table(study)]
    elif cmd == "eva":
        log = _log(args, study)
        if log is None:
            eva_log = study.methods.get("eva", {}).get("log")
            if eva_log is None:
                raise ValidationError("eva needs --log or methods.eva.log in the config")
            log = ingest_event_log_csv(study.path(eva_log))
        tables = [st.eva_table(study, log)]
    elif cmd == "simulate":
        tables = [st.simulate_table(study, args.seed, args.replications, args.workers)]
    else:
        tables = [st.compare(study).table()]
    return render_all(tables, args.format, args.digits)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = run(args)
    except FotvalError as exc:
        print(f"fotval: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (KeyError, TypeError, ValueError) as exc:
        # malformed config values that no domain constructor claimed
        print(f"fotval: error: invalid configuration: {exc!r}", file=sys.stderr)
        return ValidationError.exit_code
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
