"""Command-line entry point ``sou-privacy``.

Exit codes: 0 success, 1 validation failure (scenario, ledger, leakage),
2 I/O or configuration error (including usage errors).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .. import __version__
from ..attack import AttackConfig
from ..audio import ManifestError, WavError
from ..container import ContainerError
from ..scenario import RunLedger, ScenarioParseError, check_ledger, load_scenario, validate_scenario
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ScenarioInvalid,
    attack_run,
    evaluate_run,
    prepare_run,
    run_experiment,
    train_run,
)
from .pipeline import LeakageError, LedgerViolation
from .report import emit_report, parse_report
from .synth import SynthConfig, generate_synthetic_corpus

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _print_findings(report, stream) -> None:
    for f in report.findings:
        print(f"{f.severity}: {f.dimension}: {f.message}", file=stream)


def _cmd_scenario_validate(args) -> int:
    path = Path(args.file)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        scenario = load_scenario(path)
    except ScenarioParseError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    report = validate_scenario(scenario)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        _print_findings(report, sys.stdout)
        print(f"{scenario.id}: {'complete' if report.complete else 'INCOMPLETE'}")
    return EXIT_OK if report.complete else EXIT_INVALID


def _cmd_scenario_check_ledger(args) -> int:
    scenario = load_scenario(args.scenario)
    try:
        ledger = RunLedger.from_json(Path(args.ledger).read_text(encoding="utf-8"))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{args.ledger}: not a run ledger ({exc})") from exc
    report = check_ledger(scenario, ledger)
    _print_findings(report, sys.stdout)
    print(f"ledger: {'ok' if report.complete else 'VIOLATED'} ({len(ledger.entries)} entries)")
    return EXIT_OK if report.complete else EXIT_INVALID


def _load_json_file(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def _cmd_synth(args) -> int:
    raw = _load_json_file(args.config)
    if not isinstance(raw, dict):
        raise ConfigError(f"{args.config}: synth config must be a JSON object")
    out_key = raw.pop("output_dir", None)
    if args.out:
        out = Path(args.out)
    elif out_key is not None:
        out = (Path(args.config).parent / out_key).resolve()
    else:
        raise ConfigError("synth needs --out or an output_dir key in the config")
    try:
        cfg = SynthConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{args.config}: {exc}") from exc
    manifest = generate_synthetic_corpus(cfg, out)
    print(manifest)
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig.from_dict({"manifest_path": args.manifest})
    changes = {}
    if getattr(args, "manifest", None):
        changes["manifest_path"] = str(Path(args.manifest).resolve())
    if getattr(args, "scenario", None):
        changes["scenario_path"] = str(Path(args.scenario).resolve())
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "out", None):
        changes["output_dir"] = str(Path(args.out).resolve())
    return dataclasses.replace(cfg, **changes)


def _cmd_prepare(args) -> int:
    if not args.config and not args.manifest:
        raise ConfigError("prepare needs --manifest or --config")
    out = prepare_run(_experiment_config(args))
    print(out)
    return EXIT_OK


def _cmd_train(args) -> int:
    print(train_run(args.run, args.role))
    return EXIT_OK


def _cmd_attack(args) -> int:
    attack = AttackConfig(args.eps, args.alpha, args.iters, args.method, args.random_start)
    print(attack_run(args.run, attack, args.model))
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    report = evaluate_run(args.run)
    sys.stdout.write(emit_report(report, "text"))
    return EXIT_OK


def _cmd_run(args) -> int:
    report = run_experiment(_experiment_config(args))
    sys.stdout.write(emit_report(report, "text"))
    return EXIT_OK


def _cmd_report(args) -> int:
    path = Path(args.run) / "report.json"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"report not found: {path}") from exc
    sys.stdout.write(emit_report(parse_report(text), args.format))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    defaults = AttackConfig()
    p = _Parser(prog="sou-privacy", description="Scenario-of-use privacy evaluation toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sc = sub.add_parser("scenario", help="scenario-of-use documents")
    sc_sub = sc.add_subparsers(dest="scenario_command", required=True, parser_class=_Parser)
    v = sc_sub.add_parser("validate", help="parse and validate a scenario document")
    v.add_argument("file")
    v.add_argument("--json", action="store_true", help="print the validation report as JSON")
    v.set_defaults(func=_cmd_scenario_validate)
    cl = sc_sub.add_parser("check-ledger", help="check a run ledger against a scenario")
    cl.add_argument("scenario")
    cl.add_argument("ledger")
    cl.set_defaults(func=_cmd_scenario_check_ledger)

    s = sub.add_parser("synth", help="generate the synthetic corpus")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (overrides output_dir in the config)")
    s.set_defaults(func=_cmd_synth)

    pr = sub.add_parser("prepare", help="featurize and standardize a manifest into a run directory")
    pr.add_argument("--manifest")
    pr.add_argument("--out", required=True)
    pr.add_argument("--config", help="experiment config supplying feature/training/attack settings")
    pr.add_argument("--scenario", help="scenario document (default: bundled gender-protection scenario)")
    pr.add_argument("--seed", type=int)
    pr.set_defaults(func=_cmd_prepare)

    t = sub.add_parser("train", help="train one classifier of a prepared run")
    t.add_argument("--role", required=True, choices=["gender", "diagnosis"])
    t.add_argument("--run", required=True)
    t.set_defaults(func=_cmd_train)

    a = sub.add_parser("attack", help="protect the test features of a run")
    a.add_argument("--run", required=True)
    a.add_argument("--model", help="gender model file (default: RUN/gender.soum)")
    a.add_argument("--eps", type=float, default=defaults.epsilon)
    a.add_argument("--alpha", type=float, default=defaults.alpha)
    a.add_argument("--iters", type=int, default=defaults.iterations)
    a.add_argument("--method", choices=["pgd", "fgsm"], default=defaults.method)
    a.add_argument("--random-start", action="store_true")
    a.set_defaults(func=_cmd_attack)

    e = sub.add_parser("evaluate", help="evaluate both classifiers and write the report")
    e.add_argument("--run", required=True)
    e.set_defaults(func=_cmd_evaluate)

    r = sub.add_parser("run", help="run the full experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory (overrides output_dir in the config)")
    r.set_defaults(func=_cmd_run)

    rp = sub.add_parser("report", help="print the report of a finished run")
    rp.add_argument("--run", required=True)
    rp.add_argument("--format", choices=["text", "json"], default="text")
    rp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_IO
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioInvalid, ScenarioParseError, LedgerViolation, LeakageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, ManifestError, WavError, ContainerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
