"""Command-line entry point.

Subcommands::

    cfmimo run SPEC.yaml          free-form experiment from a spec file
    cfmimo cdf-se                 per-UE SE CDF, optionally over several K
    cfmimo sweep-taup             95%-likely SE versus pilot length
    cfmimo sweep-aps              per-UE SE versus number of APs
    cfmimo summarize RESULTS.csv  percentile summary of a record file

Network flags override the spec file. Exit status: 0 on success, 2 on an
invalid spec or arguments, 3 on I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .config import ConfigError, NetworkConfig
from .experiment import EMIT_MODES, ExperimentSpec, Sweep, run_experiment
from .results import OutputError, emit, format_summary, read_records

EXIT_SPEC = 2
EXIT_IO = 3

_NETWORK_FLAGS = {
    "L": int,
    "K": int,
    "N": int,
    "tau_p": int,
    "tau_c": int,
    "area_side": float,
    "ap_layout": str,
    "uplink_power": float,
    "noise_power": float,
    "asd_deg": float,
    "antenna_spacing": float,
    "ap_height_delta": float,
    "shadow_std_db": float,
    "n_setups": int,
    "n_realizations": int,
}

# defaults for the figure-style subcommands (desk scale)
_FIGURE_BASE = dict(L=25, K=20, N=2, tau_p=5, n_setups=50, n_realizations=300)


def _csv_list(kind):
    def parse(text: str):
        return [kind(x) for x in text.split(",") if x.strip()]

    return parse


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("network overrides")
    for name, kind in _NETWORK_FLAGS.items():
        flag = "--" + name.replace("_", "-")
        g.add_argument(flag, dest=name, type=kind, default=None)
    p.add_argument("--setups", dest="n_setups", type=int, default=None, help="alias of --n-setups")
    p.add_argument("--realizations", dest="n_realizations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="root RNG seed (default 0)")
    p.add_argument("--pilot-schemes", type=_csv_list(str), default=None)
    p.add_argument("--ap-schemes", type=_csv_list(str), default=None)
    p.add_argument("--weighting", choices=("lsfd", "equal"), default=None)
    p.add_argument("--similarity", choices=("statistical", "instantaneous"), default=None)
    p.add_argument("--emit", choices=EMIT_MODES, default=None)
    p.add_argument("--out", "-o", default=None, help="output file (default from spec or results.csv)")
    p.add_argument("--workers", type=int, default=1, help="parallel processes (results are identical)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfmimo", description="Cell-free massive MIMO uplink simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment spec file")
    p.add_argument("spec", help="YAML or JSON spec file")
    _add_common(p)

    p = sub.add_parser("cdf-se", help="CDF of per-UE SE")
    p.add_argument("--k-values", type=_csv_list(int), default=None, help="sweep over K, e.g. 20,40")
    _add_common(p)

    p = sub.add_parser("sweep-taup", help="95%%-likely SE versus tau_p")
    p.add_argument("--values", type=_csv_list(int), default=[2, 5, 10, 50, 90])
    _add_common(p)

    p = sub.add_parser("sweep-aps", help="SE versus number of APs")
    p.add_argument("--values", type=_csv_list(int), default=[25, 50])
    _add_common(p)

    p = sub.add_parser("summarize", help="percentile summary of a per-UE record file")
    p.add_argument("results")
    return parser


def load_spec(path) -> ExperimentSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot read spec {path}: {exc.strerror or exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed spec: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: spec must be a mapping")
    try:
        return ExperimentSpec.from_dict(data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _apply_overrides(spec: ExperimentSpec, args) -> ExperimentSpec:
    net = {name: getattr(args, name) for name in _NETWORK_FLAGS if getattr(args, name, None) is not None}
    if args.seed is not None:
        net["seed"] = args.seed
    changes = {}
    if net:
        changes["base"] = spec.base.replace(**net)
    for name in ("pilot_schemes", "ap_schemes", "weighting", "similarity", "emit"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if args.out is not None:
        changes["output_path"] = args.out
    if not changes:
        return spec
    d = spec.to_dict()
    d.update({k: v for k, v in changes.items() if k != "base"})
    d["base"] = (changes.get("base") or spec.base).to_dict()
    return ExperimentSpec.from_dict(d)


def _figure_spec(args) -> ExperimentSpec:
    base = NetworkConfig(**_FIGURE_BASE)
    if args.command == "cdf-se":
        sweep = Sweep("K", tuple(args.k_values)) if args.k_values else None
        return ExperimentSpec(base=base, sweep=sweep, emit="cdf", output_path="cdf_se.csv")
    if args.command == "sweep-taup":
        return ExperimentSpec(
            base=base, sweep=Sweep("tau_p", tuple(args.values)), emit="percentile-summary",
            output_path="sweep_taup.csv",
        )
    return ExperimentSpec(
        base=base.replace(N=1, L=max(args.values)),
        sweep=Sweep("L", tuple(args.values)),
        ap_schemes=("all", "capa"),
        emit="percentile-summary",
        output_path="sweep_aps.csv",
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "summarize":
            sys.stdout.write(format_summary(read_records(args.results)))
            return 0
        spec = load_spec(args.spec) if args.command == "run" else _figure_spec(args)
        spec = _apply_overrides(spec, args)
        out = spec.output_path or "results.csv"
        records = run_experiment(spec, workers=max(1, args.workers))
        paths = emit(records, out, spec.emit, spec)
    except (ConfigError, ValueError) as exc:
        print(f"cfmimo: error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"cfmimo: error: {exc}", file=sys.stderr)
        return EXIT_IO
    n_missing = sum(r.missing for r in records)
    print(f"wrote {paths[0]} and {paths[1]} ({len(records)} records, {n_missing} missing)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
