"""Command-line entry point.

Every subcommand resolves its configuration as: built-in defaults, then the
JSON file given by ``--config`` (a previous run's manifest also works), then
explicit flags.  Results go to stdout and, with ``--out DIR``, to files in
DIR next to a ``<command>.manifest.json`` that echoes the resolved config
and the digests of everything written.

Exit codes: 0 success, 1 configuration error, 2 numerical non-convergence,
3 size-guard violation.
"""

import argparse
import csv
import hashlib
import io
import json
from pathlib import Path
import sys
import time

import numpy as np

from . import __version__, streams
from .codebook import codebook_size, gen_codebook, load_codebook, sample_subset, save_codebook
from .errors import ConfigError, ConvergenceError, GuardError
from .experiments import (
    ExperimentConfig,
    SubsetRecord,
    channel_experiment,
    run_ensemble_comparison,
    run_subset_universality,
)
from .rd_solver import DistortionMeasure, blahut_arimoto_curve, solve_distortion_at_rate
from .verify import (
    DEFAULT_LEMMA1_JOINT,
    DEFAULT_PROP1_JOINTS,
    DEFAULT_PROP3_FRACTIONS,
    DEFAULT_PROP3_SIZES,
    verify_lemma1,
    verify_prop1,
    verify_prop3,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_GUARD = 0, 1, 2, 3


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _json_or_name(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _bool(text):
    if text.lower() in ("1", "true", "yes"):
        return True
    if text.lower() in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text}")


EXPERIMENT_DEFAULTS = {
    "source_pmf": [0.5, 0.5],
    "grid_pmf": None,
    "n": 14,
    "full_rate": 1.0,
    "subset_rate": 0.5,
    "backoff": 0.08,
    "eps": 0.3,
    "eps_prime": 0.2,
    "resolution": 0.1,
    "p_min": 0.1,
    "ensemble": "mixture",
    "ensemble_pmf": None,
    "distortion": "hamming",
    "recon_size": None,
    "num_subsets": 200,
    "num_source_words": 500,
    "slack": 0.05,
}
EXPERIMENT_FLAGS = {
    "source_pmf": _floats,
    "grid_pmf": _floats,
    "n": int,
    "full_rate": float,
    "subset_rate": float,
    "backoff": float,
    "eps": float,
    "eps_prime": float,
    "resolution": float,
    "p_min": float,
    "ensemble": str,
    "ensemble_pmf": _floats,
    "distortion": _json_or_name,
    "recon_size": int,
    "num_subsets": int,
    "num_source_words": int,
    "slack": float,
}

# command -> (defaults, flag parsers, help)
COMMANDS = {
    "rd-curve": (
        {"source_pmf": [0.5, 0.5], "distortion": "hamming", "recon_size": None,
         "slopes": [round(0.25 * i, 2) for i in range(1, 41)]},
        {"source_pmf": _floats, "distortion": _json_or_name, "recon_size": int, "slopes": _floats},
        "distortion-rate curve over Blahut-Arimoto slopes (CSV)",
    ),
    "rd-point": (
        {"source_pmf": [0.5, 0.5], "distortion": "hamming", "recon_size": None, "rate": 0.5},
        {"source_pmf": _floats, "distortion": _json_or_name, "recon_size": int, "rate": float},
        "distortion-rate function at one rate, with its achiever (JSON)",
    ),
    "gen": (
        {"ensemble": "mixture", "n": 14, "rate": 1.0, "alphabet_size": 2, "ensemble_pmf": None,
         "with_thetas": False},
        {"ensemble": str, "n": int, "rate": float, "alphabet_size": int, "ensemble_pmf": _floats,
         "with_thetas": _bool},
        "draw a codebook and write it in the packed binary format",
    ),
    "subsets": (
        {"n": 14, "full_rate": 1.0, "subset_rate": 0.5, "num_subsets": 10},
        {"n": int, "full_rate": float, "subset_rate": float, "num_subsets": int},
        "sample random codeword subsets (JSON)",
    ),
    "eval-subsets": (
        dict(EXPERIMENT_DEFAULTS, codebook=None),
        dict(EXPERIMENT_FLAGS, codebook=str),
        "subset distortion experiment (CSV rows + JSON summary)",
    ),
    "compare-ensembles": (
        dict(EXPERIMENT_DEFAULTS, source_pmf=[0.85, 0.15], other_ensemble="type",
             other_ensemble_pmf=[0.5, 0.5], alpha=0.01),
        dict(EXPERIMENT_FLAGS, other_ensemble=str, other_ensemble_pmf=_floats, alpha=float),
        "mixture against another ensemble on the same subsets experiment",
    ),
    "verify-prop1": (
        {"joints": [list(map(list, j)) for j in DEFAULT_PROP1_JOINTS], "ns": [4, 8, 12],
         "eps": 0.3, "eps_prime": 0.2, "all_sequences": False},
        {"joints": json.loads, "ns": _ints, "eps": float, "eps_prime": float, "all_sequences": _bool},
        "exhaustive conditional-typical-set checks",
    ),
    "verify-prop3": (
        {"sizes": list(DEFAULT_PROP3_SIZES), "fractions": list(DEFAULT_PROP3_FRACTIONS), "samples": 100_000},
        {"sizes": _ints, "fractions": _floats, "samples": int},
        "KL ceiling of the perturbation box, by sampling",
    ),
    "verify-lemma1": (
        {"joint": [list(r) for r in DEFAULT_LEMMA1_JOINT], "eps": 0.35, "ns": [8, 10, 12],
         "trials": 1_000_000, "exact_max_n": 12},
        {"joint": json.loads, "eps": float, "ns": _ints, "trials": int, "exact_max_n": int},
        "mixture hit probability against its explicit lower bound",
    ),
    "channel-sim": (
        {"source_pmf": [0.5, 0.5], "x_size": 2, "y_size": 2, "n": 6, "num_channels": 20,
         "num_source_words": 200, "image_sizes": None, "distortion": "hamming",
         "ensemble": "mixture", "ensemble_pmf": None},
        {"source_pmf": _floats, "x_size": int, "y_size": int, "n": int, "num_channels": int,
         "num_source_words": int, "image_sizes": _ints, "distortion": _json_or_name,
         "ensemble": str, "ensemble_pmf": _floats},
        "deterministic channel known only at the encoder (JSON)",
    ),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="subsetcode", description="Subset-universal lossy coding: distortion-rate tools, experiments and checks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, (_, flags, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON config (or a previous manifest)")
        p.add_argument("--seed", type=int, help="64-bit master seed (default 0)")
        p.add_argument("--out", type=Path, help="directory for result files and the manifest")
        p.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
        for key, conv in flags.items():
            names = ["--" + key.replace("_", "-")]
            if key == "source_pmf":
                names.append("--source")
            p.add_argument(*names, dest=key, type=conv, default=None)
    return parser


def _sha256(data):
    return hashlib.sha256(data).hexdigest()


def resolve_config(command, args):
    defaults, flags, _ = COMMANDS[command]
    config = dict(defaults, seed=0)
    inputs = {}
    if args.config is not None:
        try:
            raw = args.config.read_bytes()
            loaded = json.loads(raw)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        inputs[str(args.config)] = _sha256(raw)
        if isinstance(loaded, dict) and "manifest_version" in loaded:
            if loaded.get("command") != command:
                raise ConfigError(f"manifest is for {loaded.get('command')!r}, not {command!r}")
            loaded = loaded["config"]
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(loaded) - set(config)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        config.update(loaded)
    for key in flags:
        value = getattr(args, key)
        if value is not None:
            config[key] = value
    if args.seed is not None:
        config["seed"] = args.seed
    config["seed"] = streams.check_seed(config["seed"])
    return config, inputs


def _json_bytes(obj):
    return (json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n").encode()


def _csv_bytes(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue().encode()


def _experiment_config(config, **override):
    keys = set(EXPERIMENT_DEFAULTS) | {"seed"}
    return ExperimentConfig.from_dict({k: v for k, v in dict(config, **override).items() if k in keys})


def _distortion(config, source_size):
    return DistortionMeasure.from_spec(config["distortion"], source_size, config.get("recon_size"))


def run_command(command, config, threads, out):
    """Run one command; returns {filename: bytes} for the result files."""
    manifest_ref = f"{command}.manifest.json"

    if command == "rd-curve":
        d = _distortion(config, len(config["source_pmf"]))
        points = blahut_arimoto_curve(config["source_pmf"], d, config["slopes"])
        rows = [(repr(p.slope), repr(p.rate), repr(p.distortion)) for p in points]
        return {"rd_curve.csv": _csv_bytes(("slope", "rate_bits", "distortion"), rows)}

    if command == "rd-point":
        d = _distortion(config, len(config["source_pmf"]))
        point = solve_distortion_at_rate(config["source_pmf"], d, config["rate"])
        return {"rd_point.json": _json_bytes(dict(point.to_json(), manifest=manifest_ref))}

    if command == "gen":
        cb = gen_codebook(config["ensemble"], config["n"], config["rate"], config["alphabet_size"],
                          config["seed"], config["ensemble_pmf"], threads)
        if out is None:
            return {"codebook.json": _json_bytes(cb.header())}
        out.mkdir(parents=True, exist_ok=True)
        files = save_codebook(cb, out / "codebook.bin", with_thetas=config["with_thetas"])
        return {f.name: f.read_bytes() for f in files}

    if command == "subsets":
        M = codebook_size(config["n"], config["full_rate"])
        subsets = []
        for k in range(config["num_subsets"]):
            spec = sample_subset(M, config["subset_rate"], config["n"], streams.stream(config["seed"], streams.SUBSET, k))
            subsets.append({"subset_id": k, "indices": spec.indices.tolist()})
        return {"subsets.json": _json_bytes({"M": M, "subsets": subsets, "manifest": manifest_ref})}

    if command == "eval-subsets":
        cfg = _experiment_config(config)
        cb = load_codebook(config["codebook"]) if config.get("codebook") else None
        if cb is not None and (cb.n != cfg.n or cb.alphabet_size != cfg.recon_size):
            raise ConfigError("loaded codebook does not match n / recon_size")
        records, summary = run_subset_universality(cfg, threads, codebook=cb)
        rows = [r.csv_row() for r in records]
        return {
            "subsets.csv": _csv_bytes(SubsetRecord.CSV_COLUMNS, rows),
            "summary.json": _json_bytes(dict(summary, manifest=manifest_ref)),
        }

    if command == "compare-ensembles":
        cfg_a = _experiment_config(config, ensemble="mixture", ensemble_pmf=None)
        cfg_b = _experiment_config(config, ensemble=config["other_ensemble"], ensemble_pmf=config["other_ensemble_pmf"])
        rec_a, rec_b, summary = run_ensemble_comparison(cfg_a, cfg_b, threads, config["alpha"])
        rows = [("mixture", r.subset_id, repr(r.mean_distortion_optimal)) for r in rec_a]
        rows += [(cfg_b.ensemble, r.subset_id, repr(r.mean_distortion_optimal)) for r in rec_b]
        return {
            "comparison.csv": _csv_bytes(("ensemble", "subset_id", "mean_dist_opt"), rows),
            "comparison.json": _json_bytes(dict(summary, manifest=manifest_ref)),
        }

    if command == "verify-prop1":
        report = verify_prop1(config["joints"], config["ns"], config["eps"], config["eps_prime"], config["all_sequences"])
        return {"prop1.json": _json_bytes(dict(report, manifest=manifest_ref))}

    if command == "verify-prop3":
        report = verify_prop3(config["sizes"], config["fractions"], config["samples"], config["seed"])
        return {"prop3.json": _json_bytes(dict(report, manifest=manifest_ref))}

    if command == "verify-lemma1":
        report = verify_lemma1(config["joint"], config["eps"], config["ns"], config["trials"],
                               config["seed"], config["exact_max_n"])
        return {"lemma1.json": _json_bytes(dict(report, manifest=manifest_ref))}

    if command == "channel-sim":
        rows = channel_experiment(
            config["source_pmf"], config["x_size"], config["y_size"], config["n"], config["num_channels"],
            config["num_source_words"], config["seed"], config["image_sizes"], config["distortion"],
            config["ensemble"], config["ensemble_pmf"],
        )
        summary = {
            "channels": rows,
            "mean_effective_rate": float(np.mean([r["effective_rate"] for r in rows])),
            "mean_distortion": float(np.mean([r["distortion"] for r in rows])),
            "mean_benchmark_D": float(np.mean([r["benchmark_D"] for r in rows])),
            "total_mismatches": int(sum(r["mismatches"] for r in rows)),
            "channel_construction": "uniform image set, surjective onto it",
            "manifest": manifest_ref,
        }
        return {"channel_sim.json": _json_bytes(summary)}

    raise ConfigError(f"unknown command {command!r}")


def write_outputs(command, config, inputs, files, out, threads, started):
    out.mkdir(parents=True, exist_ok=True)
    for name, data in files.items():
        (out / name).write_bytes(data)
    manifest = {
        "manifest_version": 1,
        "command": command,
        "config": config,
        "seed": config["seed"],
        "version": __version__,
        "threads": threads,
        "inputs": inputs,
        "outputs": {name: _sha256(data) for name, data in sorted(files.items())},
        "duration_s": round(time.perf_counter() - started, 3),
    }
    (out / f"{command}.manifest.json").write_bytes(_json_bytes(manifest))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        config, inputs = resolve_config(args.command, args)
        files = run_command(args.command, config, args.threads, args.out)
        if args.out is not None:
            write_outputs(args.command, config, inputs, files, args.out, args.threads, started)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GuardError as exc:
        print(f"guard violation: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (TypeError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    primary = next(iter(files)) if args.command != "eval-subsets" else "summary.json"
    if args.command == "gen" and args.out is not None:
        primary = "codebook.bin.json"
    elif args.command == "compare-ensembles":
        primary = "comparison.json"
    sys.stdout.write(files[primary].decode())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
