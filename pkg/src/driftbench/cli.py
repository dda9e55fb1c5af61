"""Command-line entry point: ``driftbench <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data or validation error.  Errors
are reported on stderr as one JSON object per line.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from ._io import atomic_write_csv, atomic_write_json, fmt_float
from .driftstats import ForestHyperparams, anomaly_table, variance_profile
from .errors import DriftbenchError, ModelFormatError
from .evalharness import (
    SplitSpec,
    evaluate_dnn,
    evaluate_gp,
    fit_dnn,
    fit_gp,
    parse_day_range,
    read_report,
    write_report,
)
from .fpdb import (
    READINGS_FILE,
    RECORDS_FILE,
    RPS_FILE,
    export_native,
    import_wide,
    load_native_dir,
    to_matrix,
)
from .locmodels.dnn import DnnClassifier, DnnConfig
from .locmodels.gp import GpConfig, GpModel
from .locmodels.store import load_model, save_model
from .synth import EnvironmentConfig, build_environment, load_config, manifest, simulate

log = logging.getLogger("driftbench")

SEED_ENV = "DRIFTBENCH_SEED"
MODEL_FILE = "model.dbm"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 42
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _day_range(text):
    try:
        return parse_day_range(text)
    except DriftbenchError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common(seed_default):
    p = _Parser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=_seed, default=seed_default,
                   help=f"64-bit seed (default: ${SEED_ENV} or 42)")
    g.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    g.add_argument("--quiet", action="store_true", help="suppress progress messages")
    g.add_argument("--threads", type=_positive_int, default=1,
                   help="worker cap; results do not depend on it")
    g.add_argument("--reproducible", action="store_true",
                   help="omit wall-clock timestamps from manifests")
    return p


def _add_db(p):
    p.add_argument("--db", type=Path, required=True, help="directory holding the native CSVs")


def _add_dnn_options(p):
    g = p.add_argument_group("DNN hyperparameters")
    g.add_argument("--epochs-sae", type=int, default=30)
    g.add_argument("--epochs-cls", type=int, default=30)
    g.add_argument("--batch-size", type=_positive_int, default=20)
    g.add_argument("--lr-sae", type=float, default=1e-4)
    g.add_argument("--lr-cls", type=float, default=1e-3)
    g.add_argument("--hid-dim", type=_positive_int, default=512)
    g.add_argument("--sae-dim", type=_positive_int, default=64)
    g.add_argument("--dnn-seed", type=_seed, default=12345, help="weight/shuffle seed (default 12345)")
    g.add_argument("--freeze-encoder", action="store_true", help="do not fine-tune the SAE encoder")


def _add_gp_options(p):
    g = p.add_argument_group("GP hyperparameters")
    g.add_argument("--variance", type=float, default=1.0, help="OU kernel variance")
    g.add_argument("--lengthscale", type=float, default=100.0, help="OU kernel length scale")
    g.add_argument("--noise", type=float, default=1.0, help="Gaussian likelihood variance")


def build_parser():
    common = _common(_default_seed())
    parser = _Parser(prog="driftbench", description="Dynamic Wi-Fi fingerprint drift toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="simulate a dynamic database")
    p.add_argument("--config", type=Path, help="JSON EnvironmentConfig (default: built-in)")
    p.add_argument("--days", type=_positive_int, default=44, help="number of days (default 44)")
    p.add_argument("--env-seed", type=_seed, help="seed for the RP/AP layout (default: --seed)")
    p.add_argument("--print-config", action="store_true", help="print the default config and exit")

    p = sub.add_parser("import", parents=[common], help="import a database into native CSVs")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--wide", type=Path, help="wide CSV (WAP columns, x, y, floor, timestamp)")
    src.add_argument("--native", type=Path, help="directory with native CSVs to validate and copy")
    p.add_argument("--not-detected-code", type=int, default=100,
                   help="cell value meaning 'not detected' in wide files (default 100)")

    p = sub.add_parser("stats", help="drift statistics for one AP/RP pair")
    ssub = p.add_subparsers(dest="stat", required=True, parser_class=_Parser)
    for name, helptext in (("variance", "variance profile"), ("anomaly", "Isolation Forest scores")):
        q = ssub.add_parser(name, parents=[common], help=helptext)
        _add_db(q)
        q.add_argument("--ap", required=True, help="AP id (MAC or ap_<k>)")
        q.add_argument("--rp", type=int, required=True, help="RP id")
        if name == "anomaly":
            q.add_argument("--contamination", type=float, default=0.10)
            q.add_argument("--trees", type=_positive_int, default=100)
            q.add_argument("--max-samples", default="auto", help="'auto' or a count")
            q.add_argument("--max-features", type=float, default=1.0)
            q.add_argument("--features", choices=("mean", "stats"), default="mean",
                           help="per-day feature vector (default: daily mean)")

    for verb, helptext in (("train", "train a localization model"), ("eval", "time-sliced evaluation")):
        p = sub.add_parser(verb, help=helptext)
        msub = p.add_subparsers(dest="model_kind", required=True, parser_class=_Parser)
        for kind in ("dnn", "gp"):
            q = msub.add_parser(kind, parents=[common], help=f"{kind.upper()} model")
            _add_db(q)
            q.add_argument("--train-days", type=_day_range, default=(1, 24), help="first:last (default 1:24)")
            if verb == "eval":
                q.add_argument("--test-days", type=_day_range, default=(25, 44),
                               help="first:last (default 25:44)")
                q.add_argument("--group", type=_positive_int, default=5, help="group size (default 5)")
                q.add_argument("--polyfit", type=int, default=6, help="trend degree (default 6)")
                q.add_argument("--model", type=Path, help="evaluate this model file instead of training")
                q.add_argument("--no-svg", action="store_true", help="skip drift.svg")
            if kind == "dnn":
                _add_dnn_options(q)
            else:
                _add_gp_options(q)

    p = sub.add_parser("report", parents=[common], help="re-render outputs from report.json")
    p.add_argument("--report", type=Path, required=True, help="existing report.json")
    return parser


def _check_db_dir(path):
    for name in (RECORDS_FILE, READINGS_FILE, RPS_FILE):
        if not (path / name).is_file():
            raise FileNotFoundError(f"{path / name} does not exist")


def _check_file(path, what):
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} {path} does not exist")


def _digest_files(paths):
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def cmd_synth(args):
    if args.print_config:
        print(json.dumps(EnvironmentConfig().to_dict(), indent=2, sort_keys=True))
        return 0
    if args.config is not None:
        _check_file(args.config, "config")
        cfg = load_config(args.config)
    else:
        cfg = EnvironmentConfig().validate()
    env_seed = args.seed if args.env_seed is None else args.env_seed
    log.info("simulating %d days (seed %d)", args.days, args.seed)
    env = build_environment(cfg, env_seed)
    db = simulate(env, cfg, args.days, args.seed)
    export_native(db, args.out)
    man = manifest(db, cfg, args.seed, args.days, env_seed)
    if not args.reproducible:
        man["created_utc"] = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    atomic_write_json(args.out / "manifest.json", man)
    log.info("wrote %d records, %d APs to %s", len(db.records), len(db.ap_index), args.out)
    return 0


def cmd_import(args):
    if args.wide is not None:
        _check_file(args.wide, "input")
        db = import_wide(args.wide, args.not_detected_code)
    else:
        _check_db_dir(args.native)
        db = load_native_dir(args.native)
    export_native(db, args.out)
    log.info("imported %d records, %d APs, %d RPs", len(db.records), len(db.ap_index), len(db.rps))
    return 0


def cmd_stats(args):
    _check_db_dir(args.db)
    db = load_native_dir(args.db)
    if args.stat == "variance":
        prof = variance_profile(db, args.ap, args.rp)
        atomic_write_csv(
            args.out / "variance.csv",
            ["day_index", "mean_rssi"],
            ((d, fmt_float(m)) for d, m in prof.daily_means),
        )
        atomic_write_json(
            args.out / "variance.json",
            {
                "ap": args.ap,
                "rp": args.rp,
                "n_samples": prof.n_samples,
                "variance": prof.variance,
                "sample_variance": None if prof.n_samples < 2 else prof.sample_variance,
            },
        )
        log.info("variance %.4f over %d samples", prof.variance, prof.n_samples)
        return 0
    max_samples = args.max_samples if args.max_samples == "auto" else int(args.max_samples)
    try:
        hyper = ForestHyperparams(args.trees, args.contamination, max_samples, args.max_features, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _, rows = anomaly_table(db, args.ap, args.rp, hyper, args.features)
    atomic_write_csv(
        args.out / "anomaly.csv",
        ["day_index", "mean_rssi", "anomaly_score", "signed_score", "flagged"],
        (
            (r.day_index, fmt_float(r.mean_rssi), fmt_float(r.anomaly_score),
             fmt_float(r.signed_score), int(r.flagged))
            for r in rows
        ),
    )
    log.info("%d of %d days flagged", sum(r.flagged for r in rows), len(rows))
    return 0


def _dnn_cfg(args):
    return DnnConfig(
        sae_dim=args.sae_dim,
        hid_dim=args.hid_dim,
        epochs_sae=args.epochs_sae,
        epochs_cls=args.epochs_cls,
        batch_size=args.batch_size,
        lr_sae=args.lr_sae,
        lr_cls=args.lr_cls,
        seed=args.dnn_seed,
        freeze_encoder=args.freeze_encoder,
    )


def _gp_cfg(args):
    return GpConfig(args.variance, args.lengthscale, args.noise)


def _fit(kind, args, db, split):
    if kind == "dnn":
        return fit_dnn(db, split, _dnn_cfg(args))
    return fit_gp(db, split, _gp_cfg(args))


def cmd_train(args):
    _check_db_dir(args.db)
    db = load_native_dir(args.db)
    # a training-only split: the test range is a placeholder after the window
    split = SplitSpec(args.train_days, (args.train_days[1] + 1, args.train_days[1] + 1))
    log.info("training %s on days %d:%d", args.model_kind, *args.train_days)
    model = _fit(args.model_kind, args, db, split)
    save_model(args.out / MODEL_FILE, model)
    info = {"model": args.model_kind, "train_days": list(args.train_days),
            "n_aps": len(model.ap_universe), "parameter_digest": model.parameter_digest()}
    if isinstance(model, DnnClassifier):
        info["class_labels"] = list(model.class_labels)
        info["loss_history"] = model.loss_history
    atomic_write_json(args.out / "train.json", info)
    return 0


def cmd_eval(args):
    _check_db_dir(args.db)
    if args.model is not None:
        _check_file(args.model, "model")
    db = load_native_dir(args.db)
    split = SplitSpec(args.train_days, args.test_days)
    # content digests rather than paths keep reports location-independent
    db_files = (args.db / n for n in (RECORDS_FILE, READINGS_FILE, RPS_FILE))
    meta = {"seed": args.seed, "db_sha256": _digest_files(db_files)}
    if args.model is not None:
        model = load_model(args.model)
        expected = DnnClassifier if args.model_kind == "dnn" else GpModel
        if not isinstance(model, expected):
            raise ModelFormatError(f"{args.model} is not a {args.model_kind} model")
        meta["model_sha256"] = _digest_files([args.model])
    else:
        log.info("training %s on days %d:%d", args.model_kind, *split.train_days)
        model = _fit(args.model_kind, args, db, split)
    evaluate = evaluate_dnn if args.model_kind == "dnn" else evaluate_gp
    report = evaluate(model, db, split, args.group, args.polyfit, meta)
    write_report(report, args.out, svg=not args.no_svg)
    s = report.summary
    log.info("%s per-day %s: min %.4f max %.4f mean %.4f", args.model_kind, report.metric,
             s["min"], s["max"], s["mean"])
    return 0


def cmd_report(args):
    _check_file(args.report, "report")
    report = read_report(args.report)
    write_report(report, args.out)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "import": cmd_import,
    "stats": cmd_stats,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def _error(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _error("UsageError", str(exc))
        return 1
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        _error("UsageError", str(exc))
        return 1
    except (DriftbenchError, OSError) as exc:
        _error(type(exc).__name__, str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
