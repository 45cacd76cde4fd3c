"""Command-line entry point: ``transport-approx <subcommand> [options]``.

Exit status is 0 on success, 2 when some rows or trials failed, 1 on a
fatal error.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .distributions import parse_distribution, rng_stream
from .errors import TransportError
from .experiments import (
    StudyConfig,
    environment,
    monotonicity_probability,
    rows_to_csv,
    run_study,
    write_study,
)
from .maps import map_from_dict
from .stability import gaussian_shift_probe, mmd_stability_suite, random_kl_probe, wp_stability_suite

EXIT_OK, EXIT_FATAL, EXIT_ROWS = 0, 1, 2


def parse_degrees(text):
    """``"1,2,4"``, ``"1..10"`` or a mix such as ``"1..3,5,8"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty degree list")
    return tuple(out)


def _csv_floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _common(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0)
    parser.add_argument("--quad-points", type=int, default=default, dest="quad_points")
    parser.add_argument("--out", default=default, help="CSV path; a .json sidecar is written next to it")
    parser.add_argument("--config", default=default, help="TOML file whose keys override flags")
    parser.add_argument("--workers", type=int, default=default)


def build_parser():
    parser = argparse.ArgumentParser(prog="transport-approx", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _common(p, suppress=True)
        return p

    p = add("compact-w2", "closed-form W2 fits of |x|^(2k) sign(x) on [-1, 1]")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--degrees", type=parse_degrees, default=(1, 2, 4, 10, 21, 46, 100))
    p.add_argument("--pairs", type=int)

    p = add("gumbel-wp", "Gaussian to Gumbel(1, 2) fits in W1 or W2")
    p.add_argument("--p", type=int, choices=(1, 2), default=2)
    p.add_argument("--degrees", type=parse_degrees, default=tuple(range(1, 21)))
    p.add_argument("--test-m", type=int, dest="test_m")
    p.add_argument("--pairs", type=int)

    p = add("gumbel-kl", "maximum-likelihood monotone maps for Gumbel(0, 1) samples")
    p.add_argument("--degrees", type=parse_degrees, default=tuple(range(1, 11)))
    p.add_argument("--train-n", type=int, dest="train_n")
    p.add_argument("--test-m", type=int, dest="test_m")
    p.add_argument("--rectifier", choices=("softplus", "shifted_elu"))
    p.add_argument("--pairs", type=int)

    p = add("stability", "random-pair checks of the divergence stability bounds")
    p.add_argument("--theorem", choices=("wp", "mmd", "kl"), required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--pq", default="1:1,1:2,2:2", help="comma-separated p:q pairs (wp only)")
    p.add_argument("--gammas", type=_csv_floats, default=(0.5, 1.0, 2.0), help="(mmd only)")
    p.add_argument("--samples", type=int, default=100_000, help="empirical sample size (wp only)")

    p = add("monotonicity", "monotonicity probability of a saved map")
    p.add_argument("--map", required=True, dest="map_path", help="JSON map record")
    p.add_argument("--pairs", type=int, default=10_000)
    p.add_argument("--reference", default="gaussian")
    return parser


def load_config(path):
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    # a single [study] or [stability] table may wrap the keys
    for table in ("study", "stability", "monotonicity"):
        if isinstance(data.get(table), dict) and len(data) == 1:
            data = data[table]
    return data


def _resolved(args):
    values = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command")}
    if getattr(args, "config", None):
        values.update(load_config(args.config))
    return values


STUDY_FIELDS = {"seed", "quad_points", "workers", "degrees", "pairs", "test_m", "train_n",
                "rectifier", "out", "bfgs_tol", "bfgs_max_iter", "smoothing_eps",
                "segment_order", "record_timing", "basis", "reference", "target"}


def _study_config(command, values):
    base = {"compact-w2": dict(study="compact-w2", reference="uniform", divergence="w2"),
            "gumbel-wp": dict(study="gumbel-wp", reference="gaussian", target="gumbel(mu=1,beta=2)"),
            "gumbel-kl": dict(study="gumbel-kl", reference="gaussian", target="gumbel(mu=0,beta=1)",
                              divergence="kl")}[command]
    values = dict(values)
    if command == "compact-w2":
        base["target"] = f"pushforward(k={int(values.pop('k', 1))})"
    elif command == "gumbel-wp":
        base["divergence"] = f"w{int(values.pop('p', 2))}"
    for key in ("k", "p"):
        values.pop(key, None)
    unknown = set(values) - STUDY_FIELDS
    if unknown:
        raise TransportError(f"unknown settings for {command}: {sorted(unknown)}")
    if "degrees" in values and isinstance(values["degrees"], str):
        values["degrees"] = parse_degrees(values["degrees"])
    return StudyConfig(**{**base, **values})


def _run_study(command, values):
    cfg = _study_config(command, values)
    rows = run_study(cfg)
    if cfg.out:
        csv_path, json_path = write_study(rows, cfg, cfg.out)
        print(f"wrote {csv_path} and {json_path}", file=sys.stderr)
    else:
        rows_to_csv(rows, cfg, sys.stdout)
    failed = [r for r in rows if not r.ok]
    for r in failed:
        print(f"row n={r.n} failed: {r.message}", file=sys.stderr)
    return EXIT_ROWS if failed else EXIT_OK


def _stability_reports(values):
    theorem = values["theorem"]
    seed = int(values.get("seed", 0))
    trials = int(values.get("trials", 100))
    workers = int(values.get("workers") or 1)
    reports = []
    if theorem == "wp":
        for pair in str(values.get("pq", "1:1,1:2,2:2")).split(","):
            p, q = (float(v) for v in pair.split(":"))
            reports.append(wp_stability_suite(seed, trials, p, q, "polynomial",
                                              n_samples=int(values.get("samples", 100_000)),
                                              workers=workers))
            if p == q:
                reports.append(wp_stability_suite(seed, trials, p, q, "monotone", workers=workers))
    elif theorem == "mmd":
        gammas = values.get("gammas", (0.5, 1.0, 2.0))
        if isinstance(gammas, str):
            gammas = _csv_floats(gammas)
        for gamma in gammas:
            reports.append(mmd_stability_suite(seed, trials, float(gamma), workers=workers))
    else:
        reports.append(gaussian_shift_probe())
        for i in range(trials):
            reports.append(random_kl_probe(seed + i))
    return reports


def _run_stability(values):
    reports = _stability_reports(values)
    records = [r.to_dict() for r in reports]
    out = values.get("out")
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("suite", "trial", "lhs", "rhs", "ratio", "violation"))
            for rep in reports:
                for i, t in enumerate(rep.trials):
                    writer.writerow((rep.theorem, t.get("trial", i), repr(t["lhs"]), repr(t["rhs"]),
                                     repr(t["ratio"]), int(t["violation"])))
        payload = {"settings": {k: v for k, v in values.items()}, "environment": environment(),
                   "reports": records}
        path.with_suffix(".json").write_text(json.dumps(payload, indent=2, default=str))
        print(f"wrote {path} and {path.with_suffix('.json')}", file=sys.stderr)
    for rep in reports:
        line = f"{rep.theorem}: trials={rep.trial_count} max_ratio={rep.max_ratio:.6g} " \
               f"violations={len(rep.violations)}"
        if "slope" in rep.extra:
            line += f" slope={rep.extra['slope']:.4f}"
        print(line)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_ROWS


def _run_monotonicity(values):
    record = json.loads(Path(values["map_path"]).read_text())
    T = map_from_dict(record)
    reference = parse_distribution(values.get("reference", "gaussian"))
    rng = rng_stream(int(values.get("seed", 0)), "monotonicity")
    prob = monotonicity_probability(T, reference, int(values.get("pairs", 10_000)), rng)
    result = {"p_mon": prob, "pairs": int(values.get("pairs", 10_000)), "map": values["map_path"],
              "reference": repr(reference), "seed": int(values.get("seed", 0))}
    if values.get("out"):
        Path(values["out"]).write_text(json.dumps(result, indent=2))
    print(json.dumps(result))
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        values = _resolved(args)
        if args.command == "stability":
            return _run_stability(values)
        if args.command == "monotonicity":
            return _run_monotonicity(values)
        return _run_study(args.command, values)
    except (TransportError, OSError, ValueError, KeyError, TypeError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
