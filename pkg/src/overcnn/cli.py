"""Command-line interface.

Commands: gen-data, train, eval, check, rate-study, inspect.  Each command
reads a single JSON config; all randomness flows from the config's seed, so
rerunning a command reproduces its output files byte for byte (also under a
different THREADS setting).  Exit codes: 0 ok, 1 check failure, 2 config
error, 3 I/O error, 4 numeric divergence.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import checks, rng
from .errors import ConfigError, DomainError, NonFiniteError
from .evaluation import (DeskRule, check_lemma1, l2_risk_mc,
                         misclassification_risk_mc, network_classifier, rate_study)
from .model import HyperParams, Topology, derive_theorem1_hyperparams
from .serialize import (dumps_json, read_weights_binary, weights_from_json,
                        weights_to_json, write_weights_binary)
from .synthdata import (AvgPoolDistribution, bayes_risk_mc, read_dataset_file,
                        sample_dataset, write_dataset_file)
from .training import train

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", field="config") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", field="config") from exc
    cfg["_sha256"] = hashlib.sha256(raw.encode()).hexdigest()
    return cfg


def _field(cfg, name, required=True, default=None):
    if name not in cfg:
        if required:
            raise ConfigError(f"missing config field {name!r}", field=name)
        return default
    return cfg[name]


def _dist_from(cfg) -> AvgPoolDistribution:
    d = _field(cfg, "dist")
    try:
        return AvgPoolDistribution.from_json_dict(d)
    except KeyError as exc:
        raise ConfigError(f"missing dist field {exc.args[0]!r}",
                          field=str(exc.args[0])) from exc


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return int(args.threads)
    env = os.environ.get("THREADS")
    return int(env) if env else 1


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = _load_config(args.config)
    dist = _dist_from(cfg)
    n = int(_field(cfg, "n"))
    seed = int(_field(cfg, "seed"))
    out = _field(cfg, "out")
    data = sample_dataset(dist, n, seed)
    write_dataset_file(out, data, header_extra={"config_sha256": cfg["_sha256"]})
    est, se = bayes_risk_mc(dist, int(cfg.get("bayes_m", 100000)),
                            rng.derive_seed(seed, "bayes-mc"))
    print(f"n: {n}")
    print(f"bayes_risk: {est:.6f} (stderr {se:.6f})")
    print(f"label_frequency: {float(np.mean(data.labels)):.6f}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    data = read_dataset_file(_field(cfg, "dataset"))
    hp_cfg = dict(_field(cfg, "hyperparams"))
    if getattr(args, "t_n", None) is not None:
        hp_cfg["t_n"] = args.t_n
    if getattr(args, "L_n", None) is not None:
        hp_cfg["L_n"] = args.L_n
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    mode = hp_cfg.get("mode", "desk")
    if mode == "theory":
        hp = derive_theorem1_hyperparams(
            int(_field(hp_cfg, "n")), int(_field(hp_cfg, "kappa")),
            int(_field(hp_cfg, "L")),
            {k: hp_cfg[k] for k in ("c2", "c3", "c4", "c5") if k in hp_cfg})
    else:
        try:
            hp = HyperParams.desk(
                n=data.n, kappa=int(_field(hp_cfg, "kappa")),
                L=int(_field(hp_cfg, "L")), K_n=int(_field(hp_cfg, "K_n")),
                L_n=int(_field(hp_cfg, "L_n")), t_n=int(_field(hp_cfg, "t_n")),
                tau=hp_cfg.get("tau"),
                **{k: hp_cfg[k] for k in ("c2", "c3", "c4", "c5") if k in hp_cfg})
        except KeyError as exc:
            raise ConfigError(f"missing hyperparams field {exc.args[0]!r}",
                              field=str(exc.args[0])) from exc
    if "topology" in cfg:
        topology = Topology.from_json_dict(cfg["topology"])
    else:
        topology = Topology.theorem1(kappa=hp.kappa, L=hp.L, K=hp.K_n,
                                     d1=data.d1, d2=data.d2)
    seed = int(_field(cfg, "seed"))
    weights, trace = train(data, topology, hp, seed)
    fmt = cfg.get("weights_format", "json")
    if fmt == "binary":
        write_weights_binary(_field(cfg, "weights_out"), weights)
    else:
        _write_text(_field(cfg, "weights_out"), weights_to_json(weights))
    _write_text(_field(cfg, "trace_out"), trace.to_csv())
    prov = {"config_sha256": cfg["_sha256"], "seed": seed,
            "hyperparams": hp.to_json_dict(), "topology": topology.to_json_dict(),
            "initial_risk": float(trace.risk[0]), "final_risk": float(trace.risk[-1])}
    _write_text(_field(cfg, "trace_out") + ".provenance.json", dumps_json(prov) + "\n")
    print(f"initial_F_n: {trace.risk[0]:.10f}")
    print(f"final_F_n: {trace.risk[-1]:.10f}")
    return EXIT_OK


def _load_weights(cfg):
    path = _field(cfg, "weights")
    if path.endswith(".bin"):
        topology = Topology.from_json_dict(_field(cfg, "topology"))
        return read_weights_binary(path, topology)
    with open(path, "r", encoding="utf-8") as fh:
        return weights_from_json(fh.read())


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    weights = _load_weights(cfg)
    topology = weights.topology
    dist = _dist_from(cfg)
    m = int(cfg.get("m", 100000))
    seed = int(_field(cfg, "seed"))
    risk, risk_se = misclassification_risk_mc(
        network_classifier(weights, topology), dist, m, seed)
    bayes, bayes_se = bayes_risk_mc(dist, m, seed)
    l2, l2_se = l2_risk_mc(weights, topology, dist, m, seed)
    lemma1 = check_lemma1(weights, topology, dist, m, seed)
    report = {"config_sha256": cfg["_sha256"], "m": m, "seed": seed,
              "misclassification_risk": risk, "misclassification_stderr": risk_se,
              "bayes_risk": bayes, "bayes_stderr": bayes_se,
              "l2_risk": l2, "l2_stderr": l2_se,
              "excess_risk": risk - bayes, "lemma1": lemma1}
    out = cfg.get("report_out")
    if out:
        _write_text(out, dumps_json(report) + "\n")
    print(f"misclassification_risk: {risk:.6f}")
    print(f"bayes_risk: {bayes:.6f}")
    print(f"excess_risk: {risk - bayes:.6f}")
    print(f"l2_risk: {l2:.6f}")
    print(f"lemma1_passed: {lemma1['passed']}")
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = _load_config(args.config) if args.config else {"_sha256": None}
    suite = args.suite
    if suite not in checks.SUITES:
        raise ConfigError(f"unknown suite {suite!r}", field="suite")
    kwargs = {k: v for k, v in cfg.items()
              if not k.startswith("_") and k not in ("out",)}
    try:
        report = checks.SUITES[suite](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad {suite} options: {exc}", field="config") from exc
    report["config_sha256"] = cfg.get("_sha256")
    out = cfg.get("out") or getattr(args, "out", None)
    if out:
        doc = {k: v for k, v in report.items() if k != "seconds"}
        _write_text(out, dumps_json(doc) + "\n")
    print(f"suite: {suite}")
    print(f"passed: {report['passed']}")
    return EXIT_OK if report["passed"] else EXIT_CHECK


def cmd_rate_study(args) -> int:
    cfg = _load_config(args.config)
    dist = _dist_from(cfg)
    rule = DeskRule(**cfg.get("rule", {}))
    result = rate_study(dist, int(_field(cfg, "kappa")), _field(cfg, "n_grid"),
                        int(_field(cfg, "replications")), rule,
                        int(_field(cfg, "seed")),
                        eval_m=int(cfg.get("eval_m", 20000)),
                        threads=_threads(args))
    _write_text(_field(cfg, "csv_out"), result.to_csv())
    summary = result.summary()
    summary["provenance"] = {"config_sha256": cfg["_sha256"],
                             "build": "overcnn-0.1.0",
                             "seed": int(_field(cfg, "seed"))}
    _write_text(_field(cfg, "summary_out"), dumps_json(summary) + "\n")
    print(f"slope: {result.slope:.6f}")
    for n, v in result.mean_excess.items():
        print(f"mean_excess[{n}]: {v:.6f}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = args.path
    if path.endswith(".bin"):
        print("binary weight file (topology required to decode); header only")
        with open(path, "rb") as fh:
            magic = fh.read(8)
            import struct
            (count,) = struct.unpack("<Q", fh.read(8))
        print(f"magic: {magic.decode()}  parameters: {count}")
        return EXIT_OK
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    doc = json.loads(first)
    if "topology" in doc:
        w = weights_from_json(first)
        t = w.topology
        print(f"weights: K={t.K} L={t.L} kappa={t.kappa} d=({t.d1},{t.d2}) "
              f"parameters={w.data.size}")
        print(f"outer: min={w.outer.min():.6g} max={w.outer.max():.6g} "
              f"sum_sq={float(w.outer @ w.outer):.6g}")
    else:
        print(f"dataset: n={doc.get('n')} d1={doc.get('d1')} d2={doc.get('d2')}")
        print(f"spec: {json.dumps(doc.get('spec'))}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="overcnn",
        description="Over-parametrized average-pooling CNN classifier tools")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, needs_config in (
            ("gen-data", cmd_gen_data, True), ("train", cmd_train, True),
            ("eval", cmd_eval, True), ("rate-study", cmd_rate_study, True)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config)
        p.add_argument("--threads", type=int, default=None)
        if name == "train":
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--t-n", dest="t_n", type=int, default=None)
            p.add_argument("--l-n", dest="L_n", type=int, default=None)
        p.set_defaults(fn=fn)
    p = sub.add_parser("check")
    p.add_argument("--suite", required=True,
                   choices=sorted(checks.SUITES))
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(fn=cmd_check)
    p = sub.add_parser("inspect")
    p.add_argument("path")
    p.set_defaults(fn=cmd_inspect)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
