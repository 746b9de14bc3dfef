"""Command-line front end.

Every run resolves its configuration (built-in defaults, then the
``--config`` file, then explicit flags), computes everything in memory and
only then writes its outputs, so a failing run leaves no partial files.
Output files are named ``<command>-<hash>`` where the hash is taken over
the resolved configuration.

Exit codes: 0 success, 2 input error, 3 consistency error, 4 sandwich failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_INPUT, EXIT_CONSISTENCY, EXIT_SANDWICH = 0, 2, 3, 4
COMMANDS = ("certify", "validate", "gallery", "she", "krr", "corpus", "plot")
GLOBAL_DEFAULTS = {"seed": 0, "samples": 100000, "shards": 4, "out": "reports"}


class ConsistencyFailure(Exception):
    """A computed object failed one of its own checks."""


# ---------------------------------------------------------------------------
# config and output plumbing


def _load_json(path):
    from .exceptions import InvalidInputError
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"malformed JSON in {path}: {exc}") from exc


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).replace(",", " ").split()]


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(",", " ").split()]


def versions() -> dict:
    import scipy
    from . import __version__
    from ._backend import BACKEND
    return {"chaoscert": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": sys.version.split()[0], "backend": BACKEND}


def resolve_config(args) -> dict:
    """Defaults, then the config file (top level and the command's section), then flags."""
    cfg = dict(GLOBAL_DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        data = _load_json(args.config)
        if not isinstance(data, dict):
            from .exceptions import InvalidInputError
            raise InvalidInputError("config file must hold a JSON object")
        section = data.get(args.command, {})
        cfg.update({k: v for k, v in data.items() if k not in COMMANDS})
        if isinstance(section, dict):
            cfg.update(section)
    for k, v in vars(args).items():
        if k in ("command", "config", "func") or v is None:
            continue
        cfg[k] = v
    cfg["command"] = args.command
    return cfg


def config_hash(cfg: dict) -> str:
    key = {k: v for k, v in cfg.items() if k != "out"}
    return hashlib.sha256(json.dumps(key, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(rows, columns=None) -> str:
    rows = list(rows)
    columns = columns or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _plain(obj):
    from .certificates import _plain as plain
    return plain(obj)


def write_outputs(cfg: dict, result: dict, extra: dict) -> list[Path]:
    """Write the JSON report and any side files; returns the written paths."""
    out = Path(cfg["out"])
    h = config_hash(cfg)
    stem = f"{cfg['command']}-{h}"
    report = {"command": cfg["command"], "config_hash": h, "config": cfg,
              "versions": versions(), "seed": cfg["seed"], "shards": cfg["shards"],
              "result": _plain(result)}
    texts = {out / f"{stem}.json": json.dumps(report, indent=2, default=float)}
    for suffix, text in extra.items():
        texts[out / f"{stem}{suffix}"] = text
    for path, text in texts.items():
        _atomic_write(path, text)
    return list(texts)


# ---------------------------------------------------------------------------
# input loading


def _load_expansion(path):
    from .tensors import ChaosExpansion
    obj = _load_json(path)
    return ChaosExpansion.from_json(obj.get("expansion", obj) if isinstance(obj, dict) else obj)


def _load_targets(path):
    from .certificates import TargetSpec
    obj = _load_json(path)
    return TargetSpec.from_json(obj.get("targets", obj) if isinstance(obj, dict) else obj)


def _load_operator(path):
    from .hilbert import OperatorMatrix
    return OperatorMatrix.from_json(_load_json(path))


def _problem(cfg):
    """``(name, F, targets)`` triples selected by ``expansion``/``targets`` or ``case``."""
    from .corpus import certificate_corpus, corpus_case
    from .exceptions import InvalidInputError
    if cfg.get("expansion") or cfg.get("targets"):
        if not (cfg.get("expansion") and cfg.get("targets")):
            raise InvalidInputError("--expansion and --targets go together")
        F = _load_expansion(cfg["expansion"])
        T = _load_targets(cfg["targets"])
        return [(Path(cfg["expansion"]).stem, F, T)]
    case = cfg.get("case") or "all"
    if case == "all":
        return [(c.name, c.F, c.targets) for c in certificate_corpus(cfg["seed"])]
    c = corpus_case(case, cfg["seed"])
    return [(c.name, c.F, c.targets)]


def _grids(cfg, F):
    N_grid = _int_list(cfg["N_grid"]) if cfg.get("N_grid") else list(range(1, max(F.max_order, 1) + 1))
    m_grid = _int_list(cfg["m_grid"]) if cfg.get("m_grid") else list(range(1, F.Hdim + 1))
    return N_grid, m_grid


# ---------------------------------------------------------------------------
# commands


def run_certify(cfg):
    from .certificates import gaussian_pair_bound, theorem35_bound
    from .gallery import example11_pair
    from .exceptions import TruncationMismatchError
    if cfg.get("pair") or cfg.get("gallery"):
        if cfg.get("pair"):
            T1, T2 = (_load_operator(p) for p in cfg["pair"])
        else:
            T1, T2, _ = example11_pair()
        if T1.dim != T2.dim:
            raise TruncationMismatchError(f"operators of sizes {T1.dim} and {T2.dim}")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            pb = gaussian_pair_bound(T1, T2)
        result = {"kind": "gaussian_pair_bound", "bound": float(pb), "nondegenerate": pb.nondegenerate,
                  "warnings": [str(w.message) for w in caught]}
        return result, {}
    results, csvs = [], []
    for name, F, T in _problem(cfg):
        if T.dim != F.Hdim:
            raise TruncationMismatchError(f"target dimension {T.dim} differs from Hdim {F.Hdim}")
        N_grid, m_grid = _grids(cfg, F)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rep = theorem35_bound(F, T, N_grid, m_grid)
        d = rep.to_json()
        d["name"] = name
        d["warnings"] = [str(w.message) for w in caught]
        results.append(d)
        for row in rep.grid_table:
            csvs.append({"case": name, **row})
    cols = ["case", "N", "m", "R1", "R2", "R3", "R4", "R5", "R6", "bound"]
    return {"kind": "theorem35_bound", "cases": results}, {".csv": _csv_text(csvs, cols)}


def run_validate(cfg):
    from .certificates import theorem35_bound
    from .empirics import run_sandwich
    from .exceptions import InvalidInputError, TruncationMismatchError
    if int(cfg["samples"]) < 4:
        raise InvalidInputError("validation needs at least 4 samples")
    problems = _problem(cfg)
    out, failed = [], []
    for name, F, T in problems:
        if T.dim != F.Hdim:
            raise TruncationMismatchError(f"target dimension {T.dim} differs from Hdim {F.Hdim}")
        N_grid, m_grid = _grids(cfg, F)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = theorem35_bound(F, T, N_grid, m_grid)
        s = run_sandwich(F, T.aggregate, rep.bound, int(cfg["samples"]), seed=int(cfg["seed"]),
                         shards=int(cfg["shards"]), sigma=float(cfg["sigma"]))
        r = s.report()
        r["name"] = name
        r["law_mismatch"] = bool(s.d2.value - s.sigma * s.d2.stderr > 0)
        out.append(r)
        if not s.passed:
            failed.append(name)
    result = {"kind": "sandwich", "cases": out, "failed": failed, "pass": not failed}
    return result, {".csv": _csv_text([{"case": r["name"], "d2_lower": r["d2_lower"]["value"],
                                        "d2_stderr": r["d2_lower"]["stderr"],
                                        "stein_mc": r["stein_mc"]["value"],
                                        "stein_stderr": r["stein_mc"]["stderr"],
                                        "certificate": r["certificate"], "pass": r["pass"],
                                        "law_mismatch": r["law_mismatch"]} for r in out])}


def run_gallery(cfg):
    from .gallery import example11_pair, remark315_grid
    which = cfg["which"]
    cases = []
    if which in ("example11", "all"):
        cases.append(example11_pair()[2])
    if which in ("remark315", "all"):
        seq, summary = remark315_grid(float(cfg["p"]), float(cfg["gamma"]), _int_list(cfg["ns"]))
        cases += seq + [summary]
    if not cases:
        from .exceptions import InvalidInputError
        raise InvalidInputError(f"unknown gallery entry {which!r}")
    result = {"cases": [c.claims_json() for c in cases]}
    bad = [c.name for c in cases if c.failures()]
    result["pass"] = not bad
    rows = [{"case": c.name, **cl.to_json()} for c in cases for cl in c.claims]
    if bad:
        raise ConsistencyFailure((f"gallery claims failed: {bad}", result))
    return result, {".csv": _csv_text(rows)}


def _she_model(cfg):
    from .she import HeatModel
    return HeatModel(cfg["q_family"], float(cfg["beta"]), float(cfg["rho"]), int(cfg["K"]))


def run_she(cfg):
    from .empirics import default_dictionary
    from .she import (galerkin_weak_error_mc, invariant_gap_certificate, two_order_initial,
                      weak_error_parts)
    model = _she_model(cfg)
    ns, Ts, ts = _int_list(cfg["n_grid"]), _float_list(cfg["T_grid"]), _float_list(cfg["t_grid"])
    F0 = None
    if cfg.get("initial") == "two-order":
        F0 = two_order_initial(min(4, model.K))
    elif cfg.get("initial") not in (None, "gaussian"):
        F0 = _load_expansion(cfg["initial"])
    weak = []
    dictionary = default_dictionary(model.K, int(cfg["seed"]), n_random=4)
    for T in Ts:
        for n in ns:
            row = {"n": n, "T": T, **weak_error_parts(model, n, T)}
            if int(cfg["samples"]) > 1:
                mc = galerkin_weak_error_mc(model, n, T, dictionary, int(cfg["samples"]),
                                            int(cfg["seed"]))
                k = int(np.argmax(mc["gaps"]))
                row.update(mc_max_gap=float(mc["gaps"][k]), mc_stderr=float(mc["stderr"][k]),
                           mc_ok=bool(np.all(mc["gaps"] <= mc["bound"] + 5 * mc["stderr"])))
            weak.append(row)
    N_grid = [1] if F0 is None else list(range(1, F0.max_order + 1))
    inv = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for t in ts:
            rep = invariant_gap_certificate(F0, model, t, N_grid=N_grid)
            inv.append({"t": t, "bound": rep.bound, "N": rep.N, "m": rep.m, **rep.terms(),
                        "gaussian_closed_form": rep.diagnostics["gaussian_pair_closed_form"]})
    series = {}
    for T in Ts:
        pts = [r for r in weak if r["T"] == T]
        series[f"weak_error_vs_n_T{T:g}"] = {"x": [r["n"] for r in pts], "y": [r["bound"] for r in pts],
                                            "xlabel": "n", "ylabel": "weak error bound"}
    for n in ns:
        pts = [r for r in weak if r["n"] == n]
        series[f"weak_error_vs_T_n{n}"] = {"x": [r["T"] for r in pts], "y": [r["bound"] for r in pts],
                                          "xlabel": "T", "ylabel": "weak error bound"}
    series["invariant_gap_vs_t"] = {"x": [r["t"] for r in inv], "y": [r["bound"] for r in inv],
                                    "xlabel": "t", "ylabel": "d2 certificate"}
    result = {"weak_error": weak, "invariant_gap": inv, "series": series}
    return result, {"-weak.csv": _csv_text(weak), "-invariant.csv": _csv_text(inv)}


def run_krr(cfg):
    from .chaos import exact_covariance
    from .empirics import mc_moments
    from .exceptions import InvalidInputError
    from .krr import (KRRSetup, MercerKernel, build_chaos_kernel, krr_clt_certificate,
                      midpoint_design, reference_limit)
    from .tensors import ChaosExpansion
    spec = cfg.get("mercer_spec")
    if isinstance(spec, str):
        spec = _load_json(spec)
    mercer = MercerKernel.from_json(spec) if spec else MercerKernel(1.0 / np.arange(1, 6) ** 2)
    designs = []
    if cfg.get("design_file"):
        try:
            x = np.loadtxt(cfg["design_file"], delimiter=",", ndmin=1)
        except (OSError, ValueError) as exc:
            raise InvalidInputError(f"cannot read design file: {exc}") from exc
        designs.append(np.asarray(x, dtype=float).reshape(-1))
    else:
        designs = [midpoint_design(n) for n in _int_list(cfg["n_grid"])]
    rows, reports = [], []
    for x in designs:
        setup = KRRSetup(x, mercer, float(cfg["lambda"]), int(cfg["p"]), float(cfg["sigma2"]))
        if cfg["gamma_limit"] == "reference":
            rep = krr_clt_certificate(setup, reference_limit(setup, int(cfg["reference_n"])))
        elif cfg["gamma_limit"] == "mercer":
            rep = krr_clt_certificate(setup)
        else:
            raise InvalidInputError("gamma_limit must be 'mercer' or 'reference'")
        row = {"n": setup.n, "bound": rep.bound, "covariance_gap_term": rep.R2,
               "contraction_term": rep.R3, "R4": rep.R4, "R5": rep.R5,
               "cov_gap_bound": rep.diagnostics["cov_gap_bound"],
               "cov_gap_direct": rep.diagnostics["cov_gap_parts"]["direct"]}
        if int(cfg["samples"]) > 1 and cfg.get("mc_moments", True):
            F = ChaosExpansion.single(build_chaos_kernel(setup))
            est = mc_moments(F, int(cfg["samples"]), int(cfg["seed"]), int(cfg["shards"]))
            var = np.diag(exact_covariance(F).entries)
            k = int(np.argmax(var))
            row.update(mc_excess=float(est.excess[k]), mc_excess_stderr=float(est.excess_se[k]),
                       variance=float(var[k]))
        rows.append(row)
        reports.append(rep.to_json())
    series = {"krr_bound_vs_n": {"x": [r["n"] for r in rows], "y": [r["bound"] for r in rows],
                                 "xlabel": "n", "ylabel": "d2 certificate"},
              "krr_contraction_vs_n": {"x": [r["n"] for r in rows],
                                       "y": [r["contraction_term"] for r in rows],
                                       "xlabel": "n", "ylabel": "contraction term"}}
    return {"rows": rows, "reports": reports, "series": series}, {"-decay.csv": _csv_text(rows)}


def run_corpus(cfg):
    from .corpus import certificate_corpus
    cases = certificate_corpus(int(cfg["seed"]))
    return {"cases": [c.to_json() for c in cases]}, {}


def emit_plots(report_paths, out_dir) -> list[Path]:
    """Decay plots (plus their CSV) for every ``series`` found in the reports.

    Missing series and single-point series are skipped with a warning;
    without matplotlib only the CSV files are written.
    """
    out = Path(out_dir)
    written = []
    series = {}
    for p in report_paths:
        rep = _load_json(p)
        for name, s in (rep.get("result", {}).get("series") or {}).items():
            series[name] = s
    if not series:
        warnings.warn("no plottable series found in the given reports", stacklevel=2)
        return written
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        plt = None
        warnings.warn("matplotlib not installed; writing CSV only", stacklevel=2)
    for name, s in sorted(series.items()):
        x, y = list(s.get("x", [])), list(s.get("y", []))
        if not x:
            warnings.warn(f"series {name} is empty; skipped", stacklevel=2)
            continue
        path = out / f"{name}.csv"
        _atomic_write(path, _csv_text([{"x": a, "y": b} for a, b in zip(x, y)], ["x", "y"]))
        written.append(path)
        if len(x) < 2:
            warnings.warn(f"series {name} has a single point; plot skipped", stacklevel=2)
            continue
        if plt is None:
            continue
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.plot(x, y, "o-")
        if all(v > 0 for v in y):
            ax.set_yscale("log")
        if all(v > 0 for v in x) and max(x) / min(x) >= 10:
            ax.set_xscale("log")
        ax.set_xlabel(s.get("xlabel", "x"))
        ax.set_ylabel(s.get("ylabel", "y"))
        ax.set_title(name)
        fig.tight_layout()
        png = out / f"{name}.png"
        out.mkdir(parents=True, exist_ok=True)
        fig.savefig(png, dpi=120)
        plt.close(fig)
        written.append(png)
    return written


COMMAND_DEFAULTS = {
    "certify": {"N_grid": None, "m_grid": None},
    "validate": {"N_grid": None, "m_grid": None, "sigma": 3.0},
    "gallery": {"which": "all", "p": 2.0, "gamma": 0.75, "ns": [10, 100, 1000]},
    "she": {"q_family": "power", "beta": 2.0, "rho": 0.5, "K": 64, "n_grid": [2, 4, 8],
            "T_grid": [0.25, 0.5, 1.0], "t_grid": [0.1, 0.25, 0.5, 1.0, 2.0],
            "initial": "two-order"},
    "krr": {"lambda": 0.1, "sigma2": 1.0, "p": 2, "n_grid": [10, 100, 1000],
            "gamma_limit": "mercer", "reference_n": 20000},
}

RUNNERS = {"certify": run_certify, "validate": run_validate, "gallery": run_gallery,
           "she": run_she, "krr": run_krr, "corpus": run_corpus}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chaoscert", description=__doc__.splitlines()[0])
    g = ap.add_argument_group("global")
    g.add_argument("--seed", type=int)
    g.add_argument("--samples", type=int)
    g.add_argument("--shards", type=int)
    g.add_argument("--out")
    g.add_argument("--config", help="JSON file with top-level and per-command settings")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="certificate for an expansion or a Gaussian pair")
    c.add_argument("--expansion")
    c.add_argument("--targets")
    c.add_argument("--case", help="corpus case name or 'all'")
    c.add_argument("--pair", nargs=2, metavar=("T1", "T2"))
    c.add_argument("--gallery", choices=["example11"])
    c.add_argument("--N-grid", dest="N_grid")
    c.add_argument("--m-grid", dest="m_grid")

    v = sub.add_parser("validate", aliases=["empirics"], help="Monte-Carlo sandwich check")
    v.add_argument("--expansion")
    v.add_argument("--targets")
    v.add_argument("--case")
    v.add_argument("--N-grid", dest="N_grid")
    v.add_argument("--m-grid", dest="m_grid")
    v.add_argument("--sigma", type=float)

    ga = sub.add_parser("gallery", help="counterexample claims")
    ga.add_argument("--which", choices=["example11", "remark315", "all"])
    ga.add_argument("--p", type=float)
    ga.add_argument("--gamma", type=float)
    ga.add_argument("--ns")

    s = sub.add_parser("she", help="heat equation weak errors and invariant-law certificates")
    s.add_argument("--q-family", dest="q_family", choices=["power", "geometric"])
    s.add_argument("--beta", type=float)
    s.add_argument("--rho", type=float)
    s.add_argument("--K", type=int)
    s.add_argument("--n-grid", dest="n_grid")
    s.add_argument("--T-grid", dest="T_grid")
    s.add_argument("--t-grid", dest="t_grid")
    s.add_argument("--initial", help="'two-order', 'gaussian' or an expansion JSON file")

    k = sub.add_parser("krr", help="kernel ridge regression CLT certificates")
    k.add_argument("--design-file", dest="design_file")
    k.add_argument("--mercer-spec", dest="mercer_spec")
    k.add_argument("--lambda", dest="lambda", type=float)
    k.add_argument("--sigma2", type=float)
    k.add_argument("--p", type=int)
    k.add_argument("--n-grid", dest="n_grid")
    k.add_argument("--gamma-limit", dest="gamma_limit", choices=["mercer", "reference"],
                   help="limit covariance: diag(mu) or a dense reference design")
    k.add_argument("--reference-n", dest="reference_n", type=int)

    sub.add_parser("corpus", help="write the certificate corpus")

    pl = sub.add_parser("plot", help="decay plots from report files")
    pl.add_argument("reports", nargs="*")
    return ap


def main(argv=None) -> int:
    from .exceptions import InvalidInputError, TruncationMismatchError
    args = build_parser().parse_args(argv)
    if args.command == "empirics":
        args.command = "validate"
    try:
        cfg = resolve_config(args)
        if args.command == "plot":
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                files = emit_plots(cfg.get("reports") or [], cfg["out"])
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
            for f in files:
                print(f)
            return EXIT_OK
        for key in ("seed", "samples", "shards"):
            cfg[key] = int(cfg[key])
        if cfg["shards"] < 1 or cfg["samples"] < 0:
            raise InvalidInputError("shards must be >= 1 and samples >= 0")
        result, extra = RUNNERS[args.command](cfg)
    except TruncationMismatchError as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except InvalidInputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConsistencyFailure as exc:
        msg, result = exc.args[0]
        print(f"consistency error: {msg}", file=sys.stderr)
        write_outputs(cfg, result, {})
        return EXIT_CONSISTENCY
    for path in write_outputs(cfg, result, extra):
        print(path)
    if args.command == "validate" and not result["pass"]:
        print(f"sandwich failure: {result['failed']}", file=sys.stderr)
        return EXIT_SANDWICH
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
