"""Command-line front end.

Exit codes: 0 verified, 1 verification failure, 2 threshold or
infeasibility diagnostic, 64 usage error. Every certificate is re-checked
here from its serialized form before the command reports success.
"""
from __future__ import annotations

import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .addcomb import DenseSet, bogolyubov_chang, sumset
from .analytic import gowers_norm
from .cubic import derivative_rank_profile, measured_bias, structure_from_bias, structure_from_u3
from .errors import ResourceLimitError, ThresholdError, VerificationError
from .ffpoly import Polynomial, all_points, compose_affine, elementary_symmetric, random_polynomial
from .planted import planted_bias_cubic, planted_quadratic_composition, planted_quartic, planted_rank3
from .quadform import dickson_canonicalize
from .quartic import (
    partition_degree_drop,
    quartic_bias_structure,
    quartic_derivative_profile,
    quartic_highchar_structure,
    s4_case_study,
)
from .rng import as_rng
from .subspace import AffineSubspace, LinearForm, restrict

EXIT_OK, EXIT_VERIFY, EXIT_THRESHOLD, EXIT_USAGE = 0, 1, 2, 64
PROFILE_CAP = 1 << 14
SAMPLED_CHECK = 10**4

MODES = ("cubic-bias", "cubic-u3", "quartic-bias", "quartic-highchar", "partition")
MAX_DEGREE = {"cubic-bias": 3, "cubic-u3": 3, "quartic-bias": 4, "quartic-highchar": 4, "partition": 4}

REPORT_COLUMNS = ["index", "generator", "p", "n", "degree", "seed", "mode", "bias", "status", "c", "verification", "detail"]


class UsageProblem(click.UsageError):
    exit_code = EXIT_USAGE


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    return str(obj)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n"


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


def load_polynomial(path: str) -> Polynomial:
    try:
        return Polynomial.from_json(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageProblem(f"cannot read polynomial from {path}: {exc}") from None


# ------------------------------------------------------------ independent re-checks


def _same(f: Polynomial, g: Polynomial, seed=0) -> bool:
    if f.p != g.p or f.n != g.n:
        return False
    if f.p**f.n <= 1 << 20:
        return bool(np.array_equal(f.table(), g.table()))
    pts = as_rng(seed).spawn("recheck").integers(f.p, (SAMPLED_CHECK, f.n))
    return bool(np.array_equal(f.evaluate_many(pts), g.evaluate_many(pts)))


def _poly(d, p: int, n: int) -> Polynomial:
    return Polynomial.zero(p, n) if d is None else Polynomial.from_dict(d)


def _form(d, p: int) -> Polynomial:
    return LinearForm.from_dict(p, d).as_polynomial()


def recheck_cubic(cert: dict, f: Polynomial) -> bool:
    p, n = f.p, f.n
    total = _poly(cert.get("q0"), p, n)
    if len(cert["ells"]) != len(cert["qs"]):
        return False
    for l, q in zip(cert["ells"], cert["qs"]):
        qq = Polynomial.from_dict(q)
        if qq.degree > 2:
            return False
        total = total + _form(l, p) * qq
    if cert.get("g") is not None:
        g = Polynomial.from_dict(cert["g"])
        inner = [LinearForm.from_dict(p, l) for l in cert["inner_ells"]]
        if g.degree > 3 or g.n != len(inner):
            return False
        if inner:
            Lam = np.array([l.coeffs for l in inner], dtype=np.int64)
            c = np.array([l.constant for l in inner], dtype=np.int64)
            total = total + g.substitute(Lam.T, c)
        else:
            total = total + Polynomial.constant(p, n, g.constant_term)
    return _same(total, f)


def recheck_quartic(cert: dict, f: Polynomial) -> bool:
    p, n = f.p, f.n
    total = _poly(cert["g0"], p, n)
    if total.degree > 3 or len(cert["ells"]) != len(cert["gs"]):
        return False
    for l, g in zip(cert["ells"], cert["gs"]):
        gg = Polynomial.from_dict(g)
        if gg.degree > 3:
            return False
        total = total + _form(l, p) * gg
    for prod in cert["products"]:
        q, q2 = Polynomial.from_dict(prod["q"]), Polynomial.from_dict(prod["q_prime"])
        if q.degree > 2 or q2.degree > 2:
            return False
        total = total + (q * q2).scale(int(prod["a"]))
    return _same(total, f)


def _check_cell(args) -> bool:
    fd, cell = args
    f = Polynomial.from_dict(fd)
    W = AffineSubspace.from_dict(cell["cell"])
    h = restrict(f, W)
    return h == Polynomial.from_dict(cell["restriction"]) and h.degree <= 3 and h.degree == cell["degree"]


def recheck_partition(cert: dict, f: Polynomial, jobs: int = 1) -> bool:
    p, n = f.p, f.n
    ambient = AffineSubspace.from_dict(cert["ambient"])
    seen = np.zeros(p**n, dtype=np.int64)
    for cell in cert["cells"]:
        W = AffineSubspace.from_dict(cell["cell"])
        if W.dim != cell["dim"]:
            return False
        seen[W.indices()] += 1
    target = np.zeros(p**n, dtype=np.int64)
    target[ambient.indices()] = 1
    if not np.array_equal(seen, target):
        return False
    work = [(f.to_dict(), cell) for cell in cert["cells"]]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            return all(ex.map(_check_cell, work))
    return all(map(_check_cell, work))


def recheck_dickson(cert: dict, q: Polynomial) -> bool:
    p, n = q.p, q.n
    terms = {}
    for i, a in enumerate(cert["alphas"]):
        e = [0] * n
        if cert["shape"] == "char2_pairs":
            e[2 * i] = e[2 * i + 1] = 1
        else:
            e[i] = 2
        terms[tuple(e)] = int(a)
    canon = Polynomial(p, n, terms) + _form(cert["residual_linear"], p)
    T = np.array(cert["T"], dtype=np.int64)
    # canonical(z) = q(T z)
    return _same(compose_affine(q, T), canon)


def _raise_unless(ok: bool, what: str):
    if not ok:
        raise VerificationError(f"{what} failed the independent re-check")


# ------------------------------------------------------------ pipelines


def run_mode(f: Polynomial, mode: str, seed: int, jobs: int = 1) -> dict:
    """Run one decomposition mode and re-check its serialized certificate."""
    if mode not in MODES:
        raise UsageProblem(f"unknown mode {mode}")
    if f.degree > MAX_DEGREE[mode]:
        raise UsageProblem(f"mode {mode} takes degree <= {MAX_DEGREE[mode]}, got {f.degree}")
    if mode == "quartic-highchar" and f.p < 5:
        raise UsageProblem("quartic-highchar needs p >= 5")
    if mode == "cubic-bias":
        cert = json.loads(dumps(structure_from_bias(f, seed=seed).to_dict()))
        _raise_unless(recheck_cubic(cert, f), "cubic certificate")
    elif mode == "cubic-u3":
        cert = json.loads(dumps(structure_from_u3(f).to_dict()))
        _raise_unless(recheck_cubic(cert, f), "cubic certificate")
    elif mode == "quartic-bias":
        cert = json.loads(dumps(quartic_bias_structure(f, seed=seed).to_dict()))
        _raise_unless(recheck_quartic(cert, f), "quartic certificate")
    elif mode == "quartic-highchar":
        cert = json.loads(dumps(quartic_highchar_structure(f, seed=seed).to_dict()))
        _raise_unless(recheck_quartic(cert, f), "quartic certificate")
    else:
        cert = json.loads(dumps(partition_degree_drop(f, seed=seed).to_dict()))
        _raise_unless(recheck_partition(cert, f, jobs), "partition certificate")
    cert["mode"] = mode
    return cert


def partition_csv(cert: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell_index", "dim", "degree_of_restriction"])
    for c in cert["cells"]:
        w.writerow([c["index"], c["dim"], c["degree"]])
    return buf.getvalue()


def _cert_size(cert: dict) -> int | str:
    for key in ("c", "c1"):
        if key in cert:
            return cert[key]
    if "cells" in cert:
        return len(cert["cells"])
    return ""


# ------------------------------------------------------------ experiments


GENERATORS = {
    "random": lambda p, n, prm, s: random_polynomial(p, n, int(prm.get("degree", 3)), seed=s, min_degree=int(prm.get("min_degree", 0))),
    "planted_rank3": lambda p, n, prm, s: planted_rank3(p, n, int(prm.get("c", 1)), seed=s),
    "planted_bias_cubic": lambda p, n, prm, s: planted_bias_cubic(p, n, int(prm.get("c1", 1)), int(prm.get("c2", 1)), seed=s),
    "planted_quadratic_composition": lambda p, n, prm, s: planted_quadratic_composition(p, n, int(prm.get("c", 2)), seed=s),
    "planted_quartic": lambda p, n, prm, s: planted_quartic(p, n, int(prm.get("c_lin", 1)), int(prm.get("c_quad", 1)), seed=s),
    "elementary_symmetric": lambda p, n, prm, s: elementary_symmetric(p, n, int(prm.get("k", 4))),
    "inline": lambda p, n, prm, s: Polynomial.from_dict(prm["polynomial"]),
}


def expand_spec(spec: dict) -> list[dict]:
    """Explicit ``instances`` first, then each ``suites`` entry expanded into
    ``count`` instances with seeds drawn from a named stream of the experiment seed."""
    if not isinstance(spec, dict):
        raise UsageProblem("experiment spec must be a JSON object")
    base = as_rng(int(spec.get("seed", 0)))
    mode = spec.get("mode")
    out = []
    for inst in spec.get("instances", []):
        out.append(dict(inst, mode=inst.get("mode", mode)))
    for k, suite in enumerate(spec.get("suites", [])):
        stream = base.spawn(f"suite-{k}")
        for _ in range(int(suite.get("count", 1))):
            inst = {key: v for key, v in suite.items() if key != "count"}
            inst.setdefault("mode", mode)
            inst["seed"] = stream.next_u64()
            out.append(inst)
    for i, inst in enumerate(out):
        if inst.get("generator", "random") not in GENERATORS:
            raise UsageProblem(f"instance {i}: unknown generator {inst.get('generator')}")
        if inst.get("mode") not in MODES:
            raise UsageProblem(f"instance {i}: unknown mode {inst.get('mode')}")
        if "p" not in inst or "n" not in inst:
            raise UsageProblem(f"instance {i}: p and n are required")
    return out


def run_instance(args) -> list:
    index, inst = args
    p, n, mode = int(inst["p"]), int(inst["n"]), inst["mode"]
    gen = inst.get("generator", "random")
    seed = int(inst.get("seed", index))
    row = {"index": index, "generator": gen, "p": p, "n": n, "degree": "", "seed": seed, "mode": mode,
           "bias": "", "status": "", "c": "", "verification": "", "detail": ""}
    try:
        f = GENERATORS[gen](p, n, inst.get("params", inst), seed)
        row["degree"] = f.degree
        row["bias"] = f"{measured_bias(f, seed)[0]:.6f}"
        cert = run_mode(f, mode, seed)
        row.update(status="ok", c=_cert_size(cert), verification="pass")
    except ThresholdError as exc:
        row.update(status="threshold", verification="n/a", detail=f"{exc.stage}: {exc}")
    except VerificationError as exc:
        row.update(status="failed", verification="fail", detail=str(exc))
    except (click.UsageError, ValueError, ResourceLimitError) as exc:
        row.update(status="error", verification="n/a", detail=str(getattr(exc, "message", exc)))
    return [row[c] for c in REPORT_COLUMNS]


def run_experiment(spec: dict, jobs: int = 1) -> str:
    instances = list(enumerate(expand_spec(spec)))
    if jobs > 1 and len(instances) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(run_instance, instances))
    else:
        rows = [run_instance(a) for a in instances]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    w.writerows(rows)
    return buf.getvalue()


# ------------------------------------------------------------ commands


@click.group()
@click.version_option(__version__, prog_name="polystruct")
@click.option("--seed", type=int, default=0, show_default=True, help="Master seed for every random choice.")
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True, help="Worker count; outputs do not depend on it.")
@click.pass_context
def cli(ctx, seed, jobs):
    """Structure of biased low-degree polynomials over prime fields."""
    ctx.obj = {"seed": seed, "jobs": jobs}


def _seed(ctx, local):
    return ctx.obj["seed"] if local is None else local


@cli.command()
@click.argument("poly", type=click.Path(exists=True, dir_okay=False))
@click.option("--gowers", "orders", type=click.IntRange(min=1), multiple=True, help="Gowers norm order (repeatable).")
@click.option("--exact", "method", flag_value="exact", default=True, help="Exhaustive norms (default).")
@click.option("--mc", "samples", type=click.IntRange(min=1), default=None, help="Monte Carlo with this many samples.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def analyze(ctx, poly, orders, method, samples, seed, out):
    """Bias, Gowers norms, degree and derivative-rank histogram."""
    seed = _seed(ctx, seed)
    f = load_polynomial(poly)
    report = {"schema": 1, "p": f.p, "n": f.n, "degree": f.degree}
    if samples is None:
        report["bias"], report["bias_method"] = measured_bias(f, seed)
    else:
        from .analytic import bias_mc

        report["bias"], report["bias_method"] = bias_mc(f, samples, seed).value, "monte_carlo"
    norms = {}
    for d in orders:
        est = gowers_norm(f, d, samples=samples, seed=seed)
        norms[f"U{d}"] = {"value": est.value, "method": est.method, "samples": est.samples, "std_error": est.std_error}
    report["gowers"] = norms
    if f.p**f.n <= PROFILE_CAP and f.degree in (3, 4):
        prof = derivative_rank_profile(f) if f.degree == 3 else quartic_derivative_profile(f)
        vals, counts = np.unique(prof, return_counts=True)
        report["derivative_rank"] = {
            "kind": "rank2" if f.degree == 3 else "flattening_rank3",
            "histogram": {str(int(v)): int(c) for v, c in zip(vals, counts)},
        }
    else:
        report["derivative_rank"] = None
    _emit(dumps(report), out)


def _decompose(ctx, poly, mode, seed, out, csv_out=None):
    f = load_polynomial(poly)
    cert = run_mode(f, mode, _seed(ctx, seed), ctx.obj["jobs"])
    _emit(dumps(cert), out)
    if csv_out:
        Path(csv_out).write_text(partition_csv(cert))


@cli.command()
@click.argument("poly", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(MODES), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Certificate JSON path (stdout if omitted).")
@click.pass_context
def decompose(ctx, poly, mode, seed, out):
    """Run one pipeline and write its re-verified certificate."""
    _decompose(ctx, poly, mode, seed, out)


@cli.command("decompose-cubic")
@click.argument("poly", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["cubic-bias", "cubic-u3"]), default="cubic-bias", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def decompose_cubic(ctx, poly, mode, seed, out):
    """Cubic structure certificate."""
    _decompose(ctx, poly, mode, seed, out)


@cli.command("decompose-quartic")
@click.argument("poly", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["quartic-bias", "quartic-highchar"]), default="quartic-bias", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def decompose_quartic(ctx, poly, mode, seed, out):
    """Quartic structure certificate."""
    _decompose(ctx, poly, mode, seed, out)


@cli.command()
@click.argument("poly", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Partition CSV path (stdout if omitted).")
@click.option("--json", "json_out", type=click.Path(dir_okay=False), default=None, help="Also write the full certificate.")
@click.pass_context
def partition(ctx, poly, seed, out, json_out):
    """Coset partition on whose cells the quartic drops to degree <= 3."""
    f = load_polynomial(poly)
    cert = run_mode(f, "partition", _seed(ctx, seed), ctx.obj["jobs"])
    _emit(partition_csv(cert), out)
    if json_out:
        Path(json_out).write_text(dumps(cert))


@cli.command()
@click.argument("spec", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def experiment(ctx, spec, out):
    """Run a JSON experiment spec and write a CSV report."""
    try:
        data = json.loads(Path(spec).read_text())
    except ValueError as exc:
        raise UsageProblem(f"malformed spec: {exc}") from None
    _emit(run_experiment(data, ctx.obj["jobs"]), out)


@cli.command("s4-demo")
@click.option("--m", "m", type=int, required=True, help="Block count; n = 4m, at most 3.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def s4_demo(m, out):
    """Check the S_4 identities over F_2 at n = 4m."""
    if not 1 <= m <= 3:
        raise UsageProblem("--m must be 1, 2 or 3 (exhaustive cost grows as 2^{4m})")
    report = s4_case_study(m, strict=False)
    lines = [f"{name}: {'pass' if ok else 'FAIL'}" for name, ok in report["identities"].items()]
    lines.append(f"coset degrees: {sorted(set(report['coset_degrees']))}")
    lines.append(f"display formula exact on {report['display_formula_hits']}/{report['directions']} directions")
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(dumps(report))
    click.echo(text, nl=False)
    if not report["passed"]:
        raise VerificationError("S_4 identities failed")


@cli.command()
@click.argument("poly", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def canonicalize(poly, out):
    """Dickson canonical form of a quadratic."""
    q = load_polynomial(poly)
    if q.degree > 2:
        raise UsageProblem(f"canonicalize takes a quadratic, got degree {q.degree}")
    cert = json.loads(dumps(dickson_canonicalize(q).to_dict()))
    _raise_unless(recheck_dickson(cert, q), "Dickson form")
    _emit(dumps(cert), out)


@cli.command()
@click.option("--input", "path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def bc(path, out):
    """Bogolyubov-Chang subspace inside kA - kA."""
    try:
        A = DenseSet.from_dict(json.loads(Path(path).read_text()))
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageProblem(f"malformed set: {exc}") from None
    cert = bogolyubov_chang(A).to_dict()
    W = AffineSubspace.from_dict(json.loads(dumps(cert))["W"])
    _raise_unless(sumset(A, cert["k"]).issuperset(W), "Bogolyubov-Chang containment")
    _emit(dumps(cert), out)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="polystruct", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except ThresholdError as exc:
        click.echo(f"threshold [{exc.stage}]: {exc}", err=True)
        if exc.metrics:
            click.echo(dumps({"stage": exc.stage, "metrics": exc.metrics}), err=True, nl=False)
        return EXIT_THRESHOLD
    except ResourceLimitError as exc:
        click.echo(f"resource limit: {exc} (set POLYSTRUCT_MAX_TABLE or shrink n)", err=True)
        return EXIT_THRESHOLD
    except VerificationError as exc:
        click.echo(f"verification failed: {exc}", err=True)
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
