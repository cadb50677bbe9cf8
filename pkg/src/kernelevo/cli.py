"""Command-line interface: ``run``, ``replay``, ``oracle`` and ``list``.

Exit codes: 0 success, 1 bad configuration or input files, 2 the initial
population could not be built.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus
from .engine import InitFailure, SearchConfig, run, search_exec_config
from .genome import apply_patch, dumps_patch, loads_patch
from .ir import ParseError, parse_kernel, print_kernel, validate
from .vm import FitnessVector, TestCase, evaluate_fitness

log = logging.getLogger("kernelevo")

DEFAULT_MO_TOLERANCE = 0.01
SEARCH_KEYS = ("pop_size", "cross_rate", "mutate_rate", "init_dist", "tolerance",
               "generations", "wallclock", "seed", "jobs")


class CliError(Exception):
    pass


def _source_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--bench", help="corpus benchmark name")
    g.add_argument("--kernel", help="path to a kernel IR file")
    p.add_argument("--spec", help="input generator spec (JSON) for --kernel")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kernelevo", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="evolve a kernel")
    _source_args(r)
    r.add_argument("--config", help="JSON file with default values for these options")
    r.add_argument("--tests", help="directory of test-case JSON files (held-out ones in heldout/)")
    r.add_argument("--num-tests", type=int, help="tests to generate when --tests is absent (default 3)")
    r.add_argument("--mode", choices=("default", "mo"))
    r.add_argument("--tolerance", type=float)
    r.add_argument("--pop", dest="pop_size", type=int)
    budget = r.add_mutually_exclusive_group()
    budget.add_argument("--generations", type=int)
    budget.add_argument("--wallclock", type=float, help="seconds")
    r.add_argument("--cross-rate", type=float)
    r.add_argument("--mutate-rate", type=float)
    r.add_argument("--init-dist", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", type=int)
    r.add_argument("--out")

    p = sub.add_parser("replay", help="apply a patch and report its fitness")
    _source_args(p)
    p.add_argument("--patch", required=True)
    p.add_argument("--tests")
    p.add_argument("--num-tests", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("default", "mo"), default="default")
    p.add_argument("--tolerance", type=float)

    o = sub.add_parser("oracle", help="write test cases with oracle outputs")
    _source_args(o)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--count", type=int, default=3)
    o.add_argument("--out", required=True)

    sub.add_parser("list", help="list corpus benchmarks")
    return ap


# -- helpers -----------------------------------------------------------------

def _load_kernel(args):
    """Returns (name, kernel, generator spec or None)."""
    if args.bench:
        try:
            b = corpus.load_benchmark(args.bench)
        except corpus.UnknownBenchmark as e:
            raise CliError(str(e.args[0])) from None
        return b.name, b.kernel, b.spec
    if not args.kernel:
        raise CliError("give --bench NAME or --kernel PATH")
    path = Path(args.kernel)
    if not path.is_file():
        raise CliError(f"kernel file not found: {path}")
    try:
        k = parse_kernel(path.read_text())
    except ParseError as e:
        raise CliError(f"{path}: {e}") from None
    spec = None
    if args.spec:
        sp = Path(args.spec)
        if not sp.is_file():
            raise CliError(f"generator spec not found: {sp}")
        spec = json.loads(sp.read_text())
    return path.stem, k, spec


def _load_test_dir(d: Path) -> list:
    return [TestCase.load(f) for f in sorted(d.glob("*.json"))]


def _tests(args, k, spec, seed, count):
    """Evolution and held-out tests, from --tests or generated from the generator spec."""
    if args.tests:
        d = Path(args.tests)
        if not d.is_dir():
            raise CliError(f"tests directory not found: {d}")
        tests = _load_test_dir(d)
        if not tests:
            raise CliError(f"no test-case files in {d}")
        held = _load_test_dir(d / "heldout") if (d / "heldout").is_dir() else []
        return tests, held
    if spec is None:
        raise CliError("no tests: give --tests DIR, or --spec for a --kernel")
    return (corpus.generate_tests_for(k, spec, count, 2 * seed),
            corpus.generate_tests_for(k, spec, count, 2 * seed + 1))


def _tolerance(mode, tolerance):
    if mode == "default":
        if tolerance:
            log.warning("mode 'default' runs at tolerance 0; ignoring --tolerance %g", tolerance)
        return 0.0
    return DEFAULT_MO_TOLERANCE if tolerance is None else tolerance


def _settings(args) -> dict:
    conf = {}
    if args.config:
        cp = Path(args.config)
        if not cp.is_file():
            raise CliError(f"config file not found: {cp}")
        try:
            conf = json.loads(cp.read_text())
        except json.JSONDecodeError as e:
            raise CliError(f"{cp}: {e}") from None
        if not isinstance(conf, dict):
            raise CliError(f"{cp}: expected a JSON object")
    # flags override the file
    for key in SEARCH_KEYS + ("mode", "bench", "kernel", "spec", "tests", "out", "num_tests"):
        v = getattr(args, key, None)
        if v is not None:
            conf[key] = v
    if "pop" in conf:
        conf.setdefault("pop_size", conf.pop("pop"))
    return conf


# -- commands ----------------------------------------------------------------

def cmd_run(args) -> int:
    conf = _settings(args)
    for key in ("bench", "kernel", "spec", "tests"):
        setattr(args, key, conf.get(key))
    name, k, spec = _load_kernel(args)
    mode = conf.get("mode", "default")
    if mode not in ("default", "mo"):
        raise CliError(f"unknown mode {mode!r}")
    fields = {key: conf[key] for key in SEARCH_KEYS if key in conf}
    fields["tolerance"] = _tolerance(mode, conf.get("tolerance"))
    if "wallclock" in fields and "generations" not in fields:
        fields["generations"] = None
    try:
        cfg = SearchConfig(**fields)
    except (TypeError, ValueError) as e:
        raise CliError(f"bad search configuration: {e}") from None
    errs = validate(k)
    if errs:
        raise CliError(f"{name} does not validate: {errs[0]}")
    tests, held = _tests(args, k, spec, cfg.seed, conf.get("num_tests", 3))
    out = Path(conf.get("out", "out"))
    try:
        result = run(k, cfg, tests, held, search_exec_config(k, tests))
    except InitFailure as e:
        log.error("%s", e)
        return 2
    except ValueError as e:
        raise CliError(str(e)) from None
    out.mkdir(parents=True, exist_ok=True)
    (out / "log.csv").write_text(result.log_csv())
    (out / "report.json").write_text(result.report_json(name))
    entry = result.best.get(cfg.mode)
    best_k, best_patch = (entry.individual.kernel, entry.individual.patch) if entry else (k, ())
    (out / "best.ir").write_text(print_kernel(best_k))
    (out / "best.patch.json").write_text(dumps_patch(best_patch))
    rates = result.telemetry.rates()
    print(f"baseline cost {result.baseline.cost:g}")
    if entry:
        f = entry.individual.fitness
        print(f"best ({cfg.mode}) cost {f.cost:g} error {f.error:g} "
              f"({len(best_patch)} edits, {1 - f.cost / result.baseline.cost:.1%} cheaper)")
    else:
        print(f"no variant passed held-out validation in mode {cfg.mode}")
    mt, cx = rates["mutation_total"]["rate"], rates["crossover"]["rate"]
    print(f"acceptance: mutation {mt if mt is None else round(mt, 3)} "
          f"(reference {rates['reference']['mutation']}), crossover "
          f"{cx if cx is None else round(cx, 3)} (reference {rates['reference']['crossover']})")
    print(f"wrote {out}/log.csv, report.json, best.ir, best.patch.json")
    return 0


def cmd_replay(args) -> int:
    name, k, spec = _load_kernel(args)
    pp = Path(args.patch)
    if not pp.is_file():
        raise CliError(f"patch file not found: {pp}")
    try:
        patch = loads_patch(pp.read_text())
    except (json.JSONDecodeError, ValueError, KeyError, TypeError) as e:
        raise CliError(f"{pp}: invalid patch: {e}") from None
    tests, _ = _tests(args, k, spec, args.seed, args.num_tests)
    tol = _tolerance(args.mode, args.tolerance)
    variant, applied = apply_patch(k, patch)
    dropped = [i for i, e in enumerate(patch) if e not in applied]
    if len(applied) < len(patch):
        log.warning("dropped %d inapplicable edit(s): %s", len(patch) - len(applied),
                    ", ".join(f"#{i} {patch[i].kind}" for i in dropped))
    errs = validate(variant)
    print("validate: ok" if not errs else "validate: " + "; ".join(map(str, errs)))
    if not errs:
        fit = evaluate_fitness(variant, tests, search_exec_config(k, tests), tol)
        if isinstance(fit, FitnessVector):
            print("fitness: " + json.dumps({"cost": fit.cost, "error": fit.error}))
        else:
            print(f"rejected: test {fit.test_index}: {fit.reason}")
    print(print_kernel(variant), end="")
    return 0


def cmd_oracle(args) -> int:
    name, k, spec = _load_kernel(args)
    errs = validate(k)
    if errs:
        raise CliError(f"{name} does not validate: {errs[0]}")
    if spec is None:
        raise CliError("oracle needs a generator spec (--spec) for --kernel")
    if args.count < 0:
        raise CliError("--count must be non-negative")
    tests = corpus.generate_tests_for(k, spec, args.count, args.seed)
    out = Path(args.out)
    if tests:
        out.mkdir(parents=True, exist_ok=True)
    for i, t in enumerate(tests):
        t.save(out / f"test-{i:04d}.json")
    print(f"wrote {len(tests)} test case(s) to {out}")
    return 0


def cmd_list(args) -> int:
    for name in corpus.available():
        b = corpus.load_benchmark(name)
        print(f"{name:12s} {b.planted_class:17s} {b.kernel.num_instructions():3d} instrs  "
              f"{b.description}")
    return 0


COMMANDS = {"run": cmd_run, "replay": cmd_replay, "oracle": cmd_oracle, "list": cmd_list}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
