"""Benchmark kernels with planted inefficiencies, and test-case generation.

Each benchmark lives in ``data/`` as three files: ``<name>.ir`` (the
original kernel), ``<name>.json`` (input generator spec and metadata) and
``<name>.patch.json`` (an edit list that turns the original into the known
improved variant).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..genome import apply_patch, loads_patch
from ..ir import Kernel, parse_kernel, print_kernel, validate
from ..vm import ExecConfig, TestCase, execute

DATA_DIR = Path(__file__).parent / "data"

PLANTED_CLASSES = ("ConservativeSync", "RedundantStore", "DeadConditional", "RedundantLoad",
                   "LoopPerforation", "Memoization")
EXACT_CLASSES = PLANTED_CLASSES[:4]

# the registry proper; hot-mini is an extra small kernel for quick checks
BENCHMARKS = ("nw-sync", "lud-store", "hot-branch", "bfs-load", "lud-unroll", "hot-memo")


class UnknownBenchmark(KeyError):
    pass


@dataclass
class Benchmark:
    name: str
    source: str
    kernel: Kernel
    planted_class: str
    spec: dict
    patch: tuple = ()
    description: str = ""
    improved: Kernel | None = field(default=None, repr=False)

    @property
    def exact(self) -> bool:
        return self.planted_class in EXACT_CLASSES

    @property
    def improved_source(self) -> str:
        return print_kernel(self.improved)

    def expected_cost_gain(self, tests) -> float:
        """Fractional cost reduction of the improved variant, measured by the VM."""
        cfg = ExecConfig.for_kernel(self.kernel)
        base = np.mean([execute(self.kernel, t, cfg).cost for t in tests])
        new = np.mean([execute(self.improved, t, cfg).cost for t in tests])
        return float((base - new) / base)


def available() -> list:
    return sorted(p.stem for p in DATA_DIR.glob("*.ir"))


def load_benchmark(name: str) -> Benchmark:
    ir_path = DATA_DIR / f"{name}.ir"
    if not ir_path.exists():
        raise UnknownBenchmark(f"unknown benchmark {name!r}; available: {', '.join(available())}")
    source = ir_path.read_text()
    k = parse_kernel(source)
    errs = validate(k)
    if errs:
        raise ValueError(f"benchmark {name} does not validate: {errs[0]}")
    spec = json.loads((DATA_DIR / f"{name}.json").read_text())
    patch_path = DATA_DIR / f"{name}.patch.json"
    patch = loads_patch(patch_path.read_text()) if patch_path.exists() else ()
    improved, _ = apply_patch(k, patch)
    return Benchmark(name, source, k, spec["planted_class"], spec, patch,
                     spec.get("description", ""), improved)


def _draw(rng, d: dict, size=None):
    dist = d.get("dist", "zeros")
    ty = d["type"]
    dtype = np.int32 if ty == "i32" else np.float32
    n = d.get("size", 1) if size is None else size
    if dist == "uniform":
        a = rng.uniform(d.get("low", 0.0), d.get("high", 1.0), n)
    elif dist == "randint":
        a = rng.integers(d["low"], d["high"], n)
    elif dist == "permutation":
        a = rng.permutation(n)
    elif dist == "zeros":
        a = np.zeros(n)
    elif dist == "constant":
        a = np.full(n, d["value"])
    else:
        raise ValueError(f"unknown distribution {dist!r}")
    return a.astype(dtype)


def make_inputs(spec: dict, rng) -> TestCase:
    """Draw one set of inputs (no oracle) from a generator spec."""
    inputs = {name: _draw(rng, d) for name, d in spec.get("buffers", {}).items()}
    scalars = {}
    for name, d in spec.get("scalars", {}).items():
        v = _draw(rng, d, size=1)[0]
        scalars[name] = int(v) if d["type"] == "i32" else np.float32(v)
    return TestCase(inputs, scalars)


def generate_tests_for(k: Kernel, spec: dict, count: int, seed: int) -> list:
    """Test cases for ``k`` with oracles recorded from ``k`` itself."""
    outputs = spec.get("outputs")
    cfg = ExecConfig.for_kernel(k)
    tests = []
    for i in range(count):
        t = make_inputs(spec, np.random.default_rng([seed, i]))
        r = execute(k, t, cfg)
        if not r.completed:
            raise RuntimeError(f"kernel {k.name} failed on generated test {i}: {r.reason}")
        oracle = {n: a for n, a in r.outputs.items() if outputs is None or n in outputs}
        tests.append(TestCase(t.inputs, t.scalars, oracle))
    return tests


def generate_tests(b: Benchmark, count: int, seed: int) -> list:
    return generate_tests_for(b.kernel, b.spec, count, seed)
