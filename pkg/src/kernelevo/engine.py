"""The evolutionary search loop.

One generation: binary tournaments fill an offspring pool the size of the
population, the best quarter of the current population is kept as elites,
adjacent offspring pairs recombine with probability ``cross_rate``, each
offspring mutates with probability ``mutate_rate``, and the next population
is the best ``pop_size`` of elites plus offspring.

A variant only enters the population if it passes the sanity check: it
validates structurally and every evolution test completes with error within
tolerance.  All randomness comes from streams keyed by
``(seed, generation, slot, purpose)`` so a run is a pure function of its
configuration, whatever the evaluation order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nsga
from .genome import Inapplicable, Individual, apply_edit, apply_patch, patch_to_json
from .ir.core import Kernel, structural_key
from .ir.validate import validate
from .operators import (
    OPERATORS, MutationContext, NoCandidate, choose_operator, crossover_messy, random_mutation,
)
from .vm import DEFAULT_BUDGET, ExecConfig, FitnessVector, Rejected, evaluate_fitness, execute

log = logging.getLogger(__name__)

# stream purposes
INIT, TOURNAMENT, CROSS, MUTATE = range(4)

LOG_COLUMNS = ("gen", "best_cost_err0", "best_cost_tol", "min_error", "front0_size",
               "mut_attempts", "mut_accepts", "cx_attempts", "cx_accepts")

REFERENCE_RATES = {
    "mutation": "typically 5%-30% per single mutation",
    "crossover": "as high as 80%",
}


class InitFailure(RuntimeError):
    def __init__(self, slot, stats):
        super().__init__(f"initial individual {slot} exhausted its mutation attempts "
                         f"(per-operator attempts/accepts: {stats})")
        self.slot = slot
        self.stats = stats


@dataclass
class SearchConfig:
    pop_size: int = 256
    cross_rate: float = 0.8
    mutate_rate: float = 0.3
    init_dist: int = 3
    tolerance: float = 0.0
    generations: int | None = 50
    wallclock: float | None = None
    seed: int = 0
    mutation_retries: int = 50
    crossover_retries: int = 20
    jobs: int = 1

    def __post_init__(self):
        if self.pop_size < 4 or self.pop_size % 4:
            raise ValueError("pop_size must be at least 4 and divisible by 4")
        for name in ("cross_rate", "mutate_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")
        if self.init_dist < 0:
            raise ValueError("init_dist must be non-negative")
        if self.generations is None and self.wallclock is None:
            raise ValueError("set a generation count or a wall-clock budget")

    @property
    def mode(self) -> str:
        return "default" if self.tolerance == 0 else "mo"


BUDGET_FACTOR = 5
MIN_BUDGET = 1000


def search_exec_config(original: Kernel, tests) -> ExecConfig:
    """Execution settings for a search, with the loop guard scaled to the original.

    Every instruction costs at least one cycle, so the original's cost per
    thread bounds its per-thread instruction count; variants may run
    ``BUDGET_FACTOR`` times longer before they count as non-terminating.
    """
    cfg = ExecConfig.for_kernel(original)
    worst = 0
    for t in tests:
        r = execute(original, t, cfg)
        if r.completed:
            worst = max(worst, r.cost)
    per_thread = -(-worst // original.threads)
    budget = min(DEFAULT_BUDGET, max(MIN_BUDGET, BUDGET_FACTOR * per_thread))
    return ExecConfig.for_kernel(original, instruction_budget=budget)


def stream(seed: int, gen: int, slot: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([seed, gen, slot, purpose])


@dataclass
class Telemetry:
    mut_attempts: dict = field(default_factory=lambda: {op: 0 for op in OPERATORS})
    mut_accepts: dict = field(default_factory=lambda: {op: 0 for op in OPERATORS})
    cx_attempts: int = 0
    cx_accepts: int = 0
    mut_exhausted: int = 0
    cx_exhausted: int = 0

    def merge(self, other: "Telemetry"):
        for op in OPERATORS:
            self.mut_attempts[op] += other.mut_attempts[op]
            self.mut_accepts[op] += other.mut_accepts[op]
        self.cx_attempts += other.cx_attempts
        self.cx_accepts += other.cx_accepts
        self.mut_exhausted += other.mut_exhausted
        self.cx_exhausted += other.cx_exhausted

    def rates(self) -> dict:
        def rate(a, n):
            return a / n if n else None

        ma, mc = sum(self.mut_attempts.values()), sum(self.mut_accepts.values())
        return {
            "mutation": {op: {"attempts": self.mut_attempts[op], "accepts": self.mut_accepts[op],
                              "rate": rate(self.mut_accepts[op], self.mut_attempts[op])}
                         for op in OPERATORS},
            "mutation_total": {"attempts": ma, "accepts": mc, "rate": rate(mc, ma)},
            "crossover": {"attempts": self.cx_attempts, "accepts": self.cx_accepts,
                          "rate": rate(self.cx_accepts, self.cx_attempts)},
            "exhausted": {"mutation": self.mut_exhausted, "crossover": self.cx_exhausted},
            "reference": dict(REFERENCE_RATES),
        }


class Evaluator:
    """Sanity check with a cache keyed on kernel structure."""

    def __init__(self, tests, tolerance: float, exec_cfg: ExecConfig):
        self.tests = list(tests)
        self.tolerance = tolerance
        self.exec_cfg = exec_cfg
        self.cache = {}
        self.evaluations = 0

    def check(self, k: Kernel):
        """FitnessVector if ``k`` is a valid variant, else a Rejected."""
        key = structural_key(k)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        errs = validate(k)
        if errs:
            result = Rejected(-1, f"invalid: {errs[0]}")
        else:
            self.evaluations += 1
            result = evaluate_fitness(k, self.tests, self.exec_cfg, self.tolerance)
        self.cache[key] = result
        return result


def mutate_until_valid(ind: Individual, evaluator: Evaluator, rng, retries: int,
                       tel: Telemetry) -> Individual:
    """Draw mutations until one passes the sanity check, up to ``retries`` draws."""
    k = ind.kernel
    ctx = MutationContext(k, rng, counter=len(ind.patch))
    for _ in range(retries):
        op = choose_operator(rng)
        tel.mut_attempts[op] += 1
        try:
            e = random_mutation(ctx, op)
            k2 = apply_edit(k, e)
        except (NoCandidate, Inapplicable):
            continue
        fit = evaluator.check(k2)
        if isinstance(fit, FitnessVector):
            tel.mut_accepts[op] += 1
            return Individual(k2, ind.patch + (e,), fit)
    tel.mut_exhausted += 1
    return ind


def crossover_until_valid(a: Individual, b: Individual, original: Kernel,
                          evaluator: Evaluator, rng, retries: int, tel: Telemetry) -> tuple:
    """Messy crossover retried until both children pass the sanity check."""
    for _ in range(retries):
        tel.cx_attempts += 1
        pa, pb = crossover_messy(a.patch, b.patch, rng)
        ka, pa = apply_patch(original, pa)
        kb, pb = apply_patch(original, pb)
        fa = evaluator.check(ka)
        if not isinstance(fa, FitnessVector):
            continue
        fb = evaluator.check(kb)
        if not isinstance(fb, FitnessVector):
            continue
        tel.cx_accepts += 1
        return Individual(ka, pa, fa), Individual(kb, pb, fb)
    tel.cx_exhausted += 1
    return a, b


@dataclass
class ArchiveEntry:
    individual: Individual
    generation: int
    heldout: object = None   # FitnessVector or Rejected after the run
    overfit: bool = False

    def to_json(self) -> dict:
        fit = self.individual.fitness
        d = {"fitness": {"cost": fit.cost, "error": fit.error},
             "generation": self.generation,
             "patch": patch_to_json(self.individual.patch)}
        if isinstance(self.heldout, FitnessVector):
            d["heldout"] = {"verdict": "ok", "cost": self.heldout.cost, "error": self.heldout.error}
        elif isinstance(self.heldout, Rejected):
            d["heldout"] = {"verdict": "OVERFIT", "test": self.heldout.test_index,
                            "reason": self.heldout.reason}
        return d


class Archive:
    """All-time non-dominated variants, one per distinct fitness vector."""

    def __init__(self):
        self.entries = []

    def offer(self, ind: Individual, gen: int):
        f = ind.fitness
        for e in self.entries:
            g = e.individual.fitness
            if g == f or nsga.dominates(g, f):
                return
        self.entries = [e for e in self.entries if not nsga.dominates(f, e.individual.fitness)]
        self.entries.append(ArchiveEntry(ind, gen))
        self.entries.sort(key=lambda e: (e.individual.fitness.cost, e.individual.fitness.error))


@dataclass
class SearchResult:
    population: list
    archive: list
    log_rows: list
    best: dict
    telemetry: Telemetry
    baseline: FitnessVector
    config: SearchConfig
    generations_run: int = 0
    evaluations: int = 0

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in self.log_rows:
            w.writerow(["" if row[c] is None else row[c] for c in LOG_COLUMNS])
        return buf.getvalue()

    def report(self, name: str = "") -> dict:
        def fit(f):
            return {"cost": f.cost, "error": f.error}

        best = {}
        for mode, entry in self.best.items():
            if entry is None:
                best[mode] = None
            else:
                best[mode] = {"fitness": fit(entry.individual.fitness),
                              "patch": patch_to_json(entry.individual.patch),
                              "heldout": entry.to_json().get("heldout")}
        return {
            "kernel": name,
            "seed": self.config.seed,
            "mode": self.config.mode,
            "config": asdict(self.config),
            "baseline": fit(self.baseline),
            "generations_run": self.generations_run,
            "archive": [e.to_json() for e in self.archive],
            "overfit": sum(e.overfit for e in self.archive),
            "best": best,
            "acceptance": self.telemetry.rates(),
        }

    def report_json(self, name: str = "") -> str:
        return json.dumps(self.report(name), indent=1, sort_keys=True) + "\n"


def _log_row(gen, pop, tel: Telemetry, r: nsga.Ranking) -> dict:
    err0 = [ind.fitness.cost for ind in pop if ind.fitness.error == 0]
    return {
        "gen": gen,
        "best_cost_err0": min(err0) if err0 else None,
        "best_cost_tol": min(ind.fitness.cost for ind in pop),
        "min_error": min(ind.fitness.error for ind in pop),
        "front0_size": len(r.fronts[0]) if r.fronts else 0,
        "mut_attempts": sum(tel.mut_attempts.values()),
        "mut_accepts": sum(tel.mut_accepts.values()),
        "cx_attempts": tel.cx_attempts,
        "cx_accepts": tel.cx_accepts,
    }


# -- optional process pool ---------------------------------------------------

_WORKER = {}


def _worker_init(original, tests, tolerance, exec_cfg):
    _WORKER["original"] = original
    _WORKER["evaluator"] = Evaluator(tests, tolerance, exec_cfg)


def _mutate_job(args):
    ind, rng, retries = args
    tel = Telemetry()
    out = mutate_until_valid(ind, _WORKER["evaluator"], rng, retries, tel)
    return out, tel


def _cross_job(args):
    a, b, key, retries, rate = args
    tel = Telemetry()
    rng = stream(*key)
    if rng.random() >= rate:
        return (a, b), tel
    return crossover_until_valid(a, b, _WORKER["original"], _WORKER["evaluator"], rng,
                                 retries, tel), tel


class Search:
    def __init__(self, original: Kernel, cfg: SearchConfig, tests, heldout_tests=(),
                 exec_cfg: ExecConfig | None = None):
        self.original = original
        self.cfg = cfg
        self.tests = list(tests)
        self.heldout = list(heldout_tests)
        self.exec_cfg = exec_cfg or search_exec_config(original, self.tests)
        self.evaluator = Evaluator(self.tests, cfg.tolerance, self.exec_cfg)
        self.tel = Telemetry()
        self.archive = Archive()
        self.rows = []
        self.pool = None

    # slot-parallel helpers: identical results with or without the pool
    def _map(self, fn, jobs):
        if self.pool is None:
            _WORKER["original"] = self.original
            _WORKER["evaluator"] = self.evaluator
            return [fn(j) for j in jobs]
        return list(self.pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * self.cfg.jobs))))

    def baseline(self) -> FitnessVector:
        fit = self.evaluator.check(self.original)
        if not isinstance(fit, FitnessVector):
            raise ValueError(f"original kernel fails its own tests: {fit.reason}")
        return fit

    def initialize(self) -> list:
        """Each slot gets ``init_dist`` accepted mutations of the original.

        The slot's draws share one budget of ``init_dist * mutation_retries``
        attempts; running out raises :class:`InitFailure`.
        """
        cfg = self.cfg
        base = Individual(self.original, (), self.baseline())
        pop = []
        for slot in range(cfg.pop_size):
            rng = stream(cfg.seed, 0, slot, INIT)
            ind = base
            budget = cfg.init_dist * cfg.mutation_retries
            for _ in range(cfg.init_dist):
                tel = Telemetry()
                ind = mutate_until_valid(ind, self.evaluator, rng, budget, tel)
                self.tel.merge(tel)
                budget -= sum(tel.mut_attempts.values())
                if tel.mut_exhausted:
                    raise InitFailure(slot, self.tel.rates()["mutation"])
            pop.append(ind)
        return pop

    def step(self, pop: list, r: nsga.Ranking, gen: int) -> tuple:
        cfg = self.cfg
        offspring = nsga.tournament_select(pop, r, cfg.pop_size,
                                           stream(cfg.seed, gen, 0, TOURNAMENT))
        elites = nsga.select_best(pop, r, cfg.pop_size // 4)
        pairs = [(offspring[2 * i], offspring[2 * i + 1], (cfg.seed, gen, i, CROSS),
                  cfg.crossover_retries, cfg.cross_rate) for i in range(len(offspring) // 2)]
        crossed = []
        for (a, b), tel in self._map(_cross_job, pairs):
            crossed += [a, b]
            self.tel.merge(tel)
        jobs, fire = [], []
        for j, ind in enumerate(crossed):
            rng = stream(cfg.seed, gen, j, MUTATE)
            if rng.random() < cfg.mutate_rate:
                fire.append(j)
                jobs.append((ind, rng, cfg.mutation_retries))
        for j, (ind, tel) in zip(fire, self._map(_mutate_job, jobs)):
            crossed[j] = ind
            self.tel.merge(tel)
        combined = elites + crossed
        rc = nsga.rank([ind.fitness for ind in combined])
        nxt = nsga.select_best(combined, rc, cfg.pop_size)
        return nxt, nsga.rank([ind.fitness for ind in nxt])

    def _record(self, gen, pop, r):
        for i in r.fronts[0]:
            self.archive.offer(pop[i], gen)
        self.rows.append(_log_row(gen, pop, self.tel, r))

    def run(self) -> SearchResult:
        cfg = self.cfg
        baseline = self.baseline()
        if cfg.jobs > 1:
            self.pool = ProcessPoolExecutor(
                cfg.jobs, initializer=_worker_init,
                initargs=(self.original, self.tests, cfg.tolerance, self.exec_cfg))
        try:
            self.archive.offer(Individual(self.original, (), baseline), 0)
            pop = self.initialize()
            r = nsga.rank([ind.fitness for ind in pop])
            self._record(0, pop, r)
            start = time.monotonic()
            gen = 0
            while True:
                if cfg.generations is not None and gen >= cfg.generations:
                    break
                if cfg.wallclock is not None and time.monotonic() - start >= cfg.wallclock:
                    break
                gen += 1
                pop, r = self.step(pop, r, gen)
                self._record(gen, pop, r)
                log.debug("generation %d: %s", gen, self.rows[-1])
        finally:
            if self.pool is not None:
                self.pool.shutdown()
                self.pool = None
        for e in self.archive.entries:
            self.check_heldout(e)
        return SearchResult(pop, list(self.archive.entries), self.rows, self.pick_best(),
                            self.tel, baseline, cfg, gen, self.evaluator.evaluations)

    def check_heldout(self, e: ArchiveEntry):
        if not self.heldout:
            e.heldout = None
            return
        h = evaluate_fitness(e.individual.kernel, self.heldout, self.exec_cfg, self.cfg.tolerance)
        e.heldout = h
        e.overfit = isinstance(h, Rejected)

    def pick_best(self) -> dict:
        ok = [e for e in self.archive.entries if not e.overfit]

        def cheapest(entries):
            if not entries:
                return None
            return min(entries, key=lambda e: (e.individual.fitness.cost,
                                               e.individual.fitness.error))

        best = {"default": cheapest([e for e in ok if e.individual.fitness.error == 0])}
        if self.cfg.tolerance > 0:
            best["mo"] = cheapest(ok)
        return best


def run(original: Kernel, cfg: SearchConfig, tests, heldout_tests=(),
        exec_cfg: ExecConfig | None = None) -> SearchResult:
    return Search(original, cfg, tests, heldout_tests, exec_cfg).run()


def initialize_population(original: Kernel, cfg: SearchConfig, tests) -> list:
    return Search(original, cfg, tests).initialize()


def best_individual(result: SearchResult):
    """Pick for the configured mode, or None."""
    entry = result.best.get(result.config.mode)
    return entry.individual if entry is not None else None
