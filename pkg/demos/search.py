"""
A short search
==============

Run a small population on an exact benchmark at tolerance 0, then on an
approximate one with a 1% error budget, and compare what each finds.
"""
from kernelevo import corpus
from kernelevo.engine import SearchConfig, run, search_exec_config


def search(name, tolerance, seed=1):
    b = corpus.load_benchmark(name)
    tests = corpus.generate_tests(b, 3, 2 * seed)
    held = corpus.generate_tests(b, 3, 2 * seed + 1)
    cfg = SearchConfig(pop_size=32, generations=15, seed=seed, tolerance=tolerance)
    result = run(b.kernel, cfg, tests, held, search_exec_config(b.kernel, tests))
    print(f"{name}: baseline cost {result.baseline.cost:g}")
    for mode, entry in result.best.items():
        if entry is None:
            print(f"  {mode}: nothing better held up")
            continue
        f = entry.individual.fitness
        print(f"  {mode}: cost {f.cost:g} error {f.error:.4g} with {len(entry.individual.patch)} edits")
    print("  archive:", [(e.individual.fitness.cost, round(e.individual.fitness.error, 4))
                         for e in result.archive])
    rates = result.telemetry.rates()
    print("  acceptance: mutation", round(rates["mutation_total"]["rate"], 3),
          "crossover", round(rates["crossover"]["rate"], 3))
    return result


search("lud-store", 0.0)
search("lud-unroll", 0.01)
