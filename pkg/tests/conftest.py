import pytest

from kernelevo import corpus
from kernelevo.ir import parse_kernel

# Two loads feeding a mul/add/mul chain.  Before the first load only i32
# values exist, so a float operand moved there can only be bound to 1.0.
CHAIN_SRC = """\
kernel chain(a: ptr<global> f32, out: ptr<global> f32) threads=4
{
entry:
  %0 = call i32 tid
  %1 = add i32 %0, 1
  %2 = load f32 a, %0
  %3 = load f32 a, %1
  %4 = fmul f32 %3, 2.0
  %5 = fadd f32 %4, %2
  %6 = fmul f32 %5, %4
  store out[%0], %6
  ret
}
"""

CHAIN_SPEC = {
    "buffers": {
        "a": {"type": "f32", "size": 5, "dist": "uniform"},
        "out": {"type": "f32", "size": 4, "dist": "zeros"},
    },
    "outputs": ["out"],
}


@pytest.fixture
def chain():
    return parse_kernel(CHAIN_SRC)


@pytest.fixture(scope="session")
def benchmarks():
    return {name: corpus.load_benchmark(name) for name in corpus.BENCHMARKS}


@pytest.fixture(scope="session")
def mini():
    return corpus.load_benchmark("hot-mini")


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
