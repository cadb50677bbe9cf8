"""
Kernels, validation and the cost model
======================================

Parse a small kernel, check it, run it on the VM and read back outputs and
cost.  Then break it on purpose and see what the validator reports.
"""
import numpy as np

from kernelevo.ir import parse_kernel, print_kernel, validate
from kernelevo.vm import TestCase, execute

SRC = """
kernel scale(a: ptr<global> f32, out: ptr<global> f32) threads=4
{
entry:
  %i = call i32 tid
  %x = load f32 a, %i
  %y = fmul f32 %x, 3.0
  store out[%i], %y
  ret
}
"""

k = parse_kernel(SRC)
print(print_kernel(k))
print("validation errors:", validate(k))

t = TestCase({"a": np.arange(4, dtype=np.float32), "out": np.zeros(4, dtype=np.float32)})
r = execute(k, t)
print(r.status, "cost", r.cost, "out", r.outputs["out"])

# a use before its definition is caught by the dominance rule
broken = parse_kernel(SRC.replace("%y = fmul f32 %x, 3.0\n  store out[%i], %y",
                                  "store out[%i], %y\n  %y = fmul f32 %x, 3.0"))
for err in validate(broken):
    print("error:", err)
