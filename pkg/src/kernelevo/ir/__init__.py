"""SSA mini-IR: data model, text format, dominance and validation."""

from .core import (
    BOOL, F32, I32, PTR_GLOBAL, PTR_SHARED, SHARED_NAME, SHARED_VID,
    Block, Imm, Instruction, Kernel, Param, Space, Type, structural_key, wrap_i32,
)
from .dominators import DomTree, compute_dominators
from .text import ParseError, parse_kernel, print_kernel
from .validate import ValidationError, validate

__all__ = [
    "BOOL", "F32", "I32", "PTR_GLOBAL", "PTR_SHARED", "SHARED_NAME", "SHARED_VID",
    "Block", "Imm", "Instruction", "Kernel", "Param", "Space", "Type", "structural_key",
    "wrap_i32", "DomTree", "compute_dominators", "ParseError", "parse_kernel", "print_kernel",
    "ValidationError", "validate",
]
