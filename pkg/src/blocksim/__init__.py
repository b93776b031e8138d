"""blocksim: block-granularity out-of-order core simulator and baselines."""

from .config import CoreConfig
from .isa import Program, emit_program, parse_program

__all__ = ["CoreConfig", "Program", "parse_program", "emit_program"]
