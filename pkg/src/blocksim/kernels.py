"""Microkernel suite: small .casm programs stressing specific behaviors.

Each kernel returns source text; tests and the CLI compile them on demand.
All kernels terminate with a top-level ret.
"""

from __future__ import annotations

from .isa import Program, parse_program

# Do-while loop: one block of six ops ending in bne. The body carries no
# in-block consumer of the load, so the window issues one op per cycle with
# no stalls; the load value feeds the next iteration through g4.
DOWHILE = """
# b[i] = running sum of a[] with one-iteration lag; i advances by 8
.reg g3 {end}
.mem 0 7
.mem 8 11
.mem 16 13
loop:
    add g5, g5, g4      # sum += previous load
    lw  g4, 0(g2)       # a[i]
    add r1, g5, 100     # store value
    sw  r1, 4096(g2)
    add g2, g2, 8       # i += 8
    bne g2, g3, loop
head
    ret
"""


def dowhile(iters: int = 16) -> str:
    return DOWHILE.format(end=iters * 8)


# Four ops, two true dependences (1->2 and 2->4), op 3 independent. With a
# three-entry head buffer the issue order is 1,3,2,4; with a single entry it
# is strictly 1,2,3,4.
SKIPAHEAD_PAIR = """
.mem 64 5
head
    li g2, 64
    li g6, 9
head
    lw g4, 0(g2)        # op 1
    add g5, g4, 1       # op 2: needs the load
    add r1, g6, 2       # op 3: independent
    add g7, g5, 3       # op 4: needs op 2
head
    ret
"""


def skipahead_pair() -> str:
    return SKIPAHEAD_PAIR


# Pointer chase with independent work behind it in the same block: a ring of
# pointers in memory keeps the load-to-load chain at cache-hit latency while
# the trailing ALU ops are always ready. FIFO cores stall them behind the
# chase; block windows skip ahead or overlap blocks.
def pointer_chase(iters: int = 64, ring: int = 8) -> str:
    lines = [f".reg g9 {iters}"]
    for k in range(ring):
        lines.append(f".mem {k * 8} {((k + 1) % ring) * 8}")
    lines += [
        "loop:",
        "    lw  g1, 0(g1)       # chase",
        "    add g3, g1, 1       # uses the load",
        "    add g4, g4, 1",
        "    add g5, g5, 1",
        "    add g6, g6, 1",
        "    add g8, g8, 1       # iteration counter",
        "    bne g8, g9, loop",
        "head",
        "    ret",
    ]
    return "\n".join(lines)


def dependent_chain(iters: int = 64, length: int = 6) -> str:
    lines = [f".reg g9 {iters}", "loop:"]
    for _ in range(length):
        lines.append("    add g1, g1, 3")
    lines += [
        "    add g8, g8, 1",
        "    bne g8, g9, loop",
        "head",
        "    ret",
    ]
    return "\n".join(lines)


def independent_alu(iters: int = 64, width: int = 7) -> str:
    lines = [f".reg g9 {iters}", "loop:"]
    for k in range(width):
        lines.append(f"    add g{k + 1}, g{k + 1}, {k + 1}")
    lines += [
        "    add g15, g15, 1",
        "    bne g15, g9, loop",
        "head",
        "    ret",
    ]
    return "\n".join(lines)


# Alternating branch: taken, not taken, taken, ... drives the global-history
# predictor; a bimodal counter alone stays near 50%. Each arm carries enough
# work to keep the back end busy between branches.
def branchy_loop(iters: int = 256) -> str:
    return f"""
.reg g9 {iters}
loop:
    and r1, g8, 1
    add g8, g8, 1
    add g10, g10, 2
    add g11, g11, 3
    beq r1, g0, skip
head
    add g2, g2, 5
    add g12, g12, g2
    add g13, g13, 1
    jmp join
skip:
    add g3, g3, 7
    add g12, g12, g3
    add g14, g14, 1
join:
    add g4, g2, g3
    add g15, g15, g4
    blt g8, g9, loop
head
    ret
"""


# An older block computes a store address through a load (slow); a younger
# block loads the same location immediately. The younger load runs ahead,
# the store finds it, and the younger block replays: one memory-order squash
# per iteration.
def store_load_conflict(iters: int = 24) -> str:
    return f"""
.reg g9 {iters}
.reg g10 512
.mem 512 1024
loop:
    lw  r1, 0(g10)      # address arrives late
    add r2, r1, 0
    sw  g7, 0(r2)       # hits 1024
head
    lw  g6, 1024(g0)    # younger load to the same address
    add g7, g6, 1
    add g8, g8, 1
    bne g8, g9, loop
head
    ret
"""


# Source order hides the loads at the bottom of the block; scheduling hoists
# them above the ALU chain so their latency overlaps it.
def hoistable_loads(iters: int = 48) -> str:
    return f"""
.reg g9 {iters}
.mem 256 21
.mem 264 22
loop:
    add g2, g2, 1
    add g3, g3, g2
    add g4, g4, g3
    lw  g5, 256(g0)
    add g6, g6, g5
    lw  g7, 264(g0)
    add g8, g8, g7
    add g1, g1, 1
    bne g1, g9, loop
head
    ret
"""


# The benchmark suite proper. skipahead_pair stays out: it is a four-op
# issue-order fixture, not a measurable workload.
KERNELS = {
    "dowhile": dowhile,
    "pointer_chase": pointer_chase,
    "dependent_chain": dependent_chain,
    "independent_alu": independent_alu,
    "branchy_loop": branchy_loop,
    "store_load_conflict": store_load_conflict,
    "hoistable_loads": hoistable_loads,
}


def kernel_source(name: str, **kw) -> str:
    if name == "skipahead_pair":
        return skipahead_pair()
    return KERNELS[name](**kw)


def kernel_program(name: str, **kw) -> Program:
    return parse_program(kernel_source(name, **kw))
