"""Seeded random program generator for differential testing.

Programs are structured for guaranteed termination: a counted outer loop over
a handful of random blocks with forward branches, optional subroutine calls,
and loads/stores confined to a small region (so cross-block address overlap,
and with it memory-order speculation, happens often). Register g0 is never
written and g1/g2 drive the loop.
"""

from __future__ import annotations

import random

from .isa import Program, parse_program

ALU = ("add", "sub", "mul", "and", "or", "xor", "shl", "shr", "cmp")
DATA_REGS = [f"g{i}" for i in range(4, 14)]


def random_source(
    seed: int,
    blocks: int = 5,
    ops_per_block: tuple[int, int] = (2, 6),
    iters: tuple[int, int] = (2, 5),
    p_load: float = 0.18,
    p_store: float = 0.14,
    p_branch: float = 0.5,
    with_stores: bool = True,
    with_call: bool = True,
) -> str:
    rng = random.Random(seed)
    lines = []
    n_iters = rng.randint(*iters)
    lines.append(f".reg g2 {n_iters}")
    lines.append(".reg g3 2048")  # memory region base
    for k in range(6):
        lines.append(f".mem {2048 + 8 * k} {rng.randint(0, 999)}")
    for r in DATA_REGS[:6]:
        lines.append(f".reg {r} {rng.randint(0, 200)}")

    def alu_op(dest=None):
        op = rng.choice(ALU)
        dest = dest or rng.choice(DATA_REGS)
        a = rng.choice(DATA_REGS)
        if rng.random() < 0.4:
            b = str(rng.randint(0, 63))
        else:
            b = rng.choice(DATA_REGS)
        if op in ("shl", "shr"):
            b = str(rng.randint(0, 7))
        return f"    {op} {dest}, {a}, {b}"

    def mem_addr_seq(tmp_a, tmp_b):
        src = rng.choice(DATA_REGS)
        return [
            f"    and {tmp_a}, {src}, 40",
            f"    add {tmp_b}, {tmp_a}, g3",
        ]

    call_used = with_call and rng.random() < 0.5

    body_labels = [f"b{seed % 977}_{i}" for i in range(blocks)]
    lines.append("entry:")
    lines.append("    add g1, g0, 0")
    lines.append("loop:")
    lines.append("    add g1, g1, 1")
    for i, label in enumerate(body_labels):
        lines.append(f"{label}:")
        gw = 1  # rough global-write budget per block
        for _ in range(rng.randint(*ops_per_block)):
            roll = rng.random()
            if roll < p_load:
                lines.extend(mem_addr_seq("r0", "r1"))
                lines.append(f"    lw {rng.choice(DATA_REGS)}, 0(r1)")
                gw += 1
            elif with_stores and roll < p_load + p_store:
                lines.extend(mem_addr_seq("r2", "r3"))
                lines.append(f"    sw {rng.choice(DATA_REGS)}, 0(r3)")
            else:
                lines.append(alu_op())
                gw += 1
            if gw >= 7:
                break
        # Forward branch to a later body block (or the loop tail).
        if i < blocks - 1 and rng.random() < p_branch:
            target = rng.choice(body_labels[i + 1 :] + ["tail"])
            kind = rng.choice(("beq", "bne", "blt"))
            a, b = rng.choice(DATA_REGS), rng.choice(DATA_REGS)
            lines.append(f"    {kind} {a}, {b}, {target}")
    if call_used:
        lines.append("    call helper")
    lines.append("tail:")
    lines.append("    bne g1, g2, loop")
    lines.append("fin:")
    lines.append("    ret")
    if call_used:
        lines.append("helper:")
        lines.append(alu_op())
        lines.append(alu_op())
        lines.append("    ret")
    return "\n".join(lines) + "\n"


def random_program(seed: int, **kw) -> Program:
    return parse_program(random_source(seed, **kw))
