"""Plain-text problem dump in sparse triplet form.

Format (one record per line, ``#`` starts a comment)::

    qihier-sdp 1
    block <name> <dim> <real|complex> [<trace_bound>]
    constant <c0>
    objective
    <block> <row> <col> <re> <im>
    end
    constraint <rhs>
    <block> <row> <col> <re> <im>
    end

Only entries with ``row <= col`` are written; the lower triangle follows from
Hermiticity. Indices are zero based and values use ``repr`` so a dump round
trips exactly.
"""
from __future__ import annotations

import io
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from .problem import Block, SdpProblem

MAGIC = "qihier-sdp 1"


class ProblemFormatError(ValueError):
    pass


def _triplets(name: str, n: int, flat) -> list[str]:
    m = np.asarray(flat).reshape(n, n)
    rows, cols = np.nonzero(np.triu(m))
    return [f"{name} {r} {c} {float(np.real(m[r, c]))!r} {float(np.imag(m[r, c]))!r}"
            for r, c in zip(rows, cols)]


def dump_problem(problem: SdpProblem, fh: TextIO):
    fh.write(MAGIC + "\n")
    for blk in problem.blocks:
        kind = "complex" if blk.complex else "real"
        tb = "" if blk.trace_bound is None else f" {float(blk.trace_bound)!r}"
        fh.write(f"block {blk.name} {blk.dim} {kind}{tb}\n")
    fh.write(f"constant {float(problem.objective_constant)!r}\n")
    fh.write("objective\n")
    for blk in problem.blocks:
        for line in _triplets(blk.name, blk.dim, problem.objective[blk.name]):
            fh.write(line + "\n")
    fh.write("end\n")
    for i in range(problem.num_constraints):
        fh.write(f"constraint {float(problem.b[i])!r}\n")
        for blk in problem.blocks:
            row = problem.a[blk.name].getrow(i)
            if row.nnz:
                for line in _triplets(blk.name, blk.dim, row.toarray()):
                    fh.write(line + "\n")
        fh.write("end\n")


def dumps_problem(problem: SdpProblem) -> str:
    buf = io.StringIO()
    dump_problem(problem, buf)
    return buf.getvalue()


def load_problem(fh: TextIO) -> SdpProblem:
    lines = [(k + 1, ln.split("#", 1)[0].strip()) for k, ln in enumerate(fh)]
    lines = [(k, ln) for k, ln in lines if ln]
    if not lines or lines[0][1] != MAGIC:
        raise ProblemFormatError(f"line 1: expected header {MAGIC!r}")
    blocks: list[Block] = []
    constant = 0.0
    objective: dict[str, dict] = {}
    constraints: list[tuple[dict, float]] = []
    current = None
    for lineno, ln in lines[1:]:
        parts = ln.split()
        try:
            if current is None:
                if parts[0] == "block":
                    if len(parts) not in (4, 5) or parts[3] not in ("real", "complex"):
                        raise ProblemFormatError("block needs: name dim real|complex [trace_bound]")
                    tb = float(parts[4]) if len(parts) == 5 else None
                    blocks.append(Block(parts[1], int(parts[2]), parts[3] == "complex", tb))
                elif parts[0] == "constant":
                    constant = float(parts[1])
                elif parts[0] == "objective":
                    current = objective
                elif parts[0] == "constraint":
                    current = {}
                    constraints.append((current, float(parts[1])))
                else:
                    raise ProblemFormatError(f"unknown record {parts[0]!r}")
            elif parts[0] == "end":
                current = None
            else:
                name, r, c, re, im = parts
                current.setdefault(name, []).append((int(r), int(c), complex(float(re), float(im))))
        except ProblemFormatError as exc:
            raise ProblemFormatError(f"line {lineno}: {exc}") from None
        except (ValueError, IndexError):
            raise ProblemFormatError(f"line {lineno}: malformed record {ln!r}") from None
    if current is not None:
        raise ProblemFormatError("unterminated section at end of file")
    dims = {blk.name: blk for blk in blocks}

    def dense(entries: dict) -> dict[str, np.ndarray]:
        out = {}
        for name, items in entries.items():
            if name not in dims:
                raise ProblemFormatError(f"entry refers to unknown block {name!r}")
            blk = dims[name]
            m = np.zeros((blk.dim, blk.dim), complex)
            for r, c, v in items:
                if not (0 <= r <= c < blk.dim):
                    raise ProblemFormatError(f"entry ({r}, {c}) outside upper triangle of block {name!r}")
                m[r, c] = v
                m[c, r] = np.conj(v)
            out[name] = m if blk.complex else m.real
        return out

    obj = dense(objective)
    rows_by_constraint = [dense(entries) for entries, _ in constraints]
    a = {}
    for blk in blocks:
        rows = [sp.csr_matrix(r[blk.name].reshape(1, -1)) if blk.name in r
                else sp.csr_matrix((1, blk.dim ** 2), dtype=blk.dtype) for r in rows_by_constraint]
        a[blk.name] = sp.vstack(rows, format="csr") if rows else sp.csr_matrix((0, blk.dim ** 2))
    b = np.array([rhs for _, rhs in constraints], dtype=float)
    return SdpProblem(tuple(blocks), obj, a, b, constant)


def loads_problem(text: str) -> SdpProblem:
    return load_problem(io.StringIO(text))
